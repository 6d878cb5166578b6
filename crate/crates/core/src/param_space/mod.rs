//! Input and tuning parameter spaces for GEMM and CONV kernels, resource
//! estimation and legality against a [`HardwareDescriptor`].

mod bounds;
mod conv;
mod gemm;
mod hardware;

use std::fmt;
use std::hash::Hash;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use bounds::ParamBounds;
pub use conv::{ConvInput, ConvTuning};
pub use gemm::{GemmInput, GemmTuning};
pub use hardware::HardwareDescriptor;

use crate::{Error, Result};

/// Largest value any tuning parameter may take.
pub const MAX_TUNING_VALUE: u32 = 256;

/// Element type of the operands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F16,
    F32,
    F64,
}

impl DType {
    pub fn size_bytes(self) -> u32 {
        match self {
            DType::F16 => 2,
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    pub fn from_size(bytes: u32) -> Option<DType> {
        match bytes {
            2 => Some(DType::F16),
            4 => Some(DType::F32),
            8 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F16 => "f16",
            DType::F32 => "f32",
            DType::F64 => "f64",
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f16" => Ok(DType::F16),
            "f32" => Ok(DType::F32),
            "f64" => Ok(DType::F64),
            other => Err(Error::invalid("dtype", format!("unknown dtype {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Gemm,
    Conv,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Gemm => "gemm",
            ProblemKind::Conv => "conv",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Estimated per-block hardware footprint of one kernel variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ResourceUsage {
    pub shared_bytes: u64,
    pub registers_per_thread: u64,
    pub threads_per_block: u64,
}

/// Why a tuning vector was rejected. Variants are listed in checking order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    /// A parameter is not a power of two in `[1, MAX_TUNING_VALUE]`.
    InvalidValue {
        param: &'static str,
        value: u32,
    },
    /// A per-thread reduction split larger than the prefetch depth.
    SplitExceedsPrefetch {
        split: u32,
        prefetch: u32,
    },
    /// A block tile that is not a multiple of its thread tile.
    Divisibility {
        outer: &'static str,
        inner: &'static str,
        outer_value: u32,
        inner_value: u32,
    },
    SharedMemory {
        required: u64,
        limit: u64,
    },
    Registers {
        required: u64,
        limit: u64,
    },
    Threads {
        required: u64,
        limit: u64,
    },
}

impl RejectReason {
    /// Short stable label, used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            RejectReason::InvalidValue { .. } => "invalid-value",
            RejectReason::SplitExceedsPrefetch { .. } => "split-exceeds-prefetch",
            RejectReason::Divisibility { .. } => "divisibility",
            RejectReason::SharedMemory { .. } => "shared-memory",
            RejectReason::Registers { .. } => "registers",
            RejectReason::Threads { .. } => "threads",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::InvalidValue { param, value } => {
                write!(f, "{param} = {value} is not a power of two in [1, {MAX_TUNING_VALUE}]")
            }
            RejectReason::SplitExceedsPrefetch { split, prefetch } => {
                write!(f, "reduction split {split} exceeds prefetch depth {prefetch}")
            }
            RejectReason::Divisibility { outer, inner, outer_value, inner_value } => {
                write!(f, "{outer} = {outer_value} is not divisible by {inner} = {inner_value}")
            }
            RejectReason::SharedMemory { required, limit } => {
                write!(f, "shared memory {required} B exceeds limit {limit} B")
            }
            RejectReason::Registers { required, limit } => {
                write!(f, "{required} registers per thread exceed limit {limit}")
            }
            RejectReason::Threads { required, limit } => {
                write!(f, "{required} threads per block exceed limit {limit}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LegalityVerdict {
    Accepted(ResourceUsage),
    Rejected(RejectReason),
}

impl LegalityVerdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, LegalityVerdict::Accepted(_))
    }

    pub fn reason(&self) -> Option<&RejectReason> {
        match self {
            LegalityVerdict::Accepted(_) => None,
            LegalityVerdict::Rejected(r) => Some(r),
        }
    }
}

/// A fixed-length vector of tuning parameters.
///
/// `NAMES` fixes the parameter order used for enumeration, features, bounds
/// files and CSV columns. The derived `Ord` must agree with it.
pub trait TuningParams:
    Clone + fmt::Debug + PartialEq + Eq + Hash + Ord + Serialize + DeserializeOwned + Send + Sync
{
    const NAMES: &'static [&'static str];

    /// Builds a tuning from values in `NAMES` order. Panics on length mismatch.
    fn from_values(values: &[u32]) -> Self;

    fn values(&self) -> Vec<u32>;

    /// Power-of-two and range check on every field.
    fn check_values(&self) -> Option<RejectReason> {
        Self::NAMES
            .iter()
            .zip(self.values())
            .find(|(_, v)| !(v.is_power_of_two() && *v <= MAX_TUNING_VALUE))
            .map(|(param, value)| RejectReason::InvalidValue { param, value })
    }
}

/// Implicit-GEMM view of a kernel variant: every problem is tiled as a
/// `rows x cols` output with a reduction of length `depth`.
///
/// The analytical backend reasons only in these terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoweredKernel {
    pub rows: u64,
    pub cols: u64,
    pub depth: u64,
    /// Number of block tiles along the row and column axes (ceil-divided).
    pub row_blocks: u64,
    pub col_blocks: u64,
    pub block_rows: u64,
    pub block_cols: u64,
    pub thread_rows: u64,
    pub thread_cols: u64,
    pub prefetch: u64,
    pub split_thread: u64,
    pub split_block: u64,
    pub split_grid: u64,
}

impl LoweredKernel {
    /// Threads cooperating on one block tile for one block-level reduction slice.
    pub fn threads_per_slice(&self) -> u64 {
        (self.block_rows / self.thread_rows) * (self.block_cols / self.thread_cols)
    }

    pub fn threads_per_block(&self) -> u64 {
        self.threads_per_slice() * self.split_block
    }

    pub fn grid_blocks(&self) -> u64 {
        self.row_blocks * self.col_blocks * self.split_grid
    }
}

/// A kernel input descriptor (the fixed, user-provided half of a sample).
pub trait Problem: Clone + fmt::Debug + PartialEq + Eq + Hash + Serialize + DeserializeOwned + Send + Sync {
    type Tuning: TuningParams;

    const KIND: ProblemKind;
    /// Feature names contributed by the input, in encoding order.
    const INPUT_FEATURES: &'static [&'static str];
    /// Frozen encoding version, bumped whenever the feature layout changes.
    const FEATURE_VERSION: &'static str;

    fn validate(&self) -> Result<()>;

    fn dtype(&self) -> DType;

    /// Useful floating-point operations (2 per multiply-accumulate).
    fn flops(&self) -> f64;

    fn estimate_resources(&self, tuning: &Self::Tuning) -> ResourceUsage;

    /// Value-domain, split and divisibility checks, in that order.
    fn structural_check(tuning: &Self::Tuning) -> Option<RejectReason>;

    fn input_features(&self) -> Vec<f64>;

    fn lower(&self, tuning: &Self::Tuning) -> LoweredKernel;

    /// Search space used when no bounds file is given.
    fn default_bounds() -> ParamBounds;

    /// Number of features produced by [`encode_features`].
    fn feature_len() -> usize {
        Self::INPUT_FEATURES.len() + Self::Tuning::NAMES.len()
    }
}

/// Decides whether `tuning` can run on `hw` for `input`.
///
/// Checks run in a fixed order and the first failure is reported:
/// value domain, split vs prefetch, divisibility, shared memory, registers,
/// threads.
pub fn is_legal<P: Problem>(input: &P, tuning: &P::Tuning, hw: &HardwareDescriptor) -> LegalityVerdict {
    if let Some(reason) = P::structural_check(tuning) {
        return LegalityVerdict::Rejected(reason);
    }
    let usage = input.estimate_resources(tuning);
    if usage.shared_bytes > hw.max_shared_bytes_per_block {
        return LegalityVerdict::Rejected(RejectReason::SharedMemory {
            required: usage.shared_bytes,
            limit: hw.max_shared_bytes_per_block,
        });
    }
    if usage.registers_per_thread > hw.max_registers_per_thread {
        return LegalityVerdict::Rejected(RejectReason::Registers {
            required: usage.registers_per_thread,
            limit: hw.max_registers_per_thread,
        });
    }
    if usage.threads_per_block > hw.max_threads_per_block {
        return LegalityVerdict::Rejected(RejectReason::Threads {
            required: usage.threads_per_block,
            limit: hw.max_threads_per_block,
        });
    }
    LegalityVerdict::Accepted(usage)
}

/// Feature vector for the performance model: input features followed by the
/// tuning values, all strictly positive.
pub fn encode_features<P: Problem>(input: &P, tuning: &P::Tuning) -> Vec<f64> {
    let mut features = input.input_features();
    features.extend(tuning.values().into_iter().map(f64::from));
    features
}

/// Lazily enumerates every legal member of the bounds product, in
/// lexicographic order over the tuning's parameter order.
pub fn enumerate_legal<'a, P: Problem>(
    input: &'a P,
    hw: &'a HardwareDescriptor,
    bounds: &'a ParamBounds,
) -> impl Iterator<Item = P::Tuning> + 'a {
    bounds.product().map(|values| P::Tuning::from_values(&values)).filter(move |t| is_legal(input, t, hw).is_accepted())
}

pub(crate) fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

pub(crate) fn divisibility(
    outer: &'static str,
    outer_value: u32,
    inner: &'static str,
    inner_value: u32,
) -> Option<RejectReason> {
    (!outer_value.is_multiple_of(inner_value)).then_some(RejectReason::Divisibility {
        outer,
        inner,
        outer_value,
        inner_value,
    })
}
