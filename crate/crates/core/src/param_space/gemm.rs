use serde::{Deserialize, Serialize};

use super::{
    ceil_div, divisibility, DType, LoweredKernel, ParamBounds, Problem, ProblemKind, RejectReason, ResourceUsage,
    TuningParams,
};
use crate::{Error, Result};

/// `C = op(A) op(B)` with `op(A)` of shape `m x k` and `op(B)` of shape `k x n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GemmInput {
    pub m: u64,
    pub n: u64,
    pub k: u64,
    pub dtype: DType,
    pub trans_a: bool,
    pub trans_b: bool,
}

impl GemmInput {
    pub fn new(m: u64, n: u64, k: u64, dtype: DType, trans_a: bool, trans_b: bool) -> Result<Self> {
        let input = GemmInput { m, n, k, dtype, trans_a, trans_b };
        input.validate()?;
        Ok(input)
    }
}

/// Tiling and reduction-splitting parameters of one GEMM kernel variant.
///
/// Field order is the canonical parameter order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GemmTuning {
    /// Per-thread tile.
    pub m_s: u32,
    pub n_s: u32,
    /// Per-block tile.
    pub m_l: u32,
    pub n_l: u32,
    /// Reduction prefetch depth.
    pub u: u32,
    /// Reduction splits across thread, block and grid.
    pub k_s: u32,
    pub k_l: u32,
    pub k_g: u32,
}

impl GemmTuning {
    pub const ONES: GemmTuning = GemmTuning { m_s: 1, n_s: 1, m_l: 1, n_l: 1, u: 1, k_s: 1, k_l: 1, k_g: 1 };
}

impl TuningParams for GemmTuning {
    const NAMES: &'static [&'static str] = &["m_s", "n_s", "m_l", "n_l", "u", "k_s", "k_l", "k_g"];

    fn from_values(v: &[u32]) -> Self {
        assert_eq!(v.len(), Self::NAMES.len(), "GEMM tuning has 8 parameters");
        GemmTuning { m_s: v[0], n_s: v[1], m_l: v[2], n_l: v[3], u: v[4], k_s: v[5], k_l: v[6], k_g: v[7] }
    }

    fn values(&self) -> Vec<u32> {
        vec![self.m_s, self.n_s, self.m_l, self.n_l, self.u, self.k_s, self.k_l, self.k_g]
    }
}

impl Problem for GemmInput {
    type Tuning = GemmTuning;

    const KIND: ProblemKind = ProblemKind::Gemm;
    const INPUT_FEATURES: &'static [&'static str] = &["m", "n", "k", "dtype_size", "trans_a", "trans_b"];
    const FEATURE_VERSION: &'static str = "gemm-v1";

    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.k == 0 {
            return Err(Error::invalid("GEMM input", "m, n and k must be at least 1"));
        }
        Ok(())
    }

    fn dtype(&self) -> DType {
        self.dtype
    }

    fn flops(&self) -> f64 {
        2.0 * self.m as f64 * self.n as f64 * self.k as f64
    }

    fn estimate_resources(&self, t: &GemmTuning) -> ResourceUsage {
        let elem = u64::from(self.dtype.size_bytes());
        let (m_s, n_s, m_l, n_l, u) =
            (u64::from(t.m_s), u64::from(t.n_s), u64::from(t.m_l), u64::from(t.n_l), u64::from(t.u));
        ResourceUsage {
            // Double-buffered m_l x u and u x n_l operand tiles.
            shared_bytes: 2 * elem * (m_l * u + u * n_l),
            // Accumulators, one fragment of each operand, fixed overhead.
            registers_per_thread: m_s * n_s + m_s + n_s + 8,
            threads_per_block: (m_l / m_s) * (n_l / n_s) * u64::from(t.k_l),
        }
    }

    fn structural_check(t: &GemmTuning) -> Option<RejectReason> {
        if let Some(reason) = t.check_values() {
            return Some(reason);
        }
        if t.k_s > t.u {
            return Some(RejectReason::SplitExceedsPrefetch { split: t.k_s, prefetch: t.u });
        }
        divisibility("m_l", t.m_l, "m_s", t.m_s)
            .or_else(|| divisibility("n_l", t.n_l, "n_s", t.n_s))
            .or_else(|| divisibility("u", t.u, "k_s", t.k_s))
    }

    fn input_features(&self) -> Vec<f64> {
        vec![
            self.m as f64,
            self.n as f64,
            self.k as f64,
            f64::from(self.dtype.size_bytes()),
            if self.trans_a { 2.0 } else { 1.0 },
            if self.trans_b { 2.0 } else { 1.0 },
        ]
    }

    /// Powers of two in `[1, 16]` for every parameter.
    fn default_bounds() -> ParamBounds {
        ParamBounds::pow2::<GemmTuning>(1, 16).expect("static bounds")
    }

    fn lower(&self, t: &GemmTuning) -> LoweredKernel {
        LoweredKernel {
            rows: self.m,
            cols: self.n,
            depth: self.k,
            row_blocks: ceil_div(self.m, u64::from(t.m_l)),
            col_blocks: ceil_div(self.n, u64::from(t.n_l)),
            block_rows: u64::from(t.m_l),
            block_cols: u64::from(t.n_l),
            thread_rows: u64::from(t.m_s),
            thread_cols: u64::from(t.n_s),
            prefetch: u64::from(t.u),
            split_thread: u64::from(t.k_s),
            split_block: u64::from(t.k_l),
            split_grid: u64::from(t.k_g),
        }
    }
}
