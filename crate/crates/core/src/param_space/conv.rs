use serde::{Deserialize, Serialize};

use super::{
    ceil_div, divisibility, DType, LoweredKernel, ParamBounds, Problem, ProblemKind, RejectReason, ResourceUsage,
    TuningParams,
};
use crate::{Error, Result};

/// Multi-channel valid-mode convolution
/// `O[k, :, :, n] = sum_c I[c, :, :, n] * F[c, :, :, k]` (correlation, unit
/// stride, no padding), so `h = p + r - 1` and `w = q + s - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvInput {
    pub n_batch: u64,
    pub p: u64,
    pub q: u64,
    pub k_filters: u64,
    pub c: u64,
    pub r: u64,
    pub s: u64,
    pub h: u64,
    pub w: u64,
    pub dtype: DType,
}

impl ConvInput {
    /// Builds a descriptor from output and filter dimensions; image dimensions
    /// are derived.
    #[allow(clippy::too_many_arguments)]
    pub fn new(n_batch: u64, p: u64, q: u64, k_filters: u64, c: u64, r: u64, s: u64, dtype: DType) -> Result<Self> {
        if [n_batch, p, q, k_filters, c, r, s].contains(&0) {
            return Err(Error::invalid("CONV input", "all dimensions must be at least 1"));
        }
        let input = ConvInput { n_batch, p, q, k_filters, c, r, s, h: p + r - 1, w: q + s - 1, dtype };
        input.validate()?;
        Ok(input)
    }

    /// Rows of the implicit GEMM (`N * P * Q`).
    pub fn npq(&self) -> u64 {
        self.n_batch * self.p * self.q
    }

    /// Reduction length of the implicit GEMM (`C * R * S`).
    pub fn crs(&self) -> u64 {
        self.c * self.r * self.s
    }

    pub fn image_len(&self) -> usize {
        (self.c * self.h * self.w * self.n_batch) as usize
    }

    pub fn filter_len(&self) -> usize {
        (self.c * self.r * self.s * self.k_filters) as usize
    }

    pub fn output_len(&self) -> usize {
        (self.k_filters * self.p * self.q * self.n_batch) as usize
    }
}

/// Tiling and reduction-splitting parameters of one CONV kernel variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConvTuning {
    pub k_s: u32,
    pub p_s: u32,
    pub q_s: u32,
    pub n_s: u32,
    pub k_l: u32,
    pub p_l: u32,
    pub q_l: u32,
    pub n_l: u32,
    pub u: u32,
    pub c_s: u32,
    pub c_l: u32,
    pub c_g: u32,
}

impl ConvTuning {
    pub const ONES: ConvTuning =
        ConvTuning { k_s: 1, p_s: 1, q_s: 1, n_s: 1, k_l: 1, p_l: 1, q_l: 1, n_l: 1, u: 1, c_s: 1, c_l: 1, c_g: 1 };
}

impl TuningParams for ConvTuning {
    const NAMES: &'static [&'static str] =
        &["k_s", "p_s", "q_s", "n_s", "k_l", "p_l", "q_l", "n_l", "u", "c_s", "c_l", "c_g"];

    fn from_values(v: &[u32]) -> Self {
        assert_eq!(v.len(), Self::NAMES.len(), "CONV tuning has 12 parameters");
        ConvTuning {
            k_s: v[0],
            p_s: v[1],
            q_s: v[2],
            n_s: v[3],
            k_l: v[4],
            p_l: v[5],
            q_l: v[6],
            n_l: v[7],
            u: v[8],
            c_s: v[9],
            c_l: v[10],
            c_g: v[11],
        }
    }

    fn values(&self) -> Vec<u32> {
        vec![
            self.k_s, self.p_s, self.q_s, self.n_s, self.k_l, self.p_l, self.q_l, self.n_l, self.u, self.c_s, self.c_l,
            self.c_g,
        ]
    }
}

impl Problem for ConvInput {
    type Tuning = ConvTuning;

    const KIND: ProblemKind = ProblemKind::Conv;
    const INPUT_FEATURES: &'static [&'static str] = &["n", "p", "q", "k", "c", "r", "s", "dtype_size"];
    const FEATURE_VERSION: &'static str = "conv-v1";

    fn validate(&self) -> Result<()> {
        let dims = [self.n_batch, self.p, self.q, self.k_filters, self.c, self.r, self.s, self.h, self.w];
        if dims.contains(&0) {
            return Err(Error::invalid("CONV input", "all dimensions must be at least 1"));
        }
        if self.h != self.p + self.r - 1 || self.w != self.q + self.s - 1 {
            return Err(Error::invalid("CONV input", "image must satisfy h = p + r - 1 and w = q + s - 1"));
        }
        Ok(())
    }

    fn dtype(&self) -> DType {
        self.dtype
    }

    fn flops(&self) -> f64 {
        2.0 * self.npq() as f64 * self.k_filters as f64 * self.crs() as f64
    }

    fn estimate_resources(&self, t: &ConvTuning) -> ResourceUsage {
        let elem = u64::from(self.dtype.size_bytes());
        let v = |x: u32| u64::from(x);
        let image_tile = v(t.n_l) * v(t.p_l) * v(t.q_l);
        let thread_rows = v(t.p_s) * v(t.q_s) * v(t.n_s);
        ResourceUsage {
            shared_bytes: 2 * elem * (image_tile * v(t.u) + v(t.u) * v(t.k_l)),
            registers_per_thread: v(t.k_s) * thread_rows + thread_rows + v(t.k_s) + 8,
            threads_per_block: (v(t.k_l) / v(t.k_s))
                * (v(t.p_l) / v(t.p_s))
                * (v(t.q_l) / v(t.q_s))
                * (v(t.n_l) / v(t.n_s))
                * v(t.c_l),
        }
    }

    fn structural_check(t: &ConvTuning) -> Option<RejectReason> {
        if let Some(reason) = t.check_values() {
            return Some(reason);
        }
        if t.c_s > t.u {
            return Some(RejectReason::SplitExceedsPrefetch { split: t.c_s, prefetch: t.u });
        }
        divisibility("k_l", t.k_l, "k_s", t.k_s)
            .or_else(|| divisibility("p_l", t.p_l, "p_s", t.p_s))
            .or_else(|| divisibility("q_l", t.q_l, "q_s", t.q_s))
            .or_else(|| divisibility("n_l", t.n_l, "n_s", t.n_s))
            .or_else(|| divisibility("u", t.u, "c_s", t.c_s))
    }

    fn input_features(&self) -> Vec<f64> {
        vec![
            self.n_batch as f64,
            self.p as f64,
            self.q as f64,
            self.k_filters as f64,
            self.c as f64,
            self.r as f64,
            self.s as f64,
            f64::from(self.dtype.size_bytes()),
        ]
    }

    fn default_bounds() -> ParamBounds {
        let p = |lo: u32, hi: u32| (lo..=hi).filter(|v| v.is_power_of_two()).collect::<Vec<u32>>();
        ParamBounds::new::<ConvTuning>(vec![
            p(1, 8),
            p(1, 2),
            p(1, 2),
            p(1, 4),
            p(8, 64),
            p(1, 4),
            p(1, 8),
            p(1, 16),
            p(4, 16),
            p(1, 4),
            p(1, 4),
            p(1, 8),
        ])
        .expect("static bounds")
    }

    fn lower(&self, t: &ConvTuning) -> LoweredKernel {
        let v = |x: u32| u64::from(x);
        LoweredKernel {
            rows: self.npq(),
            cols: self.k_filters,
            depth: self.crs(),
            row_blocks: ceil_div(self.p, v(t.p_l)) * ceil_div(self.q, v(t.q_l)) * ceil_div(self.n_batch, v(t.n_l)),
            col_blocks: ceil_div(self.k_filters, v(t.k_l)),
            block_rows: v(t.p_l) * v(t.q_l) * v(t.n_l),
            block_cols: v(t.k_l),
            thread_rows: v(t.p_s) * v(t.q_s) * v(t.n_s),
            thread_cols: v(t.k_s),
            prefetch: v(t.u),
            split_thread: v(t.c_s),
            split_block: v(t.c_l),
            split_grid: v(t.c_g),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param_space::{encode_features, is_legal, HardwareDescriptor};

    fn conv3() -> ConvInput {
        ConvInput::new(16, 24, 240, 32, 16, 3, 3, DType::F32).unwrap()
    }

    #[test]
    fn image_dims_derived() {
        let x = conv3();
        assert_eq!((x.h, x.w), (26, 242));
        assert_eq!(x.npq(), 92160);
        assert_eq!(x.crs(), 144);
    }

    #[test]
    fn inconsistent_image_rejected() {
        let x = ConvInput { h: 10, ..conv3() };
        assert!(x.validate().is_err());
    }

    #[test]
    fn resources() {
        let t =
            ConvTuning { k_s: 2, p_s: 1, q_s: 2, n_s: 1, k_l: 8, p_l: 2, q_l: 4, n_l: 2, u: 4, c_s: 1, c_l: 2, c_g: 1 };
        let usage = conv3().estimate_resources(&t);
        assert_eq!(usage.shared_bytes, 2 * 4 * (16 * 4 + 4 * 8));
        assert_eq!(usage.threads_per_block, 4 * 2 * 2 * 2 * 2);
        assert_eq!(usage.registers_per_thread, 2 * 2 + 2 + 2 + 8);
        assert!(is_legal(&conv3(), &t, &HardwareDescriptor::synthetic_pascal()).is_accepted());
    }

    #[test]
    fn divisibility_per_dimension() {
        let t = ConvTuning { q_s: 4, q_l: 2, ..ConvTuning::ONES };
        let verdict = is_legal(&conv3(), &t, &HardwareDescriptor::synthetic_pascal());
        assert_eq!(verdict.reason().unwrap().label(), "divisibility");
    }

    #[test]
    fn feature_layout() {
        let f = encode_features(&conv3(), &ConvTuning::ONES);
        assert_eq!(f.len(), 20);
        assert_eq!(&f[..8], &[16.0, 24.0, 240.0, 32.0, 16.0, 3.0, 3.0, 4.0]);
        assert!(f[8..].iter().all(|v| *v == 1.0));
    }

    #[test]
    fn lowering_is_implicit_gemm() {
        let lowered = conv3().lower(&ConvTuning::ONES);
        assert_eq!((lowered.rows, lowered.cols, lowered.depth), (92160, 32, 144));
        assert_eq!(lowered.row_blocks, 92160);
    }
}
