//! Cache-blocked CPU executors for GEMM and implicit-GEMM convolution.
//!
//! Layouts: `A` is `M x K` row-major (`K x M` when `trans_a`), `B` is `K x N`
//! (`N x K` when `trans_b`), `C` is `M x N`. Images are `C,H,W,N`, filters
//! `C,R,S,K` and outputs `K,P,Q,N`, all row-major.

use std::fmt;
use std::ops::{Add, AddAssign, Mul};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::engine::{self, linear_tiles, Operand, OutputMap, Plan};
use super::{BackendTag, MeasurementBackend};
use crate::param_space::{ConvInput, ConvTuning, DType, GemmInput, GemmTuning, Problem};
use crate::{Error, Result};

pub trait Element:
    Copy
    + Default
    + PartialEq
    + PartialOrd
    + fmt::Debug
    + Add<Output = Self>
    + AddAssign
    + Mul<Output = Self>
    + Send
    + Sync
    + 'static
{
    const DTYPE: DType;
    const ZERO: Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    /// `bytes` holds exactly `DTYPE.size_bytes()` bytes.
    fn read_le(bytes: &[u8]) -> Self;
}

macro_rules! element {
    ($t:ty, $dtype:expr) => {
        impl Element for $t {
            const DTYPE: DType = $dtype;
            const ZERO: Self = 0.0;
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn read_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("element width"))
            }
        }
    };
}

element!(f32, DType::F32);
element!(f64, DType::F64);

#[derive(Debug, Clone)]
pub struct GemmRun<T> {
    pub c: Vec<T>,
    pub elapsed_secs: f64,
    pub gflops: f64,
}

#[derive(Debug, Clone)]
pub struct ConvRun<T> {
    pub output: Vec<T>,
    pub elapsed_secs: f64,
    pub gflops: f64,
}

fn check_dtype<T: Element>(dtype: DType) -> Result<()> {
    if dtype != T::DTYPE {
        return Err(Error::DimensionMismatch(format!(
            "input declares {} but buffers hold {}",
            dtype.name(),
            T::DTYPE.name()
        )));
    }
    Ok(())
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::DimensionMismatch(format!("{what} has {got} elements, expected {want}")));
    }
    Ok(())
}

fn gflops(flops: f64, secs: f64) -> f64 {
    flops / secs.max(1e-9) / 1e9
}

pub fn cpu_execute_gemm<T: Element>(input: &GemmInput, tuning: &GemmTuning, a: &[T], b: &[T]) -> Result<GemmRun<T>> {
    check_dtype::<T>(input.dtype)?;
    if let Some(reason) = GemmInput::structural_check(tuning) {
        return Err(Error::IllegalTuning(reason));
    }
    let (m, n, k) = (input.m as usize, input.n as usize, input.k as usize);
    check_len("A", a.len(), m * k)?;
    check_len("B", b.len(), k * n)?;

    let (a_base, a_step): (Vec<usize>, Vec<usize>) = if input.trans_a {
        ((0..m).collect(), (0..k).map(|d| d * m).collect())
    } else {
        ((0..m).map(|i| i * k).collect(), (0..k).collect())
    };
    let (b_base, b_step): (Vec<usize>, Vec<usize>) = if input.trans_b {
        ((0..n).map(|j| j * k).collect(), (0..k).collect())
    } else {
        ((0..n).collect(), (0..k).map(|d| d * n).collect())
    };
    let out_row: Vec<usize> = (0..m).map(|i| i * n).collect();
    let out_col: Vec<usize> = (0..n).collect();

    let v = |x: u32| x as usize;
    let plan = Plan {
        row_tiles: linear_tiles(m, v(tuning.m_l)),
        col_tiles: linear_tiles(n, v(tuning.n_l)),
        depth: k,
        thread_rows: v(tuning.m_s),
        thread_cols: v(tuning.n_s),
        prefetch: v(tuning.u),
        split_thread: v(tuning.k_s),
        split_block: v(tuning.k_l),
        split_grid: v(tuning.k_g),
    };
    let mut c = vec![T::ZERO; m * n];
    let started = Instant::now();
    engine::execute(
        &plan,
        &Operand { data: a, base: &a_base, step: &a_step },
        &Operand { data: b, base: &b_base, step: &b_step },
        &mut c,
        &OutputMap { row: &out_row, col: &out_col },
    );
    let elapsed_secs = started.elapsed().as_secs_f64();
    Ok(GemmRun { c, elapsed_secs, gflops: gflops(input.flops(), elapsed_secs) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndirectionEntry {
    pub c: usize,
    pub r: usize,
    pub s: usize,
    /// Offset into the image relative to the base offset of output `(p, q, n)`.
    pub offset: usize,
}

/// Reduction index `t` of the implicit GEMM maps to `entries[t]`; the image
/// element read for output row `(p, q, n)` is `row_base(p, q, n) + offset`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndirectionTable {
    pub entries: Vec<IndirectionEntry>,
    w: usize,
    n: usize,
}

impl IndirectionTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn row_base(&self, p: usize, q: usize, n: usize) -> usize {
        (p * self.w + q) * self.n + n
    }
}

pub fn build_indirection_table(input: &ConvInput) -> IndirectionTable {
    let (h, w, n) = (input.h as usize, input.w as usize, input.n_batch as usize);
    let (r_len, s_len) = (input.r as usize, input.s as usize);
    let mut entries = Vec::with_capacity(input.crs() as usize);
    for c in 0..input.c as usize {
        for r in 0..r_len {
            for s in 0..s_len {
                entries.push(IndirectionEntry { c, r, s, offset: ((c * h + r) * w + s) * n });
            }
        }
    }
    IndirectionTable { entries, w, n }
}

/// Row tiles over the `(p, q, n)` output positions, each tile listing its
/// members thread sub-tile by thread sub-tile.
fn conv_row_tiles(input: &ConvInput, t: &ConvTuning) -> Vec<Vec<Option<usize>>> {
    let (p_len, q_len, n_len) = (input.p as usize, input.q as usize, input.n_batch as usize);
    let v = |x: u32| x as usize;
    let (pl, ql, nl) = (v(t.p_l), v(t.q_l), v(t.n_l));
    let (ps, qs, ns) = (v(t.p_s), v(t.q_s), v(t.n_s));
    let mut tiles = Vec::new();
    for bp in 0..p_len.div_ceil(pl) {
        for bq in 0..q_len.div_ceil(ql) {
            for bn in 0..n_len.div_ceil(nl) {
                let mut members = Vec::with_capacity(pl * ql * nl);
                for tp in 0..pl / ps {
                    for tq in 0..ql / qs {
                        for tn in 0..nl / ns {
                            for ip in 0..ps {
                                for iq in 0..qs {
                                    for inn in 0..ns {
                                        let p = bp * pl + tp * ps + ip;
                                        let q = bq * ql + tq * qs + iq;
                                        let n = bn * nl + tn * ns + inn;
                                        let inside = p < p_len && q < q_len && n < n_len;
                                        members.push(inside.then(|| (p * q_len + q) * n_len + n));
                                    }
                                }
                            }
                        }
                    }
                }
                tiles.push(members);
            }
        }
    }
    tiles
}

pub fn cpu_execute_conv<T: Element>(
    input: &ConvInput,
    tuning: &ConvTuning,
    images: &[T],
    filters: &[T],
) -> Result<ConvRun<T>> {
    check_dtype::<T>(input.dtype)?;
    if let Some(reason) = ConvInput::structural_check(tuning) {
        return Err(Error::IllegalTuning(reason));
    }
    check_len("images", images.len(), input.image_len())?;
    check_len("filters", filters.len(), input.filter_len())?;

    let (p_len, q_len, n_len) = (input.p as usize, input.q as usize, input.n_batch as usize);
    let k_len = input.k_filters as usize;
    let npq = p_len * q_len * n_len;

    let table = build_indirection_table(input);
    let a_step: Vec<usize> = table.entries.iter().map(|e| e.offset).collect();
    let mut a_base = Vec::with_capacity(npq);
    for p in 0..p_len {
        for q in 0..q_len {
            for n in 0..n_len {
                a_base.push(table.row_base(p, q, n));
            }
        }
    }
    let b_base: Vec<usize> = (0..k_len).collect();
    let b_step: Vec<usize> = (0..table.len()).map(|d| d * k_len).collect();
    let out_row: Vec<usize> = (0..npq).collect();
    let out_col: Vec<usize> = (0..k_len).map(|k| k * npq).collect();

    let v = |x: u32| x as usize;
    let plan = Plan {
        row_tiles: conv_row_tiles(input, tuning),
        col_tiles: linear_tiles(k_len, v(tuning.k_l)),
        depth: table.len(),
        thread_rows: v(tuning.p_s) * v(tuning.q_s) * v(tuning.n_s),
        thread_cols: v(tuning.k_s),
        prefetch: v(tuning.u),
        split_thread: v(tuning.c_s),
        split_block: v(tuning.c_l),
        split_grid: v(tuning.c_g),
    };
    let mut output = vec![T::ZERO; input.output_len()];
    let started = Instant::now();
    engine::execute(
        &plan,
        &Operand { data: images, base: &a_base, step: &a_step },
        &Operand { data: filters, base: &b_base, step: &b_step },
        &mut output,
        &OutputMap { row: &out_row, col: &out_col },
    );
    let elapsed_secs = started.elapsed().as_secs_f64();
    Ok(ConvRun { output, elapsed_secs, gflops: gflops(input.flops(), elapsed_secs) })
}

/// Values of a reference computation in f64 together with the sum of
/// absolute products behind each value, used to scale rounding errors.
#[derive(Debug, Clone)]
pub struct Reference {
    pub values: Vec<f64>,
    pub magnitudes: Vec<f64>,
}

impl Reference {
    /// Largest `|got - value| / magnitude` over all elements; elements whose
    /// products are all zero must match exactly.
    pub fn max_relative_error<T: Element>(&self, got: &[T]) -> f64 {
        assert_eq!(got.len(), self.values.len());
        let mut worst: f64 = 0.0;
        for ((g, v), m) in got.iter().zip(&self.values).zip(&self.magnitudes) {
            let err = (g.to_f64() - v).abs();
            let rel = if *m > 0.0 {
                err / m
            } else if err == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(rel);
        }
        worst
    }
}

/// Triple-loop product in f64.
pub fn naive_gemm<T: Element>(input: &GemmInput, a: &[T], b: &[T]) -> Reference {
    let (m, n, k) = (input.m as usize, input.n as usize, input.k as usize);
    let a_at = |i: usize, d: usize| if input.trans_a { a[d * m + i] } else { a[i * k + d] }.to_f64();
    let b_at = |d: usize, j: usize| if input.trans_b { b[j * k + d] } else { b[d * n + j] }.to_f64();
    let mut values = vec![0.0; m * n];
    let mut magnitudes = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let (mut sum, mut mag) = (0.0, 0.0);
            for d in 0..k {
                let prod = a_at(i, d) * b_at(d, j);
                sum += prod;
                mag += prod.abs();
            }
            values[i * n + j] = sum;
            magnitudes[i * n + j] = mag;
        }
    }
    Reference { values, magnitudes }
}

/// Direct valid-mode cross-correlation summed over channels, in f64.
pub fn direct_conv<T: Element>(input: &ConvInput, images: &[T], filters: &[T]) -> Reference {
    let (nb, p_len, q_len, k_len) =
        (input.n_batch as usize, input.p as usize, input.q as usize, input.k_filters as usize);
    let (c_len, r_len, s_len) = (input.c as usize, input.r as usize, input.s as usize);
    let (h, w) = (input.h as usize, input.w as usize);
    let mut values = vec![0.0; input.output_len()];
    let mut magnitudes = vec![0.0; input.output_len()];
    for k in 0..k_len {
        for p in 0..p_len {
            for q in 0..q_len {
                for n in 0..nb {
                    let (mut sum, mut mag) = (0.0, 0.0);
                    for c in 0..c_len {
                        for r in 0..r_len {
                            for s in 0..s_len {
                                let x = images[((c * h + p + r) * w + q + s) * nb + n].to_f64();
                                let f = filters[((c * r_len + r) * s_len + s) * k_len + k].to_f64();
                                sum += x * f;
                                mag += (x * f).abs();
                            }
                        }
                    }
                    let idx = ((k * p_len + p) * q_len + q) * nb + n;
                    values[idx] = sum;
                    magnitudes[idx] = mag;
                }
            }
        }
    }
    Reference { values, magnitudes }
}

/// Uniform values in `[-1, 1)`.
pub fn random_buffer<T: Element>(len: usize, rng: &mut impl Rng) -> Vec<T> {
    (0..len).map(|_| T::from_f64(rng.random_range(-1.0..1.0))).collect()
}

/// Wall-clock backend: runs the executor on seeded random operands, once to
/// warm up and then `repetitions` times, reporting the best run.
#[derive(Debug, Clone)]
pub struct CpuBackend {
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for CpuBackend {
    fn default() -> Self {
        CpuBackend { repetitions: 5, seed: 0 }
    }
}

impl CpuBackend {
    fn best_of<F: FnMut() -> Result<f64>>(&self, mut run: F) -> Result<f64> {
        run()?;
        let mut best = f64::INFINITY;
        for _ in 0..self.repetitions.max(1) {
            best = best.min(run()?);
        }
        Ok(best)
    }

    fn gemm_typed<T: Element>(&self, input: &GemmInput, tuning: &GemmTuning) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let a = random_buffer::<T>((input.m * input.k) as usize, &mut rng);
        let b = random_buffer::<T>((input.k * input.n) as usize, &mut rng);
        let secs = self.best_of(|| Ok(cpu_execute_gemm(input, tuning, &a, &b)?.elapsed_secs))?;
        Ok(gflops(input.flops(), secs))
    }

    fn conv_typed<T: Element>(&self, input: &ConvInput, tuning: &ConvTuning) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let images = random_buffer::<T>(input.image_len(), &mut rng);
        let filters = random_buffer::<T>(input.filter_len(), &mut rng);
        let secs = self.best_of(|| Ok(cpu_execute_conv(input, tuning, &images, &filters)?.elapsed_secs))?;
        Ok(gflops(input.flops(), secs))
    }
}

fn no_half() -> Error {
    Error::Unsupported("the CPU backend has no f16 arithmetic".into())
}

impl MeasurementBackend<GemmInput> for CpuBackend {
    fn tag(&self) -> BackendTag {
        BackendTag::Cpu
    }

    fn measure(&self, input: &GemmInput, tuning: &GemmTuning) -> Result<f64> {
        match input.dtype {
            DType::F32 => self.gemm_typed::<f32>(input, tuning),
            DType::F64 => self.gemm_typed::<f64>(input, tuning),
            DType::F16 => Err(no_half()),
        }
    }
}

impl MeasurementBackend<ConvInput> for CpuBackend {
    fn tag(&self) -> BackendTag {
        BackendTag::Cpu
    }

    fn measure(&self, input: &ConvInput, tuning: &ConvTuning) -> Result<f64> {
        match input.dtype {
            DType::F32 => self.conv_typed::<f32>(input, tuning),
            DType::F64 => self.conv_typed::<f64>(input, tuning),
            DType::F16 => Err(no_half()),
        }
    }
}
