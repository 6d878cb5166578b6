//! Latency/throughput performance model of a synthetic GPU.
//!
//! With `n` resident warps and `p` independent instructions per warp, one
//! warp instruction costs on average `max(latency / (n * p), throughput)`
//! cycles of a multiprocessor. A wave of resident blocks therefore takes
//! `max(t_arith * i_arith, t_mem * i_mem) * n` cycles, and the kernel takes
//! one such wave per batch of blocks that fits on each multiprocessor.

use crate::param_space::{is_legal, HardwareDescriptor, LegalityVerdict, LoweredKernel, Problem};
use crate::{Error, Result};

use super::occupancy::{resident_blocks, warps_per_block};
use super::{BackendTag, MeasurementBackend};

/// Average cycles per arithmetic warp instruction at parallelism `n`.
pub fn t_arith(n: f64, hw: &HardwareDescriptor) -> f64 {
    (hw.alu_latency / n).max(hw.alu_throughput)
}

/// Average cycles per memory warp instruction at parallelism `n`.
pub fn t_mem(n: f64, hw: &HardwareDescriptor) -> f64 {
    (hw.mem_latency / n).max(hw.mem_throughput)
}

/// Per-thread instruction counts of one kernel variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstructionCounts {
    /// Multiply-accumulates of the main reduction loop.
    pub mac: f64,
    /// `mac` plus the additions merging split reductions.
    pub arith: f64,
    /// Global tile loads, output stores (read-modify-write when the grid
    /// splits the reduction) and shared-memory reduction traffic.
    pub mem: f64,
    /// Independent arithmetic instructions available per step.
    pub arith_ilp: f64,
    /// Independent loads issued per prefetch step.
    pub mem_ilp: f64,
}

pub fn instruction_counts(k: &LoweredKernel) -> InstructionCounts {
    let accumulators = (k.thread_rows * k.thread_cols) as f64;
    let iterations = k.depth.div_ceil(k.prefetch * k.split_block * k.split_grid) as f64;
    let mac = accumulators * k.prefetch as f64 * iterations;

    let block_levels = (k.split_block as f64).log2();
    let arith = mac + accumulators * (k.split_thread - 1) as f64 + accumulators * block_levels;

    let tile_elements = (k.block_rows + k.block_cols) * k.prefetch;
    let loads_per_step = tile_elements.div_ceil(k.threads_per_slice()) as f64;
    let store_cost = if k.split_grid > 1 { 2.0 } else { 1.0 };
    let mem = iterations * loads_per_step + accumulators * store_cost + accumulators * block_levels;

    InstructionCounts { mac, arith, mem, arith_ilp: accumulators * k.split_thread as f64, mem_ilp: loads_per_step }
}

/// Cycles taken by one multiprocessor to run `blocks` resident blocks of
/// `warps` warps each.
fn wave_cycles(blocks: u64, warps: u64, counts: &InstructionCounts, hw: &HardwareDescriptor) -> f64 {
    let n = (blocks * warps) as f64;
    let arith = t_arith(n * counts.arith_ilp, hw) * counts.arith;
    let mem = t_mem(n * counts.mem_ilp, hw) * counts.mem;
    arith.max(mem) * n
}

/// Modelled runtime of a legal kernel variant, in cycles.
pub fn modelled_cycles<P: Problem>(input: &P, tuning: &P::Tuning, hw: &HardwareDescriptor) -> Result<f64> {
    let usage = match is_legal(input, tuning, hw) {
        LegalityVerdict::Accepted(usage) => usage,
        LegalityVerdict::Rejected(reason) => return Err(Error::IllegalTuning(reason)),
    };
    let kernel = input.lower(tuning);
    let counts = instruction_counts(&kernel);
    let warps = warps_per_block(&usage, hw);
    let per_wave = resident_blocks(&usage, hw).max(1);
    let per_sm = kernel.grid_blocks().div_ceil(hw.num_multiprocessors);
    let full_waves = per_sm / per_wave;
    let tail = per_sm % per_wave;
    let mut cycles = full_waves as f64 * wave_cycles(per_wave, warps, &counts, hw);
    if tail > 0 {
        cycles += wave_cycles(tail, warps, &counts, hw);
    }
    Ok(cycles)
}

/// Deterministic, noise-free backend driven by [`modelled_cycles`].
#[derive(Debug, Clone)]
pub struct AnalyticalBackend {
    pub hw: HardwareDescriptor,
}

impl AnalyticalBackend {
    pub fn new(hw: HardwareDescriptor) -> Self {
        AnalyticalBackend { hw }
    }

    pub fn gflops<P: Problem>(&self, input: &P, tuning: &P::Tuning) -> Result<f64> {
        let cycles = modelled_cycles(input, tuning, &self.hw)?;
        Ok(input.flops() / (cycles / self.hw.clock_hz) / 1e9)
    }
}

impl<P: Problem> MeasurementBackend<P> for AnalyticalBackend {
    fn tag(&self) -> BackendTag {
        BackendTag::Analytical
    }

    fn measure(&self, input: &P, tuning: &P::Tuning) -> Result<f64> {
        self.gflops(input, tuning)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param_space::{enumerate_legal, ConvInput, DType, GemmInput, GemmTuning, ParamBounds};
    use proptest::prelude::*;

    fn hw() -> HardwareDescriptor {
        HardwareDescriptor::synthetic_pascal()
    }

    #[test]
    fn single_warp_is_latency_bound() {
        let hw = hw();
        assert_eq!(t_arith(1.0, &hw), hw.alu_latency);
        assert_eq!(t_mem(1.0, &hw), hw.mem_latency);
        assert_eq!(t_arith(1e9, &hw), hw.alu_throughput);
    }

    proptest! {
        #[test]
        fn per_instruction_time_non_increasing_in_n(a in 0.01f64..1e4, b in 0.01f64..1e4) {
            let hw = hw();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(t_arith(hi, &hw) <= t_arith(lo, &hw));
            prop_assert!(t_mem(hi, &hw) <= t_mem(lo, &hw));
        }
    }

    #[test]
    fn grid_split_conserves_useful_work() {
        let x = GemmInput::new(256, 256, 4096, DType::F32, false, false).unwrap();
        let base = GemmTuning { m_s: 2, n_s: 4, m_l: 16, n_l: 16, u: 8, k_s: 1, k_l: 1, k_g: 2 };
        let doubled = GemmTuning { k_g: 4, ..base };
        let c1 = instruction_counts(&x.lower(&base));
        let c2 = instruction_counts(&x.lower(&doubled));
        assert_eq!(c2.mac * 2.0, c1.mac);
        let threads = |t: &GemmTuning| {
            let k = x.lower(t);
            k.grid_blocks() * k.threads_per_block()
        };
        assert_eq!(threads(&doubled), 2 * threads(&base));
        assert_eq!(c1.mac * threads(&base) as f64, c2.mac * threads(&doubled) as f64);
        assert_eq!(c1.mac * threads(&base) as f64, 256.0 * 256.0 * 4096.0);
    }

    #[test]
    fn approaches_peak_when_throughput_bound() {
        // Cheap memory and a huge problem: arithmetic throughput binds.
        let hw = HardwareDescriptor { mem_latency: 1.0, mem_throughput: 0.01, ..hw() };
        let x = GemmInput::new(8192, 8192, 8192, DType::F32, false, false).unwrap();
        let t = GemmTuning { m_s: 4, n_s: 4, m_l: 64, n_l: 64, u: 16, k_s: 1, k_l: 1, k_g: 1 };
        let gflops = AnalyticalBackend::new(hw.clone()).gflops(&x, &t).unwrap();
        assert!(gflops <= hw.peak_gflops());
        assert!(gflops > 0.99 * hw.peak_gflops(), "{gflops} vs {}", hw.peak_gflops());
    }

    #[test]
    fn never_exceeds_peak_on_default_space() {
        let hw = hw();
        let backend = AnalyticalBackend::new(hw.clone());
        let bounds = ParamBounds::pow2::<GemmTuning>(1, 16).unwrap();
        for (m, n, k) in [(512, 512, 512), (32, 32, 60000), (4096, 4096, 32), (2560, 16, 2560)] {
            let x = GemmInput::new(m, n, k, DType::F32, false, true).unwrap();
            for t in enumerate_legal(&x, &hw, &bounds).step_by(7) {
                let g = backend.gflops(&x, &t).unwrap();
                assert!(g.is_finite() && g > 0.0);
                assert!(g <= hw.peak_gflops());
            }
        }
    }

    #[test]
    fn illegal_pair_is_an_error() {
        let x = GemmInput::new(64, 64, 64, DType::F32, false, false).unwrap();
        let t = GemmTuning { m_s: 8, m_l: 4, ..GemmTuning::ONES };
        assert!(AnalyticalBackend::new(hw()).gflops(&x, &t).is_err());
    }

    #[test]
    fn conv_uses_the_same_model() {
        use crate::param_space::ConvTuning;
        let x = ConvInput::new(16, 12, 120, 64, 32, 3, 3, DType::F32).unwrap();
        let t = ConvTuning { k_s: 2, k_l: 8, p_l: 2, q_l: 4, u: 4, ..ConvTuning::ONES };
        let g = AnalyticalBackend::new(hw()).gflops(&x, &t).unwrap();
        assert!(g > 0.0 && g <= hw().peak_gflops());
    }

    #[test]
    fn deterministic() {
        let x = GemmInput::new(1000, 300, 77, DType::F32, true, false).unwrap();
        let t = GemmTuning { m_s: 2, n_s: 2, m_l: 8, n_l: 16, u: 4, k_s: 2, k_l: 2, k_g: 2 };
        let b = AnalyticalBackend::new(hw());
        assert_eq!(b.gflops(&x, &t).unwrap().to_bits(), b.gflops(&x, &t).unwrap().to_bits());
    }
}
