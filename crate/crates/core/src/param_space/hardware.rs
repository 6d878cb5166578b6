use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Resource limits and latency/throughput constants of a (real or synthetic)
/// target device.
///
/// Latencies and throughputs are in cycles per warp instruction. The register
/// file of one multiprocessor is taken to be
/// `max_registers_per_thread * max_threads_per_block`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareDescriptor {
    pub max_shared_bytes_per_block: u64,
    pub max_registers_per_thread: u64,
    pub max_threads_per_block: u64,
    pub max_warps_per_multiprocessor: u64,
    pub warp_size: u64,
    pub alu_latency: f64,
    pub alu_throughput: f64,
    pub mem_latency: f64,
    pub mem_throughput: f64,
    pub clock_hz: f64,
    pub num_multiprocessors: u64,
}

impl HardwareDescriptor {
    /// Synthetic Pascal-class device used as the default target: 56
    /// multiprocessors at 1.33 GHz, 48 KiB shared memory, a 64 Ki-entry
    /// register file.
    pub fn synthetic_pascal() -> Self {
        HardwareDescriptor {
            max_shared_bytes_per_block: 49152,
            max_registers_per_thread: 64,
            max_threads_per_block: 1024,
            max_warps_per_multiprocessor: 64,
            warp_size: 32,
            alu_latency: 6.0,
            alu_throughput: 0.5,
            mem_latency: 400.0,
            mem_throughput: 4.0,
            clock_hz: 1.328e9,
            num_multiprocessors: 56,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ints = [
            ("max_shared_bytes_per_block", self.max_shared_bytes_per_block),
            ("max_registers_per_thread", self.max_registers_per_thread),
            ("max_threads_per_block", self.max_threads_per_block),
            ("max_warps_per_multiprocessor", self.max_warps_per_multiprocessor),
            ("warp_size", self.warp_size),
            ("num_multiprocessors", self.num_multiprocessors),
        ];
        if let Some((name, _)) = ints.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid("hardware descriptor", format!("{name} must be positive")));
        }
        let reals = [
            ("alu_latency", self.alu_latency),
            ("alu_throughput", self.alu_throughput),
            ("mem_latency", self.mem_latency),
            ("mem_throughput", self.mem_throughput),
            ("clock_hz", self.clock_hz),
        ];
        if let Some((name, _)) = reals.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("hardware descriptor", format!("{name} must be finite and positive")));
        }
        if self.alu_latency < self.alu_throughput {
            return Err(Error::invalid("hardware descriptor", "alu_latency < alu_throughput"));
        }
        if self.mem_latency < self.mem_throughput {
            return Err(Error::invalid("hardware descriptor", "mem_latency < mem_throughput"));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let hw: HardwareDescriptor = serde_json::from_str(text)?;
        hw.validate()?;
        Ok(hw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let hw: HardwareDescriptor = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        hw.validate()?;
        Ok(hw)
    }

    pub fn register_file_per_multiprocessor(&self) -> u64 {
        self.max_registers_per_thread * self.max_threads_per_block
    }

    /// Peak arithmetic rate in GFLOPS: every multiprocessor retires one warp
    /// of multiply-accumulates every `alu_throughput` cycles.
    pub fn peak_gflops(&self) -> f64 {
        2.0 * self.num_multiprocessors as f64 * self.warp_size as f64 * self.clock_hz / self.alu_throughput / 1e9
    }
}

impl Default for HardwareDescriptor {
    fn default() -> Self {
        Self::synthetic_pascal()
    }
}
