//! Measurement backends: a deterministic analytical model of a synthetic GPU
//! and a real tiled CPU executor.

mod analytical;
mod cpu;
mod engine;
mod occupancy;
pub mod tensor_io;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use analytical::{instruction_counts, modelled_cycles, t_arith, t_mem, AnalyticalBackend, InstructionCounts};
pub use cpu::{
    build_indirection_table, cpu_execute_conv, cpu_execute_gemm, direct_conv, naive_gemm, random_buffer, ConvRun,
    CpuBackend, Element, GemmRun, IndirectionEntry, IndirectionTable, Reference,
};
pub use occupancy::{occupancy, resident_blocks};

use crate::param_space::Problem;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendTag {
    Analytical,
    Cpu,
}

impl BackendTag {
    pub fn name(self) -> &'static str {
        match self {
            BackendTag::Analytical => "analytical",
            BackendTag::Cpu => "cpu",
        }
    }
}

impl fmt::Display for BackendTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BackendTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytical" => Ok(BackendTag::Analytical),
            "cpu" => Ok(BackendTag::Cpu),
            other => Err(Error::invalid("backend", format!("unknown backend {other:?}"))),
        }
    }
}

/// Something that reports the performance (GFLOPS) of a legal kernel variant.
pub trait MeasurementBackend<P: Problem> {
    fn tag(&self) -> BackendTag;

    /// Performance in GFLOPS; finite and positive for legal pairs.
    fn measure(&self, input: &P, tuning: &P::Tuning) -> Result<f64>;
}
