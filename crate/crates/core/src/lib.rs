//! Input-aware auto-tuning for tiled matrix multiplication and implicit-GEMM
//! convolution.
//!
//! The crate is organised around the three phases of the tuner:
//!
//! 1. **Data generation**: [`sampler`] draws legal tuning vectors from a
//!    per-parameter categorical model, a [`backends::MeasurementBackend`]
//!    measures them and [`pipeline`] records the results.
//! 2. **Regression**: [`perf_model`] fits a from-scratch multi-layer
//!    perceptron on log-transformed features.
//! 3. **Runtime inference**: [`pipeline::infer`] scores every legal tuning for
//!    a fixed input with the model and re-benchmarks the best candidates.
//!
//! [`param_space`] defines the input and tuning spaces shared by all of them.

pub mod backends;
pub mod cli;
pub mod error;
pub mod param_space;
pub mod perf_model;
pub mod pipeline;
pub mod sampler;

pub use error::{Error, Result};
