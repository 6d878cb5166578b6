//! Dataset generation, training-data plumbing, runtime inference and caching.

mod cache;
mod dataset;
mod generate;
mod infer;
mod inputs;

pub use cache::{digest, InferenceCache, CACHE_DIR_ENV};
pub use dataset::{peek_kind, CsvInput, Dataset, Sample, DATASET_SCHEMA};
pub use generate::generate_dataset;
pub use infer::{
    exhaustive_optimum, infer, top_k_indices, Candidate, InferenceResult, Predictor, DEFAULT_TOP_K, REBENCH_REPETITIONS,
};
pub use inputs::{
    conv_fixtures, find_fixture, gemm_fixtures, ConvShapes, DimRange, Fixture, GemmShapes, InputSampler, WeightedInputs,
};
