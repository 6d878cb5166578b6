//! Multi-layer perceptron regressor from log-features to log-performance.

mod mlp;
mod model;
mod train;

pub use mlp::{Gradients, Layer, Mlp, MlpArchitecture};
pub use model::PerfModel;
pub use train::{
    evaluate, gradient_check, train, train_with_validation, EpochStats, FeatureTransform, History, Optimizer,
    Regressor, TrainConfig, TrainingSet,
};
