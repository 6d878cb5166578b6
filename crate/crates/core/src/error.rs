use std::path::PathBuf;

use thiserror::Error;

use crate::param_space::RejectReason;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("illegal tuning: {0}")]
    IllegalTuning(RejectReason),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("sampler gave up after {attempts} rejected draws; the model does not cover any legal configuration")]
    RetryExhausted { attempts: u64 },

    #[error("empty legal search space")]
    EmptySpace,

    #[error("training diverged at epoch {epoch}: validation MSE is {mse}")]
    Diverged { epoch: usize, mse: f64 },

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("schema mismatch in {path}: {reason}")]
    Schema { path: PathBuf, reason: String },

    #[error("failed to parse {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid { what, reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Parse { path: path.into(), reason: reason.to_string() }
    }
}
