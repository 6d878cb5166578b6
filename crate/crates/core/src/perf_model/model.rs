use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::Regressor;
use crate::param_space::{encode_features, Problem, ProblemKind};
use crate::{Error, Result};

/// A trained regressor tagged with the problem kind and feature encoding it
/// was trained on. Predictions are natural-log GFLOPS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfModel {
    pub kind: ProblemKind,
    pub feature_version: String,
    pub regressor: Regressor,
}

impl PerfModel {
    pub fn new<P: Problem>(regressor: Regressor) -> Result<Self> {
        let model = PerfModel { kind: P::KIND, feature_version: P::FEATURE_VERSION.to_string(), regressor };
        model.check::<P>()?;
        Ok(model)
    }

    /// Fails unless the model was trained on `P`'s current feature encoding.
    pub fn check<P: Problem>(&self) -> Result<()> {
        if self.kind != P::KIND {
            return Err(Error::ModelMismatch(format!("model was trained on {} data, not {}", self.kind, P::KIND)));
        }
        if self.feature_version != P::FEATURE_VERSION {
            return Err(Error::ModelMismatch(format!(
                "feature encoding {} does not match {}",
                self.feature_version,
                P::FEATURE_VERSION
            )));
        }
        if self.regressor.input_dim() != P::feature_len() || self.regressor.transform.dim() != P::feature_len() {
            return Err(Error::ModelMismatch(format!(
                "model takes {} features, {} produces {}",
                self.regressor.input_dim(),
                P::KIND,
                P::feature_len()
            )));
        }
        Ok(())
    }

    pub fn predict<P: Problem>(&self, input: &P, tunings: &[P::Tuning]) -> Result<Vec<f64>> {
        self.check::<P>()?;
        let mut features = Vec::with_capacity(tunings.len() * P::feature_len());
        for t in tunings {
            features.extend(encode_features(input, t));
        }
        Ok(self.regressor.predict_batch(&features, tunings.len()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let model: PerfModel = serde_json::from_str(text)?;
        model.regressor.mlp.validate()?;
        if model.regressor.transform.dim() != model.regressor.input_dim() {
            return Err(Error::ModelMismatch("transform width differs from the network input".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Json(inner) => Error::parse(path, inner),
            other => other,
        })
    }
}
