use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::backends::{AnalyticalBackend, BackendTag, MeasurementBackend};
use crate::param_space::{enumerate_legal, HardwareDescriptor, ParamBounds, Problem};
use crate::perf_model::PerfModel;
use crate::{Error, Result};

pub const DEFAULT_TOP_K: usize = 100;
/// Measurements per candidate in the re-benchmark phase; the best is kept.
pub const REBENCH_REPETITIONS: usize = 3;

/// Scores tuning vectors for one input; higher is better.
pub trait Predictor<P: Problem> {
    fn predict(&self, input: &P, tunings: &[P::Tuning]) -> Result<Vec<f64>>;
}

impl<P: Problem> Predictor<P> for PerfModel {
    fn predict(&self, input: &P, tunings: &[P::Tuning]) -> Result<Vec<f64>> {
        PerfModel::predict(self, input, tunings)
    }
}

/// Predicts with the analytical model itself (log GFLOPS).
impl<P: Problem> Predictor<P> for AnalyticalBackend {
    fn predict(&self, input: &P, tunings: &[P::Tuning]) -> Result<Vec<f64>> {
        tunings.iter().map(|t| Ok(self.gflops(input, t)?.ln())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate<T> {
    pub tuning: T,
    pub predicted: f64,
    pub measured_gflops: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "P: Problem")]
pub struct InferenceResult<P: Problem> {
    pub input: P,
    pub tuning: P::Tuning,
    pub predicted: f64,
    pub measured_gflops: f64,
    pub legal_configurations: usize,
    pub backend: BackendTag,
    /// Top candidates in predicted order.
    pub ranked: Vec<Candidate<P::Tuning>>,
}

fn by_prediction(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    let key = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
    key(b.0).total_cmp(&key(a.0)).then(a.1.cmp(&b.1))
}

/// Indices of the `k` best predictions, best first; ties keep enumeration
/// order.
pub fn top_k_indices(predictions: &[f64], k: usize) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = predictions.iter().copied().zip(0..).collect();
    let k = k.min(keyed.len());
    if k == 0 {
        return Vec::new();
    }
    if k < keyed.len() {
        keyed.select_nth_unstable_by(k - 1, by_prediction);
        keyed.truncate(k);
    }
    keyed.sort_by(by_prediction);
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Ranks every legal tuning in `bounds` with `predictor`, re-measures the
/// `top_k` best on `backend` and returns the fastest of those.
pub fn infer<P: Problem>(
    predictor: &dyn Predictor<P>,
    input: &P,
    hw: &HardwareDescriptor,
    bounds: &ParamBounds,
    top_k: usize,
    backend: &dyn MeasurementBackend<P>,
) -> Result<InferenceResult<P>> {
    if top_k == 0 {
        return Err(Error::invalid("top_k", "must be at least 1"));
    }
    input.validate()?;
    let legal: Vec<P::Tuning> = enumerate_legal(input, hw, bounds).collect();
    if legal.is_empty() {
        return Err(Error::EmptySpace);
    }
    let predictions = predictor.predict(input, &legal)?;
    if predictions.len() != legal.len() {
        return Err(Error::ModelMismatch("predictor returned the wrong number of scores".into()));
    }
    let order = top_k_indices(&predictions, top_k);
    let mut ranked = Vec::with_capacity(order.len());
    for &i in &order {
        let mut best = f64::NEG_INFINITY;
        for _ in 0..REBENCH_REPETITIONS {
            best = best.max(backend.measure(input, &legal[i])?);
        }
        ranked.push(Candidate { tuning: legal[i].clone(), predicted: predictions[i], measured_gflops: best });
    }
    // Equal measurements go to the earliest tuning in enumeration order.
    let winner = ranked
        .iter()
        .zip(&order)
        .max_by(|(a, ia), (b, ib)| a.measured_gflops.total_cmp(&b.measured_gflops).then(ib.cmp(ia)))
        .map(|(c, _)| c.clone())
        .expect("at least one candidate");
    Ok(InferenceResult {
        input: input.clone(),
        tuning: winner.tuning,
        predicted: winner.predicted,
        measured_gflops: winner.measured_gflops,
        legal_configurations: legal.len(),
        backend: backend.tag(),
        ranked,
    })
}

/// Measures every legal tuning and returns the fastest (first in
/// enumeration order on ties) with its performance.
pub fn exhaustive_optimum<P: Problem>(
    input: &P,
    hw: &HardwareDescriptor,
    bounds: &ParamBounds,
    backend: &dyn MeasurementBackend<P>,
) -> Result<(P::Tuning, f64)> {
    let mut best: Option<(P::Tuning, f64)> = None;
    for t in enumerate_legal(input, hw, bounds) {
        let g = backend.measure(input, &t)?;
        if best.as_ref().is_none_or(|(_, b)| g > *b) {
            best = Some((t, g));
        }
    }
    best.ok_or(Error::EmptySpace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param_space::{DType, GemmInput, GemmTuning};

    struct Constant;

    impl Predictor<GemmInput> for Constant {
        fn predict(&self, _: &GemmInput, t: &[GemmTuning]) -> Result<Vec<f64>> {
            Ok(vec![0.0; t.len()])
        }
    }

    #[test]
    fn top_k_breaks_ties_by_order() {
        assert_eq!(top_k_indices(&[1.0, 3.0, 3.0, 2.0, f64::NAN], 3), vec![1, 2, 3]);
        assert_eq!(top_k_indices(&[1.0, 1.0, 1.0], 2), vec![0, 1]);
        assert_eq!(top_k_indices(&[0.5], 10), vec![0]);
    }

    #[test]
    fn single_legal_configuration_is_returned() {
        let hw = HardwareDescriptor::synthetic_pascal();
        let bounds = ParamBounds::uniform::<GemmTuning>(&[1]).unwrap();
        let x = GemmInput::new(10, 10, 10, DType::F32, false, false).unwrap();
        let backend = AnalyticalBackend::new(hw.clone());
        let r = infer(&Constant, &x, &hw, &bounds, 5, &backend).unwrap();
        assert_eq!(r.tuning, GemmTuning::ONES);
        assert_eq!(r.legal_configurations, 1);
        assert_eq!(r.ranked.len(), 1);
    }

    #[test]
    fn oracle_predictor_finds_exhaustive_optimum() {
        let hw = HardwareDescriptor::synthetic_pascal();
        let bounds = ParamBounds::pow2::<GemmTuning>(1, 4).unwrap();
        let backend = AnalyticalBackend::new(hw.clone());
        for (m, n, k) in [(32, 32, 60000), (300, 200, 100), (2048, 2048, 2048)] {
            let x = GemmInput::new(m, n, k, DType::F32, false, true).unwrap();
            let (best, g) = exhaustive_optimum(&x, &hw, &bounds, &backend).unwrap();
            let r = infer(&backend, &x, &hw, &bounds, 1, &backend).unwrap();
            assert_eq!(r.measured_gflops, g);
            assert_eq!(r.tuning, best);
        }
    }

    #[test]
    fn empty_space_and_zero_k_are_errors() {
        let hw = HardwareDescriptor::synthetic_pascal();
        let mut bounds = ParamBounds::uniform::<GemmTuning>(&[1]).unwrap();
        bounds.set("m_s", vec![2]).unwrap();
        let x = GemmInput::new(10, 10, 10, DType::F32, false, false).unwrap();
        let backend = AnalyticalBackend::new(hw.clone());
        assert!(matches!(infer(&Constant, &x, &hw, &bounds, 5, &backend), Err(Error::EmptySpace)));
        let ok = ParamBounds::uniform::<GemmTuning>(&[1]).unwrap();
        assert!(infer(&Constant, &x, &hw, &ok, 0, &backend).is_err());
    }
}
