//! Generative sampling of legal tuning vectors.
//!
//! Every tuning parameter is modelled as an independent categorical variable
//! whose probabilities are the acceptance counts observed during a short
//! uniform-sampling calibration, each smoothed by a Dirichlet pseudo-count
//! `alpha`. Drawing from the product of those marginals and rejecting illegal
//! vectors is much cheaper than uniform rejection sampling when most of the
//! raw space is illegal.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::param_space::{ParamBounds, TuningParams};
use crate::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 100.0;
pub const DEFAULT_CALIBRATION_DRAWS: u64 = 100_000;
/// Rejections tolerated by [`CategoricalModel::sample`] before giving up.
pub const MAX_REJECTIONS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDistribution {
    pub name: String,
    pub values: Vec<u32>,
    /// Pseudo-counts, each at least `alpha`.
    pub counts: Vec<f64>,
}

impl ParamDistribution {
    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.counts.iter().sum();
        self.counts.iter().map(|c| c / total).collect()
    }

    fn draw_index(&self, rng: &mut impl Rng) -> usize {
        let total: f64 = self.counts.iter().sum();
        let mut x = rng.random::<f64>() * total;
        for (i, c) in self.counts.iter().enumerate() {
            if x < *c {
                return i;
            }
            x -= c;
        }
        // Rounding can leave x marginally above the last bucket.
        self.counts.len() - 1
    }
}

/// Independent per-parameter categorical distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalModel {
    pub alpha: f64,
    pub params: Vec<ParamDistribution>,
}

impl CategoricalModel {
    /// The prior alone: `alpha` on every candidate value.
    pub fn prior(bounds: &ParamBounds, alpha: f64) -> Result<Self> {
        Self::from_counts(bounds, alpha, Vec::new())
    }

    /// Builds a model from raw observed counts (one vector per parameter, or an
    /// empty vector for "no observations"), adding `alpha` to each.
    pub fn from_counts(bounds: &ParamBounds, alpha: f64, observed: Vec<Vec<f64>>) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::invalid("alpha", format!("{alpha} is not a non-negative number")));
        }
        let params = bounds
            .names()
            .iter()
            .zip(bounds.lists())
            .enumerate()
            .map(|(i, (name, values))| {
                let counts = match observed.get(i) {
                    Some(obs) if obs.len() == values.len() => obs.iter().map(|c| c + alpha).collect(),
                    Some(_) => {
                        return Err(Error::invalid(
                            "counts",
                            format!("{name}: count vector length differs from candidate list"),
                        ))
                    }
                    None => vec![alpha; values.len()],
                };
                Ok(ParamDistribution { name: name.to_string(), values: values.clone(), counts })
            })
            .collect::<Result<Vec<_>>>()?;
        let model = CategoricalModel { alpha, params };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.params {
            if p.values.is_empty() || p.values.len() != p.counts.len() {
                return Err(Error::invalid("categorical model", format!("{}: malformed", p.name)));
            }
            if p.counts.iter().any(|c| !c.is_finite() || *c < self.alpha) {
                return Err(Error::invalid(
                    "categorical model",
                    format!("{}: counts must be finite and at least alpha", p.name),
                ));
            }
            if p.counts.iter().sum::<f64>() <= 0.0 {
                return Err(Error::invalid("categorical model", format!("{}: all counts are zero", p.name)));
            }
        }
        Ok(())
    }

    /// Draws one vector from the product distribution without a legality check.
    pub fn draw_values(&self, rng: &mut impl Rng) -> Vec<u32> {
        self.params.iter().map(|p| p.values[p.draw_index(rng)]).collect()
    }

    /// Draws until `legal` accepts, giving up after [`MAX_REJECTIONS`].
    pub fn sample<T, F>(&self, legal: F, rng: &mut impl Rng) -> Result<T>
    where
        T: TuningParams,
        F: Fn(&T) -> bool,
    {
        self.check_matches::<T>()?;
        for _ in 0..MAX_REJECTIONS {
            let t = T::from_values(&self.draw_values(rng));
            if legal(&t) {
                return Ok(t);
            }
        }
        Err(Error::RetryExhausted { attempts: MAX_REJECTIONS })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: CategoricalModel = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        model.validate()?;
        Ok(model)
    }

    fn check_matches<T: TuningParams>(&self) -> Result<()> {
        let names: Vec<&str> = self.params.iter().map(|p| p.name.as_str()).collect();
        if names != T::NAMES {
            return Err(Error::ModelMismatch(format!("sampler parameters {names:?} do not match {:?}", T::NAMES)));
        }
        Ok(())
    }
}

/// Fits a [`CategoricalModel`] from `n_uniform` uniform draws over `bounds`,
/// counting the parameter values of every accepted draw.
pub fn calibrate<T, F>(
    legal: F,
    bounds: &ParamBounds,
    n_uniform: u64,
    alpha: f64,
    seed: u64,
) -> Result<CategoricalModel>
where
    T: TuningParams,
    F: Fn(&T) -> bool,
{
    if n_uniform == 0 {
        return Err(Error::invalid("calibration", "n_uniform must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lists = bounds.lists();
    let mut counts: Vec<Vec<f64>> = lists.iter().map(|l| vec![0.0; l.len()]).collect();
    let mut picks = vec![0usize; lists.len()];
    let mut values = vec![0u32; lists.len()];
    for _ in 0..n_uniform {
        for (i, list) in lists.iter().enumerate() {
            picks[i] = rng.random_range(0..list.len());
            values[i] = list[picks[i]];
        }
        if legal(&T::from_values(&values)) {
            for (i, &pick) in picks.iter().enumerate() {
                counts[i][pick] += 1.0;
            }
        }
    }
    CategoricalModel::from_counts(bounds, alpha, counts)
}

/// Where the draws of [`acceptance_rate`] come from.
#[derive(Debug, Clone, Copy)]
pub enum Proposal<'a> {
    Uniform(&'a ParamBounds),
    Categorical(&'a CategoricalModel),
}

/// Fraction of first-attempt draws that pass `legal`.
pub fn acceptance_rate<T, F>(proposal: Proposal<'_>, legal: F, n_trials: u64, seed: u64) -> Result<f64>
where
    T: TuningParams,
    F: Fn(&T) -> bool,
{
    if n_trials == 0 {
        return Err(Error::invalid("acceptance rate", "n_trials must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted = 0u64;
    for _ in 0..n_trials {
        let values = match proposal {
            Proposal::Uniform(bounds) => bounds.lists().iter().map(|l| l[rng.random_range(0..l.len())]).collect(),
            Proposal::Categorical(model) => model.draw_values(&mut rng),
        };
        if legal(&T::from_values(&values)) {
            accepted += 1;
        }
    }
    Ok(accepted as f64 / n_trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param_space::{is_legal, DType, GemmInput, GemmTuning, HardwareDescriptor};

    fn four_values() -> ParamBounds {
        let mut b = ParamBounds::uniform::<GemmTuning>(&[1]).unwrap();
        b.set("m_s", vec![1, 2, 4, 8]).unwrap();
        b
    }

    fn worked_counts() -> Vec<Vec<f64>> {
        let mut counts = vec![vec![100.0]; 8];
        counts[0] = vec![5.0, 20.0, 25.0, 50.0];
        counts
    }

    #[test]
    fn empirical_proportions_without_prior() {
        let model = CategoricalModel::from_counts(&four_values(), 0.0, worked_counts()).unwrap();
        let p = model.params[0].probabilities();
        for (got, want) in p.iter().zip([0.05, 0.2, 0.25, 0.5]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn prior_smooths_proportions() {
        let model = CategoricalModel::from_counts(&four_values(), 100.0, worked_counts()).unwrap();
        let p = model.params[0].probabilities();
        for (got, want) in p.iter().zip([0.21, 0.24, 0.25, 0.30]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_accepted_samples_gives_uniform_prior() {
        let model = calibrate::<GemmTuning, _>(|_| false, &four_values(), 1000, 100.0, 7).unwrap();
        assert_eq!(model.params[0].probabilities(), vec![0.25; 4]);
    }

    #[test]
    fn calibrate_is_deterministic() {
        let hw = HardwareDescriptor::synthetic_pascal();
        let x = GemmInput::new(64, 64, 64, DType::F32, false, false).unwrap();
        let bounds = ParamBounds::pow2::<GemmTuning>(1, 16).unwrap();
        let legal = |t: &GemmTuning| is_legal(&x, t, &hw).is_accepted();
        let a = calibrate(legal, &bounds, 5000, 100.0, 3).unwrap();
        let b = calibrate(legal, &bounds, 5000, 100.0, 3).unwrap();
        assert_eq!(a, b);
        let c = calibrate(legal, &bounds, 5000, 100.0, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn point_mass_returns_that_vector() {
        let bounds = ParamBounds::uniform::<GemmTuning>(&[1, 2]).unwrap();
        let mut counts = vec![vec![0.0, 1.0]; 8];
        counts[5] = vec![1.0, 0.0];
        let model = CategoricalModel::from_counts(&bounds, 0.0, counts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t: GemmTuning = model.sample(|_| true, &mut rng).unwrap();
        assert_eq!(t, GemmTuning { m_s: 2, n_s: 2, m_l: 2, n_l: 2, u: 2, k_s: 1, k_l: 2, k_g: 2 });
    }

    #[test]
    fn rejecting_everything_exhausts_retries() {
        let model = CategoricalModel::prior(&four_values(), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = model.sample::<GemmTuning, _>(|_| false, &mut rng).unwrap_err();
        assert!(matches!(err, Error::RetryExhausted { .. }));
    }

    #[test]
    fn empirical_frequencies_match_model() {
        let bounds = four_values();
        let model = CategoricalModel::from_counts(&bounds, 100.0, worked_counts()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 100_000;
        let mut hits = [0u64; 4];
        for _ in 0..draws {
            let t: GemmTuning = model.sample(|_| true, &mut rng).unwrap();
            hits[t.m_s.trailing_zeros() as usize] += 1;
        }
        for (h, p) in hits.iter().zip(model.params[0].probabilities()) {
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            let freq = *h as f64 / draws as f64;
            assert!((freq - p).abs() < 3.0 * se, "freq {freq} vs p {p} (se {se})");
        }
    }

    #[test]
    fn always_legal_accepts_everything() {
        let bounds = ParamBounds::pow2::<GemmTuning>(1, 16).unwrap();
        let rate = acceptance_rate::<GemmTuning, _>(Proposal::Uniform(&bounds), |_| true, 100, 1).unwrap();
        assert_eq!(rate, 1.0);
    }

    #[test]
    fn probabilities_strictly_positive() {
        let hw = HardwareDescriptor::synthetic_pascal();
        let x = GemmInput::new(64, 64, 64, DType::F32, false, false).unwrap();
        let bounds = ParamBounds::pow2::<GemmTuning>(1, 16).unwrap();
        let model =
            calibrate(|t: &GemmTuning| is_legal(&x, t, &hw).is_accepted(), &bounds, 2000, DEFAULT_ALPHA, 1).unwrap();
        for p in &model.params {
            assert!(p.probabilities().iter().all(|q| *q > 0.0));
        }
    }

    #[test]
    fn json_round_trip() {
        let model = CategoricalModel::from_counts(&four_values(), 100.0, worked_counts()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sampler.json");
        model.save(&path).unwrap();
        assert_eq!(CategoricalModel::load(&path).unwrap(), model);
    }

    #[test]
    fn mismatched_tuning_kind_rejected() {
        use crate::param_space::ConvTuning;
        let model = CategoricalModel::prior(&four_values(), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(model.sample::<ConvTuning, _>(|_| true, &mut rng).is_err());
    }
}
