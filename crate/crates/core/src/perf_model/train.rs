use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{flat_gradients, Mlp, MlpArchitecture};
use crate::{Error, Result};

/// Row-major positive feature vectors with log-performance targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub dim: usize,
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
}

impl TrainingSet {
    pub fn new(dim: usize, features: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if dim == 0 || features.len() != dim * targets.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature values for {} targets of width {dim}",
                features.len(),
                targets.len()
            )));
        }
        if features.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            return Err(Error::invalid("training set", "features must be finite and positive"));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("training set", "targets must be finite"));
        }
        Ok(TrainingSet { dim, features, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn subset(&self, indices: &[usize]) -> TrainingSet {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        TrainingSet { dim: self.dim, features, targets }
    }

    /// The first `n` samples.
    pub fn head(&self, n: usize) -> TrainingSet {
        let n = n.min(self.len());
        TrainingSet {
            dim: self.dim,
            features: self.features[..n * self.dim].to_vec(),
            targets: self.targets[..n].to_vec(),
        }
    }
}

/// Feature log transform followed by per-feature standardization; targets are
/// standardized too and mapped back on prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTransform {
    pub log: bool,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub target_mean: f64,
    pub target_scale: f64,
}

impl FeatureTransform {
    pub fn identity(dim: usize) -> Self {
        FeatureTransform { log: true, mean: vec![0.0; dim], scale: vec![1.0; dim], target_mean: 0.0, target_scale: 1.0 }
    }

    pub fn fit(set: &TrainingSet, log: bool) -> Self {
        let n = set.len().max(1) as f64;
        let mut mean = vec![0.0; set.dim];
        let mut sq = vec![0.0; set.dim];
        for i in 0..set.len() {
            for (j, f) in set.row(i).iter().enumerate() {
                let v = if log { f.ln() } else { *f };
                mean[j] += v;
                sq[j] += v * v;
            }
        }
        let scale = mean
            .iter_mut()
            .zip(&sq)
            .map(|(m, s)| {
                *m /= n;
                let var = (s / n - *m * *m).max(0.0);
                if var > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let target_mean = set.targets.iter().sum::<f64>() / n;
        let target_var = set.targets.iter().map(|t| (t - target_mean).powi(2)).sum::<f64>() / n;
        let target_scale = if target_var > 1e-12 { target_var.sqrt() } else { 1.0 };
        FeatureTransform { log, mean, scale, target_mean, target_scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_into(&self, features: &[f64], out: &mut Vec<f64>) {
        for (j, f) in features.iter().enumerate() {
            let v = if self.log { f.ln() } else { *f };
            out.push((v - self.mean[j]) / self.scale[j]);
        }
    }

    pub fn transform(&self, set: &TrainingSet) -> (Vec<f64>, Vec<f64>) {
        let mut x = Vec::with_capacity(set.features.len());
        for i in 0..set.len() {
            self.apply_into(set.row(i), &mut x);
        }
        let y = set.targets.iter().map(|t| (t - self.target_mean) / self.target_scale).collect();
        (x, y)
    }
}

/// Network plus the transform it was trained behind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    pub transform: FeatureTransform,
    pub mlp: Mlp,
}

const PREDICT_CHUNK: usize = 1024;

impl Regressor {
    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    /// Predicted log-performance of one raw feature vector.
    pub fn predict(&self, features: &[f64]) -> f64 {
        self.predict_batch(features, 1)[0]
    }

    /// Predictions for `rows` raw feature vectors stored row-major.
    pub fn predict_batch(&self, features: &[f64], rows: usize) -> Vec<f64> {
        let dim = self.input_dim();
        assert_eq!(features.len(), rows * dim, "feature length");
        let mut out = Vec::with_capacity(rows);
        let mut buf = Vec::with_capacity(PREDICT_CHUNK * dim);
        for chunk in features.chunks(PREDICT_CHUNK * dim) {
            buf.clear();
            for row in chunk.chunks_exact(dim) {
                self.transform.apply_into(row, &mut buf);
            }
            let n = chunk.len() / dim;
            out.extend(
                self.mlp
                    .forward_transformed(&buf, n)
                    .into_iter()
                    .map(|y| y * self.transform.target_scale + self.transform.target_mean),
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng_seed: u64,
    pub validation_fraction: f64,
    pub optimizer: Optimizer,
    /// Ablation switch; `false` feeds raw (standardized) features to the net.
    pub log_features: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 200,
            rng_seed: 0,
            validation_fraction: 0.1,
            optimizer: Optimizer::Adam,
            log_features: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("train config", "batch size and epochs must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation_fraction", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub validation_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_validation_mse: f64,
}

/// Mean squared error of predictions against the targets, in log-performance
/// units.
pub fn evaluate(model: &Regressor, set: &TrainingSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::invalid("dataset", "cannot evaluate on an empty dataset"));
    }
    if set.dim != model.input_dim() {
        return Err(Error::ModelMismatch(format!(
            "model expects {} features, dataset has {}",
            model.input_dim(),
            set.dim
        )));
    }
    let predictions = model.predict_batch(&set.features, set.len());
    let sum: f64 = predictions.iter().zip(&set.targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / set.len() as f64)
}

/// Splits off a seeded random validation fraction, then trains.
pub fn train(set: &TrainingSet, arch: &MlpArchitecture, cfg: &TrainConfig) -> Result<(Regressor, History)> {
    cfg.validate()?;
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ 0x5eed));
    let n_val =
        ((set.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, set.len().saturating_sub(1).max(1));
    let (val, tr) = order.split_at(n_val);
    train_with_validation(&set.subset(tr), &set.subset(val), arch, cfg)
}

/// Trains on `train_set`, keeping the weights with the lowest validation MSE.
pub fn train_with_validation(
    train_set: &TrainingSet,
    validation: &TrainingSet,
    arch: &MlpArchitecture,
    cfg: &TrainConfig,
) -> Result<(Regressor, History)> {
    cfg.validate()?;
    arch.validate()?;
    if train_set.dim != arch.input_dim || validation.dim != arch.input_dim {
        return Err(Error::DimensionMismatch(format!(
            "architecture takes {} features, data has {}",
            arch.input_dim, train_set.dim
        )));
    }
    if train_set.len() < 10 * cfg.batch_size {
        return Err(Error::invalid(
            "dataset",
            format!("{} samples is fewer than ten batches of {}", train_set.len(), cfg.batch_size),
        ));
    }
    if validation.is_empty() {
        return Err(Error::invalid("dataset", "validation set is empty"));
    }

    let transform = FeatureTransform::fit(train_set, cfg.log_features);
    let (x, y) = transform.transform(train_set);
    let (vx, vy) = transform.transform(validation);
    let unscale = transform.target_scale * transform.target_scale;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut mlp = Mlp::init(arch, &mut rng)?;
    let mut state = OptimizerState::new(cfg, mlp.params().count());

    let dim = arch.input_dim;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut bx = Vec::with_capacity(cfg.batch_size * dim);
    let mut by = Vec::with_capacity(cfg.batch_size);
    let mut best = (mlp.clone(), f64::INFINITY, 0);
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            for &i in batch {
                bx.extend_from_slice(&x[i * dim..(i + 1) * dim]);
                by.push(y[i]);
            }
            let (loss, grads) = mlp.backward(&bx, &by);
            loss_sum += loss * batch.len() as f64;
            state.step(&mut mlp, flat_gradients(&grads));
        }
        let train_mse = loss_sum / train_set.len() as f64 * unscale;
        let validation_mse = mlp.mse_transformed(&vx, &vy) * unscale;
        if !validation_mse.is_finite() {
            return Err(Error::Diverged { epoch, mse: validation_mse });
        }
        log::debug!("epoch {epoch}: train {train_mse:.5} validation {validation_mse:.5}");
        epochs.push(EpochStats { epoch, train_mse, validation_mse });
        if validation_mse < best.1 {
            best = (mlp.clone(), validation_mse, epoch);
        }
    }

    let (mlp, best_validation_mse, best_epoch) = best;
    Ok((Regressor { transform, mlp }, History { epochs, best_epoch, best_validation_mse }))
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

impl OptimizerState {
    fn new(cfg: &TrainConfig, n: usize) -> Self {
        let (m, v) = match cfg.optimizer {
            Optimizer::Sgd => (Vec::new(), Vec::new()),
            Optimizer::Adam => (vec![0.0; n], vec![0.0; n]),
        };
        OptimizerState { kind: cfg.optimizer, lr: cfg.learning_rate, t: 0, m, v }
    }

    fn step<'a>(&mut self, mlp: &mut Mlp, grads: impl Iterator<Item = &'a f64>) {
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in mlp.params_mut().zip(grads) {
                    *p -= self.lr * g;
                }
            }
            Optimizer::Adam => {
                self.t += 1;
                let c1 = 1.0 - BETA1.powi(self.t);
                let c2 = 1.0 - BETA2.powi(self.t);
                let step = self.lr * c2.sqrt() / c1;
                for (((p, g), m), v) in mlp.params_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *p -= step * *m / (v.sqrt() + EPSILON);
                }
            }
        }
    }
}

/// Largest componentwise discrepancy between the analytic gradient and a
/// central finite difference with step `h`, relative to
/// `max(|analytic|, |numeric|, floor)`.
pub fn gradient_check(mlp: &Mlp, inputs: &[f64], targets: &[f64], h: f64, floor: f64) -> f64 {
    let (_, grads) = mlp.backward(inputs, targets);
    let analytic: Vec<f64> = flat_gradients(&grads).copied().collect();
    let mut probe = mlp.clone();
    let mut worst: f64 = 0.0;
    for (idx, a) in analytic.iter().enumerate() {
        let original = *probe.params_mut().nth(idx).expect("parameter");
        *probe.params_mut().nth(idx).expect("parameter") = original + h;
        let plus = probe.mse_transformed(inputs, targets);
        *probe.params_mut().nth(idx).expect("parameter") = original - h;
        let minus = probe.mse_transformed(inputs, targets);
        *probe.params_mut().nth(idx).expect("parameter") = original;
        let numeric = (plus - minus) / (2.0 * h);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_set(n: usize, dim: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> TrainingSet {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Vec::with_capacity(n * dim);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..dim).map(|_| r.random_range(0.0f64..5.0).exp()).collect();
            targets.push(f(&row));
            features.extend(row);
        }
        TrainingSet::new(dim, features, targets).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = ChaCha8Rng::seed_from_u64(11);
        for hidden in [vec![5], vec![4, 6], vec![3, 5, 4, 6, 3]] {
            let arch = MlpArchitecture::new(4, hidden).unwrap();
            let mut mlp = Mlp::init(&arch, &mut r).unwrap();
            // nonzero biases keep pre-activations off the relu kink
            for layer in &mut mlp.layers {
                layer.bias.iter_mut().for_each(|b| *b = r.random_range(0.1..0.5));
            }
            let x: Vec<f64> = (0..32).map(|_| r.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
            let err = gradient_check(&mlp, &x, &y, 1e-4, 1e-7);
            assert!(err < 1e-4, "{err}");
        }
    }

    #[test]
    fn learns_a_constant() {
        let set = random_set(3000, 3, 1, |_| 2.5);
        let arch = MlpArchitecture::new(3, vec![8]).unwrap();
        let cfg = TrainConfig { epochs: 200, batch_size: 64, ..TrainConfig::default() };
        let (model, history) = train(&set, &arch, &cfg).unwrap();
        assert!(history.best_validation_mse <= 1e-6);
        assert!((model.predict(&[1.0, 2.0, 3.0]) - 2.5).abs() < 1e-3);
    }

    #[test]
    fn full_batch_descent_is_monotone() {
        let set = random_set(2560, 3, 2, |x| x[0].ln() - 0.5 * x[1].ln());
        let arch = MlpArchitecture::new(3, vec![6, 6]).unwrap();
        let transform = FeatureTransform::fit(&set, true);
        let (x, y) = transform.transform(&set);
        let mut mlp = Mlp::init(&arch, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut previous = f64::INFINITY;
        for _ in 0..50 {
            let (loss, grads) = mlp.backward(&x, &y);
            assert!(loss <= previous + 1e-12);
            previous = loss;
            let g: Vec<f64> = flat_gradients(&grads).copied().collect();
            for (p, g) in mlp.params_mut().zip(g) {
                *p -= 0.01 * g;
            }
        }
    }

    #[test]
    fn evaluate_matches_second_implementation() {
        let set = random_set(1000, 3, 3, |x| x[0].ln().sin());
        let arch = MlpArchitecture::new(3, vec![4]).unwrap();
        let model = Regressor {
            transform: FeatureTransform::fit(&set, true),
            mlp: Mlp::init(&arch, &mut ChaCha8Rng::seed_from_u64(1)).unwrap(),
        };
        let mse = evaluate(&model, &set).unwrap();
        let mut total = 0.0;
        for i in 0..set.len() {
            let e = model.predict(set.row(i)) - set.targets[i];
            total += e * e;
        }
        assert_eq!(mse, total / 1000.0);
        let reversed: Vec<usize> = (0..1000).rev().collect();
        let shuffled = evaluate(&model, &set.subset(&reversed)).unwrap();
        assert!((shuffled - mse).abs() <= 1e-12 * mse);
        assert!(evaluate(&model, &set.head(0)).is_err());
    }

    #[test]
    fn single_exact_sample_scores_zero() {
        let arch = MlpArchitecture::new(2, vec![1]).unwrap();
        let model = Regressor { transform: FeatureTransform::identity(2), mlp: Mlp::zeros(&arch).unwrap() };
        let set = TrainingSet::new(2, vec![1.0, 2.0], vec![0.0]).unwrap();
        assert_eq!(evaluate(&model, &set).unwrap(), 0.0);
    }

    #[test]
    fn training_is_deterministic() {
        let set = random_set(3000, 3, 4, |x| x[0].ln().max(x[1].ln()));
        let arch = MlpArchitecture::new(3, vec![8]).unwrap();
        let cfg = TrainConfig { epochs: 3, batch_size: 32, ..TrainConfig::default() };
        let a = train(&set, &arch, &cfg).unwrap();
        let b = train(&set, &arch, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let set = random_set(3000, 3, 6, |x| x[0].ln() * 3.0);
        let arch = MlpArchitecture::new(3, vec![16, 16]).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e6,
            optimizer: Optimizer::Sgd,
            epochs: 50,
            batch_size: 32,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&set, &arch, &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn too_small_dataset_rejected() {
        let set = random_set(100, 3, 7, |_| 1.0);
        let arch = MlpArchitecture::new(3, vec![4]).unwrap();
        assert!(train(&set, &arch, &TrainConfig::default()).is_err());
    }
}
