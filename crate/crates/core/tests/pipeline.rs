use autotune_core::backends::AnalyticalBackend;
use autotune_core::param_space::{
    enumerate_legal, DType, GemmInput, GemmTuning, HardwareDescriptor, ParamBounds, Problem,
};
use autotune_core::perf_model::{evaluate, train, MlpArchitecture, TrainConfig, TrainingSet};
use autotune_core::pipeline::{exhaustive_optimum, generate_dataset, infer, Dataset, GemmShapes, InferenceCache};
use autotune_core::sampler::{calibrate, DEFAULT_ALPHA};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn mlp_learns_a_log_space_max_function() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 50_000;
    let mut features = Vec::with_capacity(3 * n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(1.0..1000.0f64));
        features.extend_from_slice(&x);
        targets.push((x[0].ln() + x[1].ln() - x[2].ln()).max(0.0).exp());
    }
    let set = TrainingSet::new(3, features, targets.iter().map(|t| t.ln()).collect()).unwrap();
    let arch = MlpArchitecture::new(3, vec![32, 64, 32]).unwrap();
    let cfg = TrainConfig { epochs: 30, ..TrainConfig::default() };
    let (model, history) = train(&set, &arch, &cfg).unwrap();
    assert!(history.best_validation_mse < 0.05, "{}", history.best_validation_mse);
    assert!(evaluate(&model, &set).unwrap() < 0.05);
}

fn small_bounds() -> ParamBounds {
    ParamBounds::new::<GemmTuning>(vec![
        vec![1, 2, 4],
        vec![1, 2, 4],
        vec![8, 16],
        vec![8, 16],
        vec![4, 8],
        vec![1, 2],
        vec![1, 4],
        vec![1, 4, 16],
    ])
    .unwrap()
}

#[test]
fn generated_data_round_trips_and_stays_legal() {
    let hw = HardwareDescriptor::synthetic_pascal();
    let bounds = GemmInput::default_bounds();
    let probe = GemmInput::new(512, 512, 512, DType::F32, false, false).unwrap();
    let sampler = calibrate::<GemmTuning, _>(
        |t| autotune_core::param_space::is_legal(&probe, t, &hw).is_accepted(),
        &bounds,
        20_000,
        DEFAULT_ALPHA,
        0,
    )
    .unwrap();
    let backend = AnalyticalBackend::new(hw.clone());
    let data = generate_dataset(&backend, &sampler, &GemmShapes::default(), &hw, 2000, 11).unwrap();
    assert_eq!(data.len(), 2000);
    assert_eq!(data.first_illegal(&hw), None);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    data.save(&path).unwrap();
    let back = Dataset::<GemmInput>::load(&path).unwrap();
    assert_eq!(back.samples(), data.samples());
}

#[test]
fn full_top_k_recovers_the_exhaustive_optimum() {
    let hw = HardwareDescriptor::synthetic_pascal();
    let bounds = small_bounds();
    let backend = AnalyticalBackend::new(hw.clone());
    for (m, n, k) in [(32, 32, 60_000), (1000, 700, 300), (4096, 4096, 32)] {
        let input = GemmInput::new(m, n, k, DType::F32, false, true).unwrap();
        let size = enumerate_legal(&input, &hw, &bounds).count();
        let got = infer(&backend, &input, &hw, &bounds, size, &backend).unwrap();
        let (tuning, gflops) = exhaustive_optimum(&input, &hw, &bounds, &backend).unwrap();
        assert_eq!(got.tuning, tuning);
        assert_eq!(got.measured_gflops, gflops);
        assert_eq!(got.legal_configurations, size);
    }
}

#[test]
fn cache_returns_stored_results() {
    let hw = HardwareDescriptor::synthetic_pascal();
    let backend = AnalyticalBackend::new(hw.clone());
    let input = GemmInput::new(128, 64, 256, DType::F32, false, false).unwrap();
    let result = infer(&backend, &input, &hw, &small_bounds(), 4, &backend).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = InferenceCache::new(dir.path());
    assert!(cache.lookup::<GemmInput>(&input, "ctx").is_none());
    cache.store("ctx", &result).unwrap();
    let hit = cache.lookup::<GemmInput>(&input, "ctx").unwrap();
    assert_eq!(hit.tuning, result.tuning);
    assert!(cache.lookup::<GemmInput>(&input, "other").is_none());
}

#[test]
fn random_inputs_always_have_a_legal_tuning() {
    let hw = HardwareDescriptor::synthetic_pascal();
    let bounds = GemmInput::default_bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let input = GemmInput::new(
            rng.random_range(1..5000),
            rng.random_range(1..5000),
            rng.random_range(1..5000),
            DType::F32,
            rng.random(),
            rng.random(),
        )
        .unwrap();
        assert!(enumerate_legal(&input, &hw, &bounds).next().is_some());
    }
}
