use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::{CsvInput, Dataset, Sample};
use super::inputs::InputSampler;
use crate::backends::MeasurementBackend;
use crate::param_space::{is_legal, HardwareDescriptor};
use crate::sampler::{CategoricalModel, MAX_REJECTIONS};
use crate::{Error, Result};

/// Draws inputs and legal tunings, measures each new pair once and records
/// it, until `n_samples` distinct pairs are collected.
pub fn generate_dataset<P: CsvInput>(
    backend: &dyn MeasurementBackend<P>,
    sampler: &CategoricalModel,
    inputs: &dyn InputSampler<P>,
    hw: &HardwareDescriptor,
    n_samples: usize,
    seed: u64,
) -> Result<Dataset<P>> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dataset = Dataset::new();
    let mut duplicates_in_a_row = 0u64;
    while dataset.len() < n_samples {
        let input = inputs.draw(&mut rng);
        let tuning = sampler.sample(|t| is_legal(&input, t, hw).is_accepted(), &mut rng)?;
        if dataset.contains(&input, &tuning) {
            duplicates_in_a_row += 1;
            if duplicates_in_a_row >= MAX_REJECTIONS {
                return Err(Error::RetryExhausted { attempts: duplicates_in_a_row });
            }
            continue;
        }
        duplicates_in_a_row = 0;
        let gflops = backend.measure(&input, &tuning)?;
        dataset.push(Sample { input, tuning, gflops, backend: backend.tag() })?;
        if dataset.len() % 10_000 == 0 {
            log::info!("generated {} of {n_samples} samples", dataset.len());
        }
    }
    Ok(dataset)
}
