//! Distributions over kernel inputs and the benchmark task fixtures.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::param_space::{ConvInput, DType, GemmInput, Problem};
use crate::{Error, Result};

pub trait InputSampler<P: Problem> {
    fn draw(&self, rng: &mut ChaCha8Rng) -> P;
}

/// Finite weighted list of inputs.
#[derive(Debug, Clone)]
pub struct WeightedInputs<P> {
    inputs: Vec<P>,
    index: WeightedIndex<f64>,
}

impl<P: Problem> WeightedInputs<P> {
    pub fn new(entries: Vec<(P, f64)>) -> Result<Self> {
        let weights: Vec<f64> = entries.iter().map(|(_, w)| *w).collect();
        let index = WeightedIndex::new(&weights).map_err(|e| Error::invalid("input distribution", e.to_string()))?;
        Ok(WeightedInputs { inputs: entries.into_iter().map(|(p, _)| p).collect(), index })
    }

    pub fn uniform(inputs: Vec<P>) -> Result<Self> {
        Self::new(inputs.into_iter().map(|p| (p, 1.0)).collect())
    }
}

impl<P: Problem> InputSampler<P> for WeightedInputs<P> {
    fn draw(&self, rng: &mut ChaCha8Rng) -> P {
        self.inputs[self.index.sample(rng)].clone()
    }
}

/// Inclusive integer range sampled log-uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimRange {
    pub lo: u64,
    pub hi: u64,
}

impl DimRange {
    pub const fn new(lo: u64, hi: u64) -> Self {
        DimRange { lo, hi }
    }

    pub fn validate(&self, what: &'static str) -> Result<()> {
        if self.lo == 0 || self.lo > self.hi {
            return Err(Error::invalid(what, format!("bad range [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }

    pub fn draw(&self, rng: &mut impl Rng) -> u64 {
        if self.lo == self.hi {
            return self.lo;
        }
        let lo = (self.lo as f64).ln();
        let hi = ((self.hi + 1) as f64).ln();
        let v = rng.random_range(lo..hi).exp().floor() as u64;
        v.clamp(self.lo, self.hi)
    }
}

fn pick<T: Copy>(items: &[T], rng: &mut impl Rng) -> T {
    items[rng.random_range(0..items.len())]
}

/// Log-uniform GEMM shapes mixed with fixture shapes.
#[derive(Debug, Clone)]
pub struct GemmShapes {
    pub m: DimRange,
    pub n: DimRange,
    pub k: DimRange,
    pub dtypes: Vec<DType>,
    pub fixtures: Vec<GemmInput>,
    pub fixture_probability: f64,
}

impl Default for GemmShapes {
    fn default() -> Self {
        GemmShapes {
            m: DimRange::new(16, 8192),
            n: DimRange::new(16, 8192),
            k: DimRange::new(16, 100_000),
            dtypes: vec![DType::F32],
            fixtures: gemm_fixtures().into_iter().map(|f| f.input).collect(),
            fixture_probability: 0.1,
        }
    }
}

impl GemmShapes {
    pub fn validate(&self) -> Result<()> {
        self.m.validate("m range")?;
        self.n.validate("n range")?;
        self.k.validate("k range")?;
        if self.dtypes.is_empty() {
            return Err(Error::invalid("input distribution", "no data types"));
        }
        if !(0.0..=1.0).contains(&self.fixture_probability) {
            return Err(Error::invalid("fixture_probability", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

impl InputSampler<GemmInput> for GemmShapes {
    fn draw(&self, rng: &mut ChaCha8Rng) -> GemmInput {
        if !self.fixtures.is_empty() && rng.random_bool(self.fixture_probability) {
            return self.fixtures[rng.random_range(0..self.fixtures.len())];
        }
        GemmInput {
            m: self.m.draw(rng),
            n: self.n.draw(rng),
            k: self.k.draw(rng),
            dtype: pick(&self.dtypes, rng),
            trans_a: rng.random_bool(0.5),
            trans_b: rng.random_bool(0.5),
        }
    }
}

/// Log-uniform convolution shapes mixed with fixture shapes.
#[derive(Debug, Clone)]
pub struct ConvShapes {
    pub n: DimRange,
    pub p: DimRange,
    pub q: DimRange,
    pub k: DimRange,
    pub c: DimRange,
    pub filter: DimRange,
    pub dtypes: Vec<DType>,
    pub fixtures: Vec<ConvInput>,
    pub fixture_probability: f64,
}

impl Default for ConvShapes {
    fn default() -> Self {
        ConvShapes {
            n: DimRange::new(1, 32),
            p: DimRange::new(4, 256),
            q: DimRange::new(4, 256),
            k: DimRange::new(8, 1024),
            c: DimRange::new(1, 1024),
            filter: DimRange::new(1, 7),
            dtypes: vec![DType::F32],
            fixtures: conv_fixtures().into_iter().map(|f| f.input).collect(),
            fixture_probability: 0.1,
        }
    }
}

impl InputSampler<ConvInput> for ConvShapes {
    fn draw(&self, rng: &mut ChaCha8Rng) -> ConvInput {
        if !self.fixtures.is_empty() && rng.random_bool(self.fixture_probability) {
            return self.fixtures[rng.random_range(0..self.fixtures.len())];
        }
        let (n, p, q) = (self.n.draw(rng), self.p.draw(rng), self.q.draw(rng));
        let (k, c) = (self.k.draw(rng), self.c.draw(rng));
        let (r, s) = (self.filter.draw(rng), self.filter.draw(rng));
        ConvInput::new(n, p, q, k, c, r, s, pick(&self.dtypes, rng)).expect("positive dimensions")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture<P> {
    pub name: String,
    pub family: String,
    pub input: P,
}

#[derive(Deserialize)]
struct GemmTask {
    name: String,
    family: String,
    m: u64,
    n: u64,
    k: u64,
    dtype: DType,
    trans_a: bool,
    trans_b: bool,
}

#[derive(Deserialize)]
struct ConvTask {
    name: String,
    family: String,
    n: u64,
    p: u64,
    q: u64,
    k: u64,
    c: u64,
    r: u64,
    s: u64,
    dtype: DType,
}

const GEMM_TASKS: &str = include_str!("../../fixtures/gemm_tasks.json");
const CONV_TASKS: &str = include_str!("../../fixtures/conv_tasks.json");

pub fn gemm_fixtures() -> Vec<Fixture<GemmInput>> {
    let tasks: Vec<GemmTask> = serde_json::from_str(GEMM_TASKS).expect("bundled GEMM tasks");
    tasks
        .into_iter()
        .map(|t| Fixture {
            input: GemmInput::new(t.m, t.n, t.k, t.dtype, t.trans_a, t.trans_b).expect("valid task"),
            name: t.name,
            family: t.family,
        })
        .collect()
}

pub fn conv_fixtures() -> Vec<Fixture<ConvInput>> {
    let tasks: Vec<ConvTask> = serde_json::from_str(CONV_TASKS).expect("bundled CONV tasks");
    tasks
        .into_iter()
        .map(|t| Fixture {
            input: ConvInput::new(t.n, t.p, t.q, t.k, t.c, t.r, t.s, t.dtype).expect("valid task"),
            name: t.name,
            family: t.family,
        })
        .collect()
}

pub fn find_fixture<'a, P>(fixtures: &'a [Fixture<P>], name: &str) -> Option<&'a Fixture<P>> {
    fixtures.iter().find(|f| f.name.eq_ignore_ascii_case(name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn fixtures_load() {
        let g = gemm_fixtures();
        assert_eq!(g.len(), 17);
        let ica = find_fixture(&g, "ICA 32-channels").unwrap();
        assert_eq!((ica.input.m, ica.input.n, ica.input.k, ica.input.trans_b), (32, 32, 60000, true));
        let c = conv_fixtures();
        assert_eq!(c.len(), 14);
        for f in &c {
            assert!(f.input.npq() > 0);
        }
        let conv4 = find_fixture(&c, "conv4").unwrap();
        assert_eq!((conv4.input.npq(), conv4.input.crs()), (23040, 288));
    }

    #[test]
    fn log_uniform_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let range = DimRange::new(16, 100_000);
        let draws: Vec<u64> = (0..10_000).map(|_| range.draw(&mut rng)).collect();
        assert!(draws.iter().all(|d| (16..=100_000).contains(d)));
        let below_1000 = draws.iter().filter(|d| **d < 1000).count() as f64 / 1e4;
        // ln(1000/16) / ln(100001/16) of the mass lies below 1000
        assert!((below_1000 - 0.4727).abs() < 0.03, "{below_1000}");
        assert_eq!(DimRange::new(5, 5).draw(&mut rng), 5);
    }

    #[test]
    fn weighted_list_respects_weights() {
        let a = GemmInput::new(1, 1, 1, DType::F32, false, false).unwrap();
        let b = GemmInput::new(2, 2, 2, DType::F32, false, false).unwrap();
        let dist = WeightedInputs::new(vec![(a, 3.0), (b, 1.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let hits = (0..8000).filter(|_| dist.draw(&mut rng) == a).count();
        assert!((hits as f64 / 8000.0 - 0.75).abs() < 0.02);
        assert!(WeightedInputs::<GemmInput>::new(vec![]).is_err());
    }

    #[test]
    fn default_shapes_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shapes = GemmShapes::default();
        shapes.validate().unwrap();
        for _ in 0..1000 {
            shapes.draw(&mut rng).validate().unwrap();
        }
        let conv = ConvShapes::default();
        for _ in 0..1000 {
            conv.draw(&mut rng).validate().unwrap();
        }
    }
}
