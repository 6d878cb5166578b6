//! Measured samples and their CSV persistence.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::BackendTag;
use crate::param_space::{
    encode_features, is_legal, ConvInput, DType, GemmInput, HardwareDescriptor, Problem, ProblemKind, TuningParams,
};
use crate::perf_model::TrainingSet;
use crate::{Error, Result};

pub const DATASET_SCHEMA: &str = "autotune-dataset v1";

/// Input descriptors that can be written as CSV columns.
pub trait CsvInput: Problem {
    const INPUT_COLUMNS: &'static [&'static str];

    fn to_fields(&self) -> Vec<String>;

    fn from_fields(fields: &[&str]) -> std::result::Result<Self, String>;
}

fn parse_u64(field: &str, name: &str) -> std::result::Result<u64, String> {
    field.parse().map_err(|_| format!("{name}: not an unsigned integer: {field:?}"))
}

fn parse_flag(field: &str, name: &str) -> std::result::Result<bool, String> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(format!("{name}: expected 0 or 1, got {field:?}")),
    }
}

fn parse_dtype(field: &str) -> std::result::Result<DType, String> {
    field.parse::<DType>().map_err(|e| e.to_string())
}

impl CsvInput for GemmInput {
    const INPUT_COLUMNS: &'static [&'static str] = &["m", "n", "k", "dtype", "trans_a", "trans_b"];

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.m.to_string(),
            self.n.to_string(),
            self.k.to_string(),
            self.dtype.name().to_string(),
            u8::from(self.trans_a).to_string(),
            u8::from(self.trans_b).to_string(),
        ]
    }

    fn from_fields(f: &[&str]) -> std::result::Result<Self, String> {
        GemmInput::new(
            parse_u64(f[0], "m")?,
            parse_u64(f[1], "n")?,
            parse_u64(f[2], "k")?,
            parse_dtype(f[3])?,
            parse_flag(f[4], "trans_a")?,
            parse_flag(f[5], "trans_b")?,
        )
        .map_err(|e| e.to_string())
    }
}

impl CsvInput for ConvInput {
    const INPUT_COLUMNS: &'static [&'static str] = &["n", "p", "q", "k", "c", "r", "s", "dtype"];

    fn to_fields(&self) -> Vec<String> {
        let mut v: Vec<String> =
            [self.n_batch, self.p, self.q, self.k_filters, self.c, self.r, self.s].iter().map(u64::to_string).collect();
        v.push(self.dtype.name().to_string());
        v
    }

    fn from_fields(f: &[&str]) -> std::result::Result<Self, String> {
        let names = ["n", "p", "q", "k", "c", "r", "s"];
        let mut d = [0u64; 7];
        for (i, name) in names.iter().enumerate() {
            d[i] = parse_u64(f[i], name)?;
        }
        ConvInput::new(d[0], d[1], d[2], d[3], d[4], d[5], d[6], parse_dtype(f[7])?).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "P: Problem")]
pub struct Sample<P: Problem> {
    pub input: P,
    pub tuning: P::Tuning,
    pub gflops: f64,
    pub backend: BackendTag,
}

/// Ordered, duplicate-free list of samples of one problem kind.
#[derive(Debug, Clone)]
pub struct Dataset<P: Problem> {
    samples: Vec<Sample<P>>,
    seen: HashSet<(P, P::Tuning)>,
}

impl<P: Problem> PartialEq for Dataset<P> {
    fn eq(&self, other: &Self) -> bool {
        self.samples == other.samples
    }
}

impl<P: Problem> Default for Dataset<P> {
    fn default() -> Self {
        Dataset { samples: Vec::new(), seen: HashSet::new() }
    }
}

impl<P: CsvInput> Dataset<P> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample<P>] {
        &self.samples
    }

    pub fn contains(&self, input: &P, tuning: &P::Tuning) -> bool {
        self.seen.contains(&(input.clone(), tuning.clone()))
    }

    /// Appends a sample; returns `false` and leaves the dataset unchanged
    /// when the pair is already present.
    pub fn push(&mut self, sample: Sample<P>) -> Result<bool> {
        if !(sample.gflops.is_finite() && sample.gflops > 0.0) {
            return Err(Error::invalid("sample", format!("performance {} is not positive", sample.gflops)));
        }
        if !self.seen.insert((sample.input.clone(), sample.tuning.clone())) {
            return Ok(false);
        }
        self.samples.push(sample);
        Ok(true)
    }

    /// Samples `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        let mut out = Self::new();
        for s in &self.samples[range] {
            out.push(s.clone()).expect("samples already validated");
        }
        out
    }

    /// Index of the first sample failing the legality predicate on `hw`.
    pub fn first_illegal(&self, hw: &HardwareDescriptor) -> Option<usize> {
        self.samples.iter().position(|s| !is_legal(&s.input, &s.tuning, hw).is_accepted())
    }

    /// Encoded features with natural-log performance targets.
    pub fn to_training_set(&self) -> Result<TrainingSet> {
        let mut features = Vec::with_capacity(self.len() * P::feature_len());
        let mut targets = Vec::with_capacity(self.len());
        for s in &self.samples {
            features.extend(encode_features(&s.input, &s.tuning));
            targets.push(s.gflops.ln());
        }
        TrainingSet::new(P::feature_len(), features, targets)
    }

    pub fn header() -> Vec<&'static str> {
        let mut cols: Vec<&'static str> = P::INPUT_COLUMNS.to_vec();
        cols.extend(P::Tuning::NAMES);
        cols.extend(["gflops", "backend"]);
        cols
    }

    pub fn schema_line() -> String {
        format!("# {DATASET_SCHEMA} kind={} features={}", P::KIND, P::FEATURE_VERSION)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::schema_line()).map_err(|e| Error::io("<dataset>", e))?;
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(Self::header())?;
        for s in &self.samples {
            let mut record = s.input.to_fields();
            record.extend(s.tuning.values().iter().map(u32::to_string));
            record.push(s.gflops.to_string());
            record.push(s.backend.name().to_string());
            writer.write_record(&record)?;
        }
        writer.flush().map_err(|e| Error::io("<dataset>", e))?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R, origin: &Path) -> Result<Self> {
        let schema_err = |reason: String| Error::Schema { path: origin.to_path_buf(), reason };
        let mut reader = BufReader::new(input);
        let mut first = String::new();
        reader.read_line(&mut first).map_err(|e| Error::io(origin, e))?;
        let first = first.trim_end();
        let want = Self::schema_line();
        if first != want {
            let kind = first.split_whitespace().find_map(|w| w.strip_prefix("kind="));
            return Err(match kind {
                Some(k) if k != P::KIND.name() => {
                    schema_err(format!("dataset holds {k} samples, expected {}", P::KIND))
                }
                _ => schema_err(format!("expected schema line {want:?}, found {first:?}")),
            });
        }
        let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = csv_reader.headers()?.iter().map(str::to_string).collect();
        if header != Self::header() {
            return Err(schema_err(format!("columns {header:?} differ from {:?}", Self::header())));
        }
        let n_in = P::INPUT_COLUMNS.len();
        let n_tune = P::Tuning::NAMES.len();
        let mut dataset = Self::new();
        for (line, record) in csv_reader.records().enumerate() {
            let record = record?;
            let row = line + 3;
            let fields: Vec<&str> = record.iter().collect();
            let bad = |reason: String| Error::parse(origin, format!("row {row}: {reason}"));
            let input = P::from_fields(&fields[..n_in]).map_err(bad)?;
            let values = fields[n_in..n_in + n_tune]
                .iter()
                .map(|f| f.parse::<u32>().map_err(|_| bad(format!("bad tuning value {f:?}"))))
                .collect::<Result<Vec<u32>>>()?;
            let tuning = P::Tuning::from_values(&values);
            if let Some(reason) = tuning.check_values() {
                return Err(bad(reason.to_string()));
            }
            let gflops: f64 = fields[n_in + n_tune].parse().map_err(|_| bad("bad gflops".into()))?;
            let backend: BackendTag = fields[n_in + n_tune + 1].parse().map_err(|e: Error| bad(e.to_string()))?;
            let sample = Sample { input, tuning, gflops, backend };
            if !dataset.push(sample).map_err(|e| bad(e.to_string()))? {
                return Err(bad("duplicate (input, tuning) pair".into()));
            }
        }
        Ok(dataset)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(file, path)
    }
}

/// Problem kind recorded in a dataset file's schema line.
pub fn peek_kind(path: &Path) -> Result<ProblemKind> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first).map_err(|e| Error::io(path, e))?;
    match first.split_whitespace().find_map(|w| w.strip_prefix("kind=")) {
        Some("gemm") => Ok(ProblemKind::Gemm),
        Some("conv") => Ok(ProblemKind::Conv),
        _ => Err(Error::Schema { path: path.to_path_buf(), reason: "missing kind in schema line".into() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param_space::{ConvTuning, GemmTuning};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_gemm_dataset(n: usize) -> Dataset<GemmInput> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = Dataset::new();
        while d.len() < n {
            let input = GemmInput::new(
                rng.random_range(1..5000),
                rng.random_range(1..5000),
                rng.random_range(1..5000),
                if rng.random_bool(0.5) { DType::F32 } else { DType::F64 },
                rng.random_bool(0.5),
                rng.random_bool(0.5),
            )
            .unwrap();
            let values: Vec<u32> = (0..8).map(|_| 1 << rng.random_range(0..5)).collect();
            let gflops = rng.random_range(0.0f64..10.0).exp() / 3.0;
            d.push(Sample { input, tuning: GemmTuning::from_values(&values), gflops, backend: BackendTag::Analytical })
                .unwrap();
        }
        d
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = random_gemm_dataset(1000);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        d.save(&path).unwrap();
        let back = Dataset::<GemmInput>::load(&path).unwrap();
        assert_eq!(back, d);
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# autotune-dataset v1 kind=gemm features=gemm-v1");
        assert_eq!(lines.next().unwrap(), "m,n,k,dtype,trans_a,trans_b,m_s,n_s,m_l,n_l,u,k_s,k_l,k_g,gflops,backend");
        assert_eq!(peek_kind(&path).unwrap(), ProblemKind::Gemm);
    }

    #[test]
    fn conv_dataset_refused_as_gemm() {
        let mut d = Dataset::<ConvInput>::new();
        let input = ConvInput::new(2, 3, 3, 4, 5, 3, 3, DType::F32).unwrap();
        d.push(Sample { input, tuning: ConvTuning::ONES, gflops: 1.5, backend: BackendTag::Cpu }).unwrap();
        let mut bytes = Vec::new();
        d.write_to(&mut bytes).unwrap();
        let err = Dataset::<GemmInput>::read_from(&bytes[..], Path::new("x.csv")).unwrap_err();
        assert!(err.to_string().contains("conv"), "{err}");
        assert_eq!(Dataset::<ConvInput>::read_from(&bytes[..], Path::new("x.csv")).unwrap(), d);
    }

    #[test]
    fn header_is_validated() {
        let text = "# autotune-dataset v1 kind=gemm features=gemm-v1\nm,k,n,dtype,trans_a,trans_b,m_s,n_s,m_l,n_l,u,k_s,k_l,k_g,gflops,backend\n";
        assert!(matches!(
            Dataset::<GemmInput>::read_from(text.as_bytes(), Path::new("x.csv")),
            Err(Error::Schema { .. })
        ));
        let stale = "# autotune-dataset v0 kind=gemm features=gemm-v1\n";
        assert!(Dataset::<GemmInput>::read_from(stale.as_bytes(), Path::new("x.csv")).is_err());
    }

    #[test]
    fn duplicates_are_refused() {
        let mut d = random_gemm_dataset(3);
        let copy = d.samples()[0].clone();
        assert!(!d.push(copy).unwrap());
        assert_eq!(d.len(), 3);
        let bad = Sample { gflops: 0.0, ..d.samples()[1].clone() };
        assert!(d.push(bad).is_err());
    }

    #[test]
    fn corrupt_rows_name_the_row() {
        let text = "# autotune-dataset v1 kind=gemm features=gemm-v1\nm,n,k,dtype,trans_a,trans_b,m_s,n_s,m_l,n_l,u,k_s,k_l,k_g,gflops,backend\n1,2,3,f32,0,1,1,1,1,1,1,1,1,3,2.5,analytical\n";
        let err = Dataset::<GemmInput>::read_from(text.as_bytes(), Path::new("x.csv")).unwrap_err();
        assert!(err.to_string().contains("row 3"), "{err}");
    }

    #[test]
    fn training_targets_are_log_performance() {
        let d = random_gemm_dataset(20);
        let set = d.to_training_set().unwrap();
        assert_eq!(set.dim, 14);
        assert_eq!(set.targets[4], d.samples()[4].gflops.ln());
    }
}
