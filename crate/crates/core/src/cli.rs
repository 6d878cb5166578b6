//! The `autotune` command line.
//!
//! Exit codes: 0 on success, 1 on runtime failures, 2 on usage errors
//! (bad flags, missing or malformed input files).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::backends::{AnalyticalBackend, BackendTag, CpuBackend, MeasurementBackend};
use crate::param_space::{
    is_legal, ConvInput, GemmInput, HardwareDescriptor, ParamBounds, Problem, ProblemKind, TuningParams,
};
use crate::perf_model::{evaluate, train, MlpArchitecture, Optimizer, PerfModel, TrainConfig};
use crate::pipeline::{
    conv_fixtures, digest, find_fixture, gemm_fixtures, generate_dataset, infer, peek_kind, ConvShapes, CsvInput,
    Dataset, Fixture, GemmShapes, InferenceCache, InferenceResult, InputSampler, Predictor, DEFAULT_TOP_K,
};
use crate::sampler::{
    acceptance_rate, calibrate, CategoricalModel, Proposal, DEFAULT_ALPHA, DEFAULT_CALIBRATION_DRAWS,
};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const DEFAULT_CACHE_DIR: &str = ".autotune-cache";

#[derive(Debug, Parser)]
#[command(name = "autotune", version, about = "Input-aware auto-tuning of GEMM and convolution kernels")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the categorical sampler and report acceptance rates.
    Calibrate(CalibrateArgs),
    /// Sample, measure and record a training dataset.
    Generate(GenerateArgs),
    /// Train a performance model on a dataset.
    Train(TrainArgs),
    /// Pick the best tuning for one input.
    Infer(InferArgs),
    /// Run inference on the bundled benchmark tasks.
    Bench(BenchArgs),
    /// Summarize a dataset, optionally scoring a model on it.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Gemm,
    Conv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Analytical,
    Cpu,
}

#[derive(Debug, Clone, Args)]
pub struct SpaceArgs {
    #[arg(long, value_enum, default_value = "gemm")]
    pub kind: KindArg,
    /// Hardware descriptor JSON (defaults to the built-in synthetic device).
    #[arg(long)]
    pub hw: Option<PathBuf>,
    /// Tuning bounds JSON (defaults to the built-in search space).
    #[arg(long)]
    pub bounds: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub space: SpaceArgs,
    /// Uniform draws used to fit the sampler.
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_DRAWS)]
    pub samples: u64,
    /// Draws per proposal when measuring acceptance.
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Where to write the sampler model.
    #[arg(long)]
    pub out: PathBuf,
    /// Machine-readable report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub space: SpaceArgs,
    #[arg(long, value_enum, default_value = "analytical")]
    pub backend: BackendArg,
    /// Sampler model from `calibrate`; fitted on the fly when absent.
    #[arg(long)]
    pub sampler: Option<PathBuf>,
    #[arg(long)]
    pub samples: usize,
    /// Dataset CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Where to write the model JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Hidden layer sizes, comma separated.
    #[arg(long, default_value = "32,64,32", value_delimiter = ',')]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub validation_fraction: f64,
    #[arg(long, value_enum, default_value = "adam")]
    pub optimizer: OptimizerArg,
    /// Feed raw rather than log-transformed features.
    #[arg(long)]
    pub raw_features: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub space: SpaceArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Input as `name=value` pairs, e.g. `m=512,n=512,k=512,trans_b=1`.
    #[arg(long, conflicts_with = "fixture", required_unless_present = "fixture")]
    pub shape: Option<String>,
    /// Name of a bundled benchmark task.
    #[arg(long)]
    pub fixture: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub top_k: usize,
    #[arg(long, value_enum, default_value = "analytical")]
    pub backend: BackendArg,
    /// Skip the result cache.
    #[arg(long)]
    pub no_cache: bool,
    /// Cache directory; `AUTOTUNE_CACHE_DIR` overrides the default.
    #[arg(long, env = "AUTOTUNE_CACHE_DIR", default_value = DEFAULT_CACHE_DIR)]
    pub cache_dir: PathBuf,
    /// Machine-readable result.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub space: SpaceArgs,
    /// Performance model; without one every legal tuning is measured.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Restrict to these tasks (repeatable).
    #[arg(long)]
    pub fixture: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub top_k: usize,
    #[arg(long, value_enum, default_value = "analytical")]
    pub backend: BackendArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Check every row against this descriptor's legality rules.
    #[arg(long)]
    pub hw: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure of a subcommand, mapped to an exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Loading a user-supplied file: any failure is a usage error.
fn usage<T>(r: crate::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Usage(e.to_string()))
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} file not found: {}", path.display())))
    }
}

fn require_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => {
            Err(CliError::Usage(format!("output directory does not exist: {}", dir.display())))
        }
        _ => Ok(()),
    }
}

/// Writes through a temporary sibling so readers never see partial files.
fn write_atomic(path: &Path, bytes: &[u8]) -> crate::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> crate::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn load_hw(path: Option<&Path>) -> CliResult<HardwareDescriptor> {
    match path {
        None => Ok(HardwareDescriptor::synthetic_pascal()),
        Some(p) => {
            require_file(p, "hardware descriptor")?;
            usage(HardwareDescriptor::load(p))
        }
    }
}

fn load_bounds<P: Problem>(path: Option<&Path>) -> CliResult<ParamBounds> {
    match path {
        None => Ok(P::default_bounds()),
        Some(p) => {
            require_file(p, "bounds")?;
            usage(ParamBounds::load::<P::Tuning>(p))
        }
    }
}

/// Per-kind hooks used by the generic subcommand bodies.
pub trait CliProblem: CsvInput {
    fn input_distribution() -> Box<dyn InputSampler<Self>>;
    fn fixtures() -> Vec<Fixture<Self>>;
    /// Input whose legality rules are used to calibrate the sampler.
    fn calibration_input() -> Self;
    fn cpu_backend(seed: u64) -> Box<dyn MeasurementBackend<Self>>;
}

impl CliProblem for GemmInput {
    fn input_distribution() -> Box<dyn InputSampler<Self>> {
        Box::new(GemmShapes::default())
    }

    fn fixtures() -> Vec<Fixture<Self>> {
        gemm_fixtures()
    }

    fn calibration_input() -> Self {
        GemmInput::new(512, 512, 512, crate::param_space::DType::F32, false, true).expect("valid")
    }

    fn cpu_backend(seed: u64) -> Box<dyn MeasurementBackend<Self>> {
        Box::new(CpuBackend { seed, ..CpuBackend::default() })
    }
}

impl CliProblem for ConvInput {
    fn input_distribution() -> Box<dyn InputSampler<Self>> {
        Box::new(ConvShapes::default())
    }

    fn fixtures() -> Vec<Fixture<Self>> {
        conv_fixtures()
    }

    fn calibration_input() -> Self {
        ConvInput::new(16, 12, 120, 64, 32, 3, 3, crate::param_space::DType::F32).expect("valid")
    }

    fn cpu_backend(seed: u64) -> Box<dyn MeasurementBackend<Self>> {
        Box::new(CpuBackend { seed, ..CpuBackend::default() })
    }
}

fn backend_for<P: CliProblem>(arg: BackendArg, hw: &HardwareDescriptor, seed: u64) -> Box<dyn MeasurementBackend<P>> {
    match arg {
        BackendArg::Analytical => Box::new(AnalyticalBackend::new(hw.clone())),
        BackendArg::Cpu => P::cpu_backend(seed),
    }
}

/// Parses `name=value` pairs into an input; `dtype` defaults to f32 and the
/// transposition flags to 0.
pub fn parse_shape<P: CsvInput>(text: &str) -> crate::Result<P> {
    let mut given: BTreeMap<&str, &str> = BTreeMap::new();
    for pair in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::invalid("shape", format!("expected name=value, got {pair:?}")))?;
        if !P::INPUT_COLUMNS.contains(&k.trim()) {
            return Err(Error::invalid("shape", format!("unknown field {k:?}; expected {:?}", P::INPUT_COLUMNS)));
        }
        given.insert(k.trim(), v.trim());
    }
    let fields = P::INPUT_COLUMNS
        .iter()
        .map(|c| match (given.get(c), *c) {
            (Some(v), _) => Ok(*v),
            (None, "dtype") => Ok("f32"),
            (None, "trans_a" | "trans_b") => Ok("0"),
            (None, _) => Err(Error::invalid("shape", format!("missing field {c:?}"))),
        })
        .collect::<crate::Result<Vec<&str>>>()?;
    P::from_fields(&fields).map_err(|reason| Error::invalid("shape", reason))
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Calibrate(a) => match a.space.kind {
            KindArg::Gemm => cmd_calibrate::<GemmInput>(&a),
            KindArg::Conv => cmd_calibrate::<ConvInput>(&a),
        },
        Command::Generate(a) => match a.space.kind {
            KindArg::Gemm => cmd_generate::<GemmInput>(&a),
            KindArg::Conv => cmd_generate::<ConvInput>(&a),
        },
        Command::Train(a) => {
            require_file(&a.dataset, "dataset")?;
            match usage(peek_kind(&a.dataset))? {
                ProblemKind::Gemm => cmd_train::<GemmInput>(&a),
                ProblemKind::Conv => cmd_train::<ConvInput>(&a),
            }
        }
        Command::Infer(a) => match a.space.kind {
            KindArg::Gemm => cmd_infer::<GemmInput>(&a),
            KindArg::Conv => cmd_infer::<ConvInput>(&a),
        },
        Command::Bench(a) => match a.space.kind {
            KindArg::Gemm => cmd_bench::<GemmInput>(&a),
            KindArg::Conv => cmd_bench::<ConvInput>(&a),
        },
        Command::Report(a) => {
            require_file(&a.dataset, "dataset")?;
            match usage(peek_kind(&a.dataset))? {
                ProblemKind::Gemm => cmd_report::<GemmInput>(&a),
                ProblemKind::Conv => cmd_report::<ConvInput>(&a),
            }
        }
    }
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn legality<P: Problem>(input: &P, hw: &HardwareDescriptor) -> impl Fn(&P::Tuning) -> bool {
    let input = input.clone();
    let hw = hw.clone();
    move |t| is_legal(&input, t, &hw).is_accepted()
}

fn cmd_calibrate<P: CliProblem>(a: &CalibrateArgs) -> CliResult<()> {
    let hw = load_hw(a.space.hw.as_deref())?;
    let bounds = load_bounds::<P>(a.space.bounds.as_deref())?;
    require_parent(&a.out)?;
    if a.samples == 0 || a.trials == 0 {
        return Err(CliError::Usage("--samples and --trials must be positive".into()));
    }
    let legal = legality(&P::calibration_input(), &hw);
    let model = calibrate::<P::Tuning, _>(&legal, &bounds, a.samples, a.alpha, a.space.seed)?;
    let categorical =
        acceptance_rate::<P::Tuning, _>(Proposal::Categorical(&model), &legal, a.trials, a.space.seed ^ 1)?;
    let uniform = acceptance_rate::<P::Tuning, _>(Proposal::Uniform(&bounds), &legal, a.trials, a.space.seed ^ 1)?;
    model.save(&a.out)?;

    println!("Acceptance rate over {} draws ({} space of {} vectors)", a.trials, P::KIND, bounds.product_len());
    println!("  {:<12} {:>8}", "Categorical", format!("{:.2}%", categorical * 100.0));
    println!("  {:<12} {:>8}", "Uniform", format!("{:.2}%", uniform * 100.0));
    if uniform > 0.0 {
        println!("  {:<12} {:>8}", "Ratio", format!("{:.1}x", categorical / uniform));
    }
    println!("sampler written to {}", a.out.display());
    if let Some(path) = &a.report {
        write_json(
            path,
            &json!({
                "kind": P::KIND,
                "trials": a.trials,
                "categorical_acceptance": categorical,
                "uniform_acceptance": uniform,
                "space_size": bounds.product_len().to_string(),
                "sampler": a.out,
            }),
        )?;
    }
    Ok(())
}

fn cmd_generate<P: CliProblem>(a: &GenerateArgs) -> CliResult<()> {
    let hw = load_hw(a.space.hw.as_deref())?;
    let bounds = load_bounds::<P>(a.space.bounds.as_deref())?;
    if a.samples == 0 {
        return Err(CliError::Usage("--samples must be positive".into()));
    }
    require_parent(&a.out)?;
    let sampler = match &a.sampler {
        Some(path) => {
            require_file(path, "sampler")?;
            usage(CategoricalModel::load(path))?
        }
        None => calibrate::<P::Tuning, _>(
            legality(&P::calibration_input(), &hw),
            &bounds,
            DEFAULT_CALIBRATION_DRAWS,
            DEFAULT_ALPHA,
            a.space.seed,
        )?,
    };
    let backend = backend_for::<P>(a.backend, &hw, a.space.seed);
    let started = Instant::now();
    let dataset =
        generate_dataset(backend.as_ref(), &sampler, P::input_distribution().as_ref(), &hw, a.samples, a.space.seed)?;
    let mut bytes = Vec::new();
    dataset.write_to(&mut bytes)?;
    write_atomic(&a.out, &bytes)?;
    let inputs: std::collections::HashSet<&P> = dataset.samples().iter().map(|s| &s.input).collect();
    println!(
        "{} {} samples over {} inputs measured on {} in {:.1}s, written to {}",
        dataset.len(),
        P::KIND,
        inputs.len(),
        backend.tag(),
        started.elapsed().as_secs_f64(),
        a.out.display()
    );
    if let Some(path) = &a.report {
        write_json(
            path,
            &json!({
                "kind": P::KIND,
                "samples": dataset.len(),
                "distinct_inputs": inputs.len(),
                "backend": backend.tag(),
                "seed": a.space.seed,
                "dataset": a.out,
            }),
        )?;
    }
    Ok(())
}

fn cmd_train<P: CliProblem>(a: &TrainArgs) -> CliResult<()> {
    require_parent(&a.out)?;
    let dataset = usage(Dataset::<P>::load(&a.dataset))?;
    let set = dataset.to_training_set()?;
    let arch = usage(MlpArchitecture::new(P::feature_len(), a.hidden.clone()))?;
    let cfg = TrainConfig {
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        epochs: a.epochs,
        rng_seed: a.seed,
        validation_fraction: a.validation_fraction,
        optimizer: match a.optimizer {
            OptimizerArg::Sgd => Optimizer::Sgd,
            OptimizerArg::Adam => Optimizer::Adam,
        },
        log_features: !a.raw_features,
    };
    usage(cfg.validate())?;
    let started = Instant::now();
    let (regressor, history) = train(&set, &arch, &cfg)?;
    let model = PerfModel::new::<P>(regressor)?;
    write_atomic(&a.out, model.to_json()?.as_bytes())?;
    println!(
        "trained {:?} on {} samples: best validation MSE {:.5} at epoch {} of {} ({:.1}s), written to {}",
        a.hidden,
        set.len(),
        history.best_validation_mse,
        history.best_epoch,
        a.epochs,
        started.elapsed().as_secs_f64(),
        a.out.display()
    );
    if let Some(path) = &a.report {
        write_json(
            path,
            &json!({
                "kind": P::KIND,
                "hidden_sizes": a.hidden,
                "config": cfg,
                "samples": set.len(),
                "history": history,
                "model": a.out,
            }),
        )?;
    }
    Ok(())
}

fn resolve_input<P: CliProblem>(shape: Option<&str>, fixture: Option<&str>) -> CliResult<(String, P)> {
    match (shape, fixture) {
        (Some(s), _) => Ok((s.to_string(), usage(parse_shape::<P>(s))?)),
        (None, Some(name)) => {
            let all = P::fixtures();
            let f = find_fixture(&all, name).ok_or_else(|| {
                let names: Vec<&str> = all.iter().map(|f| f.name.as_str()).collect();
                CliError::Usage(format!("unknown fixture {name:?}; known: {}", names.join(", ")))
            })?;
            Ok((f.name.clone(), f.input.clone()))
        }
        (None, None) => Err(CliError::Usage("give --shape or --fixture".into())),
    }
}

fn load_model<P: Problem>(path: &Path) -> CliResult<(PerfModel, Vec<u8>)> {
    require_file(path, "model")?;
    let bytes = fs::read(path).map_err(|e| CliError::Usage(Error::io(path, e).to_string()))?;
    let model = usage(PerfModel::load(path))?;
    usage(model.check::<P>())?;
    Ok((model, bytes))
}

fn tuning_table<P: Problem>(rows: &[(String, P::Tuning, f64)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(7);
    let mut out = format!("{:<width$}", "Problem");
    for name in P::Tuning::NAMES {
        let _ = write!(out, " {name:>5}");
    }
    out.push_str("     GFLOPS\n");
    for (label, tuning, gflops) in rows {
        let _ = write!(out, "{label:<width$}");
        for v in tuning.values() {
            let _ = write!(out, " {v:>5}");
        }
        let _ = writeln!(out, " {gflops:>10.1}");
    }
    out
}

fn cmd_infer<P: CliProblem>(a: &InferArgs) -> CliResult<()> {
    let hw = load_hw(a.space.hw.as_deref())?;
    let bounds = load_bounds::<P>(a.space.bounds.as_deref())?;
    let (model, model_bytes) = load_model::<P>(&a.model)?;
    let (label, input) = resolve_input::<P>(a.shape.as_deref(), a.fixture.as_deref())?;
    if a.top_k == 0 {
        return Err(CliError::Usage("--top-k must be at least 1".into()));
    }
    if let Some(out) = &a.out {
        require_parent(out)?;
    }
    let backend = backend_for::<P>(a.backend, &hw, a.space.seed);
    let context = digest(&[
        &model_bytes,
        serde_json::to_string(&hw).map_err(Error::from)?.as_bytes(),
        bounds.to_json().to_string().as_bytes(),
        a.top_k.to_string().as_bytes(),
        backend.tag().name().as_bytes(),
    ]);
    let cache = InferenceCache::new(&a.cache_dir);
    let started = Instant::now();
    let (result, cached) = match (!a.no_cache).then(|| cache.lookup::<P>(&input, &context)).flatten() {
        Some(hit) => (hit, true),
        None => {
            let r = infer(&model as &dyn Predictor<P>, &input, &hw, &bounds, a.top_k, backend.as_ref())?;
            if !a.no_cache {
                cache.store(&context, &r)?;
            }
            (r, false)
        }
    };
    print!("{}", tuning_table::<P>(&[(label, result.tuning.clone(), result.measured_gflops)]));
    println!(
        "{} legal configurations, top {} re-measured on {}{} in {:.2}s",
        result.legal_configurations,
        result.ranked.len(),
        result.backend,
        if cached { " (cached)" } else { "" },
        started.elapsed().as_secs_f64()
    );
    if let Some(out) = &a.out {
        write_json(out, &result)?;
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(bound = "P: Problem")]
struct BenchRow<P: Problem> {
    name: String,
    family: String,
    result: InferenceResult<P>,
}

fn cmd_bench<P: CliProblem>(a: &BenchArgs) -> CliResult<()> {
    let hw = load_hw(a.space.hw.as_deref())?;
    let bounds = load_bounds::<P>(a.space.bounds.as_deref())?;
    let model = match &a.model {
        Some(path) => Some(load_model::<P>(path)?.0),
        None => None,
    };
    let all = P::fixtures();
    let chosen: Vec<Fixture<P>> = if a.fixture.is_empty() {
        all
    } else {
        a.fixture
            .iter()
            .map(|name| {
                find_fixture(&all, name).cloned().ok_or_else(|| CliError::Usage(format!("unknown fixture {name:?}")))
            })
            .collect::<CliResult<_>>()?
    };
    if a.top_k == 0 {
        return Err(CliError::Usage("--top-k must be at least 1".into()));
    }
    if let Some(out) = &a.out {
        require_parent(out)?;
    }
    let backend = backend_for::<P>(a.backend, &hw, a.space.seed);
    let analytical = AnalyticalBackend::new(hw.clone());
    let (predictor, top_k): (&dyn Predictor<P>, usize) = match &model {
        Some(m) => (m, a.top_k),
        None => (&analytical, usize::MAX),
    };
    let mut rows = Vec::with_capacity(chosen.len());
    for f in &chosen {
        let started = Instant::now();
        let result = infer(predictor, &f.input, &hw, &bounds, top_k, backend.as_ref())?;
        log::info!("{}: {:.2}s", f.name, started.elapsed().as_secs_f64());
        rows.push(BenchRow { name: f.name.clone(), family: f.family.clone(), result });
    }
    let table: Vec<(String, P::Tuning, f64)> =
        rows.iter().map(|r| (r.name.clone(), r.result.tuning.clone(), r.result.measured_gflops)).collect();
    print!("{}", tuning_table::<P>(&table));
    if let Some(out) = &a.out {
        write_json(out, &rows)?;
    }
    Ok(())
}

fn cmd_report<P: CliProblem>(a: &ReportArgs) -> CliResult<()> {
    let dataset = usage(Dataset::<P>::load(&a.dataset))?;
    let hw = match &a.hw {
        Some(p) => Some(load_hw(Some(p))?),
        None => None,
    };
    let model = match &a.model {
        Some(path) => Some(load_model::<P>(path)?.0),
        None => None,
    };
    if let Some(out) = &a.out {
        require_parent(out)?;
    }
    let n = dataset.len();
    let mut perf: Vec<f64> = dataset.samples().iter().map(|s| s.gflops).collect();
    perf.sort_by(f64::total_cmp);
    let quantile = |q: f64| if n == 0 { f64::NAN } else { perf[((n - 1) as f64 * q).round() as usize] };
    let inputs: std::collections::HashSet<&P> = dataset.samples().iter().map(|s| &s.input).collect();
    let mut backends: BTreeMap<BackendTag, usize> = BTreeMap::new();
    for s in dataset.samples() {
        *backends.entry(s.backend).or_default() += 1;
    }
    let illegal = hw.as_ref().and_then(|hw| dataset.first_illegal(hw));
    let mse = match (&model, n) {
        (Some(m), 1..) => Some(evaluate(&m.regressor, &dataset.to_training_set()?)?),
        _ => None,
    };

    println!("{} dataset {}: {} samples over {} inputs", P::KIND, a.dataset.display(), n, inputs.len());
    println!("GFLOPS min {:.2} / median {:.2} / max {:.2}", quantile(0.0), quantile(0.5), quantile(1.0));
    for (tag, count) in &backends {
        println!("backend {tag}: {count}");
    }
    if hw.is_some() {
        match illegal {
            Some(i) => println!("row {} is illegal on the given hardware", i + 3),
            None => println!("all rows legal on the given hardware"),
        }
    }
    if let Some(mse) = mse {
        println!("model MSE (log GFLOPS): {mse:.5}");
    }
    if let Some(out) = &a.out {
        write_json(
            out,
            &json!({
                "kind": P::KIND,
                "samples": n,
                "distinct_inputs": inputs.len(),
                "gflops_min": quantile(0.0),
                "gflops_median": quantile(0.5),
                "gflops_max": quantile(1.0),
                "backends": backends,
                "first_illegal_row": illegal.map(|i| i + 3),
                "model_mse": mse,
            }),
        )?;
    }
    Ok(())
}
