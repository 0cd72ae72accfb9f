use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use rfcca::dgp::{self, CorrelationLevel, Scenario};
use rfcca::inference::{self, DEFAULT_PERMUTATIONS};
use rfcca::io::{self, ColumnManifest, Metadata, Table};
use rfcca::vimp::{self, RegressionForestConfig};
use rfcca::{forest, model_io, BopMode, ErrorKind, ForestConfig, Matrix, PValueMode, RfccaError, SamplingMode};

#[derive(Parser)]
#[command(name = "rfcca", version, about = "Conditional canonical correlation with random forests")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a forest and write a model file.
    Train(TrainArgs),
    /// Estimate correlations for new covariate rows.
    Predict(PredictArgs),
    /// Permutation test for a global effect of Z.
    Test(TestArgs),
    /// Two-step variable importance of the Z columns.
    Vimp(VimpArgs),
    /// Generate a synthetic dataset with its true correlations.
    Simulate(SimulateArgs),
    /// Compare forest estimates with plain CCA on simulated data.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Comma separated input with a header row.
    #[arg(long)]
    data: PathBuf,
    /// JSON file with x_columns, y_columns and z_columns.
    #[arg(long, conflicts_with_all = ["x_cols", "y_cols", "z_cols"])]
    manifest: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    x_cols: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    y_cols: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    z_cols: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize, PartialEq, Eq, Debug)]
#[serde(rename_all = "lowercase")]
enum Sampling {
    Swor,
    Bootstrap,
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize, PartialEq, Eq, Debug)]
#[serde(rename_all = "lowercase")]
enum Bop {
    Multiset,
    Distinct,
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize, PartialEq, Eq, Debug)]
#[serde(rename_all = "lowercase")]
enum PValue {
    Raw,
    Smoothed,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Low,
    High,
}

impl From<Level> for CorrelationLevel {
    fn from(l: Level) -> Self {
        match l {
            Level::Low => CorrelationLevel::Low,
            Level::High => CorrelationLevel::High,
        }
    }
}

#[derive(Args, Default)]
struct ForestArgs {
    /// TOML file with defaults for any of the options below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ntree: Option<usize>,
    #[arg(long)]
    nodesize: Option<usize>,
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long)]
    nsplit: Option<usize>,
    /// Evaluate every threshold instead of `nsplit` random ones.
    #[arg(long)]
    exhaustive: bool,
    #[arg(long, value_enum)]
    sampling: Option<Sampling>,
    #[arg(long)]
    sample_fraction: Option<f64>,
    #[arg(long, value_enum)]
    bop: Option<Bop>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Contents of a `--config` file. Command line flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    ntree: Option<usize>,
    nodesize: Option<usize>,
    mtry: Option<usize>,
    nsplit: Option<usize>,
    exhaustive: Option<bool>,
    sampling: Option<Sampling>,
    sample_fraction: Option<f64>,
    bop: Option<Bop>,
    seed: Option<u64>,
    permutations: Option<usize>,
    p_value: Option<PValue>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    forest: ForestArgs,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Query rows; must contain the model's Z columns (or --z-cols).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',')]
    z_cols: Vec<String>,
    /// Output table (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    forest: ForestArgs,
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long, value_enum)]
    p_value: Option<PValue>,
    /// JSON report (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VimpArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    forest: ForestArgs,
    /// Trees in the surrogate regression forest.
    #[arg(long, default_value_t = 200)]
    surrogate_ntree: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "h1_nonoise")]
    scenario: String,
    #[arg(long, value_enum, default_value = "high")]
    level: Level,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep the unscaled coefficient vectors.
    #[arg(long)]
    raw_coefficients: bool,
    /// Output directory; receives data.csv and manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, default_value = "accuracy_high")]
    scenario: String,
    #[arg(long, value_enum, default_value = "high")]
    level: Level,
    #[arg(long, default_value_t = 1000)]
    n_train: usize,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    #[command(flatten)]
    forest: ForestArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(RfccaError),
}

impl From<RfccaError> for CliError {
    fn from(e: RfccaError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Usage => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numeric => 4,
            },
        }
    }

    fn category(&self) -> &'static str {
        match self.exit_code() {
            2 => "usage error",
            3 => "data error",
            _ => "numeric error",
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("rfcca: usage error: --threads must be positive");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().expect("thread pool is set once");
    }
    let res = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Test(a) => cmd_test(a),
        Command::Vimp(a) => cmd_vimp(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rfcca: {}: {e}", e.category());
            ExitCode::from(e.exit_code())
        }
    }
}

fn read_file_config(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))
}

/// Flags, then the config file, then the defaults for these dimensions.
fn resolve_forest(args: &ForestArgs, file: &FileConfig, p: usize, q: usize, r: usize) -> ForestConfig {
    let mut cfg = ForestConfig::default_for(p, q, r);
    if let Some(v) = args.ntree.or(file.ntree) {
        cfg.ntree = v;
    }
    if let Some(v) = args.nodesize.or(file.nodesize) {
        cfg.tree.nodesize = v;
    }
    if let Some(v) = args.mtry.or(file.mtry) {
        cfg.tree.mtry = v;
    }
    if let Some(v) = args.nsplit.or(file.nsplit) {
        cfg.tree.nsplit = v;
    }
    cfg.tree.exhaustive = args.exhaustive || file.exhaustive.unwrap_or(false);
    if let Some(s) = args.sampling.or(file.sampling) {
        cfg.sampling = match s {
            Sampling::Swor => SamplingMode::SubsampleWithoutReplacement,
            Sampling::Bootstrap => SamplingMode::Bootstrap,
        };
        if s == Sampling::Bootstrap {
            cfg.sample_fraction = 1.0;
        }
    }
    if let Some(v) = args.sample_fraction.or(file.sample_fraction) {
        cfg.sample_fraction = v;
    }
    if let Some(b) = args.bop.or(file.bop) {
        cfg.bop_mode = match b {
            Bop::Multiset => BopMode::Multiset,
            Bop::Distinct => BopMode::Distinct,
        };
    }
    cfg.rng_seed = args.seed.or(file.seed).unwrap_or(0);
    cfg
}

fn manifest_from(args: &DataArgs) -> CliResult<ColumnManifest> {
    if let Some(path) = &args.manifest {
        return Ok(ColumnManifest::from_json_file(path)?);
    }
    if args.x_cols.is_empty() || args.y_cols.is_empty() || args.z_cols.is_empty() {
        return Err(CliError::Usage("give --manifest or all of --x-cols, --y-cols and --z-cols".into()));
    }
    Ok(ColumnManifest { x_columns: args.x_cols.clone(), y_columns: args.y_cols.clone(), z_columns: args.z_cols.clone() })
}

fn load(args: &DataArgs) -> CliResult<(Matrix, Matrix, Matrix)> {
    let manifest = manifest_from(args)?;
    Ok(io::load_dataset(&args.data, &manifest)?)
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), io::fmt_scalar)
}

fn cmd_train(a: TrainArgs) -> CliResult {
    let file = read_file_config(a.forest.config.as_deref())?;
    let (x, y, z) = load(&a.data)?;
    let cfg = resolve_forest(&a.forest, &file, x.ncols(), y.ncols(), z.ncols());
    let model = forest::train(&x, &y, &z, &cfg)?;
    model_io::save(&model, BufWriter::new(File::create(&a.out)?))?;
    eprintln!(
        "trained {} trees on n = {}, p = {}, q = {}, r = {}; wrote {}",
        model.trees.len(),
        model.n(),
        model.p(),
        model.q(),
        model.r(),
        a.out.display()
    );
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> CliResult {
    let model: rfcca::Forest = model_io::load(BufReader::new(File::open(&a.model)?))?;
    let table = io::read_numeric_file::<f64>(&a.data)?;
    let names = if a.z_cols.is_empty() { model.z.names().to_vec() } else { a.z_cols.clone() };
    let z = table.select(&names)?;
    let preds = model.predict(&z)?;
    let mut out = Table::new(&["row", "rho", "status"]);
    for (i, p) in preds.iter().enumerate() {
        let (rho, status) = match p {
            Ok(v) => (Some(*v), "ok".to_string()),
            Err(e) => (None, e.to_string()),
        };
        out.push(vec![(i + 1).to_string(), fmt_opt(rho), status]);
    }
    let meta = Metadata::new(&model.config, model.config.rng_seed).with("model", a.model.display());
    out.write(output(a.out.as_deref())?, &meta)?;
    Ok(())
}

#[derive(Serialize)]
struct TestReport<'a> {
    result: &'a rfcca::GlobalTest,
    config: &'a ForestConfig,
    config_hash: String,
    seed: u64,
    version: &'static str,
}

fn cmd_test(a: TestArgs) -> CliResult {
    let file = read_file_config(a.forest.config.as_deref())?;
    let (x, y, z) = load(&a.data)?;
    let cfg = resolve_forest(&a.forest, &file, x.ncols(), y.ncols(), z.ncols());
    let permutations = a.permutations.or(file.permutations).unwrap_or(DEFAULT_PERMUTATIONS);
    let mode = match a.p_value.or(file.p_value).unwrap_or(PValue::Raw) {
        PValue::Raw => PValueMode::Raw,
        PValue::Smoothed => PValueMode::Smoothed,
    };
    let seed = rfcca::rng::substream_seed(cfg.rng_seed, u64::MAX);
    let result = inference::global_test(&x, &y, &z, &cfg, permutations, seed, mode)?;
    let report = TestReport {
        result: &result,
        config: &cfg,
        config_hash: io::config_hash(&(&cfg, permutations, mode)),
        seed: cfg.rng_seed,
        version: env!("CARGO_PKG_VERSION"),
    };
    let mut w = output(a.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(|e| CliError::Core(RfccaError::Io(e.into())))?;
    writeln!(w)?;
    eprintln!(
        "T = {:.6}, p = {} ({} permutations, {} failed)",
        result.statistic, result.p_value, result.permutations, result.failed
    );
    Ok(())
}

fn cmd_vimp(a: VimpArgs) -> CliResult {
    let file = read_file_config(a.forest.config.as_deref())?;
    let (x, y, z) = load(&a.data)?;
    let cfg = resolve_forest(&a.forest, &file, x.ncols(), y.ncols(), z.ncols());
    let reg = RegressionForestConfig { ntree: a.surrogate_ntree, ..Default::default() }
        .with_seed(rfcca::rng::substream_seed(cfg.rng_seed, u64::MAX));
    let res = vimp::vimp(&x, &y, &z, &cfg, &reg)?;
    let mut out = Table::new(&["column", "importance", "rank"]);
    for (j, name) in z.names().iter().enumerate() {
        out.push(vec![name.clone(), io::fmt_scalar(res.importances[j]), res.ranks[j].to_string()]);
    }
    let meta = Metadata::new(&(&cfg, &reg), cfg.rng_seed);
    out.write(output(a.out.as_deref())?, &meta)?;
    Ok(())
}

fn parse_scenario(name: &str) -> CliResult<Scenario> {
    name.parse::<Scenario>().map_err(|e| CliError::Usage(e.to_string()))
}

fn cmd_simulate(a: SimulateArgs) -> CliResult {
    let scenario = parse_scenario(&a.scenario)?;
    let mut cfg = scenario.config(a.level.into(), a.n, a.seed);
    cfg.normalize = !a.raw_coefficients;
    let ds = dgp::simulate(&cfg)?;
    std::fs::create_dir_all(&a.out)?;
    let meta = Metadata::new(&cfg, a.seed).with("scenario", scenario.name());
    io::export_dataset(&ds, &a.out.join("data.csv"), &a.out.join("manifest.json"), &meta)?;
    eprintln!("wrote {} rows to {}", ds.x.nrows(), a.out.display());
    Ok(())
}

fn cmd_benchmark(a: BenchmarkArgs) -> CliResult {
    let file = read_file_config(a.forest.config.as_deref())?;
    let scenario = parse_scenario(&a.scenario)?;
    let seed = a.forest.seed.or(file.seed).unwrap_or(0);
    let dgp_cfg = scenario.config(a.level.into(), a.n_train, seed);
    let cfg = resolve_forest(&a.forest, &file, dgp_cfg.p, dgp_cfg.q, dgp_cfg.observed_columns());
    let mut out = Table::new(&["replicate", "seed", "mae_rfcca", "mae_cca", "failed_rows"]);
    let (mut sum_f, mut sum_c, mut wins) = (0.0, 0.0, 0usize);
    for rep in 0..a.replicates {
        let rep_seed = rfcca::rng::substream_seed(seed, rep as u64);
        let r = dgp::accuracy_replicate(&dgp_cfg, a.n_train, a.n_test, &cfg, rep_seed)?;
        sum_f += r.mae_rfcca;
        sum_c += r.mae_cca;
        wins += usize::from(r.mae_rfcca < r.mae_cca);
        out.push(vec![
            (rep + 1).to_string(),
            rep_seed.to_string(),
            io::fmt_scalar(r.mae_rfcca),
            io::fmt_scalar(r.mae_cca),
            r.failed_rows.to_string(),
        ]);
    }
    let k = a.replicates.max(1) as f64;
    let meta = Metadata::new(&(&dgp_cfg, &cfg), seed)
        .with("scenario", scenario.name())
        .with("mean_mae_rfcca", sum_f / k)
        .with("mean_mae_cca", sum_c / k)
        .with("rfcca_better", format!("{wins}/{}", a.replicates));
    out.write(output(a.out.as_deref())?, &meta)?;
    Ok(())
}
