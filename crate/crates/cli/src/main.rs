mod commands;
mod config;
mod grid;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lbse::LbseError;

/// Supervised binary embedding: train, encode, evaluate and benchmark.
///
/// Every subcommand accepts `--config FILE` with flat `key=value` lines keyed
/// by long option name; flags on the command line take precedence.
/// `LBSE_THREADS` caps the worker thread count.
#[derive(Debug, Parser)]
#[command(name = "lbse", version, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labelled Gaussian-cluster dataset.
    Synth(SynthArgs),
    /// Learn projections from a labelled dataset.
    Train(TrainArgs),
    /// Encode a dataset into packed binary codes with a trained model.
    Encode(EncodeArgs),
    /// Score query codes against database codes (retrieval + kNN).
    Eval(EvalArgs),
    /// Split, train, encode and evaluate over a grid of settings.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// key=value file supplying defaults for this command's options.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthSpec {
    #[arg(long, default_value_t = 50)]
    per_class: usize,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(2..))]
    classes: u64,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Standard deviation around each class centre.
    #[arg(long, default_value_t = 0.1)]
    spread: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    spec: SynthSpec,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; `.csv` writes text, anything else lbse-binary.
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    _config: ConfigArg,
}

#[derive(Debug, Args)]
struct Hyper {
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 5.0)]
    beta: f64,
    #[arg(long, default_value_t = 1e-5)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-5)]
    lambda: f64,
    #[arg(long, default_value_t = 15)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Column block width for similarity products.
    #[arg(long, default_value_t = lbse::similarity::DEFAULT_BLOCK)]
    block: usize,
}

#[derive(Debug, Args)]
struct DataArg {
    /// Dataset file.
    #[arg(long)]
    data: PathBuf,
    /// Dataset format (csv | lbse-binary); inferred from the extension when omitted.
    #[arg(long)]
    format: Option<lbse::DatasetFormat>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    data: DataArg,
    /// Code length in bits.
    #[arg(long, default_value_t = 32)]
    bits: usize,
    #[command(flatten)]
    hyper: Hyper,
    /// Model output path.
    #[arg(short, long)]
    output: PathBuf,
    /// Training statistics JSON; defaults to `<output>.stats.json`.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[command(flatten)]
    _config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArg,
    /// Code file output path.
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    _config: ConfigArg,
}

#[derive(Debug, Args)]
struct EvalOpts {
    /// Retrieval depth for mAP.
    #[arg(long, default_value_t = lbse::index::DEFAULT_DEPTH)]
    depth: usize,
    /// Neighbours voting on the predicted class.
    #[arg(long, default_value_t = lbse::index::DEFAULT_K_VOTE)]
    k_vote: usize,
    /// Cut-offs reported as precision@k.
    #[arg(long, value_delimiter = ',', default_value = "1,10,50,99")]
    precision_at: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Database code file (must carry labels).
    #[arg(long)]
    database: PathBuf,
    /// Query code file (must carry labels).
    #[arg(long)]
    queries: PathBuf,
    #[command(flatten)]
    opts: EvalOpts,
    /// Never retrieve query i as its own neighbour (on by default when both paths name the same file).
    #[arg(long, overrides_with = "include_self")]
    exclude_self: bool,
    #[arg(long, overrides_with = "exclude_self")]
    include_self: bool,
    /// Include per-query details in the JSON report.
    #[arg(long)]
    per_query: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Also write a metric,value CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    _config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Dataset file; a synthetic one is generated when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    format: Option<lbse::DatasetFormat>,
    #[command(flatten)]
    synth: SynthSpec,
    /// Seed for the generated dataset.
    #[arg(long, default_value_t = 7)]
    synth_seed: u64,
    /// Fraction of samples held out as queries.
    #[arg(long, default_value_t = 0.2)]
    query_fraction: f64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Code lengths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "32")]
    bits: Vec<usize>,
    /// Sweep axes such as `alpha=1e-3..1e3 gamma=1e-6..1`.
    #[arg(long, num_args = 1..)]
    sweep: Vec<String>,
    /// Runs per cell; run r offsets both the training and the split seed by r.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
    /// Standardise features with statistics fitted on the training split.
    #[arg(long)]
    standardize: bool,
    #[command(flatten)]
    hyper: Hyper,
    #[command(flatten)]
    eval: EvalOpts,
    /// CSV output path; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    _config: ConfigArg,
}

#[derive(Debug)]
pub enum CliError {
    Lbse(LbseError),
    Usage(String),
    Config(String),
    Format(String),
}

impl CliError {
    fn code(&self) -> &'static str {
        match self {
            CliError::Lbse(e) => e.code(),
            CliError::Usage(_) => "E_USAGE",
            CliError::Config(_) => "E_CONFIG_FILE",
            CliError::Format(_) => "E_FORMAT",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Lbse(LbseError::InvalidConfig(_)) => 3,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lbse(e) => e.fmt(f),
            CliError::Usage(m) | CliError::Config(m) | CliError::Format(m) => f.write_str(m),
        }
    }
}

impl From<LbseError> for CliError {
    fn from(e: LbseError) -> Self {
        CliError::Lbse(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lbse(LbseError::Io(e))
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("LBSE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("LBSE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))
}

fn run() -> Result<(), CliError> {
    let args = config::expand(std::env::args_os().collect())?;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(), // --help, --version
        Err(e) => {
            let msg = e.render().to_string();
            let msg = msg.trim().trim_start_matches("error: ");
            return Err(CliError::Usage(msg.to_string()));
        }
    };
    init_threads()?;
    match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Encode(a) => commands::encode_cmd(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code())
        }
    }
}
