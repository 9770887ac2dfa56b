//! Command-line frontend. Data goes to stdout or files, diagnostics and the
//! run banner to stderr.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::dsp::Domain;
use crate::store::{load_config, read_config, Config};
use crate::Result;

#[derive(Debug, Parser)]
#[command(
    name = "lambtouch",
    version,
    about = "Touch localization on simulated ultrasonic guided-wave plates"
)]
pub struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true, env = "LAMBTOUCH_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset of touches.
    Gen(GenArgs),
    /// Train a model for one task on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on its test split.
    Eval(EvalArgs),
    /// Predict the touch for one record.
    Predict(PredictArgs),
    /// Measure single-sample inference latency.
    Bench(BenchArgs),
    /// Run the data-fraction study or the grid-vs-regression comparison.
    Sweep(SweepArgs),
    /// Evaluate models on a human-finger circle trajectory.
    Circle(CircleArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Apply the human-finger perturbation to every record.
    #[arg(long)]
    pub human: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `grid:N` (N in 2..=10), `regression` or `keypad`.
    #[arg(long)]
    pub task: String,
    #[arg(long, default_value = "freq")]
    pub domain: Domain,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss history CSV; defaults to `<out>.history.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitPart {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitPart,
    /// Directory for confusion.csv (classifiers).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub index: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = crate::evalkit::DEFAULT_REPS)]
    pub reps: usize,
    /// Also time 1-NN with the training split as reference set.
    #[arg(long)]
    pub knn: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Study {
    /// DNN vs kNN keypad accuracy and latency over training fractions.
    Fraction,
    /// C-2..C-10 and regression in both domains.
    Grid,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "fraction")]
    pub study: Study,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = crate::evalkit::DEFAULT_REPS)]
    pub reps: usize,
}

#[derive(Debug, Args)]
pub struct CircleArgs {
    /// Robot-finger training dataset, used when no `--model` is given.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Trained checkpoints to evaluate (repeatable). Without any, C-5, C-10
    /// and the regressor are trained on `--data`.
    #[arg(long)]
    pub model: Vec<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 6.0)]
    pub radius: f64,
    #[arg(long, value_parser = parse_point, default_value = "10,10")]
    pub center: [f64; 2],
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

fn parse_point(s: &str) -> std::result::Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [x, y] => Ok([
            x.parse().map_err(|_| format!("bad x in {s:?}"))?,
            y.parse().map_err(|_| format!("bad y in {s:?}"))?,
        ]),
        _ => Err(format!("expected x,y, found {s:?}")),
    }
}

/// Loaded configuration plus the identity recorded in the banner.
pub struct Loaded {
    pub config: Config,
    pub source: String,
    pub hash: String,
}

pub fn config_hash(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

fn load(path: Option<&PathBuf>) -> Result<Loaded> {
    match path {
        Some(p) => {
            let (config, text) = read_config(p)?;
            Ok(Loaded {
                config,
                source: p.display().to_string(),
                hash: config_hash(&text),
            })
        }
        None => Ok(Loaded {
            config: load_config("")?,
            source: "defaults".into(),
            hash: config_hash(""),
        }),
    }
}

fn seed_of(cmd: &Command) -> Option<u64> {
    match cmd {
        Command::Gen(a) => Some(a.seed),
        Command::Train(a) => Some(a.seed),
        Command::Sweep(a) => Some(a.seed),
        Command::Circle(a) => Some(a.seed),
        Command::Eval(_) | Command::Predict(_) | Command::Bench(_) => None,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let loaded = load(cli.config.as_ref())?;
    let seed =
        seed_of(&cli.command).map_or_else(|| "from checkpoint".to_string(), |s| s.to_string());
    eprintln!(
        "lambtouch {} | seed {seed} | config {} sha256:{}",
        env!("CARGO_PKG_VERSION"),
        loaded.source,
        loaded.hash
    );
    let cfg = &loaded.config;
    match &cli.command {
        Command::Gen(a) => commands::gen(cfg, a),
        Command::Train(a) => commands::train(cfg, a),
        Command::Eval(a) => commands::eval(cfg, a),
        Command::Predict(a) => commands::predict(cfg, a),
        Command::Bench(a) => commands::bench(cfg, a),
        Command::Sweep(a) => commands::sweep(cfg, a),
        Command::Circle(a) => commands::circle(cfg, a),
    }
}

/// Parses the process arguments, runs the command and maps failures to a
/// nonzero exit code.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
