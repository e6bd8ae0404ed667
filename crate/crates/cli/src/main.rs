mod commands;
mod config;
mod grid;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crowdclose::synth::{CategoryMix, World};
use crowdclose::{Method, Pattern};
use serde::{Serialize, Serializer};

#[derive(Parser)]
#[command(
    name = "crowdclose",
    version,
    about = "Close-point prediction for crowdtesting report streams",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus of report streams
    Simulate(SimulateArgs),
    /// Run one predictor over every task of a stream file
    Predict(PredictArgs),
    /// Evaluate every grid value on every task
    Scan(ScanArgs),
    /// Pick parameters by repeated k-fold cross validation
    Tune(TuneArgs),
    /// Pairwise Mann-Whitney tests between outcome sets
    Compare(CompareArgs),
    /// Corpus, scan, tune, evaluate and compare all methods in one run
    PaperProtocol(ProtocolArgs),
}

fn display<T: ToString, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

fn display_opt<T: ToString, S: Serializer>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.serialize_str(&v.to_string()),
        None => s.serialize_none(),
    }
}

fn display_all<T: ToString, S: Serializer>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(ToString::to_string))
}

fn mix_str<S: Serializer>(v: &Option<CategoryMix>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(m) => s.serialize_str(&mix_to_string(m)),
        None => s.serialize_none(),
    }
}

fn mix_to_string(m: &CategoryMix) -> String {
    m.0.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
        .map_err(|e: crowdclose::predictors::PredictorError| e.to_string())
}

fn parse_pattern(s: &str) -> Result<Pattern, String> {
    s.parse()
        .map_err(|e: crowdclose::stream_model::StreamError| e.to_string())
}

fn parse_world(s: &str) -> Result<World, String> {
    s.parse()
        .map_err(|e: crowdclose::synth::SynthError| e.to_string())
}

fn parse_mix(s: &str) -> Result<CategoryMix, String> {
    s.parse()
        .map_err(|e: crowdclose::synth::SynthError| e.to_string())
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie in (0, 1], got {v}"))
    }
}

fn at_least(min: u64) -> impl Fn(&str) -> Result<u64, String> + Clone + Send + Sync + 'static {
    move |s| {
        let v: u64 = s.parse().map_err(|e| format!("{e}"))?;
        if v >= min {
            Ok(v)
        } else {
            Err(format!("must be at least {min}, got {v}"))
        }
    }
}

fn parse_threshold(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("must lie in [0, 1], got {v}"))
    }
}

/// Read settings from a `key = value` file; flags given on the command line win.
#[derive(Args)]
struct ConfigFile {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct SimulateArgs {
    /// Generate every task with one shape: rise-stay, rise-stay-rise, rise-stay-slight-rise
    #[arg(long, value_parser = parse_pattern, conflicts_with_all = ["world", "mix"])]
    #[serde(serialize_with = "display_opt")]
    pattern: Option<Pattern>,
    /// Generate capture-recapture test worlds: m0, mh, mt
    #[arg(long, value_parser = parse_world, conflicts_with = "mix")]
    #[serde(serialize_with = "display_opt")]
    world: Option<World>,
    /// Shape proportions: `paper` or three comma-separated fractions (default when no kind is given)
    #[arg(long, value_parser = parse_mix)]
    #[serde(serialize_with = "mix_str")]
    mix: Option<CategoryMix>,
    /// Number of tasks
    #[arg(long, default_value_t = 218, value_parser = at_least(1))]
    tasks: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory
    #[arg(long, default_value = "corpus")]
    out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    config: ConfigFile,
}

#[derive(Args, Serialize)]
pub struct PredictArgs {
    /// Report stream CSV
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_method)]
    #[serde(serialize_with = "display")]
    method: Method,
    /// Method parameter (stableThres, stepSize, kneeThres or capSize)
    #[arg(long)]
    param: f64,
    /// Close once this fraction of the estimated total is found
    #[arg(long, default_value_t = 1.0, value_parser = parse_fraction)]
    target_fraction: f64,
    /// Also write one trace_<task>.csv per task
    #[arg(long)]
    trace: bool,
    #[arg(long, default_value = "predict")]
    out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    config: ConfigFile,
}

/// Input and method selection shared by `scan` and `tune`.
#[derive(Args, Serialize)]
pub struct GridArgs {
    /// Report stream CSV
    #[arg(long)]
    input: PathBuf,
    /// Methods to evaluate (repeatable)
    #[arg(long = "method", value_parser = parse_method, required = true)]
    #[serde(rename = "method", serialize_with = "display_all")]
    methods: Vec<Method>,
    /// `lo..hi`, `lo..hi:step` or `a,b,c`; prefix `method=` to target one method (repeatable)
    #[arg(long = "grid")]
    #[serde(rename = "grid")]
    grids: Vec<String>,
    #[arg(long, default_value_t = 1.0, value_parser = parse_fraction)]
    target_fraction: f64,
}

#[derive(Args, Serialize)]
pub struct ScanArgs {
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridArgs,
    #[arg(long, default_value = "scan")]
    out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    config: ConfigFile,
}

#[derive(Args, Serialize)]
pub struct CvArgs {
    #[arg(long, default_value_t = 3, value_parser = at_least(2))]
    folds: u64,
    #[arg(long, default_value_t = 1000, value_parser = at_least(1))]
    repeats: u64,
    /// Seed of the fold shuffles
    #[arg(long = "cv-seed", default_value_t = 1)]
    cv_seed: u64,
    /// Minimum median bug fraction for an admissible parameter
    #[arg(long, default_value_t = 0.9, value_parser = parse_threshold)]
    min_bug: f64,
    /// Minimum median reduced-cost fraction for an admissible parameter
    #[arg(long, default_value_t = 0.3, value_parser = parse_threshold)]
    min_cost: f64,
}

#[derive(Args, Serialize)]
pub struct TuneArgs {
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    #[serde(flatten)]
    cv: CvArgs,
    #[arg(long, default_value = "tune")]
    out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    config: ConfigFile,
}

#[derive(Args, Serialize)]
pub struct CompareArgs {
    /// Outcome CSV (repeatable); a file holding several methods is split by method
    #[arg(long = "outcomes", required = true)]
    #[serde(rename = "outcomes")]
    outcomes: Vec<PathBuf>,
    #[arg(long, default_value = "compare")]
    out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    config: ConfigFile,
}

#[derive(Args, Serialize)]
pub struct ProtocolArgs {
    #[arg(long, default_value_t = 218, value_parser = at_least(1))]
    tasks: u64,
    /// Corpus seed
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "paper", value_parser = parse_mix)]
    #[serde(serialize_with = "display_mix")]
    mix: CategoryMix,
    /// Methods to run (repeatable; default all eight)
    #[arg(long = "method", value_parser = parse_method)]
    #[serde(rename = "method", serialize_with = "display_all")]
    methods: Vec<Method>,
    /// Grid overrides, as for `scan`
    #[arg(long = "grid")]
    #[serde(rename = "grid")]
    grids: Vec<String>,
    #[arg(long, default_value_t = 1.0, value_parser = parse_fraction)]
    target_fraction: f64,
    #[command(flatten)]
    #[serde(flatten)]
    cv: CvArgs,
    #[arg(long, default_value = "protocol")]
    out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    config: ConfigFile,
}

fn display_mix<S: Serializer>(v: &CategoryMix, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&mix_to_string(v))
}

/// A bad setting discovered after argument parsing; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let args = match config::merge_config_file(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Scan(a) => commands::scan(&a),
        Command::Tune(a) => commands::tune(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::PaperProtocol(a) => commands::paper_protocol(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
