//! Command-line driver: experiment configuration, artifact files and the
//! JSON summaries checked against `schemas/summary.schema.json`.

pub mod commands;
pub mod output;
pub mod params;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use output::{Run, SUMMARY_FILE};
pub use params::Params;

/// Failure of a run, mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("input missing: {0}")]
    InputMissing(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ConfigInvalid(_) => 2,
            CliError::InputMissing(_) => 3,
        }
    }
}

impl From<conc_lab::Error> for CliError {
    fn from(e: conc_lab::Error) -> Self {
        match e {
            conc_lab::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => CliError::InputMissing(io.to_string()),
            other => CliError::ConfigInvalid(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Exit status of a completed run.
pub const EXIT_PASS: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;

#[derive(Debug, Parser)]
#[command(name = "conc-lab", version, about = "Transport inequalities and concentration on finite measures")]
pub struct Cli {
    /// Experiment file (TOML); flags given on the command line take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for this experiment.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal transport cost between two measure files.
    Transport(TransportArgs),
    /// Rate function R(t) on a grid of thresholds.
    Rate(RateArgs),
    /// Battery of exact change-of-measure lower-bound checks.
    SanovCheck(SanovArgs),
    /// Concentration profile of a product measure.
    Concentrate(ConcentrateArgs),
    /// Dual inequality on random functions.
    DualCheck(DualArgs),
    /// Round trip between a transport constant and Gaussian concentration.
    Equivalence(EquivalenceArgs),
    /// Two-level transport inequality against two-level concentration.
    TwoLevel(TwoLevelArgs),
    /// Consolidate run directories into markdown and CSV tables.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Transport(_) => "transport",
            Command::Rate(_) => "rate",
            Command::SanovCheck(_) => "sanov-check",
            Command::Concentrate(_) => "concentrate",
            Command::DualCheck(_) => "dual-check",
            Command::Equivalence(_) => "equivalence",
            Command::TwoLevel(_) => "two-level",
            Command::Report(_) => "report",
        }
    }

    fn flags(&self) -> serde_json::Value {
        let v = match self {
            Command::Transport(a) => serde_json::to_value(a),
            Command::Rate(a) => serde_json::to_value(a),
            Command::SanovCheck(a) => serde_json::to_value(a),
            Command::Concentrate(a) => serde_json::to_value(a),
            Command::DualCheck(a) => serde_json::to_value(a),
            Command::Equivalence(a) => serde_json::to_value(a),
            Command::TwoLevel(a) => serde_json::to_value(a),
            Command::Report(a) => serde_json::to_value(a),
        };
        v.expect("flag structs serialize")
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TransportArgs {
    /// First measure (CSV).
    pub a: Option<String>,
    /// Second measure (CSV).
    pub b: Option<String>,
    /// `quadratic`, `power:p=<f>`, `alpha:p=<f>` or `sg`.
    #[arg(long)]
    pub cost: Option<String>,
    /// Also write the plan as plan.csv.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    pub plan: Option<bool>,
}

#[derive(Debug, Args, Serialize)]
pub struct RateArgs {
    #[arg(long)]
    pub measure: Option<String>,
    #[arg(long)]
    pub cost: Option<String>,
    /// Thresholds as `a:b:step`.
    #[arg(long)]
    pub t_grid: Option<String>,
    /// `penalty` or `grid`.
    #[arg(long)]
    pub method: Option<String>,
    /// Grid spacing for the oracle.
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Compare against the grid oracle (supports of size ≤ 4).
    #[arg(long, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    pub oracle: Option<bool>,
    #[arg(long)]
    pub starts: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct SanovArgs {
    /// Number of random configurations in the battery.
    #[arg(long)]
    pub configs: Option<usize>,
    #[arg(long)]
    pub max_n: Option<usize>,
    #[arg(long)]
    pub max_support: Option<usize>,
    /// Single check: reference measure.
    #[arg(long)]
    pub measure: Option<String>,
    /// Single check: tilted measure on the same atoms.
    #[arg(long)]
    pub nu: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct ConcentrateArgs {
    #[arg(long)]
    pub measure: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub cost: Option<String>,
    /// `random` (exact enlargements of random sets) or `sublevel` (sublevel sets of F_n).
    #[arg(long)]
    pub family: Option<String>,
    /// Offsets as `a:b:step`.
    #[arg(long)]
    pub r_grid: Option<String>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub sets: Option<usize>,
    /// Transport constant; certified from the rate function when absent.
    #[arg(long)]
    pub constant: Option<f64>,
    /// Use exact type-class tails for the sublevel family when feasible.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    pub exact: Option<bool>,
}

#[derive(Debug, Args, Serialize)]
pub struct DualArgs {
    #[arg(long)]
    pub measure: Option<String>,
    #[arg(long)]
    pub cost: Option<String>,
    #[arg(long)]
    pub scale: Option<f64>,
    /// Number of random functions.
    #[arg(long)]
    pub count: Option<usize>,
    /// `bg` (∫e^{Qf} ≤ e^{∫f}) or `tau` (∫e^{Qf}·∫e^{−f} ≤ 1).
    #[arg(long)]
    pub form: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct EquivalenceArgs {
    #[arg(long)]
    pub measure: Option<String>,
    /// `t2_to_concentration`, `concentration_to_t2` or `both`.
    #[arg(long)]
    pub direction: Option<String>,
    #[arg(long)]
    pub cost: Option<String>,
    /// Comma-separated sample sizes.
    #[arg(long)]
    pub n_list: Option<String>,
    #[arg(long)]
    pub r_grid: Option<String>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    pub exact_tails: Option<bool>,
    #[arg(long)]
    pub n_exact: Option<usize>,
    #[arg(long)]
    pub sets: Option<usize>,
    #[arg(long)]
    pub thresholds: Option<usize>,
    #[arg(long)]
    pub slack: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct TwoLevelArgs {
    #[arg(long)]
    pub measure: Option<String>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub trials: Option<u64>,
    /// Offsets as `a:b:step`; spans [0, n·max T/288] when absent.
    #[arg(long)]
    pub r_grid: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    pub exact_tails: Option<bool>,
    #[arg(long)]
    pub n_exact: Option<usize>,
    #[arg(long)]
    pub sets: Option<usize>,
    #[arg(long)]
    pub thresholds: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Run directories holding summary.json files.
    pub run_dirs: Vec<String>,
}

/// Experiment file: `command`, `seed`, `output_dir` and a `[parameters]` table.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    command: Option<String>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    parameters: toml::Table,
}

/// Fully resolved experiment.
#[derive(Debug)]
pub struct ExperimentConfig {
    pub command: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub params: Params,
}

pub const DEFAULT_SEED: u64 = 20_070_101;

const COMMANDS: [&str; 8] =
    ["transport", "rate", "sanov-check", "concentrate", "dual-check", "equivalence", "two-level", "report"];

/// Merge the experiment file with the command-line flags.
pub fn resolve(cli: &Cli) -> CliResult<ExperimentConfig> {
    let (file, base) = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::InputMissing(format!("{}: {e}", path.display())))?;
            let parsed: ExperimentFile =
                toml::from_str(&text).map_err(|e| CliError::ConfigInvalid(format!("{}: {e}", path.display())))?;
            (parsed, path.parent().map(Path::to_path_buf))
        }
        None => (ExperimentFile::default(), None),
    };
    let command = match (&cli.command, &file.command) {
        (Some(c), Some(f)) if c.name() != f => {
            return Err(CliError::ConfigInvalid(format!("config is for `{f}` but `{}` was requested", c.name())))
        }
        (Some(c), _) => c.name().to_string(),
        (None, Some(f)) if COMMANDS.contains(&f.as_str()) => f.clone(),
        (None, Some(f)) => {
            return Err(CliError::ConfigInvalid(format!("unknown command `{f}`; expected one of {}", COMMANDS.join(", "))))
        }
        (None, None) => return Err(CliError::ConfigInvalid("no command given and no config file".into())),
    };
    let mut params = Params::from_toml(&file.parameters, base.as_deref())?;
    if let Some(c) = &cli.command {
        params.overlay(c.flags());
    }
    let seed = cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let output_dir = cli
        .out
        .clone()
        .or_else(|| file.output_dir.map(|d| base.as_deref().map_or(d.clone(), |b| b.join(&d))))
        .unwrap_or_else(|| PathBuf::from("conc-lab-out").join(&command));
    Ok(ExperimentConfig { command, seed, output_dir, params })
}

/// Cap the rayon pool from `CONC_LAB_THREADS`.
pub fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("CONC_LAB_THREADS") else { return Ok(()) };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::ConfigInvalid(format!("CONC_LAB_THREADS must be a positive integer, got {value:?}")))?;
    // a pool built earlier in the same process keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

/// Run the experiment and return the exit code.
pub fn execute(cfg: &ExperimentConfig) -> CliResult<u8> {
    let mut run = Run::new(&cfg.command, cfg.seed, &cfg.output_dir, &cfg.params)?;
    match cfg.command.as_str() {
        "transport" => commands::transport(&cfg.params, &mut run)?,
        "rate" => commands::rate(&cfg.params, cfg.seed, &mut run)?,
        "sanov-check" => commands::sanov_check(&cfg.params, cfg.seed, &mut run)?,
        "concentrate" => commands::concentrate(&cfg.params, cfg.seed, &mut run)?,
        "dual-check" => commands::dual_check(&cfg.params, cfg.seed, &mut run)?,
        "equivalence" => commands::equivalence(&cfg.params, cfg.seed, &mut run)?,
        "two-level" => commands::two_level(&cfg.params, cfg.seed, &mut run)?,
        "report" => commands::report(&cfg.params, &mut run)?,
        other => return Err(CliError::ConfigInvalid(format!("unknown command `{other}`"))),
    }
    let passed = run.finish()?;
    Ok(if passed { EXIT_PASS } else { EXIT_CHECK_FAILED })
}
