//! The `badgd` command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage, configuration or input errors, 2
//! when an audit's internal consistency checks fail.

mod commands;
mod config;

pub use commands::{
    cmd_audit, cmd_gap, cmd_simulate, cmd_stats, cmd_tradeoff, cmd_trigger, AuditReport, Check,
    GapReport, InputsEcho, OracleComparison, StatsReport,
};
pub use config::{ConfigFile, DataSource, RunConfig, TriggerSpec, WeightsSource};

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dataset::TriggerKind;
use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INCONSISTENT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "badgd", version, about = "Backdoor triggers for square-loss gradient descent and their privacy cost")]
pub struct Cli {
    /// Log one line per pipeline stage to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Second-moment statistics of a dataset, as JSON.
    Stats(CommonArgs),
    /// Construct a trigger and report its objective values, as JSON.
    Trigger(CommonArgs),
    /// Risk and gradient gaps of a trigger, as JSON.
    Gap(CommonArgs),
    /// Gaussian tradeoff curve for a given GDP parameter, as CSV.
    Tradeoff(TradeoffArgs),
    /// Full audit: trigger, gaps, SNR, analytic and Monte Carlo curves, privacy budget.
    Audit(CommonArgs),
    /// Gradient descent trajectory, as CSV.
    Simulate(CommonArgs),
}

/// Flags shared by the data-driven subcommands. Unset flags fall back to
/// `--config`, then to the documented defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON file with any of these settings (snake_case keys).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// CSV dataset with columns y,x_1,...,x_d.
    #[arg(long, value_name = "CSV", conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// Skip one header line of the CSV.
    #[arg(long)]
    pub header: bool,
    /// Synthetic dataset, e.g. `n=100,d=3,seed=7`.
    #[arg(long, value_name = "SPEC")]
    pub synthetic: Option<String>,
    /// Model weights as a comma list.
    #[arg(long, value_name = "LIST", allow_hyphen_values = true, conflicts_with = "weights_seed")]
    pub weights: Option<String>,
    /// Draw weights from N(0, I) with this seed [default: --seed].
    #[arg(long, value_name = "INT")]
    pub weights_seed: Option<u64>,
    /// Trigger construction: riskwarp, gradwarp, graddistwarp or manual [default: graddistwarp].
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<TriggerKind>,
    /// Manual trigger features as a comma list.
    #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
    pub xv: Option<String>,
    /// Manual trigger response.
    #[arg(long, allow_hyphen_values = true)]
    pub yv: Option<f64>,
    /// Trigger JSON file {kind, x_v, y_v, trigger_scale, response_bound}; overrides --kind.
    #[arg(long, value_name = "FILE")]
    pub trigger_file: Option<PathBuf>,
    /// Trigger scale applied to the weights [default: 1].
    #[arg(long)]
    pub scale: Option<f64>,
    /// Response bound B [default: 1].
    #[arg(long)]
    pub bound: Option<f64>,
    /// Feature-norm bound for the search oracle [default: norm of the constructed x_v, at least 1].
    #[arg(long)]
    pub x_norm_max: Option<f64>,
    /// Learning rate [default: 0.1].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Noise scale [default: 1].
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Target delta [default: 1e-3].
    #[arg(long)]
    pub delta: Option<f64>,
    /// Monte Carlo trials per hypothesis; 0 skips the simulation [default: 20000].
    #[arg(long)]
    pub trials: Option<usize>,
    /// Type-I levels as a comma list [default: 0.01,0.05,0.1,0.2,0.5].
    #[arg(long, value_name = "LIST")]
    pub alphas: Option<String>,
    /// Candidates drawn by the search oracle [default: 256].
    #[arg(long)]
    pub oracle_budget: Option<usize>,
    /// Steps for `simulate` [default: 100].
    #[arg(long)]
    pub steps: Option<usize>,
    /// Add Gaussian noise in `simulate`.
    #[arg(long)]
    pub noisy: bool,
    /// Base seed [default: $BADGD_SEED, else 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write outputs into this directory instead of stdout.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Emit JSON instead of CSV for `simulate`.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TradeoffArgs {
    /// GDP parameter (signal-to-noise ratio) of the pair.
    #[arg(long, visible_alias = "snr", required = true)]
    pub mu: f64,
    /// Type-I levels as a comma list [default: 0.01,0.02,...,0.99].
    #[arg(long, value_name = "LIST")]
    pub alphas: Option<String>,
    /// Write tradeoff.csv into this directory instead of stdout.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Emit JSON instead of CSV.
    #[arg(long)]
    pub json: bool,
}

fn parse_kind(s: &str) -> std::result::Result<TriggerKind, String> {
    match s {
        "riskwarp" => Ok(TriggerKind::RiskWarp),
        "gradwarp" => Ok(TriggerKind::GradWarp),
        "graddistwarp" => Ok(TriggerKind::GradDistWarp),
        "manual" => Ok(TriggerKind::Manual),
        other => Err(format!(
            "unknown trigger kind {other:?} (expected riskwarp, gradwarp, graddistwarp or manual)"
        )),
    }
}

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(Error::from)?;
    s.push('\n');
    Ok(s)
}

/// Runs one parsed invocation, writing primary output to `stdout`.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), Failure> {
    let mut emit = |s: &str| -> Result<(), Failure> {
        stdout.write_all(s.as_bytes()).map_err(|e| Failure {
            code: EXIT_USAGE,
            message: format!("writing output: {e}"),
        })
    };
    match &cli.command {
        Command::Stats(args) => {
            let cfg = RunConfig::resolve(args)?;
            let report = cmd_stats(&cfg)?;
            let json = to_json(&report)?;
            match &cfg.out {
                Some(dir) => emit(&format!("{}\n", write_file(dir, "stats.json", &json)?.display())),
                None => emit(&json),
            }
        }
        Command::Trigger(args) => {
            let cfg = RunConfig::resolve(args)?;
            let report = cmd_trigger(&cfg)?;
            let json = to_json(&report)?;
            match &cfg.out {
                Some(dir) => emit(&format!("{}\n", write_file(dir, "trigger.json", &json)?.display())),
                None => emit(&json),
            }
        }
        Command::Gap(args) => {
            let cfg = RunConfig::resolve(args)?;
            let report = cmd_gap(&cfg)?;
            let json = to_json(&report)?;
            match &cfg.out {
                Some(dir) => emit(&format!("{}\n", write_file(dir, "gap.json", &json)?.display())),
                None => emit(&json),
            }
        }
        Command::Tradeoff(args) => {
            let alphas = match &args.alphas {
                Some(s) => config::parse_list(s, "alphas")?,
                None => (1..100).map(|k| k as f64 / 100.0).collect(),
            };
            let curve = cmd_tradeoff(args.mu, &alphas)?;
            let body = if args.json { to_json(&curve)? } else { curve.to_csv() };
            match &args.out {
                Some(dir) => {
                    let name = if args.json { "tradeoff.json" } else { "tradeoff.csv" };
                    emit(&format!("{}\n", write_file(dir, name, &body)?.display()))
                }
                None => emit(&body),
            }
        }
        Command::Audit(args) => {
            let cfg = RunConfig::resolve(args)?;
            let report = cmd_audit(&cfg)?;
            let json = to_json(&report)?;
            match &cfg.out {
                Some(dir) => {
                    let mut listing = String::new();
                    for (name, body) in [
                        ("report.json", json.clone()),
                        ("tradeoff_analytic.csv", report.analytic_curve.to_csv()),
                        ("tradeoff_mc.csv", crate::sim::distinguisher_csv(&report.monte_carlo)),
                    ] {
                        listing.push_str(&format!("{}\n", write_file(dir, name, &body)?.display()));
                    }
                    emit(&listing)?;
                }
                None => emit(&json)?,
            }
            if report.consistent {
                Ok(())
            } else {
                let failed: Vec<&str> = report
                    .checks
                    .iter()
                    .filter(|c| !c.passed)
                    .map(|c| c.name.as_str())
                    .collect();
                Err(Failure {
                    code: EXIT_INCONSISTENT,
                    message: format!("consistency checks failed: {}", failed.join(", ")),
                })
            }
        }
        Command::Simulate(args) => {
            let cfg = RunConfig::resolve(args)?;
            let traj = cmd_simulate(&cfg)?;
            let body = if cfg.json { to_json(&traj)? } else { traj.to_csv() };
            match &cfg.out {
                Some(dir) => {
                    let name = if cfg.json { "trajectory.json" } else { "trajectory.csv" };
                    emit(&format!("{}\n", write_file(dir, name, &body)?.display()))
                }
                None => emit(&body),
            }
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if cli.verbose {
        log::set_max_level(log::LevelFilter::Info);
    }
    match execute(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}
