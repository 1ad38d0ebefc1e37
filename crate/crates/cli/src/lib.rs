//! Batch front end for the demand-side-management simulator.
//!
//! Four subcommands: `generate` writes a scenario file, `run` executes one of
//! the three equilibrium-seeking algorithms, `oracle` computes a reference
//! solution, and `report` turns run/oracle outputs into plot-ready data.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

mod commands;
mod report;

pub use commands::{Provenance, RunSummary};

#[derive(Debug, Parser, Serialize)]
#[command(name = "dsm", version, about = "Demand-side-management game simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a residential scenario file.
    Generate(GenerateArgs),
    /// Run an equilibrium-seeking algorithm on a scenario.
    Run(RunArgs),
    /// Compute a reference solution (best-response Nash or welfare optimum).
    Oracle(OracleArgs),
    /// Build a report from run and oracle outputs.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// JSON generation recipe; individual flags override its fields.
    #[arg(long)]
    pub recipe: Option<PathBuf>,
    /// CSV base interval (`slot,low,high`); defaults to the shipped 24-slot profile.
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long = "n")]
    pub consumers: Option<usize>,
    #[arg(long = "h")]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Random,
    Complete,
    Path,
}

#[derive(Debug, Args, Serialize)]
pub struct RunArgs {
    pub scenario: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub alg: u8,
    /// Proximal weight (algorithm 1).
    #[arg(long, default_value_t = 0.2)]
    pub theta: f64,
    /// Step size `t^-exponent` (algorithms 1 and 2).
    #[arg(long, default_value_t = 0.51, conflicts_with = "step_constant")]
    pub step_exponent: f64,
    /// Constant step size instead of the decaying one (algorithms 1 and 2).
    #[arg(long)]
    pub step_constant: Option<f64>,
    /// Mixing parameter of the consensus weights (algorithm 2).
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Iteration budget, or event budget for algorithm 3.
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1)]
    pub record_every: usize,
    /// Consecutive sub-tolerance readings required to stop algorithm 3.
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    /// Edge-list communication graph (algorithms 2 and 3).
    #[arg(long, conflicts_with = "topology")]
    pub graph: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub topology: Option<Topology>,
    /// Target mean degree for `--topology random`.
    #[arg(long)]
    pub degree: Option<f64>,
    /// Seeds the random topology, the gossip clock, and the initial profiles
    /// when the scenario carries none.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exit with status 2 if the run does not converge within budget.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub summary: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    Nash,
    Welfare,
}

#[derive(Debug, Args, Serialize)]
pub struct OracleArgs {
    pub scenario: PathBuf,
    #[arg(long, value_enum)]
    pub kind: OracleKind,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Sweep budget (nash) or iteration budget (welfare).
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    #[arg(long)]
    pub strict: bool,
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportKind {
    Par,
    Fairness,
    WelfareGap,
    Convergence,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long, value_enum)]
    pub kind: ReportKind,
    /// Summary JSON written by `run`.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Scenario file the run used (fairness).
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Welfare oracle JSON (welfare-gap).
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// Trace CSV written by `run` (convergence).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// 1-based consumer indices for the convergence series; all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub consumers: Vec<usize>,
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
}

/// Failure classes, mapped to exit codes 1 and 2.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

pub fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Generate(args) => commands::generate(args),
        Command::Run(args) => commands::run(args, cli),
        Command::Oracle(args) => commands::oracle(args, cli),
        Command::Report(args) => report::report(args),
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub(crate) fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))
}

pub(crate) fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))
}
