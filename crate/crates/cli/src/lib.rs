//! The `brw` command line: model validation, exact solves, simulation,
//! phase scans, theorem summaries and the acceptance suite.

use std::path::{Path, PathBuf};

use brw_core::BrwError;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod output;
pub mod verify;

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 20261016;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] BrwError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    /// Names of the failed acceptance criteria.
    #[error("acceptance failed: {}", .0.join(", "))]
    Acceptance(Vec<String>),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 for bad input or configuration, 2 for numerical trouble, 3 for failed acceptance.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(BrwError::NonConvergence { .. } | BrwError::SolverFault(_)) => 2,
            CliError::Acceptance(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "brw", version, about = "Maximal displacement of subcritical branching random walks")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Directory for CSV files and manifests.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads for simulation.
    #[arg(long, global = true, env = "BRW_WORKERS", default_value_t = 1)]
    pub workers: usize,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model file and list every violated invariant.
    Validate {
        /// Model file, or the name of a built-in model.
        model: String,
    },
    /// Solve for the tail of M and write n,u,ell,residual,bracket_gap.
    Solve(SolveArgs),
    /// Monte Carlo estimates of tail probabilities.
    Simulate(SimulateArgs),
    /// Tabulate g(c, n) and classify each c.
    Scan(ScanArgs),
    /// Print a pass/fail/inconclusive summary per theorem for one model.
    Report(ReportArgs),
    /// Run the acceptance suite on the built-in models.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub model: String,
    #[arg(long, default_value_t = 2000)]
    pub horizon: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// Output file name inside --out-dir.
    #[arg(long)]
    pub out: Option<String>,
    /// Also write first-passage values E(s^tau_n) for n = 0..=passage-max.
    #[arg(long)]
    pub passage_s: Option<f64>,
    #[arg(long, default_value_t = 50)]
    pub passage_max: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub model: String,
    #[arg(long, default_value_t = 100_000)]
    pub reps: u64,
    #[arg(long, default_value_t = 10_000)]
    pub max_gen: u32,
    #[arg(long, default_value_t = 1_000_000)]
    pub pop_cap: usize,
    /// Levels n, as a list (1,2,5) or a range (1..12).
    #[arg(long, value_parser = parse_levels, default_value = "1..10")]
    pub levels: Levels,
    /// Estimate g(c, n) at these c instead of tails.
    #[arg(long, value_delimiter = ',')]
    pub c: Vec<f64>,
    /// Generation for --c.
    #[arg(long, default_value_t = 20)]
    pub n: u32,
    /// Estimate P(M_floor(a n) >= n | M >= n) at --levels.
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RouteArg {
    Exact,
    Mc,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    pub model: String,
    #[arg(long, value_delimiter = ',', default_values_t = [0.3, 0.45, 0.6, 0.75, 0.9])]
    pub c: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [20, 40, 60])]
    pub n: Vec<u32>,
    /// Defaults to exact for the single-lineage model, mc otherwise.
    #[arg(long, value_enum)]
    pub route: Option<RouteArg>,
    #[arg(long, default_value_t = 100_000)]
    pub reps: u64,
    #[arg(long, default_value_t = 10_000)]
    pub max_gen: u32,
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub model: String,
    #[arg(long, default_value_t = 2000)]
    pub horizon: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub reps: u64,
    #[arg(long, default_value_t = 200)]
    pub passage_levels: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Run only these criteria, e.g. A1,A5.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Levels(pub Vec<i64>);

/// `"1..12"` (inclusive) or `"1,2,5"`.
pub fn parse_levels(s: &str) -> Result<Levels, String> {
    let bad = |t: &str| format!("{t:?} is not an integer level");
    if let Some((a, b)) = s.split_once("..") {
        let a: i64 = a.trim().parse().map_err(|_| bad(a))?;
        let b: i64 = b.trim_start_matches('=').trim().parse().map_err(|_| bad(b))?;
        if b < a {
            return Err(format!("empty level range {s}"));
        }
        return Ok(Levels((a..=b).collect()));
    }
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| bad(t)))
        .collect::<Result<Vec<i64>, _>>()
        .map(Levels)
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Validate { model } => commands::validate(&model),
        Command::Solve(a) => commands::solve(g, &a),
        Command::Simulate(a) => commands::simulate(g, &a),
        Command::Scan(a) => commands::scan(g, &a),
        Command::Report(a) => commands::report(g, &a),
        Command::Verify(a) => commands::verify(g, &a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_syntax() {
        assert_eq!(parse_levels("1..4").unwrap().0, vec![1, 2, 3, 4]);
        assert_eq!(parse_levels("1..=2").unwrap().0, vec![1, 2]);
        assert_eq!(parse_levels("3, 7").unwrap().0, vec![3, 7]);
        assert!(parse_levels("x").is_err());
        assert!(parse_levels("5..1").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Core(BrwError::Config("x".into())).exit_code(), 1);
        assert_eq!(CliError::Core(BrwError::SolverFault("x".into())).exit_code(), 2);
        assert_eq!(CliError::Acceptance(vec!["A1".into()]).exit_code(), 3);
    }
}
