//! `uss`: solve tables, simulate policies, run off-line oracles and write
//! reports.
//!
//! Exit status is 0 on success, 1 when a checked invariant or bound is
//! violated, and 2 for usage, configuration and I/O errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "uss",
    version,
    about = "Sequential selection of unimodal and d-modal subsequences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the value and threshold tables and print v_1(0,0) with its bounds.
    Solve(SolveArgs),
    /// Run a batch of seeded trajectories and summarise them.
    Simulate(SimulateArgs),
    /// Off-line lengths of a given sequence, or of a seeded batch.
    Offline(OfflineArgs),
    /// Compare an on-line batch with the off-line oracle on the same streams.
    Compare(CompareArgs),
    /// Bound and variance reports over a grid of (n, d).
    Report(ReportArgs),
}

#[derive(Args, Clone, Copy)]
pub struct ProblemArgs {
    /// Number of observations.
    #[arg(long)]
    pub n: usize,
    /// Maximum number of turns.
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// Grid points on [0, 1].
    #[arg(long, default_value_t = 2001)]
    pub grid: usize,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    Optimal,
    Heuristic,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum OrientationArg {
    UpFirst,
    BestOfBoth,
}

#[derive(Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = uss_core::bellman::DEFAULT_SLACK)]
    pub c_slack: f64,
    /// Where to write the solved tables.
    #[arg(long)]
    pub table_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PolicyKind::Optimal)]
    pub policy: PolicyKind,
    /// Solved tables to reuse; solved in memory when absent.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// JSON summary output.
    #[arg(long)]
    pub report_out: Option<PathBuf>,
    /// Directory for per-run trajectory CSV files.
    #[arg(long)]
    pub trajectory_dir: Option<PathBuf>,
    /// Number of runs to dump into --trajectory-dir.
    #[arg(long, default_value_t = 1)]
    pub trajectories: usize,
}

#[derive(Args)]
pub struct OfflineArgs {
    /// Sequence length for a seeded batch.
    #[arg(long, required_unless_present = "input")]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = OrientationArg::BestOfBoth)]
    pub orientation: OrientationArg,
    /// CSV file with one value per line.
    #[arg(long, conflicts_with = "n")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub report_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = uss_core::bellman::DEFAULT_SLACK)]
    pub c_slack: f64,
    #[arg(long, value_enum, default_value_t = PolicyKind::Optimal)]
    pub policy: PolicyKind,
    #[arg(long, value_enum, default_value_t = OrientationArg::BestOfBoth)]
    pub orientation: OrientationArg,
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub report_out: Option<PathBuf>,
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [50, 200, 1000])]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0, 1, 2])]
    pub d: Vec<usize>,
    #[arg(long, default_value_t = 2001)]
    pub grid: usize,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = uss_core::bellman::DEFAULT_SLACK)]
    pub c_slack: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [PolicyKind::Optimal])]
    pub policy: Vec<PolicyKind>,
    #[arg(long, value_enum, default_value_t = OrientationArg::BestOfBoth)]
    pub orientation: OrientationArg,
    #[arg(long)]
    pub report_out: Option<PathBuf>,
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(a) => commands::solve(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Offline(a) => commands::offline(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Report(a) => commands::report(&a),
    };
    match outcome {
        Ok(violations) if violations.is_empty() => ExitCode::SUCCESS,
        Ok(violations) => {
            for v in &violations {
                eprintln!("violation: {v}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
