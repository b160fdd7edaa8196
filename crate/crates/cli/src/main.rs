//! `fedmint` — batch driver for the federated marketplace simulator.
//!
//! Three subcommands:
//!
//! - `run`: execute a multi-arm experiment and export `rounds.csv`,
//!   `summary.json`, and per-metric SVG line charts.
//! - `tree`: train the variance-reduction regression tree on an
//!   interaction-record CSV and print its structure and split statistics.
//! - `match`: solve a two-sided matching instance from JSON and verify
//!   stability, optionally against the brute-force oracle.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 input error, 3 refused
//! operation (e.g. an oracle request beyond the enumeration bound).

mod chart;
mod config;
mod match_cmd;
mod report;
mod run_cmd;
mod tree_cmd;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Failure modes, each mapped to a documented exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid input (config, dataset, problem file).
    Input(String),
    /// The computation itself failed or an output could not be written.
    Runtime(String),
    /// A well-formed request the tool declines to execute.
    Refused(String),
}

impl CliError {
    pub fn input(err: impl fmt::Display) -> Self {
        CliError::Input(err.to_string())
    }

    pub fn runtime(err: impl fmt::Display) -> Self {
        CliError::Runtime(err.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Input(_) => 2,
            CliError::Refused(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(msg) => write!(f, "invalid input: {msg}"),
            CliError::Runtime(msg) => write!(f, "{msg}"),
            CliError::Refused(msg) => write!(f, "refused: {msg}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "fedmint", version, about = "Federated marketplace simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-arm experiment and export metrics.
    Run(RunArgs),
    /// Train the bootstrap regression tree on an interaction CSV.
    Tree(TreeArgs),
    /// Solve a matching instance from JSON and verify stability.
    Match(MatchArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// Experiment configuration (TOML); defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base RNG seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Federated rounds per repetition.
    #[arg(long, value_name = "N")]
    rounds: Option<u32>,
    /// Independent repetitions.
    #[arg(long, value_name = "N", alias = "repetitions")]
    reps: Option<u32>,
    /// Worker-thread bound for repetition parallelism.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
    /// Output directory for rounds.csv, summary.json, and charts.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Skip SVG chart emission.
    #[arg(long)]
    no_charts: bool,
}

#[derive(Args)]
pub struct TreeArgs {
    /// CSV with header `provider,region,device_type,accuracy`.
    #[arg(value_name = "DATASET.csv")]
    dataset: PathBuf,
    /// Minimum records a node needs to keep splitting.
    #[arg(long, value_name = "N", default_value_t = 3)]
    min_instances: usize,
    /// Coefficient-of-variation stopping threshold, percent.
    #[arg(long, value_name = "PCT", default_value_t = 10.0)]
    cv: f64,
}

#[derive(Args)]
pub struct MatchArgs {
    /// JSON with device/server rankings and server capacities.
    #[arg(value_name = "PROBLEM.json")]
    problem: PathBuf,
    /// Also enumerate every stable matching and report membership.
    #[arg(long)]
    oracle: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run_cmd::cmd_run(&args),
        Command::Tree(args) => tree_cmd::cmd_tree(&args),
        Command::Match(args) => match_cmd::cmd_match(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
