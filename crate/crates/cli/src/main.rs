//! `capsim` — seeded simulation runner and analyzer for capital groundings.
//!
//! Subcommands: `run` drives episodes and writes the event log and capital
//! metrics; `check` evaluates the nine structural checks and writes
//! `props.json`; `entropy` analyzes next-observation entropy along a run;
//! `enumerate` counts or lists the histories a grounding can realize.
//!
//! Every option can also come from a `key = value` file passed with
//! `--config`; explicit flags win.  There is no wall-clock seeding: all
//! randomness flows from `--seed`, so a repeated invocation produces
//! byte-identical outputs.

mod agent;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ConfigMap;

/// Failures split by exit code: usage problems exit 2, runtime errors 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(String),
}

#[derive(Parser)]
#[command(
    name = "capsim",
    version,
    about = "Seeded simulation and analysis for capital groundings"
)]
struct Cli {
    /// Read option defaults from a `key = value` file; explicit flags win.
    #[arg(long, value_name = "FILE", global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded episodes; write ledger.jsonl and metrics.csv.
    Run(RunArgs),
    /// Evaluate the nine structural checks; write props.json.
    Check(CheckArgs),
    /// Analyze next-observation entropy along a run; write entropy.csv.
    Entropy(EntropyArgs),
    /// Count or list the realizable histories of a grounding.
    Enumerate(EnumerateArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// Built-in grounding name or path to a grounding file.
    #[arg(long)]
    grounding: Option<String>,
    /// Agent kind: random | correlated | greedy | qtab | mint-once |
    /// first-then:<a>:<b> | rules:<file>.
    #[arg(long)]
    agent: Option<String>,
    /// Discount factor as a rational (`1/2`) or decimal (`0.9`).
    #[arg(long)]
    gamma: Option<String>,
    /// Steps per episode.
    #[arg(long)]
    steps: Option<u64>,
    /// Episodes to run; agent state carries across them.
    #[arg(long)]
    episodes: Option<u32>,
    /// Master seed for every random stream (required; no clock fallback).
    #[arg(long)]
    seed: Option<u64>,
    /// Reward quantum in currency units, e.g. `1/100`.
    #[arg(long)]
    cent: Option<String>,
    /// Directory the output files are written into.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Partition layout: `single` (one partition) or `per-unit`.
    #[arg(long)]
    layout: Option<String>,
    /// Let learning agents update from the transitions they see.
    #[arg(long)]
    train: bool,
    /// Q-learning step size.
    #[arg(long)]
    alpha: Option<f64>,
    /// Q-learning exploration probability, as a rational.
    #[arg(long)]
    epsilon: Option<String>,
}

#[derive(Args)]
pub struct CheckArgs {
    /// Built-in grounding name or path to a grounding file.
    #[arg(long)]
    grounding: Option<String>,
    /// Agent driving the rollout the log-based checks read.
    #[arg(long)]
    agent: Option<String>,
    /// Discount factor for the driving agent.
    #[arg(long)]
    gamma: Option<String>,
    /// Steps of the seeded rollout.
    #[arg(long)]
    steps: Option<u64>,
    /// Search depth for the time-dependence and reachability checks.
    #[arg(long)]
    tmax: Option<u64>,
    /// Master seed for the rollout (required).
    #[arg(long)]
    seed: Option<u64>,
    /// Node budget for bounded history enumeration.
    #[arg(long)]
    cap: Option<usize>,
    /// Reward quantum in currency units.
    #[arg(long)]
    cent: Option<String>,
    /// Directory props.json is written into.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EntropyArgs {
    /// Built-in grounding name or path to a grounding file.
    #[arg(long)]
    grounding: Option<String>,
    /// Agent whose action process the entropy is computed under.
    #[arg(long)]
    agent: Option<String>,
    /// Discount factor for the agent.
    #[arg(long)]
    gamma: Option<String>,
    /// Steps of the analyzed run.
    #[arg(long)]
    steps: Option<u64>,
    /// Master seed for the run and any Monte Carlo draws (required).
    #[arg(long)]
    seed: Option<u64>,
    /// Exact-enumeration term budget before falling back to Monte Carlo.
    #[arg(long)]
    cap: Option<u64>,
    /// Monte Carlo sample count for joints above the budget.
    #[arg(long)]
    mc_n: Option<u64>,
    /// Reward quantum in currency units.
    #[arg(long)]
    cent: Option<String>,
    /// Directory entropy.csv is written into.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Partition layout: `single` or `per-unit`.
    #[arg(long)]
    layout: Option<String>,
    /// Q-learning step size (qtab agent only).
    #[arg(long)]
    alpha: Option<f64>,
    /// Q-learning exploration probability (qtab agent only).
    #[arg(long)]
    epsilon: Option<String>,
}

#[derive(Args)]
pub struct EnumerateArgs {
    /// Built-in grounding name or path to a grounding file.
    #[arg(long)]
    grounding: Option<String>,
    /// Maximum history length to enumerate to.
    #[arg(long)]
    depth: Option<usize>,
    /// Node budget; enumeration aborts above it.
    #[arg(long)]
    cap: Option<usize>,
    /// Print every history, one per line, after the counts.
    #[arg(long)]
    list: bool,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => ConfigMap::load(path)?,
        None => ConfigMap::empty(),
    };
    match cli.command {
        Command::Run(args) => commands::cmd_run(args, &cfg),
        Command::Check(args) => commands::cmd_check(args, &cfg),
        Command::Entropy(args) => commands::cmd_entropy(args, &cfg),
        Command::Enumerate(args) => commands::cmd_enumerate(args, &cfg),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
