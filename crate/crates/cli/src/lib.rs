//! Command-line front end for `chainq`.
//!
//! Exit codes: 0 success, 1 input error, 2 analyzed but some node is
//! unstable, 3 a simulation comparison or optimizer check failed.

pub mod commands;
pub mod input;
pub mod output;
pub mod sweep;

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use chainq::simulator::{DEFAULT_REPLICATIONS, DEFAULT_SEED, DEFAULT_WARMUP};
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use input::NetworkArgs;
use output::{Format, Report, Units};
use sweep::{SweepMetric, SweepParam};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Unstable,
    CheckFailed,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Unstable => 2,
            Status::CheckFailed => 3,
        }
    }
}

pub const INPUT_ERROR: i32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "chainq",
    version,
    about = "Analyze, optimize and simulate open queueing networks of service chains",
    after_help = "Exit codes: 0 ok, 1 input error, 2 unstable network, 3 comparison or check failure."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-node and end-to-end metrics from the product-form solution.
    Analyze(AnalyzeArgs),
    /// Evaluate the network over a range of one parameter.
    Sweep(SweepArgs),
    /// Split a capacity budget across nodes to minimize total delay.
    Optimize(OptimizeArgs),
    /// Discrete-event simulation with confidence intervals.
    Simulate(SimArgs),
    /// Simulate and check every analytic metric against the simulation.
    Compare(SimArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Time unit for reported times.
    #[arg(long, value_enum, default_value_t = Units::Ms)]
    pub units: Units,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Also write the output to this file.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Scalars as `start:end:step` or `a,b,c`; vectors as `1,1,1;3,3,3`;
    /// pairs as `0.2/0.3;0.2/0.4`.
    #[arg(long)]
    pub values: String,
    /// Load axis (interarrival times, seconds) for vector and pair sweeps.
    #[arg(long, default_value = "1:50:1")]
    pub interarrivals: String,
    /// Metric series for node-level sweeps.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = sweep::ALL_METRICS)]
    pub metrics: Vec<SweepMetric>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    /// Total capacity C, requests/second, shared as sum c_i * mu_i = C.
    #[arg(long)]
    pub budget: f64,
    /// Skip the random-perturbation optimality check.
    #[arg(long)]
    pub no_verify: bool,
    /// Perturbations tried by the optimality check.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    /// Horizon as a number of external arrival events (batches with --bulk);
    /// accepts forms like 1e6. Default 100000.
    #[arg(long, value_parser = parse_count, conflicts_with = "time")]
    pub jobs: Option<u64>,
    /// Horizon in simulated seconds.
    #[arg(long)]
    pub time: Option<f64>,
    /// Independent replications.
    #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
    pub reps: u32,
    /// Random seed; the CHAINQ_SEED environment variable sets the default.
    #[arg(long, env = "CHAINQ_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Fraction of the horizon discarded as warmup.
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    pub warmup: f64,
    /// Write an event trace of the first replication (CSV) to this file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Service law override, repeatable: `NODE=deterministic`,
    /// `NODE=exponential` or `NODE=empirical:0.003,0.004,0.006`.
    #[arg(long = "service-dist", value_name = "NODE=LAW")]
    pub service_dist: Vec<String>,
    #[command(flatten)]
    pub out: OutputArgs,
}

pub const DEFAULT_JOBS: u64 = 100_000;

/// Positive integer, allowing scientific notation (`1e6`).
pub fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.replace('_', "").parse::<u64>() {
        return if n > 0 { Ok(n) } else { Err("must be positive".into()) };
    }
    let x: f64 = s.parse().map_err(|_| format!("'{s}' is not a count"))?;
    if x >= 1.0 && x.fract() == 0.0 && x <= u64::MAX as f64 {
        Ok(x as u64)
    } else {
        Err(format!("'{s}' is not a positive whole number"))
    }
}

/// A finished command: what to print and how to exit.
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub status: Status,
    pub out: OutputArgs,
}

pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Compare(a) => commands::compare(a),
    }
}

/// Run a parsed command line, writing to the given streams. Returns the
/// process exit code.
pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let outcome = match execute(cli) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return INPUT_ERROR;
        }
    };
    let text = outcome.report.render(outcome.out.format);
    if let Some(path) = &outcome.out.output {
        if let Err(e) = fs::write(path, &text) {
            let _ = writeln!(stderr, "error: {}: {e}", path.display());
            return INPUT_ERROR;
        }
    }
    if stdout.write_all(text.as_bytes()).is_err() {
        return INPUT_ERROR;
    }
    if outcome.out.format == Format::Csv {
        for note in &outcome.report.notes {
            let _ = writeln!(stderr, "{note}");
        }
    }
    outcome.status.code()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(parse_count("1e6"), Ok(1_000_000));
        assert_eq!(parse_count("250000"), Ok(250_000));
        assert_eq!(parse_count("1_000"), Ok(1000));
        assert!(parse_count("0").is_err());
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
