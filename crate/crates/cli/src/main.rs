//! `shuffle-priv`: exact shuffle-model privacy curves, chi-square budgets and
//! estimation-risk frontiers from the command line.

use std::fmt;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

mod commands;
mod input;
mod output;

use commands::{analyze, bounds, curve, frontier, reproduce, simulate};
use output::{write_output, Format, Report};

const THREADS_ENV: &str = "SHUFFLE_PRIV_THREADS";

#[derive(Debug, Parser)]
#[command(name = "shuffle-priv", version, about = "Shuffle-model privacy and frequency-estimation analysis")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value = "csv", global = true)]
    format: Format,
    /// Output path; `-` writes to standard output.
    #[arg(long, default_value = "-", global = true)]
    out: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Channel report: LDP level, pairwise chi-square, likelihood-ratio laws, Fisher spectrum, risk bounds.
    Analyze(analyze::AnalyzeArgs),
    /// Exact privacy curve of the canonical neighbouring pair.
    Curve(curve::CurveArgs),
    /// Optimal signal and matched-budget risks as a function of the chi-square budget.
    Frontier(frontier::FrontierArgs),
    /// Recompute the reference numerical instances and fail on any deviation.
    Reproduce(reproduce::ReproduceArgs),
    /// Monte Carlo experiments.
    #[command(subcommand)]
    Simulate(simulate::SimulateCommand),
    /// Cramer-Rao and Assouad lower bounds on estimation risk.
    Bounds(bounds::BoundsArgs),
}

/// A check that ran to completion and failed. The partial report is still written.
#[derive(Debug)]
pub struct AssertionFailure {
    pub report: Report,
    pub failures: Vec<String>,
}

impl fmt::Display for AssertionFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} check(s) failed", self.failures.len())?;
        for msg in &self.failures {
            write!(f, "\n  {msg}")?;
        }
        Ok(())
    }
}

impl std::error::Error for AssertionFailure {}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let threads: usize = raw.trim().parse().with_context(|| format!("{THREADS_ENV}={raw:?} is not a number"))?;
    if threads == 0 {
        bail!("{THREADS_ENV} must be at least 1");
    }
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().context("configuring the worker pool")?;
    Ok(())
}

fn dispatch(command: &Command) -> Result<Report> {
    match command {
        Command::Analyze(a) => analyze::run(a),
        Command::Curve(a) => curve::run(a),
        Command::Frontier(a) => frontier::run(a),
        Command::Reproduce(a) => reproduce::run(a),
        Command::Simulate(c) => simulate::run(c),
        Command::Bounds(a) => bounds::run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match dispatch(&cli.command) {
        Ok(report) => match write_output(&cli.out, &report.render(cli.format)) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
        Err(e) => match e.downcast::<AssertionFailure>() {
            Ok(failure) => {
                if let Err(w) = write_output(&cli.out, &failure.report.render(cli.format)) {
                    eprintln!("error: {w:#}");
                }
                eprintln!("assertion failure: {failure}");
                ExitCode::from(1)
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
    }
}
