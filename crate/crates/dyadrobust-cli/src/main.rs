//! `dyadrobust`: fit linear models to dyadic data, compare variance
//! estimators, run coverage simulations, and aggregate reanalysis records.
//!
//! Every run writes JSON artifacts (with the run manifest embedded) plus
//! CSV mirrors of the data tables. Outputs are byte-identical across
//! reruns and thread counts; module errors print a machine-readable JSON
//! object to stdout and exit with code 2.

use clap::{Parser, Subcommand};
use dyadrobust::error::{Error, Result};

mod aggregate;
mod fit;
mod manifest;
mod sim;

#[derive(Parser)]
#[command(name = "dyadrobust", version, about = "Dyadic regression with cluster-robust inference")]
struct Cli {
    /// Worker thread cap; falls back to DYADROBUST_THREADS, then all
    /// cores. Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a linear model and write per-estimator inference tables.
    Fit(fit::FitArgs),
    /// Run a Monte Carlo coverage experiment.
    Simulate(sim::SimulateArgs),
    /// Aggregate KEV records into per-group ISFW reports.
    Aggregate(aggregate::AggregateArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        let payload = serde_json::json!({
            "error": { "kind": err.kind(), "message": err.to_string() }
        });
        println!("{payload}");
        std::process::exit(2);
    }
}

fn run(cli: Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Fit(args) => fit::run(args),
        Command::Simulate(args) => sim::run(args),
        Command::Aggregate(args) => aggregate::run(args),
    }
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let threads = match flag {
        Some(n) => Some(n),
        None => match std::env::var("DYADROBUST_THREADS") {
            Ok(raw) => Some(raw.parse().map_err(|_| {
                Error::Config(format!("DYADROBUST_THREADS must be a positive integer, got `{raw}`"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("failed to configure thread pool: {e}")))?;
    }
    Ok(())
}
