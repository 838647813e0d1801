//! `latentepi`: simulate surveillance series, fit the latent infection model,
//! bootstrap it, reproduce the replication study and emit plot data.
//!
//! Exit codes: 0 success, 2 invalid input, 3 fit did not converge.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "latentepi", version, about = "Latent infection model of wastewater and hospital admissions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate under-reported surveillance series at the configured truth.
    Simulate(#[command(flatten)] Overrides),
    /// Fit the model to `io.input`.
    Fit(#[command(flatten)] Overrides),
    /// Parametric bootstrap around the parameters in `io.params`.
    Bootstrap(#[command(flatten)] Overrides),
    /// Naive and proposed estimators over repeated simulations per cell.
    #[command(name = "replicate-table1")]
    ReplicateTable1(#[command(flatten)] Overrides),
    /// Occupancy curves and predictive bands at fitted parameters.
    Report(#[command(flatten)] Overrides),
}

#[derive(Debug, clap::Args)]
struct Overrides {
    #[arg(long)]
    config: PathBuf,
    /// Seed for every random draw of the command.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    scenario: Option<u8>,
    /// Treat reported cases as complete on every day.
    #[arg(long)]
    naive: bool,
}

fn load(o: &Overrides) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(&o.config)?;
    if let Some(s) = o.seed {
        cfg.simulate.seed = s;
        cfg.fit.seed = s;
    }
    if let Some(out) = &o.out {
        cfg.io.output = out.clone();
    }
    if let Some(s) = o.scenario {
        cfg.fit.scenario = s;
    }
    if o.naive {
        cfg.fit.naive_mode = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("LATENTEPI_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| anyhow::anyhow!("LATENTEPI_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<commands::Outcome> {
    init_threads()?;
    match &cli.command {
        Command::Simulate(o) => commands::simulate(&load(o)?),
        Command::Fit(o) => commands::fit(&load(o)?),
        Command::Bootstrap(o) => commands::bootstrap(&load(o)?),
        Command::ReplicateTable1(o) => commands::replicate_table1(&load(o)?),
        Command::Report(o) => commands::report(&load(o)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(commands::Outcome::Done) => ExitCode::SUCCESS,
        Ok(commands::Outcome::NotConverged) => {
            eprintln!("warning: optimizer did not converge; results were written");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
