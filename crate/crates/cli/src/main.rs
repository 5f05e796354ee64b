//! `ringstab` command-line interface.
//!
//! Exit status: 0 on success, 1 when the input or configuration is invalid,
//! 2 when a check performed by the command fails.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::Report;
use config::{Model, Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "ringstab", version, about = "Stability analysis and simulation of the roundabout ring model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Visit matrix, marginal occupancies, loads and the stability verdict.
    Analyze(Common),
    /// Halfspace description of the stability region (CSV boundary for L = 2).
    Region(Common),
    /// Simulate the ring automaton, its legacy variant or the network.
    Simulate(Common),
    /// Coupled runs of the ring and network chains (or of the two ring variants).
    Couple(Common),
    /// Fluid-scaled network runs from a large initial state.
    Fluid(Common),
    /// Transient fixed point and predicted queue growth rates.
    Transient(Common),
    /// Map a slotted-ring specification to a ring parameter setting.
    SlottedMap(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config: the model description plus run options.
    #[arg(long)]
    config: PathBuf,
    /// Base seed; replication r uses seed + r. Defaults to 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replications.
    #[arg(long, env = "RINGSTAB_JOBS")]
    jobs: Option<usize>,
    /// Number of time steps to simulate.
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    replications: Option<u64>,
    /// Directory for CSV sidecars.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<Model>,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Analyze(c)
            | Command::Region(c)
            | Command::Simulate(c)
            | Command::Couple(c)
            | Command::Fluid(c)
            | Command::Transient(c)
            | Command::SlottedMap(c) => c,
        }
    }

    fn run(&self, config: &RunConfig) -> Result<Report> {
        match self {
            Command::Analyze(_) => commands::analyze(config),
            Command::Region(_) => commands::region(config),
            Command::Simulate(_) => commands::simulate(config),
            Command::Couple(_) => commands::couple(config),
            Command::Fluid(_) => commands::fluid(config),
            Command::Transient(_) => commands::transient(config),
            Command::SlottedMap(_) => commands::slotted_map(config),
        }
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    let common = cli.command.common();
    let overrides = Overrides {
        seed: common.seed,
        horizon: common.horizon,
        replications: common.replications,
        out: common.out.clone(),
        model: common.model,
    };
    let config = RunConfig::load(&common.config, &overrides)?;
    let report = match common.jobs {
        Some(0) => anyhow::bail!("--jobs must be positive"),
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .context("cannot start worker pool")?
            .install(|| cli.command.run(&config))?,
        None => cli.command.run(&config)?,
    };
    if let Some(dir) = &config.options.out {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for (name, contents) in &report.sidecars {
            let path = dir.join(name);
            std::fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        }
    }
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, &report.json)?;
    writeln!(stdout)?;
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let informational = !err.use_stderr();
            let _ = err.print();
            return ExitCode::from(if informational { 0 } else { 1 });
        }
    };
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
