//! `pcnlab`: train, diagnose and compare predictive coding networks.
//!
//! Exit codes: 0 success, 1 runtime failure (I/O, locked output directory),
//! 2 configuration error, 3 divergence.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::OutputDir;

#[derive(Debug, Parser)]
#[command(name = "pcnlab", version, about = "Predictive coding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DiagnoseKind {
    Lyapunov,
    Perturb,
    Geometry,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model; writes metrics.jsonl, summary.csv and model.pcnc.
    Train(RunArgs),
    /// Lyapunov monitoring, perturbation recovery or update geometry.
    Diagnose {
        kind: DiagnoseKind,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Compare PC, TP and BP updates against the damped quasi-Newton step.
    Oracle(RunArgs),
    /// Epochs-to-criterion race between algorithms.
    Race(RunArgs),
    /// Summarize the configured dataset.
    Data(RunArgs),
}

fn prepare(args: &RunArgs) -> Result<(RunConfig, OutputDir), CliError> {
    let mut cfg = RunConfig::load(&args.config)?.with_seed(args.seed);
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    let out = OutputDir::acquire(&cfg.output.dir)?;
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => {
            let (cfg, out) = prepare(&args)?;
            commands::train_cmd(&cfg, &out)
        }
        Command::Diagnose { kind, args } => {
            let (cfg, out) = prepare(&args)?;
            match kind {
                DiagnoseKind::Lyapunov => commands::lyapunov_cmd(&cfg, &out),
                DiagnoseKind::Perturb => commands::perturb_cmd(&cfg, &out),
                DiagnoseKind::Geometry => commands::geometry_cmd(&cfg, &out),
            }
        }
        Command::Oracle(args) => {
            let (cfg, out) = prepare(&args)?;
            commands::oracle_cmd(&cfg, &out)
        }
        Command::Race(args) => {
            let (cfg, out) = prepare(&args)?;
            commands::race_cmd(&cfg, &out)
        }
        Command::Data(args) => {
            let (cfg, out) = prepare(&args)?;
            commands::data_cmd(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pcnlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
