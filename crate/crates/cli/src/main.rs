//! `csuq` — reconstruct sparse complex signals from subsampled Fourier
//! measurements and report per-coordinate confidence disks.
//!
//! Every subcommand reads an optional flat key=value settings file, applies
//! command-line flags on top, echoes the effective configuration into
//! `manifest.json`, and writes its outputs atomically. Given the same flags,
//! seed, and input bytes, reruns are byte-identical.

mod commands;
mod emit;
mod plot;
mod settings;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use settings::{CommonOpts, Settings};

#[derive(Parser, Debug)]
#[command(
    name = "csuq",
    version,
    about = "Sparse Fourier reconstruction with per-coordinate confidence disks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reconstruct one instance; write estimates, disks, metrics, and plots
    Reconstruct(CommonOpts),
    /// Run repeated randomized trials and aggregate the scores
    Trials(CommonOpts),
    /// Sweep sparsity thresholds and tabulate hit rates and similarity
    Table(CommonOpts),
    /// Run calibration, error-split, and sample-size-decay diagnostics
    Diagnostics(CommonOpts),
    /// Generate a synthetic sparse ground truth and save it
    Phantom(CommonOpts),
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<()> {
    init_thread_pool()?;
    let cli = Cli::parse();
    let (name, opts) = match &cli.command {
        Command::Reconstruct(o) => ("reconstruct", o),
        Command::Trials(o) => ("trials", o),
        Command::Table(o) => ("table", o),
        Command::Diagnostics(o) => ("diagnostics", o),
        Command::Phantom(o) => ("phantom", o),
    };
    let settings = Settings::build(name, opts)?;
    match cli.command {
        Command::Reconstruct(_) => commands::reconstruct(settings),
        Command::Trials(_) => commands::trials(settings),
        Command::Table(_) => commands::table(settings),
        Command::Diagnostics(_) => commands::diagnostics(settings),
        Command::Phantom(_) => commands::phantom(settings),
    }
}

/// Cap the worker count when CSUQ_THREADS is set.
fn init_thread_pool() -> Result<()> {
    let Ok(raw) = std::env::var("CSUQ_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("CSUQ_THREADS must be a positive integer, got '{raw}'"))?;
    if threads == 0 {
        anyhow::bail!("CSUQ_THREADS must be a positive integer, got '{raw}'");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("failed to configure the worker pool")?;
    Ok(())
}
