//! `localflow`: solve convex network flow problems, measure how
//! sensitivities decay with distance, and run localized re-solves.
//!
//! Exit codes: 0 on success, 2 for invalid input, 3 for numerical failure.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use localflow::Result;

use commands::Artifact;
use config::{Flags, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "localflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Optimal flow, potentials and residuals
    Solve,
    /// Derivative of the optimal flow along a perturbation
    Sensitivity,
    /// Per-edge sensitivity against the distance bound
    Decay,
    /// Localized warm-start re-solve with its bias/variance split
    Reopt,
    /// Radius and iteration count for an error target
    Tune,
    /// Walk eigenvalues of weighted subgraphs against the degree bound
    Interlace,
    /// Write a generated graph
    Generate,
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::resolve(&cli.flags)?;
    let artifacts = match cli.command {
        Command::Solve => commands::solve(&cfg),
        Command::Sensitivity => commands::sensitivity(&cfg),
        Command::Decay => commands::decay(&cfg),
        Command::Reopt => commands::reopt(&cfg),
        Command::Tune => commands::tune_cmd(&cfg),
        Command::Interlace => commands::interlace(&cfg),
        Command::Generate => commands::generate_cmd(&cfg),
    }?;
    emit(cfg.out.as_deref(), &artifacts)
}

fn emit(out: Option<&std::path::Path>, artifacts: &[Artifact]) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for a in artifacts {
                std::fs::write(dir.join(&a.name), &a.contents)?;
            }
        }
        None => print!("{}", artifacts[0].contents),
    }
    Ok(())
}

fn configure_threads() {
    if let Some(n) = std::env::var("LOCALFLOW_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        // fails only if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
