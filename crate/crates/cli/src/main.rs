//! `oma-va`: experiment runner for variable-annuity valuation adjustments.

mod config;
mod error;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Manifest, RunConfig};
use error::CliError;
use output::OutputDir;

#[derive(Parser)]
#[command(name = "oma-va", version, about = "Variable-annuity valuation adjustments and hedging experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config (or a previous manifest).
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("OMA_VA_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::invalid("OMA_VA_THREADS", format!("{raw:?} is not a positive integer")))?;
    // a second initialisation only happens in tests that call this twice
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn execute(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = RunConfig::load(&config)?;
            cfg.validate()?;
            Ok(format!("{}: ok", config.display()))
        }
        Command::Run { config, seed, out } => {
            configure_threads()?;
            let mut cfg = RunConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(out) = out {
                cfg.output_dir = Some(out);
            }
            cfg.validate()?;
            let mut dir = OutputDir::create(&cfg.output_dir())?;
            dir.json(
                "manifest.json",
                &Manifest {
                    config: &cfg,
                    library_version: env!("CARGO_PKG_VERSION"),
                    git_hash: env!("OMA_VA_GIT_HASH"),
                },
            )?;
            experiments::run(&cfg, &mut dir)?;
            let files: Vec<String> = dir.written().iter().map(|p| p.display().to_string()).collect();
            Ok(files.join("\n"))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
