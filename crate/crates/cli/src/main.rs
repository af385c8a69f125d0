use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use psgd_cli::experiments::{run_experiment, CliError, RunOptions};
use psgd_cli::validate_config;

#[derive(Parser)]
#[command(
    name = "psgd",
    about = "Preconditioned SGD experiment runner",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file.
    Run {
        /// Path to the key=value config file.
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for CSV traces and checkpoints.
        #[arg(long, default_value = ".")]
        output: PathBuf,
        /// Parallel grid cells (fig2_grid only).
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Resume from a checkpoint written by an earlier run of the same
        /// config.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Validate a config file and print it back fully defaulted.
    Validate {
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::FAILURE;
                }
            };
            match validate_config(&text) {
                Ok(resolved) => {
                    print!("{resolved}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Run {
            config,
            seed,
            output,
            jobs,
            resume,
        } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::FAILURE;
                }
            };
            let mut resolved = match validate_config(&text) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::FAILURE;
                }
            };
            if let Some(seed) = seed {
                resolved.seed = seed;
            }
            let opts = RunOptions {
                output_dir: output,
                jobs,
                resume,
            };
            match run_experiment(&resolved, &opts) {
                Ok(outcome) => {
                    for p in &outcome.csv_paths {
                        println!("wrote {}", p.display());
                    }
                    if let Some(c) = &outcome.checkpoint {
                        println!("checkpoint {}", c.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e @ CliError::NumericFault { .. }) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
