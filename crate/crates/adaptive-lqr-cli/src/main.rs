//! Experiment runner for the adaptive LQR library.
//!
//! Exit codes: 0 success, 1 certificate violation or failed self-check,
//! 2 configuration error, 3 numerical failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adaptive-lqr", about = "Certainty-equivalent adaptive LQR experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file and write trajectory,
    /// certificate, and metadata files.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Slack tolerance for certificate checks.
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
    },
    /// Run the eight canonical benchmark experiments and write per-run
    /// CSVs plus a summary table.
    PaperExperiments {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
    },
    /// Check the runtime certificates on a run (or an existing log) and
    /// exit nonzero if any violated inequality had its preconditions met.
    Certify {
        #[arg(long)]
        config: PathBuf,
        /// Check an existing trajectory CSV instead of running.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
    },
    /// Estimate the Lipschitz constant of the LQR gain over the
    /// parameter box by grid refinement.
    Lipschitz {
        /// Optional config supplying the system and weights; defaults to
        /// the quadrotor benchmark.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 15)]
        grid: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Self-test the Riccati solver and its sensitivity formulas.
    DareCheck {
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, seed, tolerance } => {
            commands::cmd_run(&config, &commands::out_dir(out), seed, tolerance)
        }
        Command::PaperExperiments { out, seed, tolerance } => {
            commands::cmd_paper_experiments(&commands::out_dir(out), seed, tolerance)
        }
        Command::Certify { config, log, out, seed, tolerance } => {
            commands::cmd_certify(&config, log.as_deref(), &commands::out_dir(out), seed, tolerance)
        }
        Command::Lipschitz { config, grid, seed } => {
            commands::cmd_lipschitz(config.as_deref(), grid, seed)
        }
        Command::DareCheck { tolerance } => commands::cmd_dare_check(tolerance),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
