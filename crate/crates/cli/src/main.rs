//! `ergm-vi`: fit, simulate, check and compare Bayesian mixed ERGMs.
//!
//! Exit codes: 0 success, 1 output failure, 2 configuration error, 3 data
//! error, 4 numerical failure.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod data;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ergm-vi", version, about)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the configuration or fitted model.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the configured model and write fit.json, trace.csv and a summary.
    Fit,
    /// Simulate networks from a fitted model or an explicit parameter vector.
    Simulate {
        #[arg(long, conflicts_with = "theta")]
        fit: Option<PathBuf>,
        /// Comma-separated `θ = (β, γ)`; the model comes from --config.
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<String>,
        #[arg(long, short = 'n')]
        n: usize,
    },
    /// Posterior predictive goodness-of-fit tables.
    Gof {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        n_sim: Option<usize>,
    },
    /// Approximate log Bayes factor of fit 1 against fit 2.
    Bf {
        #[arg(long)]
        fit1: PathBuf,
        #[arg(long)]
        fit2: PathBuf,
    },
    /// Exact posterior moments by enumeration (tiny networks only).
    Oracle,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot set thread count: {e}")))?;
    }
    let ctx = Context {
        config: cli.config,
        seed: cli.seed,
        out_dir: cli.out_dir,
    };
    match cli.command {
        Command::Fit => commands::cmd_fit(&ctx),
        Command::Simulate { fit, theta, n } => {
            commands::cmd_simulate(&ctx, fit.as_deref(), theta.as_deref(), n)
        }
        Command::Gof { fit, n_sim } => commands::cmd_gof(&ctx, &fit, n_sim),
        Command::Bf { fit1, fit2 } => commands::cmd_bf(&ctx, &fit1, &fit2),
        Command::Oracle => commands::cmd_oracle(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
