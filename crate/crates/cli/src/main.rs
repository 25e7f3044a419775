//! `graphnorm` command-line driver.
//!
//! Exit codes: 0 on success, 1 when a run fails, 2 for usage and validation errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "graphnorm", version, about = "Multi-view graph population templates", propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset from the `synthetic` section of a config file.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Cross-validated training; writes one checkpoint and refined template per fold.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Weight of the strength-distribution term; 0 trains the ablation.
        #[arg(long)]
        beta: Option<f64>,
        /// Folds trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Centeredness and topology scores of trained templates against held-out folds.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        /// Output directory of `train`.
        #[arg(long)]
        templates: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset of strength,pagerank,effective_size,clustering.
        #[arg(long)]
        measures: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Discriminative edge selection and classification between two populations.
    Compare {
        #[arg(long = "data-a")]
        data_a: PathBuf,
        #[arg(long = "data-b")]
        data_b: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated edge counts, e.g. 5,10,15,20,25.
        #[arg(long)]
        k: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { spec, out, seed } => commands::simulate(&spec, &out, seed),
        Command::Train { data, config, out, beta, jobs, seed } => commands::train(&commands::TrainArgs { data, config, out, beta, jobs, seed }),
        Command::Evaluate { data, templates, out, measures, config } => commands::evaluate(&data, &templates, &out, measures.as_deref(), config.as_deref()),
        Command::Compare { data_a, data_b, config, k, out, seed } => commands::compare(&data_a, &data_b, config.as_deref(), k.as_deref(), &out, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.code())
        }
    }
}
