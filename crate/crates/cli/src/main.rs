//! `vpt`: run variational parallel tempering experiments from a config file
//! and write their results as CSV.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Failure;

#[derive(Parser)]
#[command(name = "vpt", version, about = "Parallel tempering with variational references")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config file; every key is optional.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override `run.seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for replicates (default: all cores).
    #[arg(long, global = true, value_name = "INT")]
    threads: Option<usize>,
    /// Override `run.output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every replicate of the configured topology.
    Run,
    /// Run each listed topology on every seed and summarise restarts and KS flags.
    CompareTopologies,
    /// Print GCB bounds for the correlated-Gaussian and mixture examples.
    Bounds,
    /// Simulate the idealized index process.
    Idealized,
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let src = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: cannot read config: {e}", path.display())))?;
            config::parse(&path.display().to_string(), &src)?
        }
        None => config::defaults(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(dir) = cli.output {
        cfg.run.output_dir = dir;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Run => commands::run(&cfg),
        Command::CompareTopologies => commands::compare_topologies(&cfg),
        Command::Bounds => commands::bounds(&cfg),
        Command::Idealized => commands::idealized(&cfg, "idealized"),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
