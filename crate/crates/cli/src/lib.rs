//! Command-line front end: single-instance designs as JSON, BER sweeps as
//! CSV, and the built-in verification corpus.

pub mod commands;
pub mod config;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "af-relay", version, about = "Robust transceiver design for multi-hop AF MIMO relay chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true, value_name = "INT")]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Worker threads (1 runs everything on the calling thread).
    #[arg(long, global = true, value_name = "INT", value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Design transceivers for one channel draw and print a JSON report.
    Design,
    /// Run a Monte Carlo BER sweep and write CSV.
    Sweep,
    /// Run the built-in invariant corpus.
    Verify,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration.
    Config(String),
    /// The requested computation could not produce a result.
    Run(String),
    /// The verification corpus reported failures.
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Run(_) => 1,
            CliError::Verification(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Run(m) => f.write_str(m),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let exec = commands::configure_threads(cli.jobs)?;
    match cli.command {
        Command::Design => commands::design(cli, exec),
        Command::Sweep => commands::sweep(cli, exec),
        Command::Verify => commands::verify(cli, exec),
    }
}
