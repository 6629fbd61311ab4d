//! `vmnet` command-line driver.

pub mod benchmark;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod export;
pub mod simulate;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "vmnet", version, about = "Variation-margin network simulator, dataset exporter and benchmark oracle")]
pub struct Cli {
    /// TOML file with run settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Root for default output directories.
    #[arg(long, global = true)]
    pub output_root: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a network and write rates, contracts, snapshots and bonds.
    Simulate(simulate::SimulateArgs),
    /// Window a simulation into a training dataset.
    Export(export::ExportArgs),
    /// Run the Monte Carlo oracle over dataset windows.
    Benchmark(benchmark::BenchmarkArgs),
    /// Score a predictions file against labels and oracle values.
    Evaluate(evaluate::EvaluateArgs),
}

/// Dataset layout flags shared by `simulate` and `export`.
#[derive(Debug, Clone, Default, Args)]
pub struct FormatArgs {
    /// Table format: binary or csv.
    #[arg(long)]
    pub format: Option<vmnet_core::dataset::Format>,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serialises");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(0) = cli.threads {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    vmnet_core::exec::init_threads(cli.threads);
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if cli.output_root.is_some() {
        config.output_root = cli.output_root;
    }
    match cli.command {
        Command::Simulate(args) => simulate::run(config, args),
        Command::Export(args) => export::run(config, args),
        Command::Benchmark(args) => benchmark::run(config, args),
        Command::Evaluate(args) => evaluate::run(config, args),
    }
}
