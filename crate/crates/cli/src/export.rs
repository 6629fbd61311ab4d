use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use vmnet_core::dataset::{export_dataset, read_simulation, Format};
use vmnet_core::network::window_plan;
use vmnet_core::Execution;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::FormatArgs;

#[derive(Debug, Clone, Default, Args)]
pub struct ExportArgs {
    /// Simulation directory (default: <output root>/simulation).
    #[arg(long)]
    pub sim: Option<PathBuf>,
    /// Dataset directory (default: <output root>/dataset).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Lookback length k.
    #[arg(long)]
    pub lookback: Option<usize>,
    /// Steps ahead m.
    #[arg(long)]
    pub steps_ahead: Option<usize>,
    /// Train fraction of the windows.
    #[arg(long)]
    pub split: Option<f64>,
    #[command(flatten)]
    pub format: FormatArgs,
}

#[derive(Debug, Serialize)]
struct ExportEcho {
    command: &'static str,
    lookback: usize,
    steps_ahead: usize,
    split: f64,
    format: Format,
    simulation_manifest_sha256: String,
}

pub fn run(mut config: RunConfig, args: ExportArgs) -> Result<()> {
    if let Some(v) = args.lookback {
        config.lookback = v;
    }
    if let Some(v) = args.steps_ahead {
        config.steps_ahead = v;
    }
    if let Some(v) = args.split {
        config.split = v;
    }
    if let Some(v) = args.format.format {
        config.format = v;
    }
    let root = config.output_root();
    let sim_dir = args.sim.unwrap_or_else(|| root.join("simulation"));
    let out = args.out.unwrap_or_else(|| root.join("dataset"));
    if config.lookback == 0 || config.steps_ahead == 0 {
        return Err(CliError::Config("lookback and steps ahead must be at least 1".into()));
    }
    if !(config.split > 0.0 && config.split < 1.0) {
        return Err(CliError::Config(format!("split must lie in (0, 1), got {}", config.split)));
    }
    let (_, sim) = read_simulation(&sim_dir)?;
    let plan = window_plan(sim.n_days(), config.lookback, config.steps_ahead, Some(config.split))?;
    let echo = ExportEcho {
        command: "export",
        lookback: config.lookback,
        steps_ahead: config.steps_ahead,
        split: config.split,
        format: config.format,
        simulation_manifest_sha256: vmnet_core::dataset::sha256_file(
            &sim_dir.join(vmnet_core::dataset::MANIFEST_FILE),
        )?,
    };
    let manifest = export_dataset(
        &sim,
        &plan,
        &out,
        config.format,
        Some(serde_json::to_value(echo).expect("echo serialises")),
        Execution::default(),
    )?;
    println!("dataset written to {}", out.display());
    println!(
        "windows: {} train, {} validation (k = {}, m = {}, W = {})",
        manifest.n_train, manifest.n_validation, manifest.k, manifest.m, manifest.width
    );
    Ok(())
}
