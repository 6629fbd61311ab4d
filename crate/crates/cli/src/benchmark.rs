use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use vmnet_core::dataset::{read_dataset, sha256_file, MANIFEST_FILE};
use vmnet_core::network::{Segment, WindowRef};
use vmnet_core::oracle::{best_predictor_profile, discounted_label, error_study, prepare_book, OracleConfig};
use vmnet_core::Execution;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::{create_dir, write_json};

pub const ORACLE_FILE: &str = "oracle.csv";
pub const ERROR_STUDY_FILE: &str = "error_study.csv";

pub const ORACLE_HEADER: [&str; 10] = [
    "window_id",
    "day",
    "node",
    "m",
    "value",
    "fixed",
    "arrivals",
    "std_error",
    "label",
    "discounted_label",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentChoice {
    All,
    Train,
    #[default]
    Validation,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BenchmarkArgs {
    /// Dataset directory (default: <output root>/dataset).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Output directory (default: <output root>/benchmark).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Forecast horizon; at most the dataset's steps ahead (default: that value).
    #[arg(long)]
    pub steps_ahead: Option<usize>,
    /// Arrival simulations per estimate.
    #[arg(long)]
    pub n_sims: Option<usize>,
    /// Independent oracle runs for the dispersion table.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Oracle master seed (default: the dataset seed).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub segment: Option<SegmentChoice>,
    /// Use every `stride`-th window of the segment.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Cap on the number of windows.
    #[arg(long)]
    pub max_windows: Option<usize>,
    /// Simulation counts for the dispersion table (default: --n-sims).
    #[arg(long, value_delimiter = ',')]
    pub study_sims: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct BenchmarkManifest {
    kind: &'static str,
    dataset_manifest_sha256: String,
    steps_ahead: usize,
    n_sims: usize,
    repeats: usize,
    seed: u64,
    segment: SegmentChoice,
    stride: usize,
    max_windows: Option<usize>,
    study_sims: Vec<usize>,
    n_windows: usize,
    files: BTreeMap<String, String>,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::input(path, e.to_string()))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::input(path, e.to_string())
}

pub fn run(mut config: RunConfig, args: BenchmarkArgs) -> Result<()> {
    if let Some(v) = args.n_sims {
        config.n_sims = v;
    }
    if let Some(v) = args.repeats {
        config.repeats = v;
    }
    if config.n_sims == 0 {
        return Err(CliError::Config("n_sims must be at least 1".into()));
    }
    if config.repeats == 0 {
        return Err(CliError::Config("repeats must be at least 1".into()));
    }
    if args.stride == 0 {
        return Err(CliError::Config("stride must be at least 1".into()));
    }
    let root = config.output_root();
    let ds_dir = args.dataset.clone().unwrap_or_else(|| root.join("dataset"));
    let out = args.out.clone().unwrap_or_else(|| root.join("benchmark"));
    let ds = read_dataset(&ds_dir)?;
    let m = args.steps_ahead.unwrap_or(ds.manifest.m);
    if m == 0 || m > ds.manifest.m {
        return Err(CliError::Config(format!(
            "steps ahead must lie in 1..={} for this dataset, got {m}",
            ds.manifest.m
        )));
    }
    let seed = args.seed.unwrap_or(ds.manifest.config.seed);
    let segment = args.segment.unwrap_or_default();
    let plan = ds.manifest.plan();
    let mut windows: Vec<WindowRef> = plan
        .windows()
        .filter(|w| match segment {
            SegmentChoice::All => true,
            SegmentChoice::Train => w.segment == Segment::Train,
            SegmentChoice::Validation => w.segment == Segment::Validation,
        })
        .step_by(args.stride)
        .collect();
    if let Some(cap) = args.max_windows {
        windows.truncate(cap);
    }
    if windows.is_empty() {
        return Err(CliError::input(&ds_dir, "no windows selected"));
    }

    let mut sim = ds.simulation.clone();
    let bases: Vec<usize> = windows.iter().map(|w| w.end_day).collect();
    prepare_book(&mut sim, &bases, m, Execution::default())?;
    let oracle = OracleConfig::for_simulation(&sim, config.n_sims, seed);

    create_dir(&out)?;
    let oracle_path = out.join(ORACLE_FILE);
    let mut w = csv_writer(&oracle_path)?;
    w.write_record(ORACLE_HEADER).map_err(csv_err(&oracle_path))?;
    for win in &windows {
        let l = win.end_day;
        let profile = best_predictor_profile(&sim, &oracle, l, m)?;
        for node in 0..sim.n_nodes() {
            for (s, step) in profile.iter().enumerate() {
                let e = step[node];
                let label = ds.window_labels(win.id, node)?[s];
                w.write_record([
                    win.id.to_string(),
                    l.to_string(),
                    node.to_string(),
                    (s + 1).to_string(),
                    format!("{:?}", e.value),
                    format!("{:?}", e.fixed_component),
                    format!("{:?}", e.arrivals_component),
                    format!("{:?}", e.std_error),
                    format!("{label:?}"),
                    format!("{:?}", discounted_label(&sim, node, l, s + 1)?),
                ])
                .map_err(csv_err(&oracle_path))?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(&oracle_path, e))?;

    let study_sims = if args.study_sims.is_empty() {
        vec![config.n_sims]
    } else {
        args.study_sims.clone()
    };
    if study_sims.contains(&0) {
        return Err(CliError::Config("study simulation counts must be at least 1".into()));
    }
    let steps: Vec<usize> = (1..=m).collect();
    let rows = error_study(&sim, &oracle, &bases, &steps, &study_sims, config.repeats)?;
    let study_path = out.join(ERROR_STUDY_FILE);
    let mut w = csv_writer(&study_path)?;
    w.write_record([
        "m",
        "n_sims",
        "base_day",
        "node",
        "repeats",
        "mean",
        "std",
        "rel_err",
        "abs_dispersion",
        "fixed",
    ])
    .map_err(csv_err(&study_path))?;
    for r in &rows {
        w.write_record([
            r.m.to_string(),
            r.n_sims.to_string(),
            r.base_day.to_string(),
            r.node.to_string(),
            r.repeats.to_string(),
            format!("{:?}", r.mean),
            format!("{:?}", r.std),
            format!("{:?}", r.rel_err),
            format!("{:?}", r.std),
            format!("{:?}", r.fixed_component),
        ])
        .map_err(csv_err(&study_path))?;
    }
    w.flush().map_err(|e| CliError::io(&study_path, e))?;

    let mut files = BTreeMap::new();
    for name in [ORACLE_FILE, ERROR_STUDY_FILE] {
        files.insert(name.to_string(), sha256_file(&out.join(name))?);
    }
    let manifest = BenchmarkManifest {
        kind: "benchmark",
        dataset_manifest_sha256: sha256_file(&ds_dir.join(MANIFEST_FILE))?,
        steps_ahead: m,
        n_sims: config.n_sims,
        repeats: config.repeats,
        seed,
        segment,
        stride: args.stride,
        max_windows: args.max_windows,
        study_sims,
        n_windows: windows.len(),
        files,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    println!("oracle values for {} windows written to {}", windows.len(), out.display());
    if config.repeats > 1 {
        let nonzero: Vec<_> = rows.iter().filter(|r| r.m == m && r.fixed_component != 0.0).collect();
        let below = nonzero.iter().filter(|r| r.rel_err < 0.02).count();
        println!(
            "m = {m}: relative error below 2% for {below} of {} estimates with a nonzero fixed component",
            nonzero.len()
        );
    }
    Ok(())
}
