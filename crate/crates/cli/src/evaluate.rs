//! Scores a predictions CSV `window_id,node,step,prediction` against the
//! dataset labels and, where available, the oracle values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use vmnet_core::dataset::read_dataset;

use crate::benchmark::ORACLE_HEADER;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::create_dir;

pub const PREDICTIONS_HEADER: [&str; 4] = ["window_id", "node", "step", "prediction"];
pub const METRICS_FILE: &str = "metrics.csv";

#[derive(Debug, Clone, Default, Args)]
pub struct EvaluateArgs {
    /// Predictions CSV with columns window_id,node,step,prediction.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Dataset directory (default: <output root>/dataset).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Oracle CSV written by `benchmark`.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// Output directory (default: <output root>/evaluation).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

type Key = (usize, usize, usize);

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn parse_field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    rec.get(idx)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| CliError::input(path, format!("line {}: bad {name} {:?}", line_of(rec), rec.get(idx).unwrap_or(""))))
}

fn open_csv(path: &Path, header: &[&str]) -> Result<csv::Reader<std::fs::File>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::input(path, e.to_string()))?;
    let found = r.headers().map_err(|e| CliError::input(path, e.to_string()))?;
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(CliError::input(
            path,
            format!("line 1: expected header {}", header.join(",")),
        ));
    }
    Ok(r)
}

fn records(path: &Path, r: &mut csv::Reader<std::fs::File>) -> Result<Vec<csv::StringRecord>> {
    r.records()
        .map(|rec| {
            rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                CliError::input(path, format!("line {line}: {e}"))
            })
        })
        .collect()
}

/// Predictions keyed by `(window, node, step)`, validated against the dataset shape.
pub fn read_predictions(path: &Path, n_windows: usize, n_nodes: usize, m: usize) -> Result<BTreeMap<Key, f64>> {
    let mut r = open_csv(path, &PREDICTIONS_HEADER)?;
    let mut out = BTreeMap::new();
    for rec in records(path, &mut r)? {
        let line = line_of(&rec);
        let w: usize = parse_field(path, &rec, 0, "window_id")?;
        let node: usize = parse_field(path, &rec, 1, "node")?;
        let step: usize = parse_field(path, &rec, 2, "step")?;
        let p: f64 = parse_field(path, &rec, 3, "prediction")?;
        if w >= n_windows || node >= n_nodes || step == 0 || step > m {
            return Err(CliError::input(
                path,
                format!("line {line}: ({w}, {node}, {step}) outside {n_windows} windows, {n_nodes} nodes, steps 1..={m}"),
            ));
        }
        if !p.is_finite() {
            return Err(CliError::input(path, format!("line {line}: prediction is not finite")));
        }
        if out.insert((w, node, step), p).is_some() {
            return Err(CliError::input(path, format!("line {line}: duplicate ({w}, {node}, {step})")));
        }
    }
    Ok(out)
}

pub fn read_oracle(path: &Path) -> Result<BTreeMap<Key, f64>> {
    let mut r = open_csv(path, &ORACLE_HEADER)?;
    let mut out = BTreeMap::new();
    for rec in records(path, &mut r)? {
        let w: usize = parse_field(path, &rec, 0, "window_id")?;
        let node: usize = parse_field(path, &rec, 2, "node")?;
        let step: usize = parse_field(path, &rec, 3, "m")?;
        let v: f64 = parse_field(path, &rec, 4, "value")?;
        out.insert((w, node, step), v);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Score {
    pub n: usize,
    pub sse_labels: f64,
    pub n_oracle: usize,
    pub sse_oracle: f64,
}

impl Score {
    pub fn mse_labels(&self) -> f64 {
        self.sse_labels / self.n as f64
    }

    pub fn mse_oracle(&self) -> f64 {
        self.sse_oracle / self.n_oracle as f64
    }
}

pub fn run(config: RunConfig, args: EvaluateArgs) -> Result<()> {
    let root = config.output_root();
    let ds_dir = args.dataset.clone().unwrap_or_else(|| root.join("dataset"));
    let out = args.out.clone().unwrap_or_else(|| root.join("evaluation"));
    let ds = read_dataset(&ds_dir)?;
    let (n_windows, n_nodes, m) = (ds.manifest.n_windows, ds.manifest.n_nodes, ds.manifest.m);
    let preds = read_predictions(&args.predictions, n_windows, n_nodes, m)?;
    if preds.is_empty() {
        return Err(CliError::input(&args.predictions, "no predictions"));
    }
    let oracle = match &args.oracle {
        Some(p) => read_oracle(p)?,
        None => BTreeMap::new(),
    };

    let mut per_step: BTreeMap<usize, Score> = BTreeMap::new();
    let mut total = Score::default();
    for (&(w, node, step), &p) in &preds {
        let label = ds.window_labels(w, node)?[step - 1];
        let add = |s: &mut Score| {
            s.n += 1;
            s.sse_labels += (p - label) * (p - label);
            if let Some(o) = oracle.get(&(w, node, step)) {
                s.n_oracle += 1;
                s.sse_oracle += (p - o) * (p - o);
            }
        };
        add(per_step.entry(step).or_default());
        add(&mut total);
    }

    create_dir(&out)?;
    let path = out.join(METRICS_FILE);
    let mut wr = csv::Writer::from_path(&path).map_err(|e| CliError::input(&path, e.to_string()))?;
    let csv_err = |e: csv::Error| CliError::input(&path, e.to_string());
    wr.write_record(["step", "n", "mse_labels", "n_oracle", "mse_oracle"]).map_err(csv_err)?;
    let rows = per_step
        .iter()
        .map(|(s, sc)| (s.to_string(), *sc))
        .chain(std::iter::once(("all".to_string(), total)));
    println!("{:>6} {:>8} {:>14} {:>8} {:>14}", "step", "n", "mse_labels", "n_oracle", "mse_oracle");
    for (step, sc) in rows {
        wr.write_record([
            step.clone(),
            sc.n.to_string(),
            format!("{:?}", sc.mse_labels()),
            sc.n_oracle.to_string(),
            format!("{:?}", sc.mse_oracle()),
        ])
        .map_err(csv_err)?;
        println!(
            "{:>6} {:>8} {:>14.6e} {:>8} {:>14.6e}",
            step,
            sc.n,
            sc.mse_labels(),
            sc.n_oracle,
            sc.mse_oracle()
        );
    }
    wr.flush().map_err(|e| CliError::io(&path, e))?;
    println!("metrics written to {}", path.display());
    Ok(())
}
