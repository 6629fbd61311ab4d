//! On-disk simulation and dataset directories.
//!
//! Every directory holds `manifest.json` plus one table per record kind. The
//! manifest lists each table's schema, record count and SHA-256, so readers
//! validate files without trusting their names.

mod table;

pub use table::{csv_header, Column, ColumnData, ColumnSpec, ColumnType, Format, Table};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::network::{BlockAssignment, Segment, Simulation, SimulationConfig, WindowPlan, FEATURES_PER_CONTRACT};
use crate::rates::{BondBook, BondEstimate, RatePath};
use crate::streams::{derive_seed, Stream};
use crate::swaps::OisContract;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Row/column orientation of the flattened contract matrix.
pub const MATRIX_LAYOUT: &str = "row-major k x W; row r is day end_day-k+1+r; column block b holds \
[(T-t)/365, p(t0,T), p(t,T), B(t0), B(t), delta] of contract block_contract[r][b], zeros when -1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub file: String,
    pub records: usize,
    pub sha256: String,
    pub columns: Vec<ColumnSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub hub_hub: usize,
    pub hub_private: usize,
    pub private_private: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationManifest {
    pub schema_version: u32,
    pub kind: String,
    pub format: Format,
    pub config: SimulationConfig,
    pub stream_seeds: BTreeMap<String, u64>,
    pub grid_days: usize,
    pub node_features: Vec<f64>,
    pub n_contracts: usize,
    pub contract_classes: ClassCounts,
    pub width: usize,
    pub tables: BTreeMap<String, TableEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub kind: String,
    pub format: Format,
    pub config: SimulationConfig,
    pub stream_seeds: BTreeMap<String, u64>,
    pub n_nodes: usize,
    pub node_features: Vec<f64>,
    pub grid_days: usize,
    pub k: usize,
    pub m: usize,
    pub width: usize,
    pub n_blocks: usize,
    pub features_per_contract: usize,
    pub matrix_layout: String,
    pub split: Option<f64>,
    /// Train windows use snapshot days `1..=train_end`.
    pub train_end: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_windows: usize,
    pub tables: BTreeMap<String, TableEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<serde_json::Value>,
}

impl DatasetManifest {
    pub fn plan(&self) -> WindowPlan {
        WindowPlan {
            n_days: self.grid_days - 1,
            k: self.k,
            m: self.m,
            split: self.split,
            train_end: self.train_end,
            n_train: self.n_train,
            n_validation: self.n_validation,
        }
    }
}

fn stream_seeds(seed: u64) -> BTreeMap<String, u64> {
    Stream::ALL
        .iter()
        .map(|&s| (s.name().to_string(), derive_seed(seed, s, &[])))
        .collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_table(dir: &Path, name: &str, table: &Table, format: Format) -> Result<TableEntry> {
    let file = format!("{name}.{}", format.extension());
    let path = dir.join(&file);
    table.write(&path, format)?;
    Ok(TableEntry {
        sha256: sha256_file(&path)?,
        file,
        records: table.n_records,
        columns: table.schema(),
    })
}

fn read_table(dir: &Path, entry: &TableEntry, format: Format) -> Result<Table> {
    let path = dir.join(&entry.file);
    let digest = sha256_file(&path)?;
    if digest != entry.sha256 {
        return Err(Error::format(&path, "checksum does not match the manifest"));
    }
    let table = Table::read(&path, format, Some(&entry.columns))?;
    if table.n_records != entry.records {
        return Err(Error::format(&path, format!("{} records, manifest says {}", table.n_records, entry.records)));
    }
    Ok(table)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("manifest serialises");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn entry<'a>(tables: &'a BTreeMap<String, TableEntry>, name: &str, dir: &Path) -> Result<&'a TableEntry> {
    tables
        .get(name)
        .ok_or_else(|| Error::format(dir.join(MANIFEST_FILE), format!("no {name} table listed")))
}

pub fn rates_table(path: &RatePath) -> Table {
    let n = path.n_days() + 1;
    Table::new(n)
        .with_u64("day", 1, (0..n as u64).collect())
        .with_f64("r", 1, path.rates().to_vec())
        .with_f64("B", 1, path.accumulators().to_vec())
}

pub fn contracts_table(contracts: &[OisContract]) -> Table {
    Table::new(contracts.len())
        .with_u64("id", 1, contracts.iter().map(|c| c.id as u64).collect())
        .with_u64("i", 1, contracts.iter().map(|c| c.i as u64).collect())
        .with_u64("j", 1, contracts.iter().map(|c| c.j as u64).collect())
        .with_u64("start", 1, contracts.iter().map(|c| c.start as u64).collect())
        .with_u64("maturity", 1, contracts.iter().map(|c| c.maturity as u64).collect())
        .with_f64("principal", 1, contracts.iter().map(|c| c.principal).collect())
        .with_f64("fair_rate", 1, contracts.iter().map(|c| c.fair_rate).collect())
        .with_i64("delta_i", 1, contracts.iter().map(|c| c.delta_i as i64).collect())
}

pub fn bonds_table(book: &BondBook) -> Table {
    let entries: Vec<_> = book.iter().collect();
    Table::new(entries.len())
        .with_u64("day", 1, entries.iter().map(|((d, _), _)| *d as u64).collect())
        .with_u64("maturity", 1, entries.iter().map(|((_, t), _)| *t as u64).collect())
        .with_f64("price", 1, entries.iter().map(|(_, e)| e.price).collect())
        .with_f64("std_error", 1, entries.iter().map(|(_, e)| e.std_error).collect())
}

/// One record per `(day, node)` with the node's label and live degree.
pub fn snapshots_table(sim: &Simulation) -> Result<Table> {
    if !sim.has_labels() {
        return Err(Error::Data("simulation has no labels".into()));
    }
    let n = sim.n_nodes();
    let days = sim.n_days() + 1;
    let mut degree = vec![0u64; days * n];
    for c in &sim.contracts {
        for d in c.start + 1..=c.maturity.min(sim.n_days()) {
            degree[d * n + c.i] += 1;
            degree[d * n + c.j] += 1;
        }
    }
    let features = sim.config.nodes.features();
    Ok(Table::new(days * n)
        .with_u64("day", 1, (0..days * n).map(|x| (x / n) as u64).collect())
        .with_u64("node", 1, (0..days * n).map(|x| (x % n) as u64).collect())
        .with_f64("feature", 1, (0..days * n).map(|x| features[x % n]).collect())
        .with_f64("label", 1, sim.labels.iter().flatten().copied().collect())
        .with_u64("degree", 1, degree))
}

fn parse_rates(table: &Table) -> Result<RatePath> {
    let days = table.u64s("day")?;
    if days.iter().enumerate().any(|(i, &d)| d != i as u64) {
        return Err(Error::Data("rate table days are not 0..n".into()));
    }
    let path = RatePath::from_rates(table.f64s("r")?.to_vec())?;
    if path.accumulators() != table.f64s("B")? {
        return Err(Error::Data("stored accumulator disagrees with the rates".into()));
    }
    Ok(path)
}

fn parse_contracts(table: &Table) -> Result<Vec<OisContract>> {
    let (id, i, j) = (table.u64s("id")?, table.u64s("i")?, table.u64s("j")?);
    let (start, maturity) = (table.u64s("start")?, table.u64s("maturity")?);
    let (principal, k, delta) = (table.f64s("principal")?, table.f64s("fair_rate")?, table.i64s("delta_i")?);
    (0..table.n_records)
        .map(|r| {
            let c = OisContract {
                id: id[r] as usize,
                i: i[r] as usize,
                j: j[r] as usize,
                start: start[r] as usize,
                maturity: maturity[r] as usize,
                principal: principal[r],
                fair_rate: k[r],
                delta_i: delta[r] as i8,
            };
            if c.id != r || delta[r].abs() != 1 {
                return Err(Error::Data(format!("contract record {r} is malformed")));
            }
            c.validate()?;
            Ok(c)
        })
        .collect()
}

fn parse_bonds(table: &Table) -> Result<BondBook> {
    let (day, mat) = (table.u64s("day")?, table.u64s("maturity")?);
    let (price, se) = (table.f64s("price")?, table.f64s("std_error")?);
    let mut book = BondBook::new();
    for r in 0..table.n_records {
        book.insert(
            day[r] as usize,
            mat[r] as usize,
            BondEstimate {
                price: price[r],
                std_error: se[r],
            },
        );
    }
    Ok(book)
}

pub fn write_simulation(
    sim: &Simulation,
    dir: &Path,
    format: Format,
    run: Option<serde_json::Value>,
) -> Result<SimulationManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tables = BTreeMap::new();
    tables.insert("rates".into(), write_table(dir, "rates", &rates_table(&sim.path), format)?);
    tables.insert("contracts".into(), write_table(dir, "contracts", &contracts_table(&sim.contracts), format)?);
    tables.insert("snapshots".into(), write_table(dir, "snapshots", &snapshots_table(sim)?, format)?);
    tables.insert("bonds".into(), write_table(dir, "bonds", &bonds_table(&sim.book), format)?);
    let (hh, hp, pp) = sim.class_counts();
    let manifest = SimulationManifest {
        schema_version: SCHEMA_VERSION,
        kind: "simulation".into(),
        format,
        config: sim.config.clone(),
        stream_seeds: stream_seeds(sim.config.seed),
        grid_days: sim.n_days() + 1,
        node_features: sim.config.nodes.features(),
        n_contracts: sim.contracts.len(),
        contract_classes: ClassCounts {
            hub_hub: hh,
            hub_private: hp,
            private_private: pp,
        },
        width: BlockAssignment::new(sim).width(),
        tables,
        run,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_simulation(dir: &Path) -> Result<(SimulationManifest, Simulation)> {
    let manifest: SimulationManifest = read_json(&dir.join(MANIFEST_FILE))?;
    if manifest.kind != "simulation" || manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::format(dir.join(MANIFEST_FILE), "not a simulation manifest of this version"));
    }
    manifest.config.validate()?;
    let f = manifest.format;
    let path = parse_rates(&read_table(dir, entry(&manifest.tables, "rates", dir)?, f)?)?;
    let contracts = parse_contracts(&read_table(dir, entry(&manifest.tables, "contracts", dir)?, f)?)?;
    let book = parse_bonds(&read_table(dir, entry(&manifest.tables, "bonds", dir)?, f)?)?;
    let snaps = read_table(dir, entry(&manifest.tables, "snapshots", dir)?, f)?;
    let n = manifest.config.nodes.n_nodes;
    if path.n_days() != manifest.config.n_days || snaps.n_records != (path.n_days() + 1) * n {
        return Err(Error::Data("table sizes disagree with the manifest".into()));
    }
    let labels = snaps.f64s("label")?.chunks(n).map(|c| c.to_vec()).collect();
    let sim = Simulation {
        config: manifest.config.clone(),
        path,
        contracts,
        book,
        labels,
    };
    Ok((manifest, sim))
}

/// Window records `(window, node)` in id order, then node order.
pub fn windows_table(sim: &Simulation, plan: &WindowPlan, exec: Execution) -> Result<Table> {
    let blocks = BlockAssignment::new(sim);
    let (k, m, n) = (plan.k, plan.m, sim.n_nodes());
    let width = blocks.width();
    let nb = blocks.n_blocks;
    let refs: Vec<_> = plan.windows().collect();
    let built = exec.map_slice(&refs, |w| w.build(sim, &blocks, k, m));
    let records = refs.len() * n;
    let mut window_id = Vec::with_capacity(records);
    let mut node = Vec::with_capacity(records);
    let mut segment = Vec::with_capacity(records);
    let mut end_day = Vec::with_capacity(records);
    let mut row_days = Vec::with_capacity(records * k);
    let mut matrix = Vec::with_capacity(records * k * width);
    let mut block_contract = Vec::with_capacity(records * k * nb);
    let mut conditioning = Vec::with_capacity(records * m);
    let mut labels = Vec::with_capacity(records * m);
    let mut label_days = Vec::with_capacity(records * m);
    for w in built {
        let w = w?;
        for (v, mat) in w.matrices.iter().enumerate() {
            window_id.push(w.id as u64);
            node.push(v as u64);
            segment.push(w.segment.code());
            end_day.push(w.end_day as u64);
            row_days.extend(mat.row_days.iter().map(|&d| d as u64));
            matrix.extend_from_slice(&mat.data);
            block_contract.extend_from_slice(&mat.block_contract);
            conditioning.extend_from_slice(&w.conditioning);
            labels.extend_from_slice(&w.labels[v]);
            label_days.extend(w.label_days.iter().map(|&d| d as u64));
        }
    }
    Ok(Table::new(records)
        .with_u64("window_id", 1, window_id)
        .with_u64("node", 1, node)
        .with_u64("segment", 1, segment)
        .with_u64("end_day", 1, end_day)
        .with_u64("row_days", k, row_days)
        .with_f64("matrix", k * width, matrix)
        .with_i64("block_contract", k * nb, block_contract)
        .with_f64("conditioning", m, conditioning)
        .with_f64("labels", m, labels)
        .with_u64("label_days", m, label_days))
}

pub fn export_dataset(
    sim: &Simulation,
    plan: &WindowPlan,
    dir: &Path,
    format: Format,
    run: Option<serde_json::Value>,
    exec: Execution,
) -> Result<DatasetManifest> {
    if plan.n_days != sim.n_days() {
        return Err(Error::Data("window plan and simulation horizons differ".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let blocks = BlockAssignment::new(sim);
    let windows = windows_table(sim, plan, exec)?;
    let mut tables = BTreeMap::new();
    tables.insert("rates".into(), write_table(dir, "rates", &rates_table(&sim.path), format)?);
    tables.insert("contracts".into(), write_table(dir, "contracts", &contracts_table(&sim.contracts), format)?);
    tables.insert("bonds".into(), write_table(dir, "bonds", &bonds_table(&sim.book), format)?);
    tables.insert("windows".into(), write_table(dir, "windows", &windows, format)?);
    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        kind: "dataset".into(),
        format,
        config: sim.config.clone(),
        stream_seeds: stream_seeds(sim.config.seed),
        n_nodes: sim.n_nodes(),
        node_features: sim.config.nodes.features(),
        grid_days: sim.n_days() + 1,
        k: plan.k,
        m: plan.m,
        width: blocks.width(),
        n_blocks: blocks.n_blocks,
        features_per_contract: FEATURES_PER_CONTRACT,
        matrix_layout: MATRIX_LAYOUT.into(),
        split: plan.split,
        train_end: plan.train_end,
        n_train: plan.n_train,
        n_validation: plan.n_validation,
        n_windows: plan.len(),
        tables,
        run,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// A dataset read back from disk.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    /// Labels are filled on every day some window labels, zero elsewhere.
    pub simulation: Simulation,
    pub windows: Table,
}

impl Dataset {
    /// Label sequence stored for `(window, node)`.
    pub fn window_labels(&self, window: usize, node: usize) -> Result<&[f64]> {
        let m = self.manifest.m;
        let rec = window * self.manifest.n_nodes + node;
        if window >= self.manifest.n_windows || node >= self.manifest.n_nodes {
            return Err(Error::Range(format!("no window record ({window}, {node})")));
        }
        Ok(&self.windows.f64s("labels")?[rec * m..(rec + 1) * m])
    }
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: DatasetManifest = read_json(&dir.join(MANIFEST_FILE))?;
    if manifest.kind != "dataset" || manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::format(dir.join(MANIFEST_FILE), "not a dataset manifest of this version"));
    }
    manifest.config.validate()?;
    let f = manifest.format;
    let path = parse_rates(&read_table(dir, entry(&manifest.tables, "rates", dir)?, f)?)?;
    let contracts = parse_contracts(&read_table(dir, entry(&manifest.tables, "contracts", dir)?, f)?)?;
    let book = parse_bonds(&read_table(dir, entry(&manifest.tables, "bonds", dir)?, f)?)?;
    let windows = read_table(dir, entry(&manifest.tables, "windows", dir)?, f)?;
    let n = manifest.n_nodes;
    let m = manifest.m;
    if path.n_days() + 1 != manifest.grid_days || windows.n_records != manifest.n_windows * n {
        return Err(Error::Data("table sizes disagree with the manifest".into()));
    }
    let plan = manifest.plan();
    let ids = windows.u64s("window_id")?;
    let nodes = windows.u64s("node")?;
    let segs = windows.u64s("segment")?;
    let ends = windows.u64s("end_day")?;
    for (w, r) in plan.windows().zip((0..windows.n_records).step_by(n.max(1))) {
        for v in 0..n {
            let rec = r + v;
            if ids[rec] != w.id as u64
                || nodes[rec] != v as u64
                || Segment::from_code(segs[rec])? != w.segment
                || ends[rec] != w.end_day as u64
            {
                return Err(Error::Data(format!("window record {rec} does not match the window plan")));
            }
        }
    }
    let mut labels = vec![vec![0.0; n]; path.n_days() + 1];
    let label_days = windows.u64s("label_days")?;
    let values = windows.f64s("labels")?;
    for rec in 0..windows.n_records {
        for s in 0..m {
            labels[label_days[rec * m + s] as usize][nodes[rec] as usize] = values[rec * m + s];
        }
    }
    let simulation = Simulation {
        config: manifest.config.clone(),
        path,
        contracts,
        book,
        labels,
    };
    Ok(Dataset {
        manifest,
        simulation,
        windows,
    })
}
