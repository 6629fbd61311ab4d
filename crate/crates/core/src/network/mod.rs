//! Temporal multigraph simulation: rate path, pairwise arrivals with marks,
//! the shared bond book and daily per-node margin labels.

mod matrix;
mod windows;

pub use matrix::{build_contract_matrix, BlockAssignment, ContractMatrix, FEATURES_PER_CONTRACT};
pub use windows::{make_windows, window_plan, Segment, Window, WindowPlan, WindowRef};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::arrivals::{draw_marks, pair_feature, simulate_arrivals_with, DeltaRule, IntensityParams};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rates::{sample_cir_path, BondBook, BondPricer, CirParams, RatePath, TimeGrid, TENOR_DAYS};
use crate::streams::{stream_rng, Stream};
use crate::swaps::OisContract;

/// Nodes with fixed binary features; the first `n_hubs` are hubs (+1).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSet {
    pub n_nodes: usize,
    pub n_hubs: usize,
}

impl NodeSet {
    pub fn new(n_nodes: usize, n_hubs: usize) -> Result<Self> {
        if n_nodes < 2 {
            return Err(Error::param("n_nodes", format!("need at least 2 nodes, got {n_nodes}")));
        }
        if n_hubs > n_nodes {
            return Err(Error::param("n_hubs", format!("{n_hubs} hubs among {n_nodes} nodes")));
        }
        Ok(NodeSet { n_nodes, n_hubs })
    }

    pub fn feature(&self, node: usize) -> f64 {
        if node < self.n_hubs {
            1.0
        } else {
            -1.0
        }
    }

    pub fn features(&self) -> Vec<f64> {
        (0..self.n_nodes).map(|n| self.feature(n)).collect()
    }

    /// Unordered pairs `(i, j)`, `i < j`, in lexicographic order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_nodes;
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    }

    pub fn pair_feature(&self, i: usize, j: usize) -> f64 {
        pair_feature(self.feature(i), self.feature(j)).expect("node features are binary")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub cir: CirParams,
    pub intensity: IntensityParams,
    pub nodes: NodeSet,
    pub n_days: usize,
    pub bond_paths: usize,
    pub delta_rule: DeltaRule,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.cir.validate()?;
        self.intensity.validate()?;
        NodeSet::new(self.nodes.n_nodes, self.nodes.n_hubs)?;
        if self.n_days == 0 {
            return Err(Error::param("n_days", "horizon must cover at least one day"));
        }
        if self.bond_paths == 0 {
            return Err(Error::param("bond_paths", "need at least one path"));
        }
        Ok(())
    }

    pub fn pricer(&self, exec: Execution) -> Result<BondPricer> {
        Ok(BondPricer::new(self.cir, self.bond_paths, self.seed)?.with_execution(exec))
    }
}

/// A completed (or book-only) simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub config: SimulationConfig,
    pub path: RatePath,
    /// Upper-triangle contracts ordered by `(start, i, j)`; `id` is the index.
    pub contracts: Vec<OisContract>,
    pub book: BondBook,
    /// `labels[day][node]`, day 0 all zero; empty until computed.
    pub labels: Vec<Vec<f64>>,
}

/// Network at one grid day.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub day: usize,
    pub adjacency: Vec<Vec<u8>>,
    /// Ids of contracts with `start < day <= maturity`.
    pub live: Vec<usize>,
    pub labels: Vec<f64>,
    pub rate: f64,
}

/// Rate path, arrivals, marks and fair rates; labels are left empty.
pub fn simulate_contracts(config: &SimulationConfig, exec: Execution) -> Result<Simulation> {
    config.validate()?;
    let path = sample_cir_path(&config.cir, TimeGrid::new(config.n_days)?, config.seed)?;
    let nodes = &config.nodes;
    let pairs = nodes.pairs();
    let arrivals = exec.map_slice(&pairs, |&(i, j)| {
        let mut rng = stream_rng(config.seed, Stream::Arrivals, &[i as u64, j as u64]);
        simulate_arrivals_with(&config.intensity, &path, nodes.pair_feature(i, j), 0, config.n_days, &mut rng)
    });
    let arrivals = arrivals.into_iter().collect::<Result<Vec<_>>>()?;

    let mut requests: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for ev in arrivals.iter().flatten() {
        requests.entry(ev.day).or_default().insert(ev.day + TENOR_DAYS);
    }
    let pricer = config.pricer(exec)?;
    let mut book = BondBook::new();
    book.populate(&pricer, &path, &requests)?;

    let mut contracts = Vec::new();
    for (&(i, j), events) in pairs.iter().zip(&arrivals) {
        let mut rng = stream_rng(config.seed, Stream::Marks, &[i as u64, j as u64]);
        for ev in events {
            let marks = draw_marks(ev.day, &book, config.delta_rule, nodes.feature(i), nodes.feature(j), &mut rng)?;
            contracts.push(OisContract {
                id: 0,
                i,
                j,
                start: ev.day,
                maturity: marks.maturity,
                principal: marks.principal,
                fair_rate: marks.fair_rate,
                delta_i: marks.delta_i,
            });
        }
    }
    // Stable sort keeps per-pair event order within a day.
    contracts.sort_by_key(|c| (c.start, c.i, c.j));
    for (id, c) in contracts.iter_mut().enumerate() {
        c.id = id;
    }
    Ok(Simulation {
        config: config.clone(),
        path,
        contracts,
        book,
        labels: Vec::new(),
    })
}

/// Full simulation including daily labels.
pub fn simulate_network(config: &SimulationConfig, exec: Execution) -> Result<Simulation> {
    let mut sim = simulate_contracts(config, exec)?;
    sim.compute_labels(exec)?;
    Ok(sim)
}

impl Simulation {
    pub fn n_days(&self) -> usize {
        self.path.n_days()
    }

    pub fn n_nodes(&self) -> usize {
        self.config.nodes.n_nodes
    }

    pub fn has_labels(&self) -> bool {
        !self.labels.is_empty()
    }

    /// Bond entries needed to value every contract on every grid day.
    pub fn valuation_requests(&self) -> BTreeMap<usize, BTreeSet<usize>> {
        let n = self.n_days();
        let mut requests: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for c in &self.contracts {
            for (d, t) in c.bond_requests().take_while(|&(d, _)| d <= n) {
                requests.entry(d).or_default().insert(t);
            }
        }
        requests
    }

    /// Prices the valuation entries then fills `labels`.
    pub fn compute_labels(&mut self, exec: Execution) -> Result<()> {
        let pricer = self.config.pricer(exec)?;
        let requests = self.valuation_requests();
        self.book.populate(&pricer, &self.path, &requests)?;
        self.labels = self.recompute_labels()?;
        Ok(())
    }

    /// Labels from the stored contracts, path and book.
    pub fn recompute_labels(&self) -> Result<Vec<Vec<f64>>> {
        let n_nodes = self.n_nodes();
        let mut labels = vec![vec![0.0; n_nodes]; self.n_days() + 1];
        for (day, row) in labels.iter_mut().enumerate().skip(1) {
            for c in self.contracts.iter().filter(|c| c.is_live(day)) {
                let m = c.margin(day, &self.path, &self.book)?;
                row[c.i] += c.delta_i as f64 * m;
                row[c.j] += -(c.delta_i as f64) * m;
            }
        }
        Ok(labels)
    }

    pub fn label(&self, day: usize, node: usize) -> Result<f64> {
        self.labels
            .get(day)
            .map(|row| row[node])
            .ok_or_else(|| Error::Data(format!("no label for day {day}")))
    }

    pub fn snapshot(&self, day: usize) -> Result<Snapshot> {
        if day > self.n_days() {
            return Err(Error::Range(format!("day {day} beyond the {}-day horizon", self.n_days())));
        }
        let n = self.n_nodes();
        let mut adjacency = vec![vec![0u8; n]; n];
        let mut live = Vec::new();
        for c in self.contracts.iter().filter(|c| c.is_live(day)) {
            adjacency[c.i][c.j] = 1;
            adjacency[c.j][c.i] = 1;
            live.push(c.id);
        }
        let labels = if self.has_labels() {
            self.labels[day].clone()
        } else {
            Vec::new()
        };
        Ok(Snapshot {
            day,
            adjacency,
            live,
            labels,
            rate: self.path.rate(day),
        })
    }

    /// Contract count per pair class: (hub-hub, hub-private, private-private).
    pub fn class_counts(&self) -> (usize, usize, usize) {
        let nodes = &self.config.nodes;
        let mut counts = (0, 0, 0);
        for c in &self.contracts {
            match (nodes.feature(c.i) > 0.0, nodes.feature(c.j) > 0.0) {
                (true, true) => counts.0 += 1,
                (false, false) => counts.2 += 1,
                _ => counts.1 += 1,
            }
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_config(seed: u64) -> SimulationConfig {
        SimulationConfig {
            cir: CirParams::default(),
            intensity: IntensityParams {
                gamma: 60.0,
                ..Default::default()
            },
            nodes: NodeSet::new(4, 1).unwrap(),
            n_days: 400,
            bond_paths: 8,
            delta_rule: DeltaRule::Coin,
            seed,
        }
    }

    #[test]
    fn node_set_features_and_pairs() {
        let nodes = NodeSet::new(5, 2).unwrap();
        assert_eq!(nodes.features(), vec![1.0, 1.0, -1.0, -1.0, -1.0]);
        assert_eq!(nodes.pairs().len(), 10);
        assert_eq!(nodes.pair_feature(0, 1), 1.0 / 3.0);
        assert_eq!(nodes.pair_feature(1, 3), 1.0);
        assert_eq!(nodes.pair_feature(2, 4), -1.0);
        assert!(NodeSet::new(1, 0).is_err());
        assert!(NodeSet::new(3, 4).is_err());
    }

    #[test]
    fn empty_network_with_vanishing_intensity() {
        let mut cfg = small_config(2);
        cfg.nodes = NodeSet::new(2, 1).unwrap();
        cfg.intensity.gamma = 1e-12;
        let sim = simulate_network(&cfg, Execution::Sequential).unwrap();
        assert!(sim.contracts.is_empty());
        for day in 0..=cfg.n_days {
            let snap = sim.snapshot(day).unwrap();
            assert!(snap.adjacency.iter().flatten().all(|&a| a == 0));
            assert!(snap.labels.iter().all(|&m| m == 0.0));
        }
    }

    #[test]
    fn deterministic_and_execution_independent() {
        let cfg = small_config(11);
        let a = simulate_network(&cfg, Execution::Sequential).unwrap();
        let b = simulate_network(&cfg, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert!(!a.contracts.is_empty());
    }

    #[test]
    fn snapshots_conserve_and_match_contracts() {
        let sim = simulate_network(&small_config(5), Execution::default()).unwrap();
        assert_eq!(sim.recompute_labels().unwrap(), sim.labels);
        for day in 0..=sim.n_days() {
            let snap = sim.snapshot(day).unwrap();
            let total: f64 = snap.labels.iter().sum();
            let scale: f64 = snap.labels.iter().map(|x| x.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
            assert!(total.abs() <= 1e-12 * scale, "day {day}: {total}");
            for i in 0..sim.n_nodes() {
                assert_eq!(snap.adjacency[i][i], 0);
                for j in 0..sim.n_nodes() {
                    assert_eq!(snap.adjacency[i][j], snap.adjacency[j][i]);
                    let brute = sim
                        .contracts
                        .iter()
                        .any(|c| c.involves(i) && c.involves(j) && i != j && c.start < day && day <= c.maturity);
                    assert_eq!(snap.adjacency[i][j] == 1, brute);
                }
            }
        }
        assert!(sim.snapshot(sim.n_days() + 1).is_err());
    }

    #[test]
    fn contracts_are_well_formed() {
        let sim = simulate_contracts(&small_config(8), Execution::default()).unwrap();
        assert!(!sim.has_labels());
        for (id, c) in sim.contracts.iter().enumerate() {
            c.validate().unwrap();
            assert_eq!(c.id, id);
            assert_eq!(c.maturity - c.start, TENOR_DAYS);
            assert_eq!(c.principal, 1.0);
            let p = sim.book.price(c.start, c.maturity).unwrap();
            assert_eq!(c.fair_rate, crate::swaps::fair_rate(c.start, c.maturity, p).unwrap());
        }
        for w in sim.contracts.windows(2) {
            assert!((w[0].start, w[0].i, w[0].j) <= (w[1].start, w[1].i, w[1].j));
        }
    }
}
