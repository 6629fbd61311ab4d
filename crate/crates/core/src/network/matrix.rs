//! Per-node contract matrices: rows are days, each active contract holds one
//! 6-feature column block `[(T-t)/365, p(t0,T), p(t,T), B(t0), B(t), delta]`.

use super::Simulation;
use crate::error::{Error, Result};
use crate::rates::year_fraction;

pub const FEATURES_PER_CONTRACT: usize = 6;

/// Column block of every contract, per node.
///
/// Blocks come from greedy earliest-start colouring of the closed intervals
/// `[start, maturity]`, which uses exactly as many blocks as the largest number
/// of simultaneously active contracts at any node. A block is reused only after
/// its previous contract has matured.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockAssignment {
    /// `per_node[node]` lists `(contract id, block)` in id order.
    pub per_node: Vec<Vec<(usize, usize)>>,
    pub n_blocks: usize,
}

impl BlockAssignment {
    pub fn new(sim: &Simulation) -> Self {
        let n = sim.n_nodes();
        let mut per_node = vec![Vec::new(); n];
        let mut n_blocks = 0;
        for (node, slots) in per_node.iter_mut().enumerate() {
            let mut block_end: Vec<usize> = Vec::new();
            // Contracts are already ordered by start.
            for c in sim.contracts.iter().filter(|c| c.involves(node)) {
                let b = match block_end.iter().position(|&end| end < c.start) {
                    Some(b) => b,
                    None => {
                        block_end.push(0);
                        block_end.len() - 1
                    }
                };
                block_end[b] = c.maturity;
                slots.push((c.id, b));
            }
            n_blocks = n_blocks.max(block_end.len());
        }
        BlockAssignment { per_node, n_blocks }
    }

    /// Matrix width `W`.
    pub fn width(&self) -> usize {
        self.n_blocks * FEATURES_PER_CONTRACT
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractMatrix {
    pub node: usize,
    pub row_days: Vec<usize>,
    pub width: usize,
    /// Row-major `row_days.len() x width`.
    pub data: Vec<f64>,
    /// Row-major `row_days.len() x blocks`; contract id or -1 for padding.
    pub block_contract: Vec<i64>,
}

impl ContractMatrix {
    pub fn n_blocks(&self) -> usize {
        self.width / FEATURES_PER_CONTRACT
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.width..(r + 1) * self.width]
    }

    pub fn block(&self, r: usize, b: usize) -> &[f64] {
        let off = r * self.width + b * FEATURES_PER_CONTRACT;
        &self.data[off..off + FEATURES_PER_CONTRACT]
    }

    pub fn contract_at(&self, r: usize, b: usize) -> Option<usize> {
        let id = self.block_contract[r * self.n_blocks() + b];
        (id >= 0).then_some(id as usize)
    }
}

/// Matrix for `node` over the `k` days ending at `end_day`.
pub fn build_contract_matrix(
    sim: &Simulation,
    blocks: &BlockAssignment,
    node: usize,
    end_day: usize,
    k: usize,
) -> Result<ContractMatrix> {
    if k == 0 || end_day + 1 < k || end_day > sim.n_days() {
        return Err(Error::Range(format!(
            "window of {k} days ending on day {end_day} outside the {}-day horizon",
            sim.n_days()
        )));
    }
    if node >= sim.n_nodes() {
        return Err(Error::Range(format!("node {node} out of range")));
    }
    let first = end_day + 1 - k;
    let width = blocks.width();
    let nb = blocks.n_blocks;
    let mut data = vec![0.0; k * width];
    let mut block_contract = vec![-1i64; k * nb];
    for &(id, b) in &blocks.per_node[node] {
        let c = &sim.contracts[id];
        if c.start > end_day || c.maturity < first {
            continue;
        }
        let delta = c.delta_for(node).expect("assignment lists incident contracts");
        let p0 = sim.book.price(c.start, c.maturity)?;
        for r in 0..k {
            let t = first + r;
            if !c.is_active(t) {
                continue;
            }
            let off = r * width + b * FEATURES_PER_CONTRACT;
            data[off] = year_fraction(c.maturity - t);
            data[off + 1] = p0;
            data[off + 2] = sim.book.price(t, c.maturity)?;
            data[off + 3] = sim.path.accumulator(c.start);
            data[off + 4] = sim.path.accumulator(t);
            data[off + 5] = delta;
            block_contract[r * nb + b] = id as i64;
        }
    }
    Ok(ContractMatrix {
        node,
        row_days: (first..=end_day).collect(),
        width,
        data,
        block_contract,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Execution;
    use crate::network::{simulate_network, tests::small_config};

    #[test]
    fn width_is_max_simultaneous_active_contracts() {
        let sim = simulate_network(&small_config(5), Execution::default()).unwrap();
        let blocks = BlockAssignment::new(&sim);
        let mut brute = 0;
        for node in 0..sim.n_nodes() {
            for day in 0..=sim.n_days() {
                let active = sim.contracts.iter().filter(|c| c.involves(node) && c.is_active(day)).count();
                brute = brute.max(active);
            }
        }
        assert!(brute > 1);
        assert_eq!(blocks.n_blocks, brute);
        // No two overlapping contracts share a block.
        for slots in &blocks.per_node {
            for (a, &(ia, ba)) in slots.iter().enumerate() {
                for &(ib, bb) in &slots[a + 1..] {
                    let (ca, cb) = (&sim.contracts[ia], &sim.contracts[ib]);
                    if ba == bb {
                        assert!(ca.maturity < cb.start || cb.maturity < ca.start);
                    }
                }
            }
        }
    }

    #[test]
    fn blocks_hold_contract_features() {
        let sim = simulate_network(&small_config(5), Execution::default()).unwrap();
        let blocks = BlockAssignment::new(&sim);
        let k = 30;
        for node in 0..sim.n_nodes() {
            for end in [k - 1, 200, sim.n_days()] {
                let m = build_contract_matrix(&sim, &blocks, node, end, k).unwrap();
                for r in 0..k {
                    let t = m.row_days[r];
                    for b in 0..m.n_blocks() {
                        let blk = m.block(r, b);
                        match m.contract_at(r, b) {
                            None => assert!(blk.iter().all(|&x| x == 0.0)),
                            Some(id) => {
                                let c = &sim.contracts[id];
                                assert!(c.is_active(t));
                                assert_eq!(blk[0], (c.maturity - t) as f64 / 365.0);
                                assert_eq!(blk[2], sim.book.price(t, c.maturity).unwrap());
                                assert_eq!(blk[5], c.delta_for(node).unwrap());
                                if r > 0 && m.contract_at(r - 1, b) == Some(id) {
                                    let prev = m.block(r - 1, b);
                                    assert!((prev[0] - blk[0] - 1.0 / 365.0).abs() < 1e-12);
                                    assert_eq!(prev[5], blk[5]);
                                    assert_eq!(prev[1], blk[1]);
                                }
                            }
                        }
                    }
                    let active = sim.contracts.iter().filter(|c| c.involves(node) && c.is_active(t)).count();
                    let used = (0..m.n_blocks()).filter(|&b| m.contract_at(r, b).is_some()).count();
                    assert_eq!(active, used);
                }
            }
        }
    }

    #[test]
    fn single_contract_single_block() {
        let mut sim = simulate_network(&small_config(5), Execution::default()).unwrap();
        let keep = sim.contracts[0];
        sim.contracts.truncate(1);
        let blocks = BlockAssignment::new(&sim);
        let m = build_contract_matrix(&sim, &blocks, keep.i, keep.start + 3, 4).unwrap();
        assert_eq!(m.width, FEATURES_PER_CONTRACT);
        for r in 0..4 {
            assert!(m.row(r).iter().all(|&x| x != 0.0));
        }
        let other = (0..sim.n_nodes()).find(|&n| !keep.involves(n)).unwrap();
        let empty = build_contract_matrix(&sim, &blocks, other, keep.start + 3, 4).unwrap();
        assert!(empty.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn out_of_range_windows_rejected() {
        let sim = simulate_network(&small_config(5), Execution::default()).unwrap();
        let blocks = BlockAssignment::new(&sim);
        assert!(matches!(build_contract_matrix(&sim, &blocks, 0, 3, 5), Err(Error::Range(_))));
        assert!(matches!(build_contract_matrix(&sim, &blocks, 0, sim.n_days() + 1, 5), Err(Error::Range(_))));
    }
}
