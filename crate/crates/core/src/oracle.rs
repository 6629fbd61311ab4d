//! Monte Carlo best predictor of the discounted net margin `m` steps ahead.
//!
//! Given the realised rate path through `l + m` and the contracts known on day
//! `l`, the estimate splits into a deterministic part from existing contracts
//! and the expected contribution of contracts arriving on days
//! `l+1..=l+m-1`, obtained by resimulating the Cox process on realised rates.
//! One pass produces every step `1..=m` from the same arrival draws.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::arrivals::{simulate_arrivals_with, DeltaRule, IntensityParams};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::network::Simulation;
use crate::rates::TENOR_DAYS;
use crate::streams::{derive_seed, stream_rng, Stream};
use crate::swaps::{fair_rate, OisContract};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub n_sims: usize,
    pub seed: u64,
    pub intensity: IntensityParams,
    pub delta_rule: DeltaRule,
    /// Restricts contracts and arrivals to these pairs; `None` keeps all.
    pub pairs: Option<BTreeSet<(usize, usize)>>,
    pub exec: Execution,
}

impl OracleConfig {
    /// Arrival model taken from the simulation that produced the data.
    pub fn for_simulation(sim: &Simulation, n_sims: usize, seed: u64) -> Self {
        OracleConfig {
            n_sims,
            seed,
            intensity: sim.config.intensity,
            delta_rule: sim.config.delta_rule,
            pairs: None,
            exec: Execution::default(),
        }
    }

    fn in_scope(&self, i: usize, j: usize) -> bool {
        self.pairs.as_ref().is_none_or(|p| p.contains(&(i, j)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub node: usize,
    pub base_day: usize,
    pub m: usize,
    pub value: f64,
    pub fixed_component: f64,
    pub arrivals_component: f64,
    pub n_sims: usize,
    pub std_error: f64,
}

fn check_horizon(sim: &Simulation, base_day: usize, m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::param("m", "steps ahead must be at least 1"));
    }
    if base_day + m > sim.n_days() {
        return Err(Error::Data(format!(
            "rate path ends on day {} before day {}",
            sim.n_days(),
            base_day + m
        )));
    }
    Ok(())
}

/// Bond entries the oracle reads for base day `l` and horizon `m`.
pub fn oracle_bond_requests(sim: &Simulation, base_day: usize, m: usize) -> BTreeMap<usize, BTreeSet<usize>> {
    let l = base_day;
    let mut req: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for c in sim.contracts.iter().filter(|c| c.start <= l && c.maturity > l) {
        for d in l.max(c.start + 1)..=(l + m).min(c.maturity - 1) {
            req.entry(d).or_default().insert(c.maturity);
        }
    }
    for u in l + 1..l + m {
        let t = u + TENOR_DAYS;
        for d in u..=l + m {
            req.entry(d).or_default().insert(t);
        }
    }
    req
}

/// Adds every bond entry the oracle needs at `base_days` to the simulation book.
pub fn prepare_book(sim: &mut Simulation, base_days: &[usize], m: usize, exec: Execution) -> Result<()> {
    let mut req: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &l in base_days {
        check_horizon(sim, l, m)?;
        for (d, ts) in oracle_bond_requests(sim, l, m) {
            req.entry(d).or_default().extend(ts);
        }
    }
    let pricer = sim.config.pricer(exec)?;
    sim.book.populate(&pricer, &sim.path, &req)
}

/// `D(l, l+s) M(l+s)` from the stored labels.
pub fn discounted_label(sim: &Simulation, node: usize, base_day: usize, s: usize) -> Result<f64> {
    check_horizon(sim, base_day, s)?;
    Ok(sim.path.discount(base_day, base_day + s) * sim.label(base_day + s, node)?)
}

/// Discounted margin on day `l+s` of contracts known on day `l`.
pub fn fixed_component(sim: &Simulation, cfg: &OracleConfig, node: usize, base_day: usize, s: usize) -> Result<f64> {
    check_horizon(sim, base_day, s)?;
    let day = base_day + s;
    let mut total = 0.0;
    for c in sim.contracts.iter().filter(|c| c.start <= base_day && c.is_live(day)) {
        if !cfg.in_scope(c.i, c.j) {
            continue;
        }
        if let Some(delta) = c.delta_for(node) {
            total += delta * c.margin(day, &sim.path, &sim.book)?;
        }
    }
    Ok(sim.path.discount(base_day, day) * total)
}

/// Per-node estimates for every step: `out[s-1][node]`.
pub fn best_predictor_profile(
    sim: &Simulation,
    cfg: &OracleConfig,
    base_day: usize,
    m: usize,
) -> Result<Vec<Vec<OracleEstimate>>> {
    check_horizon(sim, base_day, m)?;
    if cfg.n_sims == 0 {
        return Err(Error::param("n_sims", "need at least one simulation"));
    }
    cfg.intensity.validate()?;
    let l = base_day;
    let n = sim.n_nodes();
    let nodes = &sim.config.nodes;

    // Unit-sign margin on day l+s of a contract started on day u = l+1+a.
    let mut unit = vec![vec![0.0; m]; m.saturating_sub(1)];
    for (a, row) in unit.iter_mut().enumerate() {
        let u = l + 1 + a;
        let t = u + TENOR_DAYS;
        let c = OisContract {
            id: 0,
            i: 0,
            j: 1,
            start: u,
            maturity: t,
            principal: 1.0,
            fair_rate: fair_rate(u, t, sim.book.price(u, t)?)?,
            delta_i: 1,
        };
        for (s, x) in row.iter_mut().enumerate() {
            *x = c.margin(l + s + 1, &sim.path, &sim.book)?;
        }
    }

    let pairs: Vec<(usize, usize)> = nodes.pairs().into_iter().filter(|&(i, j)| cfg.in_scope(i, j)).collect();
    let per_sim = cfg.exec.map(cfg.n_sims, |k| -> Result<Vec<f64>> {
        let mut acc = vec![0.0; m * n];
        if m < 2 {
            return Ok(acc);
        }
        for &(i, j) in &pairs {
            let mut rng = stream_rng(cfg.seed, Stream::Oracle, &[l as u64, k as u64, i as u64, j as u64]);
            let g = nodes.pair_feature(i, j);
            let events = simulate_arrivals_with(&cfg.intensity, &sim.path, g, l, l + m - 1, &mut rng)?;
            for ev in events {
                let delta = cfg.delta_rule.draw(nodes.feature(i), nodes.feature(j), &mut rng) as f64;
                let row = &unit[ev.day - l - 1];
                for s in 0..m {
                    acc[s * n + i] += delta * row[s];
                    acc[s * n + j] -= delta * row[s];
                }
            }
        }
        Ok(acc)
    });
    let mut sum = vec![0.0; m * n];
    let mut sum_sq = vec![0.0; m * n];
    for acc in per_sim {
        for (idx, x) in acc?.into_iter().enumerate() {
            sum[idx] += x;
            sum_sq[idx] += x * x;
        }
    }

    let ns = cfg.n_sims as f64;
    let mut out = Vec::with_capacity(m);
    for s in 1..=m {
        let disc = sim.path.discount(l, l + s);
        let mut row = Vec::with_capacity(n);
        for node in 0..n {
            let idx = (s - 1) * n + node;
            let mean = sum[idx] / ns;
            let sd = if cfg.n_sims > 1 {
                ((sum_sq[idx] - sum[idx] * mean) / (ns - 1.0)).max(0.0).sqrt()
            } else {
                0.0
            };
            let fixed = fixed_component(sim, cfg, node, l, s)?;
            let arrivals = disc * mean;
            row.push(OracleEstimate {
                node,
                base_day: l,
                m: s,
                value: fixed + arrivals,
                fixed_component: fixed,
                arrivals_component: arrivals,
                n_sims: cfg.n_sims,
                std_error: disc * sd / ns.sqrt(),
            });
        }
        out.push(row);
    }
    Ok(out)
}

pub fn best_predictor(
    sim: &Simulation,
    cfg: &OracleConfig,
    node: usize,
    base_day: usize,
    m: usize,
) -> Result<OracleEstimate> {
    if node >= sim.n_nodes() {
        return Err(Error::Range(format!("node {node} out of range")));
    }
    let profile = best_predictor_profile(sim, cfg, base_day, m)?;
    Ok(profile[m - 1][node])
}

/// `(value, std_error)` of the arrivals part alone.
pub fn arrivals_component(
    sim: &Simulation,
    cfg: &OracleConfig,
    node: usize,
    base_day: usize,
    m: usize,
) -> Result<(f64, f64)> {
    let e = best_predictor(sim, cfg, node, base_day, m)?;
    Ok((e.arrivals_component, e.std_error))
}

/// Spread of repeated oracle runs for one `(m, n_sims, base day, node)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStudyRow {
    pub m: usize,
    pub n_sims: usize,
    pub base_day: usize,
    pub node: usize,
    pub repeats: usize,
    pub mean: f64,
    /// Sample standard deviation across repeats.
    pub std: f64,
    /// `std / |mean|`; infinite when the mean is zero.
    pub rel_err: f64,
    pub fixed_component: f64,
}

/// Seed of repeat `r` derived from a master oracle seed.
pub fn repeat_seed(seed: u64, repeat: usize) -> u64 {
    derive_seed(seed, Stream::Oracle, &[u64::MAX, repeat as u64])
}

/// Dispersion across `repeats` independent runs; empty when `repeats < 2`.
///
/// The book must already hold the oracle's bond entries (see [`prepare_book`]).
pub fn error_study(
    sim: &Simulation,
    cfg: &OracleConfig,
    base_days: &[usize],
    ms: &[usize],
    n_sims: &[usize],
    repeats: usize,
) -> Result<Vec<ErrorStudyRow>> {
    if repeats < 2 || ms.is_empty() {
        return Ok(Vec::new());
    }
    let m_max = *ms.iter().max().unwrap();
    let n = sim.n_nodes();
    let mut rows = Vec::new();
    for &ns in n_sims {
        for &l in base_days {
            // values[r][(s-1) * n + node]
            let mut values = Vec::with_capacity(repeats);
            for r in 0..repeats {
                let run = OracleConfig {
                    n_sims: ns,
                    seed: repeat_seed(cfg.seed, r),
                    ..cfg.clone()
                };
                let profile = best_predictor_profile(sim, &run, l, m_max)?;
                values.push(profile.into_iter().flatten().collect::<Vec<_>>());
            }
            let first = best_predictor_profile(
                sim,
                &OracleConfig {
                    n_sims: 1,
                    ..cfg.clone()
                },
                l,
                m_max,
            )?;
            for &m in ms {
                for node in 0..n {
                    let idx = (m - 1) * n + node;
                    let xs: Vec<f64> = values.iter().map(|v| v[idx].value).collect();
                    let mean = xs.iter().sum::<f64>() / repeats as f64;
                    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (repeats - 1) as f64;
                    let std = var.sqrt();
                    rows.push(ErrorStudyRow {
                        m,
                        n_sims: ns,
                        base_day: l,
                        node,
                        repeats,
                        mean,
                        std,
                        rel_err: std / mean.abs(),
                        fixed_component: first[m - 1][node].fixed_component,
                    });
                }
            }
        }
    }
    rows.sort_by_key(|r| (r.m, r.n_sims, r.base_day, r.node));
    Ok(rows)
}
