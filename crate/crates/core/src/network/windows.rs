//! Lookback windows over snapshot days `1..=n`.
//!
//! A window ending on day `l` has rows `l-k+1..=l`, conditioning rates and
//! labels on `l+1..=l+m`. The temporal split is applied first: the train
//! segment owns days `1..=b`, validation owns `b+1..=n`, and every window lies
//! entirely inside one segment. With `s = k + m` the segments hold `b - s + 1`
//! and `n - b - s + 1` windows, and `b` is chosen so the train share of the
//! `n - 2s + 2` total is `floor(split * total)`.

use serde::{Deserialize, Serialize};

use super::matrix::{build_contract_matrix, BlockAssignment, ContractMatrix};
use super::Simulation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Train,
    Validation,
}

impl Segment {
    pub fn code(self) -> u64 {
        match self {
            Segment::Train => 0,
            Segment::Validation => 1,
        }
    }

    pub fn from_code(code: u64) -> Result<Self> {
        match code {
            0 => Ok(Segment::Train),
            1 => Ok(Segment::Validation),
            other => Err(Error::Data(format!("unknown segment code {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowRef {
    pub id: usize,
    pub segment: Segment,
    pub end_day: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub n_days: usize,
    pub k: usize,
    pub m: usize,
    pub split: Option<f64>,
    /// Last snapshot day of the train segment.
    pub train_end: usize,
    pub n_train: usize,
    pub n_validation: usize,
}

impl WindowPlan {
    pub fn len(&self) -> usize {
        self.n_train + self.n_validation
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Window ids: train first, then validation, each by end day.
    pub fn windows(&self) -> impl Iterator<Item = WindowRef> + '_ {
        let train = (0..self.n_train).map(move |i| WindowRef {
            id: i,
            segment: Segment::Train,
            end_day: self.k + i,
        });
        let val = (0..self.n_validation).map(move |i| WindowRef {
            id: self.n_train + i,
            segment: Segment::Validation,
            end_day: self.train_end + self.k + i,
        });
        train.chain(val)
    }

    pub fn get(&self, id: usize) -> Option<WindowRef> {
        if id < self.n_train {
            Some(WindowRef { id, segment: Segment::Train, end_day: self.k + id })
        } else if id < self.len() {
            Some(WindowRef {
                id,
                segment: Segment::Validation,
                end_day: self.train_end + self.k + id - self.n_train,
            })
        } else {
            None
        }
    }
}

/// Window layout for an `n_days` horizon; `split = None` keeps every window in train.
pub fn window_plan(n_days: usize, k: usize, m: usize, split: Option<f64>) -> Result<WindowPlan> {
    if k == 0 {
        return Err(Error::param("k", "lookback must be at least 1"));
    }
    if m == 0 {
        return Err(Error::param("m", "steps ahead must be at least 1"));
    }
    let s = k + m;
    match split {
        None => {
            if n_days < s {
                return Err(Error::Data(format!("{n_days} days cannot hold a window of {k} + {m} days")));
            }
            Ok(WindowPlan {
                n_days,
                k,
                m,
                split,
                train_end: n_days,
                n_train: n_days - s + 1,
                n_validation: 0,
            })
        }
        Some(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::param("split", format!("must lie in (0, 1), got {f}")));
            }
            if n_days + 2 < 2 * s + 1 {
                return Err(Error::Data(format!(
                    "{n_days} days cannot hold split windows of {k} + {m} days"
                )));
            }
            let total = n_days + 2 - 2 * s;
            let n_train = (f * total as f64).floor() as usize;
            Ok(WindowPlan {
                n_days,
                k,
                m,
                split,
                train_end: s - 1 + n_train,
                n_train,
                n_validation: total - n_train,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub id: usize,
    pub segment: Segment,
    pub end_day: usize,
    /// One matrix per node.
    pub matrices: Vec<ContractMatrix>,
    /// `r(l+1..=l+m)`.
    pub conditioning: Vec<f64>,
    pub label_days: Vec<usize>,
    /// `labels[node][step]`.
    pub labels: Vec<Vec<f64>>,
}

impl WindowRef {
    pub fn build(&self, sim: &Simulation, blocks: &BlockAssignment, k: usize, m: usize) -> Result<Window> {
        if !sim.has_labels() {
            return Err(Error::Data("simulation has no labels".into()));
        }
        let l = self.end_day;
        if l + m > sim.n_days() {
            return Err(Error::Range(format!("window ending on day {l} needs labels to day {}", l + m)));
        }
        let matrices = (0..sim.n_nodes())
            .map(|node| build_contract_matrix(sim, blocks, node, l, k))
            .collect::<Result<Vec<_>>>()?;
        let label_days: Vec<usize> = (l + 1..=l + m).collect();
        let labels = (0..sim.n_nodes())
            .map(|node| label_days.iter().map(|&d| sim.labels[d][node]).collect())
            .collect();
        Ok(Window {
            id: self.id,
            segment: self.segment,
            end_day: l,
            matrices,
            conditioning: label_days.iter().map(|&d| sim.path.rate(d)).collect(),
            label_days,
            labels,
        })
    }
}

/// Materialised (train, validation) windows.
pub fn make_windows(sim: &Simulation, k: usize, m: usize, split: f64) -> Result<(Vec<Window>, Vec<Window>)> {
    let plan = window_plan(sim.n_days(), k, m, Some(split))?;
    let blocks = BlockAssignment::new(sim);
    let mut train = Vec::with_capacity(plan.n_train);
    let mut val = Vec::with_capacity(plan.n_validation);
    for w in plan.windows() {
        let built = w.build(sim, &blocks, k, m)?;
        match w.segment {
            Segment::Train => train.push(built),
            Segment::Validation => val.push(built),
        }
    }
    Ok((train, val))
}
