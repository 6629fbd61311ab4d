//! Monte Carlo zero-coupon bond prices over the daily compounding product
//! `p(t, T) = E[prod_{t_i in (t, T]} (1 + r(t_i) dt)^{-1} | r(t)]`.
//!
//! A [`BondCurve`] prices every horizon `1..=H` for one valuation day from a
//! single set of paths (common random numbers across maturities). Path `n` of
//! day `d` always draws from stream `(seed, bonds, d, n)`, so an entry does not
//! depend on the curve length, the block partition or the thread count.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{CirParams, RatePath, DT};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::streams::{stream_rng, Stream};

/// Contract tenor in grid days (one year).
pub const TENOR_DAYS: usize = 365;

const BLOCK_PATHS: usize = 64;

/// A Monte Carlo price with its sample standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BondEstimate {
    pub price: f64,
    pub std_error: f64,
}

impl BondEstimate {
    pub const UNIT: BondEstimate = BondEstimate {
        price: 1.0,
        std_error: 0.0,
    };
}

/// Prices `p(t, t + h)` for `h = 0..=max_horizon` at one valuation day.
#[derive(Debug, Clone, PartialEq)]
pub struct BondCurve {
    pub day: usize,
    pub rate: f64,
    pub n_paths: usize,
    prices: Vec<f64>,
    std_errors: Vec<f64>,
}

impl BondCurve {
    pub fn max_horizon(&self) -> usize {
        self.prices.len() - 1
    }

    pub fn at(&self, horizon: usize) -> Option<BondEstimate> {
        Some(BondEstimate {
            price: *self.prices.get(horizon)?,
            std_error: self.std_errors[horizon],
        })
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }
}

/// Monte Carlo bond pricer with a deterministic seed schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BondPricer {
    pub params: CirParams,
    pub n_paths: usize,
    pub seed: u64,
    pub exec: Execution,
}

struct BlockSums {
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl BondPricer {
    pub fn new(params: CirParams, n_paths: usize, seed: u64) -> Result<Self> {
        params.validate()?;
        if n_paths == 0 {
            return Err(Error::param("n_paths", "need at least one path"));
        }
        Ok(BondPricer {
            params,
            n_paths,
            seed,
            exec: Execution::default(),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    /// Curve at valuation `day` given `r(day) = rate`, out to `max_horizon` days.
    pub fn curve(&self, day: usize, rate: f64, max_horizon: usize) -> Result<BondCurve> {
        self.curve_with(day, rate, max_horizon, self.exec)
    }

    fn curve_with(&self, day: usize, rate: f64, max_horizon: usize, exec: Execution) -> Result<BondCurve> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::Domain(format!("bond pricing needs r > 0, got {rate}")));
        }
        let h = max_horizon;
        // Shifts keep the second-moment accumulation well conditioned.
        let shift: Vec<f64> = (0..=h).map(|j| (1.0 + rate * DT).powi(-(j as i32))).collect();
        let tr = self.params.transition(DT);
        let n_blocks = self.n_paths.div_ceil(BLOCK_PATHS);
        let blocks: Vec<Result<BlockSums>> = exec.map(n_blocks, |b| {
            let mut sums = BlockSums {
                s1: vec![0.0; h + 1],
                s2: vec![0.0; h + 1],
            };
            let end = ((b + 1) * BLOCK_PATHS).min(self.n_paths);
            for path in b * BLOCK_PATHS..end {
                let mut rng = stream_rng(self.seed, Stream::Bonds, &[day as u64, path as u64]);
                let mut r = rate;
                let mut disc = 1.0;
                for j in 1..=h {
                    r = tr.sample(r, &mut rng)?;
                    disc /= 1.0 + r * DT;
                    let x = disc - shift[j];
                    sums.s1[j] += x;
                    sums.s2[j] += x * x;
                }
            }
            Ok(sums)
        });
        let mut s1 = vec![0.0; h + 1];
        let mut s2 = vec![0.0; h + 1];
        for block in blocks {
            let block = block?;
            for j in 0..=h {
                s1[j] += block.s1[j];
                s2[j] += block.s2[j];
            }
        }
        let n = self.n_paths as f64;
        let mut prices = Vec::with_capacity(h + 1);
        let mut std_errors = Vec::with_capacity(h + 1);
        prices.push(1.0);
        std_errors.push(0.0);
        for j in 1..=h {
            let mean = shift[j] + s1[j] / n;
            let se = if self.n_paths > 1 {
                let var = ((s2[j] - s1[j] * s1[j] / n) / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            if !mean.is_finite() {
                return Err(Error::Numerical(format!("bond price on day {day} horizon {j}: {mean}")));
            }
            prices.push(mean);
            std_errors.push(se);
        }
        Ok(BondCurve {
            day,
            rate,
            n_paths: self.n_paths,
            prices,
            std_errors,
        })
    }

    /// Single price `p(t, T)` given `r(t)`; `T == t` gives exactly 1.
    pub fn price(&self, t: usize, maturity: usize, rate: f64) -> Result<BondEstimate> {
        if maturity < t {
            return Err(Error::Domain(format!("maturity {maturity} precedes valuation day {t}")));
        }
        if maturity == t {
            return Ok(BondEstimate::UNIT);
        }
        let curve = self.curve(t, rate, maturity - t)?;
        Ok(curve.at(maturity - t).expect("curve covers requested horizon"))
    }
}

/// Monte Carlo estimate of `p(t, T)` from fresh exact CIR sub-paths started at
/// `r(t) = rate`, using the bond stream of `seed`.
pub fn bond_price(
    params: &CirParams,
    rate: f64,
    t: usize,
    maturity: usize,
    n_paths: usize,
    seed: u64,
) -> Result<BondEstimate> {
    BondPricer::new(*params, n_paths, seed)?.price(t, maturity, rate)
}

/// Simple spot rate `R(t, T) = (1/p - 1) / tau` for a year fraction `tau`.
pub fn spot_rate(price: f64, tau: f64) -> Result<f64> {
    if !(price > 0.0 && price.is_finite()) {
        return Err(Error::Domain(format!("bond price must be > 0, got {price}")));
    }
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("spot rate needs T > t, got tau={tau}")));
    }
    Ok((1.0 / price - 1.0) / tau)
}

/// Sparse cache of bond estimates keyed by `(valuation day, maturity day)`.
///
/// Fair rates and valuations read the same entries, so a contract's inception
/// value and later revaluations never mix independent Monte Carlo noise.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BondBook {
    entries: BTreeMap<(usize, usize), BondEstimate>,
}

impl BondBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, day: usize, maturity: usize, est: BondEstimate) {
        self.entries.insert((day, maturity), est);
    }

    pub fn contains(&self, day: usize, maturity: usize) -> bool {
        maturity == day || self.entries.contains_key(&(day, maturity))
    }

    pub fn get(&self, day: usize, maturity: usize) -> Result<BondEstimate> {
        if maturity < day {
            return Err(Error::Domain(format!("maturity {maturity} precedes valuation day {day}")));
        }
        if maturity == day {
            return Ok(BondEstimate::UNIT);
        }
        self.entries
            .get(&(day, maturity))
            .copied()
            .ok_or_else(|| Error::Data(format!("no cached bond price for day {day}, maturity {maturity}")))
    }

    pub fn price(&self, day: usize, maturity: usize) -> Result<f64> {
        Ok(self.get(day, maturity)?.price)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), BondEstimate)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    /// Prices every missing `(day, maturity)` request, one curve per day.
    ///
    /// Days are processed in parallel, in chunks to bound memory.
    pub fn populate(
        &mut self,
        pricer: &BondPricer,
        path: &RatePath,
        requests: &BTreeMap<usize, BTreeSet<usize>>,
    ) -> Result<()> {
        let mut todo: Vec<(usize, Vec<usize>)> = Vec::new();
        for (&day, maturities) in requests {
            let missing: Vec<usize> = maturities
                .iter()
                .copied()
                .filter(|&m| m > day && !self.entries.contains_key(&(day, m)))
                .collect();
            if !missing.is_empty() {
                if day > path.n_days() {
                    return Err(Error::Range(format!(
                        "bond request on day {day} beyond the {}-day path",
                        path.n_days()
                    )));
                }
                todo.push((day, missing));
            }
        }
        for chunk in todo.chunks(256) {
            let results = pricer.exec.map_slice(chunk, |(day, maturities)| {
                let horizon = maturities.iter().max().unwrap() - day;
                let curve = pricer.curve_with(*day, path.rate(*day), horizon, Execution::Sequential)?;
                Ok::<_, Error>(
                    maturities
                        .iter()
                        .map(|&m| (m, curve.at(m - day).unwrap()))
                        .collect::<Vec<_>>(),
                )
            });
            for ((day, _), res) in chunk.iter().zip(results) {
                for (m, est) in res? {
                    self.entries.insert((*day, m), est);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_rate_identities() {
        assert_eq!(spot_rate(1.0, 1.0).unwrap(), 0.0);
        let k = 0.037;
        let tau = 0.5;
        let p = 1.0 / (1.0 + k * tau);
        assert!((spot_rate(p, tau).unwrap() - k).abs() < 1e-15);
        assert!((spot_rate(0.96, 1.0).unwrap() - 0.041_666_666_666_666_7).abs() < 1e-12);
        assert!(spot_rate(0.0, 1.0).is_err());
        assert!(spot_rate(-0.5, 1.0).is_err());
        assert!(spot_rate(0.9, 0.0).is_err());
    }

    #[test]
    fn degenerate_and_invalid_maturities() {
        let p = CirParams::default();
        assert_eq!(bond_price(&p, 0.04, 10, 10, 5, 1).unwrap(), BondEstimate::UNIT);
        assert!(matches!(bond_price(&p, 0.04, 10, 9, 5, 1), Err(Error::Domain(_))));
        assert!(bond_price(&p, 0.04, 0, 9, 0, 1).is_err());
    }

    #[test]
    fn one_step_with_vanishing_noise() {
        let p = CirParams::new(0.6, 0.04, 1e-7, 0.05).unwrap();
        let est = bond_price(&p, 0.05, 0, 1, 16, 4).unwrap();
        let next = p.deterministic_rate(0.05, DT);
        assert!((est.price - 1.0 / (1.0 + next * DT)).abs() < 1e-12);
    }

    #[test]
    fn prices_in_unit_interval_and_decreasing() {
        let pricer = BondPricer::new(CirParams::default(), 200, 8).unwrap();
        let curve = pricer.curve(3, 0.04, 365).unwrap();
        assert_eq!(curve.at(0).unwrap().price, 1.0);
        for h in 1..=365 {
            let p = curve.at(h).unwrap().price;
            assert!(p > 0.0 && p < 1.0);
            assert!(p < curve.at(h - 1).unwrap().price);
        }
    }

    #[test]
    fn entries_independent_of_curve_length_and_execution() {
        let base = BondPricer::new(CirParams::default(), 150, 21).unwrap();
        let long = base.with_execution(Execution::Parallel).curve(40, 0.05, 300).unwrap();
        let short = base.with_execution(Execution::Sequential).curve(40, 0.05, 120).unwrap();
        assert_eq!(&long.prices()[..=120], short.prices());
        assert_eq!(long.at(120), short.at(120));
    }

    #[test]
    fn book_population_matches_direct_pricing() {
        let path = RatePath::from_rates(vec![0.04, 0.041, 0.039, 0.045, 0.05]).unwrap();
        let pricer = BondPricer::new(CirParams::default(), 40, 99).unwrap();
        let mut requests = BTreeMap::new();
        requests.insert(2, BTreeSet::from([30, 367]));
        requests.insert(4, BTreeSet::from([4, 10]));
        let mut book = BondBook::new();
        book.populate(&pricer, &path, &requests).unwrap();
        assert_eq!(book.len(), 3);
        assert_eq!(book.get(2, 367).unwrap(), pricer.price(2, 367, path.rate(2)).unwrap());
        assert_eq!(book.get(4, 10).unwrap(), pricer.price(4, 10, path.rate(4)).unwrap());
        assert_eq!(book.get(4, 4).unwrap(), BondEstimate::UNIT);
        assert!(matches!(book.get(3, 10), Err(Error::Data(_))));
    }
}
