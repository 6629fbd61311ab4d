//! Pairwise Cox process of contract arrivals.
//!
//! Intensity `lambda = gamma * exp(eta + (theta_int + beta g) r)` is held
//! constant over each day `(t_{i-1}, t_i]` at `r(t_i)`. Event times are first
//! passages of the compensator past partial sums of unit exponentials.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::{BondBook, RatePath, DT, TENOR_DAYS};
use crate::streams::{stream_rng, Stream};
use crate::swaps::fair_rate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntensityParams {
    pub gamma: f64,
    pub eta: f64,
    pub theta_int: f64,
    pub beta: f64,
}

impl Default for IntensityParams {
    fn default() -> Self {
        IntensityParams {
            gamma: 3.0,
            eta: -4.0,
            theta_int: 20.0,
            beta: 5.0,
        }
    }
}

impl IntensityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::param("gamma", format!("must be > 0, got {}", self.gamma)));
        }
        for (name, v) in [("eta", self.eta), ("theta_int", self.theta_int), ("beta", self.beta)] {
            if !v.is_finite() {
                return Err(Error::param(name, format!("must be finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Pair feature `g = (-x_i x_j + |x_i - x_j| + x_i + x_j) / 3` for `x in {+1, -1}`.
pub fn pair_feature(x_i: f64, x_j: f64) -> Result<f64> {
    for x in [x_i, x_j] {
        if x != 1.0 && x != -1.0 {
            return Err(Error::Domain(format!("node feature must be +1 or -1, got {x}")));
        }
    }
    Ok((-x_i * x_j + (x_i - x_j).abs() + x_i + x_j) / 3.0)
}

/// Arrival intensity in events per year.
pub fn intensity(params: &IntensityParams, r: f64, g: f64) -> f64 {
    params.gamma * (params.eta + (params.theta_int + params.beta * g) * r).exp()
}

/// One continuous arrival and its grid projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    /// First grid day at or after the continuous time.
    pub day: usize,
    /// Continuous arrival time in years.
    pub time: f64,
    /// Exponential partial sum the compensator crossed.
    pub level: f64,
}

/// Compensator `int_0^{t_day} lambda ds` on the grid, one entry per day.
pub fn compensator(params: &IntensityParams, path: &RatePath, g: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(path.n_days() + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for d in 1..=path.n_days() {
        acc += intensity(params, path.rate(d), g) * DT;
        out.push(acc);
    }
    out
}

/// Arrivals on days `from + 1..=to`, drawing exponentials from `rng`.
///
/// The exponential that would cross after `t_to` is drawn and discarded.
pub fn simulate_arrivals_with<R: Rng + ?Sized>(
    params: &IntensityParams,
    path: &RatePath,
    g: f64,
    from: usize,
    to: usize,
    rng: &mut R,
) -> Result<Vec<Arrival>> {
    params.validate()?;
    if to > path.n_days() {
        return Err(Error::Range(format!(
            "arrival horizon day {to} beyond the {}-day path",
            path.n_days()
        )));
    }
    let mut events = Vec::new();
    let mut level: f64 = Exp1.sample(rng);
    let mut comp = 0.0;
    for day in from + 1..=to {
        let lambda = intensity(params, path.rate(day), g);
        let next = comp + lambda * DT;
        while level <= next {
            let time = (day - 1) as f64 * DT + (level - comp) / lambda;
            events.push(Arrival { day, time, level });
            let e: f64 = Exp1.sample(rng);
            level += e;
        }
        comp = next;
    }
    Ok(events)
}

/// Arrivals over the whole path from the `arrivals` stream of `seed`.
pub fn simulate_arrivals(params: &IntensityParams, path: &RatePath, g: f64, seed: u64) -> Result<Vec<Arrival>> {
    let mut rng = stream_rng(seed, Stream::Arrivals, &[]);
    simulate_arrivals_with(params, path, g, 0, path.n_days(), &mut rng)
}

/// How the fixed-receiver side of a new contract is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaRule {
    /// Fair coin for the hub (or the lower-index node in same-class pairs).
    #[default]
    Coin,
    /// In hub-private pairs the hub always receives fixed.
    HubReceives,
    /// In hub-private pairs the hub always pays fixed.
    HubPays,
}

impl std::str::FromStr for DeltaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coin" => Ok(DeltaRule::Coin),
            "hub_receives" | "hub-receives" => Ok(DeltaRule::HubReceives),
            "hub_pays" | "hub-pays" => Ok(DeltaRule::HubPays),
            other => Err(Error::param("delta_rule", format!("unknown rule {other:?}"))),
        }
    }
}

impl DeltaRule {
    /// `delta_i` for the pair `(i, j)`; always consumes one draw.
    pub fn draw<R: Rng + ?Sized>(self, x_i: f64, x_j: f64, rng: &mut R) -> i8 {
        let coin = if rng.random_bool(0.5) { 1 } else { -1 };
        let hub_sign = match self {
            DeltaRule::Coin => return coin,
            DeltaRule::HubReceives => 1,
            DeltaRule::HubPays => -1,
        };
        match (x_i > 0.0, x_j > 0.0) {
            (true, false) => hub_sign,
            (false, true) => -hub_sign,
            _ => coin,
        }
    }
}

/// Marks of a new contract.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marks {
    pub principal: f64,
    pub maturity: usize,
    pub fair_rate: f64,
    pub delta_i: i8,
}

/// Unit principal, one-year tenor, fair rate from the cached bond price.
pub fn draw_marks<R: Rng + ?Sized>(
    day: usize,
    book: &BondBook,
    rule: DeltaRule,
    x_i: f64,
    x_j: f64,
    rng: &mut R,
) -> Result<Marks> {
    let maturity = day + TENOR_DAYS;
    let k = fair_rate(day, maturity, book.price(day, maturity)?)?;
    Ok(Marks {
        principal: 1.0,
        maturity,
        fair_rate: k,
        delta_i: rule.draw(x_i, x_j, rng),
    })
}
