//! Exact CIR short-rate simulation on a daily actual/365 grid, the risk-free
//! accumulator, and rate-derived quantities (bond prices, simple spot rates).

mod bonds;

pub use bonds::{bond_price, spot_rate, BondBook, BondCurve, BondEstimate, BondPricer, TENOR_DAYS};

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streams::{stream_rng, Stream};

/// Days per year on the grid (actual/365, no holidays).
pub const DAYS_PER_YEAR: usize = 365;

/// Year fraction of one grid step.
pub const DT: f64 = 1.0 / DAYS_PER_YEAR as f64;

/// Year fraction spanned by `days` grid steps.
pub fn year_fraction(days: usize) -> f64 {
    days as f64 / DAYS_PER_YEAR as f64
}

/// CIR dynamics `dr = kappa (theta - r) dt + sigma sqrt(r) dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CirParams {
    /// Mean-reversion speed, 1/years.
    pub kappa: f64,
    /// Long-run level of the rate.
    #[serde(rename = "theta_cir")]
    pub theta: f64,
    pub sigma: f64,
    /// Rate on day 0.
    pub r0: f64,
}

impl Default for CirParams {
    fn default() -> Self {
        CirParams {
            kappa: 0.6,
            theta: 0.04,
            sigma: 0.14,
            r0: 0.04,
        }
    }
}

impl CirParams {
    pub fn new(kappa: f64, theta: f64, sigma: f64, r0: f64) -> Result<Self> {
        let p = CirParams {
            kappa,
            theta,
            sigma,
            r0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks positivity and the Feller condition `2 kappa theta >= sigma^2`.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kappa", self.kappa),
            ("theta_cir", self.theta),
            ("sigma", self.sigma),
            ("r0", self.r0),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if 2.0 * self.kappa * self.theta < self.sigma * self.sigma {
            return Err(Error::param(
                "sigma",
                format!(
                    "Feller condition violated: 2*kappa*theta = {} < sigma^2 = {}",
                    2.0 * self.kappa * self.theta,
                    self.sigma * self.sigma
                ),
            ));
        }
        Ok(())
    }

    /// Degrees of freedom `4 theta kappa / sigma^2` of the transition law.
    pub fn degrees_of_freedom(&self) -> f64 {
        4.0 * self.theta * self.kappa / (self.sigma * self.sigma)
    }

    /// Transition law over a step of `dt` years.
    pub fn transition(&self, dt: f64) -> CirTransition {
        let decay = (-self.kappa * dt).exp();
        let scale = self.sigma * self.sigma * (-(-self.kappa * dt).exp_m1()) / (4.0 * self.kappa);
        CirTransition {
            scale,
            dof: self.degrees_of_freedom(),
            decay,
        }
    }

    /// Noise-free solution `theta + (r - theta) e^{-kappa h}`.
    pub fn deterministic_rate(&self, r: f64, horizon: f64) -> f64 {
        self.theta + (r - self.theta) * (-self.kappa * horizon).exp()
    }
}

/// Exact conditional mean and variance of `r(u + horizon)` given `r(u) = r_u`.
pub fn cir_conditional_moments(params: &CirParams, r_u: f64, horizon: f64) -> Result<(f64, f64)> {
    params.validate()?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be >= 0, got {horizon}")));
    }
    let (k, th, s2) = (params.kappa, params.theta, params.sigma * params.sigma);
    let e = (-k * horizon).exp();
    let one_minus = -(-k * horizon).exp_m1();
    let mean = r_u * e + th * one_minus;
    let var = r_u * s2 / k * (e * one_minus) + th * s2 / (2.0 * k) * one_minus * one_minus;
    Ok((mean, var))
}

/// `r(t) | r(u)` is `scale` times a noncentral chi-squared with `dof` degrees
/// of freedom and noncentrality `r(u) * decay / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirTransition {
    pub scale: f64,
    pub dof: f64,
    pub decay: f64,
}

impl CirTransition {
    pub fn noncentrality(&self, r_prev: f64) -> f64 {
        r_prev * self.decay / self.scale
    }

    /// Draws the next rate. Non-finite or non-positive draws are reported, never clamped.
    pub fn sample<R: Rng + ?Sized>(&self, r_prev: f64, rng: &mut R) -> Result<f64> {
        let x = sample_noncentral_chi_squared(self.dof, self.noncentrality(r_prev), rng)?;
        let r = self.scale * x;
        if !r.is_finite() || r <= 0.0 {
            return Err(Error::Numerical(format!(
                "CIR transition from r={r_prev} produced {r}"
            )));
        }
        Ok(r)
    }
}

/// Poisson mixture of central chi-squared variables:
/// `N ~ Poisson(nc / 2)`, then `chi^2_{dof + 2N}` drawn as `2 * Gamma(dof/2 + N, 1)`.
pub fn sample_noncentral_chi_squared<R: Rng + ?Sized>(dof: f64, nc: f64, rng: &mut R) -> Result<f64> {
    if !(dof > 0.0 && dof.is_finite()) || !(nc >= 0.0 && nc.is_finite()) {
        return Err(Error::Numerical(format!(
            "noncentral chi-squared with dof={dof}, nc={nc}"
        )));
    }
    let n = if nc > 0.0 {
        Poisson::new(0.5 * nc)
            .map_err(|e| Error::Numerical(format!("poisson(lambda={}): {e}", 0.5 * nc)))?
            .sample(rng)
    } else {
        0.0
    };
    let shape = 0.5 * dof + n;
    let g = Gamma::new(shape, 1.0)
        .map_err(|e| Error::Numerical(format!("gamma(shape={shape}): {e}")))?
        .sample(rng);
    Ok(2.0 * g)
}

/// Uniform daily grid `t_i = i / 365` for `i = 0..=n_days`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub n_days: usize,
}

impl TimeGrid {
    pub fn new(n_days: usize) -> Result<Self> {
        if n_days == 0 {
            return Err(Error::Domain("time grid must contain at least one step".into()));
        }
        Ok(TimeGrid { n_days })
    }

    pub fn from_years(years: f64) -> Result<Self> {
        if !(years > 0.0 && years.is_finite()) {
            return Err(Error::param("years", format!("must be > 0, got {years}")));
        }
        Self::new((years * DAYS_PER_YEAR as f64).round() as usize)
    }

    pub fn time(&self, day: usize) -> f64 {
        year_fraction(day)
    }

    pub fn dt(&self) -> f64 {
        DT
    }
}

/// One realisation of the overnight rate with its accumulator
/// `B(t_i) = B(t_{i-1}) (1 + r(t_i) dt)`, `B(t_0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePath {
    rates: Vec<f64>,
    accumulator: Vec<f64>,
}

impl RatePath {
    /// Builds a path from daily rates `r(t_0), ..., r(t_n)`.
    pub fn from_rates(rates: Vec<f64>) -> Result<Self> {
        if rates.len() < 2 {
            return Err(Error::Data("rate path needs at least two grid days".into()));
        }
        if let Some((i, r)) = rates.iter().enumerate().find(|(_, r)| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::Data(format!("rate on day {i} is not positive: {r}")));
        }
        let mut accumulator = Vec::with_capacity(rates.len());
        accumulator.push(1.0);
        for i in 1..rates.len() {
            let prev = accumulator[i - 1];
            accumulator.push(prev * (1.0 + rates[i] * DT));
        }
        Ok(RatePath { rates, accumulator })
    }

    pub fn constant(rate: f64, n_days: usize) -> Result<Self> {
        Self::from_rates(vec![rate; n_days + 1])
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            n_days: self.rates.len() - 1,
        }
    }

    pub fn n_days(&self) -> usize {
        self.rates.len() - 1
    }

    pub fn rate(&self, day: usize) -> f64 {
        self.rates[day]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn accumulator(&self, day: usize) -> f64 {
        self.accumulator[day]
    }

    pub fn accumulators(&self) -> &[f64] {
        &self.accumulator
    }

    /// `prod_{t_i in (from, to]} (1 + r(t_i) dt)`; 1 for an empty range.
    pub fn growth(&self, from: usize, to: usize) -> f64 {
        let mut g = 1.0;
        for i in from + 1..=to {
            g *= 1.0 + self.rates[i] * DT;
        }
        g
    }

    /// Realised discount factor over `(from, to]`.
    pub fn discount(&self, from: usize, to: usize) -> f64 {
        1.0 / self.growth(from, to)
    }

    /// A copy truncated to days `0..=n_days`.
    pub fn truncated(&self, n_days: usize) -> Result<Self> {
        if n_days == 0 || n_days > self.n_days() {
            return Err(Error::Range(format!(
                "cannot truncate a {}-day path to {n_days} days",
                self.n_days()
            )));
        }
        Ok(RatePath {
            rates: self.rates[..=n_days].to_vec(),
            accumulator: self.accumulator[..=n_days].to_vec(),
        })
    }
}

/// Samples `r` on the grid with exact noncentral chi-squared transitions.
pub fn sample_cir_path_with<R: Rng + ?Sized>(
    params: &CirParams,
    grid: TimeGrid,
    rng: &mut R,
) -> Result<RatePath> {
    params.validate()?;
    if grid.n_days == 0 {
        return Err(Error::Domain("empty time grid".into()));
    }
    let tr = params.transition(DT);
    let mut rates = Vec::with_capacity(grid.n_days + 1);
    rates.push(params.r0);
    for i in 1..=grid.n_days {
        let next = tr.sample(rates[i - 1], rng)?;
        rates.push(next);
    }
    RatePath::from_rates(rates)
}

/// Samples a path from the `rates` stream of `seed`.
pub fn sample_cir_path(params: &CirParams, grid: TimeGrid, seed: u64) -> Result<RatePath> {
    let mut rng = stream_rng(seed, Stream::Rates, &[]);
    sample_cir_path_with(params, grid, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degrees_of_freedom_at_default_params() {
        // 4 * 0.04 * 0.6 / 0.14^2
        let d = CirParams::default().degrees_of_freedom();
        assert!((d - 0.096 / 0.0196).abs() < 1e-12);
        assert!((d - 4.898).abs() < 1e-3);
    }

    #[test]
    fn feller_violation_rejected() {
        assert!(CirParams::new(0.1, 0.01, 0.2, 0.01).is_err());
        assert!(CirParams::new(0.6, 0.04, 0.14, 0.0).is_err());
        assert!(CirParams::new(-0.6, 0.04, 0.14, 0.04).is_err());
        assert!(CirParams::new(0.6, 0.04, 0.14, 0.04).is_ok());
    }

    #[test]
    fn moments_degenerate_cases() {
        let p = CirParams::default();
        let (m, v) = cir_conditional_moments(&p, 0.07, 0.0).unwrap();
        assert_eq!(m, 0.07);
        assert_eq!(v, 0.0);
        let (m, v) = cir_conditional_moments(&p, 0.07, 1e-9).unwrap();
        assert!((m - 0.07).abs() < 1e-10 && v < 1e-11);
        for h in [0.1, 1.0, 7.0] {
            let (m, _) = cir_conditional_moments(&p, p.theta, h).unwrap();
            assert!((m - p.theta).abs() < 1e-15);
        }
    }

    #[test]
    fn accumulator_recursion_is_exact() {
        let path = sample_cir_path(&CirParams::default(), TimeGrid::new(400).unwrap(), 3).unwrap();
        assert_eq!(path.accumulator(0), 1.0);
        for i in 1..=path.n_days() {
            assert!(path.rate(i) > 0.0);
            assert_eq!(path.accumulator(i), path.accumulator(i - 1) * (1.0 + path.rate(i) * DT));
            assert!(path.accumulator(i) > path.accumulator(i - 1));
        }
    }

    #[test]
    fn identical_seeds_identical_paths() {
        let g = TimeGrid::new(200).unwrap();
        let a = sample_cir_path(&CirParams::default(), g, 11).unwrap();
        let b = sample_cir_path(&CirParams::default(), g, 11).unwrap();
        let c = sample_cir_path(&CirParams::default(), g, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn vanishing_volatility_follows_ode() {
        let p = CirParams::new(0.6, 0.04, 1e-6, 0.09).unwrap();
        let path = sample_cir_path(&p, TimeGrid::new(365).unwrap(), 5).unwrap();
        for day in [1, 30, 180, 365] {
            let expected = p.deterministic_rate(p.r0, year_fraction(day));
            assert!(
                (path.rate(day) - expected).abs() < 1e-6,
                "day {day}: {} vs {expected}",
                path.rate(day)
            );
        }
    }

    #[test]
    fn growth_matches_accumulator_ratio() {
        let path = sample_cir_path(&CirParams::default(), TimeGrid::new(500).unwrap(), 9).unwrap();
        let g = path.growth(100, 465);
        let ratio = path.accumulator(465) / path.accumulator(100);
        assert!((g / ratio - 1.0).abs() < 1e-13);
        assert_eq!(path.growth(7, 7), 1.0);
    }
}
