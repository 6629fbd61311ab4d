//! OIS contracts, fair rates, mark-to-market values and variation margins.
//!
//! A contract is stored once for its pair `(i, j)`, `i < j`. Values below are
//! for the unit sign; counterparty `i` sees `delta_i * X` and `j` sees the
//! negation, so the two sides cancel exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::{spot_rate, year_fraction, BondBook, RatePath, DT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OisContract {
    pub id: usize,
    pub i: usize,
    pub j: usize,
    pub start: usize,
    pub maturity: usize,
    pub principal: f64,
    pub fair_rate: f64,
    /// +1 when node `i` receives fixed.
    pub delta_i: i8,
}

/// Fair OIS rate from the bond price `p(start, maturity)`.
pub fn fair_rate(start: usize, maturity: usize, bond_price: f64) -> Result<f64> {
    if maturity <= start {
        return Err(Error::Domain(format!("contract maturity {maturity} not after start {start}")));
    }
    spot_rate(bond_price, year_fraction(maturity - start))
}

/// `m = V(t_{l+1}) - (1 + r(t_{l+1}) dt) V(t_l)`.
pub fn variation_margin(v_prev: f64, v_next: f64, r_next: f64) -> f64 {
    v_next - (1.0 + r_next * DT) * v_prev
}

impl OisContract {
    pub fn validate(&self) -> Result<()> {
        if self.i >= self.j {
            return Err(Error::Data(format!("contract {} has pair ({}, {}), need i < j", self.id, self.i, self.j)));
        }
        if self.maturity <= self.start {
            return Err(Error::Data(format!("contract {} matures before it starts", self.id)));
        }
        if self.delta_i != 1 && self.delta_i != -1 {
            return Err(Error::Data(format!("contract {} has delta {}", self.id, self.delta_i)));
        }
        if !(self.principal.is_finite() && self.fair_rate.is_finite()) {
            return Err(Error::Data(format!("contract {} has non-finite marks", self.id)));
        }
        Ok(())
    }

    pub fn tenor(&self) -> f64 {
        year_fraction(self.maturity - self.start)
    }

    pub fn delta_j(&self) -> i8 {
        -self.delta_i
    }

    /// Sign seen by `node`, or `None` if it is not a counterparty.
    pub fn delta_for(&self, node: usize) -> Option<f64> {
        if node == self.i {
            Some(self.delta_i as f64)
        } else if node == self.j {
            Some(-(self.delta_i as f64))
        } else {
            None
        }
    }

    pub fn involves(&self, node: usize) -> bool {
        node == self.i || node == self.j
    }

    /// `t in (start, maturity]`: the contract carries value and margin.
    pub fn is_live(&self, t: usize) -> bool {
        self.start < t && t <= self.maturity
    }

    /// `t in [start, maturity]`: the contract is observable on the market.
    pub fn is_active(&self, t: usize) -> bool {
        self.start <= t && t <= self.maturity
    }

    /// Unindicated leg difference `N (p(t,T)(1 + K tau) - prod_{(t0,t]}(1 + r dt))`.
    pub fn leg_difference(&self, t: usize, path: &RatePath, bond_price: f64) -> Result<f64> {
        if t < self.start || t > self.maturity {
            return Err(Error::Domain(format!(
                "contract {} valued on day {t} outside [{}, {}]",
                self.id, self.start, self.maturity
            )));
        }
        if t > path.n_days() {
            return Err(Error::Data(format!(
                "rate path ends on day {} before valuation day {t}",
                path.n_days()
            )));
        }
        let fixed = bond_price * (1.0 + self.fair_rate * self.tenor());
        Ok(self.principal * (fixed - path.growth(self.start, t)))
    }

    /// Mark-to-market for the unit sign; zero outside `(start, maturity]`.
    pub fn value(&self, t: usize, path: &RatePath, book: &BondBook) -> Result<f64> {
        if !self.is_live(t) {
            return Ok(0.0);
        }
        self.leg_difference(t, path, book.price(t, self.maturity)?)
    }

    /// Variation margin on `day` for the unit sign.
    ///
    /// Zero unless `day` lies in `(start, maturity]`; a contract starting on
    /// `day` is worth zero there and a matured one has already settled.
    pub fn margin(&self, day: usize, path: &RatePath, book: &BondBook) -> Result<f64> {
        if !self.is_live(day) {
            return Ok(0.0);
        }
        let v_prev = self.value(day - 1, path, book)?;
        let v_next = self.value(day, path, book)?;
        Ok(variation_margin(v_prev, v_next, path.rate(day)))
    }

    /// Bond entries `(day, maturity)` needed to value the contract over its life.
    pub fn bond_requests(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.start + 1..self.maturity).map(move |d| (d, self.maturity))
    }
}

/// Net margin of `node` on `day`, summed over contracts in slice order.
pub fn node_margin(
    contracts: &[OisContract],
    node: usize,
    day: usize,
    path: &RatePath,
    book: &BondBook,
) -> Result<f64> {
    let mut total = 0.0;
    for c in contracts {
        if let Some(delta) = c.delta_for(node) {
            total += delta * c.margin(day, path, book)?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::BondEstimate;

    fn contract(start: usize, maturity: usize, k: f64, delta_i: i8) -> OisContract {
        OisContract {
            id: 0,
            i: 0,
            j: 1,
            start,
            maturity,
            principal: 1.0,
            fair_rate: k,
            delta_i,
        }
    }

    /// Book of deterministic prices along a known path.
    fn deterministic_book(path: &RatePath, maturity: usize) -> BondBook {
        let mut book = BondBook::new();
        for d in 0..maturity {
            let price = 1.0 / path.growth(d, maturity);
            book.insert(d, maturity, BondEstimate { price, std_error: 0.0 });
        }
        book
    }

    #[test]
    fn fair_rate_cases() {
        assert_eq!(fair_rate(0, 365, 1.0).unwrap(), 0.0);
        assert!((fair_rate(3, 368, 0.96).unwrap() - (1.0 / 0.96 - 1.0)).abs() < 1e-15);
        // Constant rate: K = (1 + r/365)^365 - 1.
        let r = 0.05;
        let p = (1.0 + r * DT).powi(-365);
        let k = fair_rate(0, 365, p).unwrap();
        assert!((k - ((1.0 + r / 365.0).powi(365) - 1.0)).abs() < 1e-14);
        assert!(fair_rate(5, 5, 1.0).is_err());
    }

    #[test]
    fn value_zero_at_inception_and_after_maturity() {
        let path = RatePath::constant(0.04, 20).unwrap();
        let book = deterministic_book(&path, 10);
        let k = fair_rate(2, 10, book.price(2, 10).unwrap()).unwrap();
        let c = contract(2, 10, k, 1);
        assert_eq!(c.value(2, &path, &book).unwrap(), 0.0);
        assert!(c.leg_difference(2, &path, book.price(2, 10).unwrap()).unwrap().abs() < 1e-15);
        assert_eq!(c.value(11, &path, &book).unwrap(), 0.0);
        assert_eq!(c.value(1, &path, &book).unwrap(), 0.0);
    }

    #[test]
    fn receiver_gains_after_rate_drop() {
        // Two scenarios agree up to t0 then rates move down or up.
        let t0 = 1;
        let mat = 30;
        let base = RatePath::constant(0.04, mat).unwrap();
        let book0 = deterministic_book(&base, mat);
        let k = fair_rate(t0, mat, book0.price(t0, mat).unwrap()).unwrap();
        let c = contract(t0, mat, k, 1);
        let mut down = vec![0.04; mat + 1];
        let mut up = vec![0.04; mat + 1];
        for d in t0 + 1..=mat {
            down[d] = 0.02;
            up[d] = 0.06;
        }
        let down = RatePath::from_rates(down).unwrap();
        let up = RatePath::from_rates(up).unwrap();
        let v_down = c.value(t0 + 1, &down, &deterministic_book(&down, mat)).unwrap();
        let v_up = c.value(t0 + 1, &up, &deterministic_book(&up, mat)).unwrap();
        assert!(v_down > 0.0);
        assert!(v_up < 0.0);
        // Brute force: fixed leg discounted along the shocked path minus the realised float leg.
        let brute = (1.0 + k * c.tenor()) / down.growth(t0 + 1, mat) - down.growth(t0, t0 + 1);
        assert!((v_down - brute).abs() < 1e-14);
    }

    #[test]
    fn terminal_float_leg_matches_accumulator() {
        let path = RatePath::from_rates((0..=40).map(|i| 0.03 + 0.0005 * i as f64).collect()).unwrap();
        let (t0, mat) = (5, 40);
        let g = path.growth(t0, mat);
        let ratio = path.accumulator(mat) / path.accumulator(t0);
        assert!((g - ratio).abs() <= 4.0 * f64::EPSILON * ratio);
    }

    #[test]
    fn margins_and_antisymmetry() {
        let path = RatePath::from_rates((0..=12).map(|i| 0.03 + 0.001 * (i % 4) as f64).collect()).unwrap();
        let book = deterministic_book(&path, 10);
        let k = fair_rate(2, 10, book.price(2, 10).unwrap()).unwrap();
        let c = contract(2, 10, k, -1);
        assert_eq!(c.margin(2, &path, &book).unwrap(), 0.0);
        assert_eq!(c.margin(11, &path, &book).unwrap(), 0.0);
        let contracts = [c];
        for day in 0..=12 {
            let mi = node_margin(&contracts, 0, day, &path, &book).unwrap();
            let mj = node_margin(&contracts, 1, day, &path, &book).unwrap();
            assert_eq!(mi + mj, 0.0);
            assert_eq!(mi, -c.margin(day, &path, &book).unwrap());
            assert_eq!(node_margin(&contracts, 2, day, &path, &book).unwrap(), 0.0);
        }
        assert_eq!(variation_margin(0.0, 0.0, 0.05), 0.0);
    }

    #[test]
    fn missing_bond_entry_is_a_data_error() {
        let path = RatePath::constant(0.04, 20).unwrap();
        let c = contract(2, 10, 0.04, 1);
        assert!(matches!(c.value(5, &path, &BondBook::new()), Err(Error::Data(_))));
        let short = RatePath::constant(0.04, 4).unwrap();
        assert!(matches!(c.leg_difference(6, &short, 0.99), Err(Error::Data(_))));
    }
}
