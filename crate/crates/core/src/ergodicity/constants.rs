use std::io::Write;

use crate::csvout::{self, header, real};
use crate::error::{Error, Result};

/// Closed-form constants of the strong-ergodicity estimate.
///
/// Inputs: rate bound `H`, single-regime coupling horizon `M`, delay `r`,
/// and `alpha`, a lower bound on the rate at which an off-diagonal regime
/// pair returns to the diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstants {
    pub h: f64,
    pub m: f64,
    pub r: f64,
    pub alpha: f64,
    /// `2/alpha`: Markov's inequality with `E[zeta_1] <= 1/alpha` gives
    /// `P(zeta_1 >= N) <= 1/2`.
    pub n: f64,
    /// `exp(-H (M + r)) / 2`.
    pub delta2: f64,
    /// `1 - delta2/2`.
    pub rho: f64,
    /// `1 - rho = delta2/2`, kept separately because `rho` rounds to 1 once
    /// `delta2` drops below machine precision.
    pub rho_gap: f64,
    /// `M + r + N`.
    pub big_r: f64,
    /// `R/(1 - rho) = 2R/delta2`.
    pub r_hat: f64,
    /// `delta2/(2R)`.
    pub beta_lb: f64,
}

impl TheoryConstants {
    pub fn new(h: f64, m: f64, r: f64, alpha: f64) -> Result<Self> {
        for (name, v) in [("H", h), ("M", m), ("r", r), ("alpha", alpha)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let n = 2.0 / alpha;
        let delta2 = 0.5 * (-h * (m + r)).exp();
        if delta2 == 0.0 {
            return Err(Error::NumericOverflow(format!("delta2 underflows for H (M + r) = {}", h * (m + r))));
        }
        let rho_gap = delta2 / 2.0;
        let rho = 1.0 - rho_gap;
        let big_r = m + r + n;
        let r_hat = big_r / rho_gap;
        let beta_lb = delta2 / (2.0 * big_r);
        Ok(Self { h, m, r, alpha, n, delta2, rho, rho_gap, big_r, r_hat, beta_lb })
    }

    /// `n! R_hat^n`, bound on `E[T^n]`.
    pub fn moment_bound(&self, n: u32) -> f64 {
        (1..=n).fold(1.0, |acc, i| acc * i as f64 * self.r_hat)
    }

    /// `1/(1 - lambda R_hat)`, bound on `E[exp(lambda T)]` for `0 < lambda < 1/R_hat`.
    pub fn mgf_bound(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0 && lambda * self.r_hat < 1.0) {
            return Err(Error::Domain(format!(
                "lambda = {lambda} outside (0, 1/R_hat) = (0, {})",
                1.0 / self.r_hat
            )));
        }
        Ok(1.0 / (1.0 - lambda * self.r_hat))
    }

    /// `(1 - 2/gamma)/R_hat`, lower bound on the rate `beta(gamma)` for `gamma >= 2`.
    pub fn beta_gamma_lb(&self, gamma: f64) -> Result<f64> {
        if !(gamma >= 2.0) {
            return Err(Error::Domain(format!("gamma must be at least 2, got {gamma}")));
        }
        Ok((1.0 - 2.0 / gamma) / self.r_hat)
    }

    /// Every documented invariant of the derived fields.
    pub fn invariants_hold(&self) -> bool {
        self.delta2 > 0.0
            && self.delta2 <= 0.5
            && self.rho >= 0.5
            && self.rho <= 1.0
            && self.rho_gap > 0.0
            && self.big_r == self.m + self.r + self.n
            && (self.r_hat * self.rho_gap - self.big_r).abs() <= 1e-12 * self.big_r
            && self.beta_lb > 0.0
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let names = header(&["H", "M", "r", "alpha", "N", "delta2", "rho", "R", "R_hat", "beta_lb"]);
        let row = [
            self.h, self.m, self.r, self.alpha, self.n, self.delta2, self.rho, self.big_r, self.r_hat, self.beta_lb,
        ]
        .iter()
        .map(|v| real(*v))
        .collect();
        csvout::write_table(w, &names, [row])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_point() {
        let c = TheoryConstants::new(1.0, 2.0, 1.0, 1.0).unwrap();
        assert!((c.delta2 - 0.5 * (-3.0f64).exp()).abs() < 1e-15);
        assert!((c.delta2 - 0.0248935).abs() < 5e-8);
        assert_eq!(c.n, 2.0);
        assert_eq!(c.big_r, 5.0);
        assert!((c.rho - 0.9875532).abs() < 5e-8);
        assert!((c.r_hat - 401.71).abs() < 5e-3);
        assert!((c.beta_lb - 0.00248935).abs() < 5e-9);
        assert!(c.invariants_hold());
        assert!((c.moment_bound(2) - 3.2274e5).abs() < 5e1);
    }

    #[test]
    fn small_rate_limit() {
        let c = TheoryConstants::new(1e-12, 2.0, 1.0, 1.0).unwrap();
        assert!((c.delta2 - 0.5).abs() < 1e-11);
        assert!((c.beta_lb - 1.0 / (4.0 * 5.0)).abs() < 1e-11);
    }

    #[test]
    fn larger_alpha_improves_rate() {
        let a = TheoryConstants::new(1.0, 2.0, 1.0, 1.0).unwrap();
        let b = TheoryConstants::new(1.0, 2.0, 1.0, 2.0).unwrap();
        assert_eq!(b.n, a.n / 2.0);
        assert!(b.beta_lb > a.beta_lb);
    }

    #[test]
    fn nonpositive_inputs_rejected() {
        assert!(TheoryConstants::new(1.0, 2.0, 1.0, 0.0).is_err());
        assert!(TheoryConstants::new(-1.0, 2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn mgf_domain() {
        let c = TheoryConstants::new(1.0, 2.0, 1.0, 1.0).unwrap();
        assert!(c.mgf_bound(1.0 / c.r_hat).is_err());
        assert!((c.mgf_bound(1e-12).unwrap() - 1.0).abs() < 1e-9);
        assert!((c.beta_gamma_lb(4.0).unwrap() - 0.5 / c.r_hat).abs() < 1e-18);
    }
}
