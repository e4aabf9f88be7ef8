use std::io::Write;

use super::constants::TheoryConstants;
use super::tail::TailCurve;
use crate::csvout::{self, header, real};
use crate::error::{Error, Result};

/// One row of a check report: `ok` iff `lhs <= rhs` (up to the stated slack).
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

pub fn write_checks_csv<W: Write>(rows: &[CheckRow], w: W) -> Result<()> {
    let body = rows
        .iter()
        .map(|r| vec![r.name.clone(), real(r.lhs), real(r.rhs), r.ok.to_string()]);
    csvout::write_table(w, &header(&["name", "lhs", "rhs", "ok"]), body)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundTable {
    /// `(n, n! R_hat^n)`.
    pub moments: Vec<(u32, f64)>,
    /// `(lambda, 1/(1 - lambda R_hat))`.
    pub mgf: Vec<(f64, f64)>,
}

pub fn moment_mgf_bounds(c: &TheoryConstants, n_max: u32, lambda_grid: &[f64]) -> Result<BoundTable> {
    let moments = (1..=n_max).map(|n| (n, c.moment_bound(n))).collect();
    let mgf = lambda_grid
        .iter()
        .map(|&l| c.mgf_bound(l).map(|b| (l, b)))
        .collect::<Result<_>>()?;
    Ok(BoundTable { moments, mgf })
}

/// Compares empirical moments of the tail samples with `n! R_hat^n`.
pub fn moment_checks(c: &TheoryConstants, tail: &TailCurve, n_max: u32) -> Vec<CheckRow> {
    (1..=n_max)
        .filter_map(|n| {
            tail.empirical_moment(n as i32).map(|(mean, _)| {
                let rhs = c.moment_bound(n);
                CheckRow { name: format!("moment_{n}"), lhs: mean, rhs, ok: mean <= rhs }
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolylogCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// `Li_{-(n-1)}(rho) = sum_k rho^k k^(n-1)`, closed form for `n <= 4`.
pub fn polylog_neg(rho: f64, n: u32) -> f64 {
    let q = 1.0 - rho;
    match n {
        1 => rho / q,
        2 => rho / (q * q),
        3 => rho * (1.0 + rho) / (q * q * q),
        4 => rho * (1.0 + 4.0 * rho + rho * rho) / (q * q * q * q),
        _ => {
            let p = (n - 1) as i32;
            // terms rise until k ~ (n-1)/(-ln rho), then decay geometrically
            let peak = (n - 1) as f64 / -rho.ln();
            let mut sum = 0.0;
            let mut k = 1u64;
            loop {
                let kf = k as f64;
                let term = rho.powf(kf) * kf.powi(p);
                sum += term;
                if kf > peak && term <= 1e-17 * sum {
                    break;
                }
                k += 1;
            }
            sum
        }
    }
}

/// `Li_{-(n-1)}(rho) <= rho (n-1)!/(1-rho)^n`.
pub fn polylog_bound_check(rho: f64, n: u32) -> Result<PolylogCheck> {
    if !(rho > 0.0 && rho < 1.0) || n == 0 {
        return Err(Error::Domain(format!("need rho in (0,1) and n >= 1, got rho = {rho}, n = {n}")));
    }
    let lhs = polylog_neg(rho, n);
    let fact: f64 = (1..n).map(|i| i as f64).product();
    let rhs = rho * fact / (1.0 - rho).powi(n as i32);
    Ok(PolylogCheck { lhs, rhs, ok: lhs <= rhs * (1.0 + 1e-12) })
}

/// `(2/pi_A) log(gamma/pi_A) / mean_hitting`, upper bound on the rate.
pub fn beta_upper_bound(pi_a: f64, gamma: f64, mean_hitting: f64) -> Result<f64> {
    if !(pi_a > 0.0 && pi_a <= 1.0) {
        return Err(Error::Domain(format!("pi_A must lie in (0, 1], got {pi_a}")));
    }
    if !(gamma > pi_a) {
        return Err(Error::Domain(format!("gamma must exceed pi_A, got {gamma}")));
    }
    if !(mean_hitting > 0.0) {
        return Err(Error::Domain(format!("mean hitting time must be positive, got {mean_hitting}")));
    }
    Ok(2.0 / pi_a * (gamma / pi_a).ln() / mean_hitting)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricRow {
    pub n: u32,
    /// `P(T >= nR)`.
    pub p_hat: f64,
    pub se: f64,
    /// `rho^n`.
    pub bound: f64,
    pub ok: bool,
}

/// Flags `P(T >= nR) > rho^n + 3 SE` for `n = 1, 2, 3`. A failure is an
/// assumption diagnostic, not an error.
pub fn geometric_tail_check(tail: &TailCurve, c: &TheoryConstants) -> Result<Vec<GeometricRow>> {
    if tail.horizon < 3.0 * c.big_r {
        return Err(Error::Domain(format!(
            "tail horizon {} is shorter than 3R = {}",
            tail.horizon,
            3.0 * c.big_r
        )));
    }
    Ok((1..=3)
        .map(|n| {
            let p_hat = tail.survival_ge(n as f64 * c.big_r);
            let se = tail.se_at(p_hat);
            let bound = c.rho.powi(n as i32);
            GeometricRow { n, p_hat, se, bound, ok: p_hat <= bound + 3.0 * se }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polylog_reference_values() {
        let c = polylog_bound_check(0.5, 3).unwrap();
        assert!((c.lhs - 6.0).abs() < 1e-12);
        assert!((c.rhs - 8.0).abs() < 1e-12);
        assert!(c.ok);
        for rho in [0.1, 0.5, 0.9] {
            let c = polylog_bound_check(rho, 1).unwrap();
            assert!((c.lhs - c.rhs).abs() <= 1e-12 * c.rhs);
            assert!(c.ok);
        }
    }

    #[test]
    fn series_agrees_with_closed_forms() {
        // the generic series branch, checked against n <= 4 by hand-forcing
        for rho in [0.2f64, 0.7, 0.95] {
            for n in 1..=4u32 {
                let p = (n - 1) as i32;
                let series: f64 = (1..20000).map(|k| rho.powi(k) * (k as f64).powi(p)).sum();
                let closed = polylog_neg(rho, n);
                assert!((series - closed).abs() <= 1e-10 * closed, "rho {rho} n {n}");
            }
        }
        let c = polylog_bound_check(0.9, 8).unwrap();
        assert!(c.ok && c.lhs > 0.0);
    }

    #[test]
    fn beta_upper_examples() {
        assert!((beta_upper_bound(1.0, std::f64::consts::E, 3.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((beta_upper_bound(0.5, 2.0, 4.0).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!(beta_upper_bound(0.5, 2.0, 1e300).unwrap() < 1e-299);
        assert!(beta_upper_bound(0.0, 2.0, 1.0).is_err());
        assert!(beta_upper_bound(0.5, 0.4, 1.0).is_err());
    }

    #[test]
    fn glued_tail_passes_geometric_check() {
        let c = TheoryConstants::new(1.0, 2.0, 1.0, 1.0).unwrap();
        let samples = vec![Some(1.0); 200];
        let tail = TailCurve::from_samples(&samples, &[0.0], 20.0).unwrap();
        let rows = geometric_tail_check(&tail, &c).unwrap();
        assert!(rows.iter().all(|r| r.ok && r.p_hat == 0.0));
        let short = TailCurve::from_samples(&samples, &[0.0], 5.0).unwrap();
        assert!(geometric_tail_check(&short, &c).is_err());
    }

    #[test]
    fn bound_table_rejects_large_lambda() {
        let c = TheoryConstants::new(1.0, 2.0, 1.0, 1.0).unwrap();
        let t = moment_mgf_bounds(&c, 3, &[1e-4, 1e-3]).unwrap();
        assert_eq!(t.moments.len(), 3);
        assert!((t.moments[0].1 - c.r_hat).abs() < 1e-12);
        assert!(moment_mgf_bounds(&c, 3, &[0.01]).is_err());
    }
}
