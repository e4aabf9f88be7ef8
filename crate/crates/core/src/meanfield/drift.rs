//! Pointwise check of `Omega_k G(|x - z|) <= -2 lambda` for the split coupling.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::gfunc::{f_value, g_second, GParams};
use super::params::{lambda_split, mf_drift, MeanFieldParams};
use crate::csvout::{self, header, real};
use crate::error::{Error, Result};
use crate::model::RegimeId;

#[derive(Debug, Clone, PartialEq)]
pub struct DriftRow {
    pub r: f64,
    pub omega: f64,
    /// `-2 lambda (1 - tol) - omega`; nonnegative when the point passes.
    pub margin: f64,
    pub a_bar: f64,
    pub tr_a: f64,
    pub b: f64,
    pub sandwich_ok: bool,
    pub b_bound_ok: bool,
}

impl DriftRow {
    pub fn ok(&self) -> bool {
        self.margin >= 0.0 && self.sandwich_ok && self.b_bound_ok
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    pub rows: Vec<DriftRow>,
    /// Grid points with `x = z`.
    pub n_skipped: usize,
}

impl DriftReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(DriftRow::ok)
    }

    pub fn n_failed(&self) -> usize {
        self.rows.iter().filter(|r| !r.ok()).count()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let rows = self.rows.iter().map(|r| vec![real(r.r), real(r.omega), real(r.margin)]);
        csvout::write_table(w, &header(&["r", "omega_value", "margin"]), rows)
    }
}

/// Pairs `(x, z)` with `x` uniform in `[-radius, radius]^n` and `z` at each
/// requested distance in a random direction.
pub fn drift_grid(n: usize, distances: &[f64], per_distance: usize, radius: f64, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(distances.len() * per_distance);
    for &r in distances {
        for _ in 0..per_distance {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-radius..=radius)).collect();
            let mut u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            u.iter_mut().for_each(|v| *v /= norm);
            let z = x.iter().zip(&u).map(|(a, b)| a - r * b).collect();
            out.push((x, z));
        }
    }
    out
}

pub fn drift_condition_check(
    p: &MeanFieldParams,
    gp: &GParams,
    k: RegimeId,
    points: &[(Vec<f64>, Vec<f64>)],
    tol: f64,
    quad_tol: f64,
) -> Result<DriftReport> {
    drift_condition_check_with(p, gp, k, points, tol, quad_tol, &g_second)
}

/// As [`drift_condition_check`], with the second derivative of `G` supplied
/// as `(rho, G'(rho), params) -> G''(rho)`.
#[allow(clippy::too_many_arguments)]
pub fn drift_condition_check_with(
    p: &MeanFieldParams,
    gp: &GParams,
    k: RegimeId,
    points: &[(Vec<f64>, Vec<f64>)],
    tol: f64,
    quad_tol: f64,
    second: &dyn Fn(f64, f64, &GParams) -> f64,
) -> Result<DriftReport> {
    if k.0 >= p.n_regimes() {
        return Err(Error::Validation(format!("regime {k} not declared")));
    }
    let (alpha, beta, lambda) = (p.alpha[k.0], p.beta[k.0], p.lambda);
    let n = p.n;
    let mut bx = vec![0.0; n];
    let mut bz = vec![0.0; n];
    let mut rows = Vec::with_capacity(points.len());
    let mut n_skipped = 0;
    for (x, z) in points {
        if x.len() != n || z.len() != n {
            return Err(Error::Shape(format!("grid point of length {} in an N = {n} system", x.len())));
        }
        let rho = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if rho == 0.0 {
            n_skipped += 1;
            continue;
        }
        let sx = lambda_split(&p.sigma_at(x, k), lambda)?.sigma_lambda;
        let sz = lambda_split(&p.sigma_at(z, k), lambda)?.sigma_lambda;
        let mut tr_a = 4.0 * lambda;
        let mut a_bar = 4.0 * lambda;
        for i in 0..n {
            let d2 = (sx[i] - sz[i]).powi(2);
            let e = (x[i] - z[i]) / rho;
            tr_a += d2;
            a_bar += e * e * d2;
        }
        mf_drift(x, alpha, beta, &mut bx);
        mf_drift(z, alpha, beta, &mut bz);
        let b: f64 = (0..n).map(|i| (x[i] - z[i]) * (bx[i] - bz[i])).sum();
        let f = f_value(rho, gp, quad_tol)?;
        let omega = 0.5 * second(rho, f, gp) * a_bar + f / (2.0 * rho) * (tr_a - a_bar + 2.0 * b);
        let b_cap = alpha * rho * rho - rho.powi(4) / (4.0 * n as f64);
        rows.push(DriftRow {
            r: rho,
            omega,
            margin: -2.0 * lambda * (1.0 - tol) - omega,
            a_bar,
            tr_a,
            b,
            sandwich_ok: a_bar >= 4.0 * lambda * (1.0 - 1e-12) && a_bar <= 4.0 * (lambda + gp.theta) * (1.0 + 1e-12),
            b_bound_ok: b <= b_cap + 1e-12 * (1.0 + b_cap.abs()),
        });
    }
    Ok(DriftReport { rows, n_skipped })
}
