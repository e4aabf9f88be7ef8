//! Split coupling of two copies of the mean-field system in a frozen regime:
//! both copies share the noise on `sigma_lambda`, and the common `sqrt(lambda)`
//! channel of the second copy is reflected.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

use super::gfunc::{GParams, G_fn};
use super::params::{lambda_split, mf_drift, MeanFieldParams};
use crate::batch::{path_rng, try_map_indexed};
use crate::coupling::reflection_matrix;
use crate::csvout::{self, header, real};
use crate::error::{Error, Result};
use crate::model::{RegimeId, SimConfig};

/// Meeting time of one split-coupled pair; `None` when censored at the horizon.
pub fn mf_meeting_time(
    p: &MeanFieldParams,
    k: RegimeId,
    x0: &[f64],
    y0: &[f64],
    cfg: &SimConfig,
    rng: &mut impl Rng,
) -> Result<Option<f64>> {
    let n = p.n;
    let (alpha, beta) = (p.alpha[k.0], p.beta[k.0]);
    let (dt, sqrt_dt) = (cfg.dt, cfg.dt.sqrt());
    let common = p.lambda.sqrt();
    let (mut x, mut y) = (x0.to_vec(), y0.to_vec());
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    let (mut w, mut b) = (vec![0.0; n], vec![0.0; n]);
    if x == y {
        return Ok(Some(0.0));
    }
    for step in 1..=cfg.n_steps() {
        let sx = lambda_split(&p.sigma_at(&x, k), p.lambda)?.sigma_lambda;
        let sy = lambda_split(&p.sigma_at(&y, k), p.lambda)?.sigma_lambda;
        mf_drift(&x, alpha, beta, &mut bx);
        mf_drift(&y, alpha, beta, &mut by);
        for i in 0..n {
            w[i] = rng.sample(StandardNormal);
            b[i] = rng.sample(StandardNormal);
        }
        let refl = reflection_matrix(&x, &y)?;
        let hb = refl.apply(&b);
        let e = refl.direction().to_vec();
        let z0: f64 = (0..n).map(|i| e[i] * (x[i] - y[i])).sum();
        let mut var = 4.0 * p.lambda;
        for i in 0..n {
            var += (e[i] * (sx[i] - sy[i])).powi(2);
            x[i] += bx[i] * dt + (sx[i] * w[i] + common * b[i]) * sqrt_dt;
            y[i] += by[i] * dt + (sy[i] * w[i] + common * hb[i]) * sqrt_dt;
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow(format!("split coupling diverged at t = {}", step as f64 * dt)));
        }
        let t = step as f64 * dt;
        let gap = x.iter().zip(&y).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
        if gap <= cfg.meet_eps {
            return Ok(Some(t));
        }
        let z1: f64 = (0..n).map(|i| e[i] * (x[i] - y[i])).sum();
        if z1 <= 0.0 || rng.random::<f64>() < (-2.0 * z0 * z1 / (var * dt)).exp() {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfCouplingRow {
    pub distance: f64,
    pub n_paths: usize,
    pub n_censored: usize,
    /// Mean meeting time, censored paths counted at the horizon.
    pub mean_t: f64,
    pub se: f64,
    /// `G(|x - y|)/(2 lambda)`.
    pub bound: f64,
}

impl MfCouplingRow {
    pub fn ok(&self) -> bool {
        self.n_censored == 0 && self.mean_t <= self.bound + 3.0 * self.se
    }
}

pub fn write_mf_summary_csv<W: Write>(rows: &[MfCouplingRow], w: W) -> Result<()> {
    let body = rows.iter().map(|r| {
        vec![
            real(r.distance),
            r.n_paths.to_string(),
            r.n_censored.to_string(),
            real(r.mean_t),
            real(r.se),
            real(r.bound),
            r.ok().to_string(),
        ]
    });
    csvout::write_table(
        w,
        &header(&["distance", "n_paths", "n_censored", "empirical_mean_T", "se", "bound", "ok"]),
        body,
    )
}

/// `cfg.n_paths` coupled pairs per initial pair. Path `j` of pair `i` uses
/// stream `i * n_paths + j`.
pub fn mf_coupled_simulate(
    p: &MeanFieldParams,
    gp: &GParams,
    k: RegimeId,
    inits: &[(Vec<f64>, Vec<f64>)],
    cfg: &SimConfig,
    quad_tol: f64,
    workers: usize,
) -> Result<Vec<MfCouplingRow>> {
    cfg.validate(cfg.dt)?;
    if k.0 >= p.n_regimes() {
        return Err(Error::Validation(format!("regime {k} not declared")));
    }
    let per = cfg.n_paths;
    inits
        .iter()
        .enumerate()
        .map(|(i, (x0, y0))| {
            if x0.len() != p.n || y0.len() != p.n {
                return Err(Error::Shape(format!("initial pair of length {} in an N = {} system", x0.len(), p.n)));
            }
            let times = try_map_indexed(per, workers, |j| {
                let mut rng = path_rng(cfg.seed, (i * per + j) as u64);
                mf_meeting_time(p, k, x0, y0, cfg, &mut rng)
            })?;
            let distance = x0.iter().zip(y0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let n_censored = times.iter().filter(|t| t.is_none()).count();
            let vals: Vec<f64> = times.iter().map(|t| t.unwrap_or(cfg.horizon)).collect();
            let nf = per as f64;
            let mean_t = vals.iter().sum::<f64>() / nf;
            let var = if per > 1 { vals.iter().map(|v| (v - mean_t).powi(2)).sum::<f64>() / (nf - 1.0) } else { 0.0 };
            let bound = G_fn(distance, gp, quad_tol)?.0 / (2.0 * p.lambda);
            Ok(MfCouplingRow { distance, n_paths: per, n_censored, mean_t, se: (var / nf).sqrt(), bound })
        })
        .collect()
}

/// Euler path of the uncoupled system from `x0` with the supplied standard
/// normal increments, one vector per step.
pub fn mf_euler_path(p: &MeanFieldParams, k: RegimeId, x0: &[f64], noise: &[Vec<f64>], dt: f64) -> Vec<Vec<f64>> {
    let (alpha, beta) = (p.alpha[k.0], p.beta[k.0]);
    let mut x = x0.to_vec();
    let mut b = vec![0.0; x.len()];
    let mut out = vec![x.clone()];
    for z in noise {
        let s = p.sigma_at(&x, k);
        mf_drift(&x, alpha, beta, &mut b);
        for i in 0..x.len() {
            x[i] += b[i] * dt + s[i] * z[i] * dt.sqrt();
        }
        out.push(x.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_start_meets_at_zero() {
        let p = MeanFieldParams::new(2, vec![1.0], vec![1.0], 1.0).unwrap();
        let gp = p.g_params(&p.validate(100, 0).unwrap()).unwrap();
        let cfg = SimConfig::new(1e-2, 1.0, 20, 0);
        let rows = mf_coupled_simulate(&p, &gp, RegimeId(0), &[(vec![0.5, 0.5], vec![0.5, 0.5])], &cfg, 1e-8, 1).unwrap();
        assert_eq!(rows[0].mean_t, 0.0);
        assert_eq!(rows[0].bound, 0.0);
        assert!(rows[0].ok());
    }

    #[test]
    fn single_body_mean_below_bound() {
        let p = MeanFieldParams::new(1, vec![1.0], vec![1.0], 1.0).unwrap();
        let gp = p.g_params(&p.validate(100, 0).unwrap()).unwrap();
        let cfg = SimConfig::new(1e-3, 200.0, 1000, 5);
        let rows = mf_coupled_simulate(&p, &gp, RegimeId(0), &[(vec![0.5], vec![-0.5])], &cfg, 1e-8, 0).unwrap();
        assert!(rows[0].ok(), "{:?}", rows[0]);
    }

    #[test]
    fn batch_is_worker_independent() {
        let p = MeanFieldParams::new(2, vec![1.0], vec![1.0], 1.0).unwrap();
        let gp = p.g_params(&p.validate(100, 0).unwrap()).unwrap();
        let cfg = SimConfig::new(1e-2, 50.0, 64, 9);
        let inits = [(vec![1.0, 0.0], vec![-1.0, 0.0])];
        let a = mf_coupled_simulate(&p, &gp, RegimeId(0), &inits, &cfg, 1e-8, 1).unwrap();
        let b = mf_coupled_simulate(&p, &gp, RegimeId(0), &inits, &cfg, 1e-8, 4).unwrap();
        assert_eq!(a, b);
    }
}
