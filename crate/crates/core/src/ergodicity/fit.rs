use super::tail::TailCurve;
use crate::error::{Error, Result};

/// RMS log-residual above which a fit is reported as poor.
pub const POOR_FIT_RMS: f64 = 0.05;

/// Least-squares fit of `log(2 P(T > t)) = log(gamma_hat) - beta_hat t`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaFit {
    pub beta_hat: f64,
    /// Prefactor of the variation-norm bound `2 P(T > t)`.
    pub gamma_hat: f64,
    pub beta_se: f64,
    pub residual_rms: f64,
    pub n_points: usize,
    pub t_min: f64,
    pub poor_fit: bool,
}

/// Fits on grid points `t >= t_min` with survival strictly inside `(0, 1)`.
/// `t_min` defaults to the first grid time with survival at most 1/2.
pub fn fit_beta(tail: &TailCurve, t_min: Option<f64>) -> Result<BetaFit> {
    let t_min = match t_min {
        Some(t) => t,
        None => tail
            .times
            .iter()
            .zip(&tail.survival)
            .find(|(_, s)| **s <= 0.5)
            .map(|(t, _)| *t)
            .ok_or_else(|| Error::Domain("fit unavailable: survival never drops to 1/2".into()))?,
    };
    let pts: Vec<(f64, f64)> = tail
        .times
        .iter()
        .zip(&tail.survival)
        .filter(|(t, s)| **t >= t_min && **s > 0.0 && **s < 1.0)
        .map(|(t, s)| (*t, (2.0 * s).ln()))
        .collect();
    if pts.len() < 5 {
        return Err(Error::Domain(format!(
            "fit unavailable: {} usable points beyond t_min = {t_min}, need 5",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm) * (p.0 - tm)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let ssr: f64 = pts
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let residual_rms = (ssr / n).sqrt();
    let beta_se = (ssr / (n - 2.0) / sxx).sqrt();
    Ok(BetaFit {
        beta_hat: -slope,
        gamma_hat: intercept.exp(),
        beta_se,
        residual_rms,
        n_points: pts.len(),
        t_min,
        poor_fit: residual_rms > POOR_FIT_RMS,
    })
}
