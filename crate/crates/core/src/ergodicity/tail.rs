use std::io::Write;

use crate::coupling::{couple_batch, CoupledInit, StopRule};
use crate::csvout::{self, header, real};
use crate::error::{Error, Result};
use crate::model::{Model, SimConfig};

/// Empirical survival `t -> P(T > t)` of a coupling time.
#[derive(Debug, Clone, PartialEq)]
pub struct TailCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub se: Vec<f64>,
    pub n_paths: usize,
    /// Paths with `T` undetermined at the horizon (counted as `T > horizon`).
    pub n_censored: usize,
    pub horizon: f64,
    /// Sorted coupling times, censored ones as `+inf`.
    samples: Vec<f64>,
}

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

impl TailCurve {
    /// Curve from per-path times (`None` = censored) evaluated on `times`.
    pub fn from_samples(samples: &[Option<f64>], times: &[f64], horizon: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Validation("no coupling-time samples".into()));
        }
        let mut s: Vec<f64> = samples.iter().map(|t| t.unwrap_or(f64::INFINITY)).collect();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let n_censored = s.iter().filter(|t| t.is_infinite()).count();
        let mut curve = Self {
            times: times.to_vec(),
            survival: Vec::with_capacity(times.len()),
            se: Vec::with_capacity(times.len()),
            n_paths: n,
            n_censored,
            horizon,
            samples: s,
        };
        for &t in times {
            let p = curve.survival_at(t);
            curve.survival.push(p);
            curve.se.push(binomial_se(p, n));
        }
        Ok(curve)
    }

    /// Curve from survival values alone, e.g. a synthetic tail.
    pub fn from_survival(times: Vec<f64>, survival: Vec<f64>, n_paths: usize) -> Result<Self> {
        if times.len() != survival.len() {
            return Err(Error::Shape("times and survival differ in length".into()));
        }
        let se = survival.iter().map(|p| binomial_se(*p, n_paths.max(1))).collect();
        let horizon = times.last().copied().unwrap_or(0.0);
        Ok(Self { times, survival, se, n_paths, n_censored: 0, horizon, samples: Vec::new() })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// True when every path was censored.
    pub fn all_censored(&self) -> bool {
        self.n_paths > 0 && self.n_censored == self.n_paths
    }

    /// `P(T > t)`; from the samples when available, else from the grid
    /// (last grid point at or before `t`).
    pub fn survival_at(&self, t: f64) -> f64 {
        if !self.samples.is_empty() {
            let le = self.samples.partition_point(|s| *s <= t);
            return (self.samples.len() - le) as f64 / self.samples.len() as f64;
        }
        let i = self.times.partition_point(|s| *s <= t);
        if i == 0 { 1.0 } else { self.survival[i - 1] }
    }

    /// `P(T >= t)` from the samples.
    pub fn survival_ge(&self, t: f64) -> f64 {
        if self.samples.is_empty() {
            return self.survival_at(t);
        }
        let lt = self.samples.partition_point(|s| *s < t);
        (self.samples.len() - lt) as f64 / self.samples.len() as f64
    }

    pub fn se_at(&self, p: f64) -> f64 {
        binomial_se(p, self.n_paths)
    }

    /// Sample mean of `T^n` over determined paths and its standard error;
    /// `None` when some paths are censored.
    pub fn empirical_moment(&self, n: i32) -> Option<(f64, f64)> {
        if self.n_censored > 0 || self.samples.is_empty() {
            return None;
        }
        let m = self.samples.len() as f64;
        let vals: Vec<f64> = self.samples.iter().map(|t| t.powi(n)).collect();
        let mean = vals.iter().sum::<f64>() / m;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0).max(1.0);
        Some((mean, (var / m).sqrt()))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let rows = (0..self.times.len())
            .map(|i| vec![real(self.times[i]), real(self.survival[i]), real(self.se[i])]);
        csvout::write_table(w, &header(&["t", "survival", "se"]), rows)
    }
}

/// Estimates the coupling-time tail from `cfg.n_paths` coupled runs pooled
/// over `inits` (round robin), evaluated on `times`.
pub fn estimate_tail(
    model: &dyn Model,
    inits: &[CoupledInit],
    cfg: &SimConfig,
    times: &[f64],
    workers: usize,
) -> Result<TailCurve> {
    if cfg.n_paths < 100 {
        return Err(Error::Validation(format!("tail estimation needs n_paths >= 100, got {}", cfg.n_paths)));
    }
    let runs = couple_batch(model, inits, cfg, StopRule::Coupling, workers)?;
    let samples: Vec<Option<f64>> = runs.iter().map(|r| r.couple_time).collect();
    TailCurve::from_samples(&samples, times, cfg.horizon)
}

/// Coupling-inequality bound `2 P(T > t)` on the total variation distance
/// (variation-norm scale, at most 2), with its standard error.
pub fn tv_upper_bound(tail: &TailCurve, t: f64) -> (f64, f64) {
    let p = tail.survival_at(t);
    (2.0 * p, 2.0 * tail.se_at(p))
}

/// Evenly spaced grid `0, step, ..., <= end`.
pub fn time_grid(end: f64, step: f64) -> Vec<f64> {
    let n = (end / step + 1e-9).floor() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}
