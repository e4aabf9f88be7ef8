//! Empirical check of the single-regime coupling assumption: a horizon `M`
//! such that the frozen-regime reflection coupling meets before `M` with
//! probability at least one half from every tested initial pair.

use super::engine::{couple_batch, CoupledInit, StopRule};
use super::generator::{coupling_generator_apply, RadialFn};
use crate::error::{Error, Result};
use crate::model::{FrozenModel, Model, RegimeId, SimConfig};
use crate::segment::HistorySegment;

#[derive(Debug, Clone, PartialEq)]
pub struct PairEstimate {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub n_paths: usize,
    /// `P(T^(k) < M)` for each tested `M`.
    pub success: Vec<f64>,
    pub se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TkCertificate {
    pub regime: RegimeId,
    pub m_grid: Vec<f64>,
    pub pairs: Vec<PairEstimate>,
    /// Smallest tested `M` where every pair has `P >= 1/2 + 3 SE`.
    pub m_hat: Option<f64>,
}

impl TkCertificate {
    pub fn verified(&self) -> bool {
        self.m_hat.is_some()
    }

    pub fn status(&self) -> &'static str {
        if self.verified() { "verified" } else { "assumption unverified on grid" }
    }
}

/// Estimates `P(T^(k) < M)` over `m_grid` for each pair in `pairs`, running
/// `cfg.n_paths` coupled paths per pair with the regime frozen at `k`.
pub fn empirical_tk_certificate(
    model: &dyn Model,
    k: RegimeId,
    delay: f64,
    cfg: &SimConfig,
    pairs: &[(Vec<f64>, Vec<f64>)],
    m_grid: &[f64],
    workers: usize,
) -> Result<TkCertificate> {
    if m_grid.is_empty() || m_grid.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::Validation("M grid must be nonempty and positive".into()));
    }
    let mut m_sorted = m_grid.to_vec();
    m_sorted.sort_by(f64::total_cmp);
    let frozen = FrozenModel::new(model);
    let run = SimConfig { horizon: m_sorted[m_sorted.len() - 1], ..*cfg };
    let mut out = Vec::with_capacity(pairs.len());
    for (idx, (x, y)) in pairs.iter().enumerate() {
        let init = CoupledInit::constant(delay, cfg.dt, x, k, y, k)?;
        let pair_cfg = SimConfig { seed: cfg.seed.wrapping_add(idx as u64), ..run };
        let res = couple_batch(&frozen, &[init], &pair_cfg, StopRule::Meeting, workers)?;
        let n = res.len() as f64;
        let mut success = Vec::with_capacity(m_sorted.len());
        let mut se = Vec::with_capacity(m_sorted.len());
        for &m in &m_sorted {
            let hits = res.iter().filter(|s| s.meet_time.is_some_and(|t| t < m)).count() as f64;
            let p = hits / n;
            success.push(p);
            se.push((p * (1.0 - p) / n).sqrt());
        }
        out.push(PairEstimate { x: x.clone(), y: y.clone(), n_paths: res.len(), success, se });
    }
    let m_hat = m_sorted.iter().enumerate().find_map(|(j, &m)| {
        out.iter()
            .all(|p| p.success[j] >= 0.5 + 3.0 * p.se[j])
            .then_some(m)
    });
    Ok(TkCertificate { regime: k, m_grid: m_sorted, pairs: out, m_hat })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FCheck {
    /// Largest `L^(k) F(|x - y|)` over the grid.
    pub max_generator: f64,
    pub k_const: f64,
    pub ok: bool,
    /// `||F||_inf / K`, the implied bound on `E[T^(k)]`.
    pub mean_bound: f64,
}

/// Checks `L^(k) F(|x - y|) <= -K` at each pair of the grid, with the regime
/// frozen at `k` and `f_sup = ||F||_inf` supplied by the caller.
#[allow(clippy::too_many_arguments)]
pub fn f_condition_check(
    model: &dyn Model,
    k: RegimeId,
    f: &RadialFn,
    f_sup: f64,
    k_const: f64,
    delay: f64,
    dt: f64,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<FCheck> {
    if !(k_const > 0.0) {
        return Err(Error::Validation(format!("K must be positive, got {k_const}")));
    }
    let frozen = FrozenModel::new(model);
    let mut worst = f64::NEG_INFINITY;
    for (x, y) in pairs {
        if x == y {
            continue;
        }
        let phi = HistorySegment::constant(delay, dt, x)?;
        let psi = HistorySegment::constant(delay, dt, y)?;
        worst = worst.max(coupling_generator_apply(f, &phi, k, &psi, k, &frozen)?);
    }
    Ok(FCheck {
        max_generator: worst,
        k_const,
        ok: worst <= -k_const,
        mean_bound: f_sup / k_const,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    fn ou() -> ModelSpec {
        ModelSpec::new(1, 1.0)
            .unwrap()
            .with_drift(|x, _, b| b[0] = -x[0])
            .with_diffusion(|_, _, s| s[(0, 0)] = 1.0)
    }

    #[test]
    fn ou_certificate_finds_finite_horizon() {
        let pairs: Vec<_> = [(-2.0, 2.0), (0.0, 4.0), (-1.0, 0.5)]
            .iter()
            .map(|&(a, b)| (vec![a], vec![b]))
            .collect();
        let cfg = SimConfig::new(0.01, 10.0, 400, 3);
        let cert = empirical_tk_certificate(&ou(), RegimeId(0), 0.5, &cfg, &pairs, &[0.5, 1.0, 2.0, 4.0, 8.0], 0)
            .unwrap();
        assert!(cert.verified(), "{cert:?}");
        assert!(cert.m_hat.unwrap() <= 4.0);
    }

    #[test]
    fn equal_start_succeeds_immediately() {
        let cfg = SimConfig::new(0.01, 1.0, 50, 0);
        let cert = empirical_tk_certificate(&ou(), RegimeId(0), 0.5, &cfg, &[(vec![1.0], vec![1.0])], &[0.01], 1).unwrap();
        assert_eq!(cert.pairs[0].success, vec![1.0]);
        assert_eq!(cert.m_hat, Some(0.01));
    }

    #[test]
    fn hopeless_grid_reported_unverified() {
        let m = ModelSpec::new(1, 1.0).unwrap().with_diffusion(|_, _, s| s[(0, 0)] = 0.1);
        let cfg = SimConfig::new(0.01, 1.0, 100, 0);
        let cert = empirical_tk_certificate(&m, RegimeId(0), 0.5, &cfg, &[(vec![0.0], vec![5.0])], &[0.5], 1).unwrap();
        assert!(!cert.verified());
        assert_eq!(cert.status(), "assumption unverified on grid");
    }
}
