//! Small built-in models: logistic growth with multiplicative noise, and a
//! regime-switching Ornstein-Uhlenbeck process with Gaussian frozen marginals.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, RegimeId};

fn positive_per_regime(name: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Validation(format!("{name} needs {n} entries, got {}", v.len())));
    }
    if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::Validation(format!("{name} entries must be positive")));
    }
    Ok(())
}

fn check_rate_matrix(q: &[Vec<f64>], rate_bound: f64) -> Result<()> {
    for (k, row) in q.iter().enumerate() {
        if row.len() != q.len() {
            return Err(Error::Shape(format!("rate matrix row {} has {} entries", k + 1, row.len())));
        }
        let sum: f64 = row.iter().enumerate().filter(|(l, _)| *l != k).map(|(_, v)| *v).sum();
        if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Validation(format!("rate matrix row {} has a negative entry", k + 1)));
        }
        if sum > rate_bound {
            return Err(Error::RateBoundExceeded { sum, bound: rate_bound, regime: k + 1 });
        }
    }
    Ok(())
}

/// `dX = X (a - b X) dt + sigma X dB` per regime, with constant switching
/// rates `q`. States are clamped at 0 after every step; 0 is absorbing.
pub fn logistic_model(a: Vec<f64>, b: Vec<f64>, sigma: Vec<f64>, q: Vec<Vec<f64>>, rate_bound: f64) -> Result<ModelSpec> {
    let n = q.len();
    positive_per_regime("a", &a, n)?;
    positive_per_regime("b", &b, n)?;
    positive_per_regime("sigma", &sigma, n)?;
    check_rate_matrix(&q, rate_bound)?;
    Ok(ModelSpec::new(1, rate_bound)?
        .named("logistic")
        .with_drift(move |x, k, out| out[0] = x[0] * (a[k.0] - b[k.0] * x[0]))
        .with_diffusion(move |x, k, out| out[(0, 0)] = sigma[k.0] * x[0])
        .with_constant_rates(q)
        .with_projection(|x| x[0] = x[0].max(0.0)))
}

/// Frozen-regime Gaussian laws of the benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct OuOracle {
    pub theta: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl OuOracle {
    /// `sigma^2/(2 theta)`.
    pub fn stationary_variance(&self, k: RegimeId) -> f64 {
        self.sigma[k.0].powi(2) / (2.0 * self.theta[k.0])
    }

    pub fn stationary_density(&self, x: f64, k: RegimeId) -> f64 {
        let v = self.stationary_variance(k);
        (-x * x / (2.0 * v)).exp() / (2.0 * PI * v).sqrt()
    }

    /// Mean and variance at time `t` from `x0` with the regime held at `k`.
    pub fn frozen_marginal(&self, x0: f64, t: f64, k: RegimeId) -> (f64, f64) {
        let th = self.theta[k.0];
        (x0 * (-th * t).exp(), self.stationary_variance(k) * (1.0 - (-2.0 * th * t).exp()))
    }
}

/// `dX = -theta X dt + sigma dB` per regime with constant rates `q`.
pub fn ou_benchmark(theta: Vec<f64>, sigma: Vec<f64>, q: Vec<Vec<f64>>, rate_bound: f64) -> Result<(ModelSpec, OuOracle)> {
    let n = q.len();
    positive_per_regime("theta", &theta, n)?;
    if sigma.len() != n || sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::Validation(format!("sigma needs {n} nonnegative entries")));
    }
    check_rate_matrix(&q, rate_bound)?;
    let oracle = OuOracle { theta: theta.clone(), sigma: sigma.clone() };
    let spec = ModelSpec::new(1, rate_bound)?
        .named("ou_benchmark")
        .with_drift(move |x, k, out| out[0] = -theta[k.0] * x[0])
        .with_diffusion(move |_, k, out| out[(0, 0)] = sigma[k.0])
        .with_constant_rates(q);
    Ok((spec, oracle))
}

/// The two-regime benchmark used throughout the tests:
/// `theta = (1, 2)`, `sigma = (sqrt 2, 1)`, `q_12 = q_21 = 1/2`, `H = 1/2`.
pub fn default_ou() -> (ModelSpec, OuOracle) {
    ou_benchmark(vec![1.0, 2.0], vec![2f64.sqrt(), 1.0], vec![vec![0.0, 0.5], vec![0.5, 0.0]], 0.5)
        .expect("benchmark parameters are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, SimConfig};
    use crate::segment::HistorySegment;
    use crate::switching::simulate_hybrid;

    #[test]
    fn logistic_zero_is_absorbing() {
        let m = logistic_model(vec![1.0], vec![2.0], vec![0.3], vec![vec![0.0]], 1.0).unwrap();
        let mut b = [1.0];
        let mut s = nalgebra::DMatrix::zeros(1, 1);
        m.drift(&[0.0], RegimeId(0), &mut b);
        m.diffusion(&[0.0], RegimeId(0), &mut s);
        assert_eq!((b[0], s[(0, 0)]), (0.0, 0.0));
        m.drift(&[0.5], RegimeId(0), &mut b);
        assert_eq!(b[0], 0.0);
    }

    #[test]
    fn logistic_deterministic_limit() {
        let m = logistic_model(vec![1.0], vec![2.0], vec![1e-300], vec![vec![0.0]], 1.0).unwrap();
        let cfg = SimConfig::new(1e-2, 20.0, 1, 0);
        let init = HistorySegment::constant(0.1, 1e-2, &[0.05]).unwrap();
        let mut rng = crate::batch::path_rng(0, 0);
        let path = simulate_hybrid(&m, &init, RegimeId(0), &cfg, &mut rng).unwrap();
        let last = path.state(path.len() - 1)[0];
        assert!((last - 0.5).abs() < 1e-6, "{last}");
    }

    #[test]
    fn ou_oracle_values() {
        let (_, o) = ou_benchmark(vec![1.0], vec![2f64.sqrt()], vec![vec![0.0]], 1.0).unwrap();
        assert!((o.stationary_variance(RegimeId(0)) - 1.0).abs() < 1e-15);
        let (m, v) = o.frozen_marginal(2.0, 1.0, RegimeId(0));
        assert!((m - 2.0 * (-1f64).exp()).abs() < 1e-15);
        assert!((v - (1.0 - (-2f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn rate_bound_enforced() {
        assert!(ou_benchmark(vec![1.0, 1.0], vec![1.0, 1.0], vec![vec![0.0, 2.0], vec![1.0, 0.0]], 1.0).is_err());
    }

    #[test]
    fn symmetric_rates_balance_occupancy() {
        let (m, _) = default_ou();
        let cfg = SimConfig::new(1e-2, 2000.0, 1, 3);
        let init = HistorySegment::constant(1.0, 1e-2, &[0.0]).unwrap();
        let mut rng = crate::batch::path_rng(3, 0);
        let path = simulate_hybrid(&m, &init, RegimeId(0), &cfg, &mut rng).unwrap();
        let frac = path.regimes.iter().filter(|k| k.0 == 0).count() as f64 / path.regimes.len() as f64;
        assert!((frac - 0.5).abs() < 0.05, "{frac}");
    }

    #[test]
    fn vanishing_noise_collapses() {
        let (m, _) = ou_benchmark(vec![1.0], vec![0.0], vec![vec![0.0]], 1.0).unwrap();
        let cfg = SimConfig::new(1e-2, 30.0, 1, 0);
        let init = HistorySegment::constant(0.1, 1e-2, &[3.0]).unwrap();
        let mut rng = crate::batch::path_rng(0, 0);
        let path = simulate_hybrid(&m, &init, RegimeId(0), &cfg, &mut rng).unwrap();
        assert!(path.state(path.len() - 1)[0].abs() < 1e-10);
    }
}
