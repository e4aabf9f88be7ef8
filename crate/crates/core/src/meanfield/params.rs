use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::gfunc::GParams;
use crate::error::{Error, Result};
use crate::model::{LyapunovSpec, Model, ModelSpec, RateRow, RegimeId};
use crate::segment::HistorySegment;

/// Per-body noise intensities `sigma_i(x, k)`, written into `out`.
pub type SigmaFn = dyn Fn(&[f64], RegimeId, &mut [f64]) + Send + Sync;
pub type MfRatesFn = dyn Fn(&HistorySegment, RegimeId, &mut RateRow) + Send + Sync;

/// The N-body mean-field system with diagonal noise.
#[derive(Clone)]
pub struct MeanFieldParams {
    pub n: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma: Arc<SigmaFn>,
    /// Ellipticity constant in `(0, 1]`.
    pub lambda0: f64,
    /// Splitting level in `(0, lambda0)`.
    pub lambda: f64,
    pub rate_bound: f64,
    pub rates: Arc<MfRatesFn>,
    /// Radius of the sampling box for the spot checks.
    pub sample_radius: f64,
}

impl fmt::Debug for MeanFieldParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeanFieldParams")
            .field("n", &self.n)
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("lambda0", &self.lambda0)
            .field("lambda", &self.lambda)
            .field("rate_bound", &self.rate_bound)
            .finish_non_exhaustive()
    }
}

/// Demo switching: two regimes whose rates follow the time-averaged
/// ensemble mean `m` over the segment, `q_12 = (1 + tanh m)/2`,
/// `q_21 = (1 - tanh m)/2`. Row sums stay below 1.
pub fn default_mf_rates(seg: &HistorySegment, k: RegimeId, out: &mut RateRow) {
    let dim = seg.dim() as f64;
    let avg = seg.time_average();
    let m = avg.iter().sum::<f64>() / dim;
    match k.0 {
        0 => out.push(RegimeId(1), 0.5 * (1.0 + m.tanh())),
        1 => out.push(RegimeId(0), 0.5 * (1.0 - m.tanh())),
        _ => {}
    }
}

impl MeanFieldParams {
    /// Unit noise, `lambda = lambda0/2`, and the demo switching rule.
    pub fn new(n: usize, alpha: Vec<f64>, beta: Vec<f64>, lambda0: f64) -> Result<Self> {
        let p = Self {
            n,
            alpha,
            beta,
            sigma: Arc::new(|_, _, out: &mut [f64]| out.fill(1.0)),
            lambda0,
            lambda: 0.5 * lambda0,
            rate_bound: 1.0,
            rates: Arc::new(default_mf_rates),
            sample_radius: 3.0,
        };
        p.check_scalars()?;
        Ok(p)
    }

    pub fn with_sigma(mut self, f: impl Fn(&[f64], RegimeId, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.sigma = Arc::new(f);
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        self.lambda = lambda;
        self.check_scalars()?;
        Ok(self)
    }

    pub fn with_rates(
        mut self,
        rate_bound: f64,
        f: impl Fn(&HistorySegment, RegimeId, &mut RateRow) + Send + Sync + 'static,
    ) -> Self {
        self.rate_bound = rate_bound;
        self.rates = Arc::new(f);
        self
    }

    pub fn n_regimes(&self) -> usize {
        self.alpha.len()
    }

    fn check_scalars(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Validation("N must be positive".into()));
        }
        if self.alpha.is_empty() || self.alpha.len() != self.beta.len() {
            return Err(Error::Validation("alpha and beta need one entry per regime".into()));
        }
        if self.alpha.iter().chain(&self.beta).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Validation("alpha and beta must be positive and finite".into()));
        }
        if !(self.lambda0 > 0.0 && self.lambda0 <= 1.0) {
            return Err(Error::Validation(format!("lambda0 must lie in (0, 1], got {}", self.lambda0)));
        }
        if !(self.lambda > 0.0 && self.lambda < self.lambda0) {
            return Err(Error::Validation(format!(
                "lambda must lie in (0, lambda0) = (0, {}), got {}",
                self.lambda0, self.lambda
            )));
        }
        Ok(())
    }

    pub fn sigma_at(&self, x: &[f64], k: RegimeId) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        (self.sigma)(x, k, &mut s);
        s
    }

    /// Random points in the sampling box, one regime each.
    fn sample_points(&self, count: usize, seed: u64) -> Vec<(Vec<f64>, RegimeId)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = self.sample_radius;
        (0..count)
            .map(|_| {
                let x = (0..self.n).map(|_| rng.random_range(-r..=r)).collect();
                (x, RegimeId(rng.random_range(0..self.n_regimes())))
            })
            .collect()
    }

    /// Checks `lambda0 <= sigma_i^2 <= 1/lambda0` on samples (for diagonal
    /// noise this is the two-sided ellipticity bound) and estimates the
    /// constants of the drift condition.
    pub fn validate(&self, n_samples: usize, seed: u64) -> Result<SampledConstants> {
        self.check_scalars()?;
        let pts = self.sample_points(n_samples, seed);
        let mut theta: f64 = 0.0;
        for (x, k) in &pts {
            let s = self.sigma_at(x, *k);
            for (i, si) in s.iter().enumerate() {
                let s2 = si * si;
                if !(s2 >= self.lambda0 && s2 <= 1.0 / self.lambda0) {
                    return Err(Error::Validation(format!(
                        "ellipticity violated: sigma_{}^2 = {s2} outside [{}, {}] at x = {x:?}, k = {k}",
                        i + 1,
                        self.lambda0,
                        1.0 / self.lambda0
                    )));
                }
            }
            let split = lambda_split(&s, self.lambda)?;
            theta = theta.max(split.sigma_lambda.iter().map(|v| v * v).sum());
        }
        let lip = self.split_lipschitz(n_samples, seed ^ 0x5a5a)?;
        let k_const = 1.1 * lip;
        let kappa = k_const * k_const + 2.0 * self.alpha.iter().cloned().fold(0.0, f64::max);
        Ok(SampledConstants { theta: 1.1 * theta, k_const, kappa })
    }

    /// Largest sampled `|sigma_lambda(x) - sigma_lambda(z)|_F / |x - z|`, pairs at
    /// separations spread over several scales.
    pub fn split_lipschitz(&self, n_samples: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best: f64 = 0.0;
        let r = self.sample_radius;
        for _ in 0..n_samples {
            let k = RegimeId(rng.random_range(0..self.n_regimes()));
            let x: Vec<f64> = (0..self.n).map(|_| rng.random_range(-r..=r)).collect();
            let scale = 10f64.powf(rng.random_range(-3.0..0.0));
            let z: Vec<f64> = x.iter().map(|v| v + scale * rng.random_range(-1.0..=1.0)).collect();
            let sx = lambda_split(&self.sigma_at(&x, k), self.lambda)?;
            let sz = lambda_split(&self.sigma_at(&z, k), self.lambda)?;
            let num: f64 = sx.sigma_lambda.iter().zip(&sz.sigma_lambda).map(|(a, b)| (a - b) * (a - b)).sum();
            let den: f64 = x.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
            if den > 0.0 {
                best = best.max((num / den).sqrt());
            }
        }
        Ok(best)
    }

    pub fn g_params(&self, c: &SampledConstants) -> Result<GParams> {
        GParams::new(c.kappa, self.lambda, self.n as f64, c.theta)
    }
}

/// Constants estimated on the validation sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledConstants {
    /// Inflated bound on `|sigma_lambda|_F^2`.
    pub theta: f64,
    /// Inflated Lipschitz constant of `sigma_lambda`.
    pub k_const: f64,
    /// `K^2 + 2 sup_k alpha(k)`.
    pub kappa: f64,
}

/// `b_i = alpha x_i - x_i^3 - beta (x_i - mean(x))`.
pub fn mf_drift(x: &[f64], alpha: f64, beta: f64, out: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    for (o, &xi) in out.iter_mut().zip(x) {
        *o = alpha * xi - xi * xi * xi - beta * (xi - mean);
    }
}

/// Diagonal split `sigma^2 = lambda + sigma_lambda^2`; the common channel has
/// intensity `sqrt(lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDiffusion {
    pub sigma_lambda: Vec<f64>,
    pub common: f64,
}

pub fn lambda_split(sigma: &[f64], lambda: f64) -> Result<SplitDiffusion> {
    let mut out = Vec::with_capacity(sigma.len());
    for (i, s) in sigma.iter().enumerate() {
        let rest = s * s - lambda;
        if !(rest > 0.0) {
            return Err(Error::Validation(format!(
                "sigma_{}^2 = {} does not exceed lambda = {lambda}",
                i + 1,
                s * s
            )));
        }
        let sl = rest.sqrt();
        if (lambda + sl * sl - s * s).abs() > 1e-12 * (1.0 + s * s) {
            return Err(Error::NumericOverflow(format!("split identity lost precision for sigma = {s}")));
        }
        out.push(sl);
    }
    Ok(SplitDiffusion { sigma_lambda: out, common: lambda.sqrt() })
}

/// The mean-field system as a simulation model, with `V = |x|^2 + 1` and the
/// dissipation constant found by a sample scan.
pub struct MeanFieldModel {
    pub spec: ModelSpec,
    pub lyapunov: LyapunovSpec,
    /// Smallest `K` with `L_k V <= -V + K` on the scan.
    pub dissipation_k: f64,
    pub constants: SampledConstants,
}

/// `L_k V + V` at `x` for `V = |x|^2 + 1`.
pub fn dissipation_excess(p: &MeanFieldParams, x: &[f64], k: RegimeId) -> f64 {
    let mut b = vec![0.0; x.len()];
    mf_drift(x, p.alpha[k.0], p.beta[k.0], &mut b);
    let s = p.sigma_at(x, k);
    let lv: f64 = s.iter().map(|v| v * v).sum::<f64>() + 2.0 * x.iter().zip(&b).map(|(a, c)| a * c).sum::<f64>();
    lv + x.iter().map(|v| v * v).sum::<f64>() + 1.0
}

pub fn mf_model(p: &MeanFieldParams, n_samples: usize, seed: u64) -> Result<MeanFieldModel> {
    let constants = p.validate(n_samples, seed)?;
    let dissipation_k = p
        .sample_points(n_samples, seed ^ 0xd155)
        .iter()
        .map(|(x, k)| dissipation_excess(p, x, *k))
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);

    let (alpha, beta, sigma) = (p.alpha.clone(), p.beta.clone(), p.sigma.clone());
    let n = p.n;
    let rates = p.rates.clone();
    let spec = ModelSpec::new(n, p.rate_bound)?
        .named("meanfield")
        .with_regimes(p.n_regimes())
        .with_drift(move |x, k, out| mf_drift(x, alpha[k.0], beta[k.0], out))
        .with_diffusion(move |x, k, out: &mut DMatrix<f64>| {
            let mut s = vec![0.0; n];
            sigma(x, k, &mut s);
            out.fill(0.0);
            for i in 0..n {
                out[(i, i)] = s[i];
            }
        })
        .with_rates(move |seg, k, out| rates(seg, k, out));
    let gamma = p.alpha.iter().map(|a| 2.0 * a + n as f64 / p.lambda0).collect();
    let lyapunov = LyapunovSpec::new(|x, _| 1.0 + x.iter().map(|v| v * v).sum::<f64>(), gamma).with_derivatives(
        |x, _, g| {
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi = 2.0 * xi;
            }
        },
        |_, _, h| {
            h.fill(0.0);
            for i in 0..h.nrows() {
                h[(i, i)] = 2.0;
            }
        },
    );
    debug_assert_eq!(spec.dim(), n);
    Ok(MeanFieldModel { spec, lyapunov, dissipation_k, constants })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_examples() {
        let mut out = vec![0.0; 2];
        mf_drift(&[0.0, 0.0], 1.0, 2.0, &mut out);
        assert_eq!(out, vec![0.0, 0.0]);
        mf_drift(&[1.0, -1.0], 1.0, 2.0, &mut out);
        assert_eq!(out, vec![-2.0, 2.0]);
    }

    #[test]
    fn split_examples() {
        let s = lambda_split(&[1.0, 1.0], 0.5).unwrap();
        assert!(s.sigma_lambda.iter().all(|v| (v - 0.5f64.sqrt()).abs() < 1e-15));
        assert!((s.common - 0.5f64.sqrt()).abs() < 1e-15);
        let s = lambda_split(&[1.3], 1e-14).unwrap();
        assert!((s.sigma_lambda[0] - 1.3).abs() < 1e-13);
        assert!(lambda_split(&[0.5], 0.25).is_err());
    }

    #[test]
    fn unit_noise_accepted() {
        let p = MeanFieldParams::new(2, vec![1.0], vec![1.0], 1.0).unwrap();
        let c = p.validate(500, 1).unwrap();
        assert_eq!(c.k_const, 0.0);
        assert_eq!(c.kappa, 2.0);
        assert!((c.theta - 1.1 * 2.0 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn growing_noise_rejected() {
        let p = MeanFieldParams::new(1, vec![1.0], vec![1.0], 0.9)
            .unwrap()
            .with_sigma(|x, _, out| out[0] = (1.0 + x[0] * x[0]).sqrt());
        let err = p.validate(500, 1).unwrap_err().to_string();
        assert!(err.contains("ellipticity"), "{err}");
    }

    #[test]
    fn split_lipschitz_within_bound() {
        // sigma_i = 1 + 0.2 sin(x_i): Lipschitz 0.2, values in [0.8, 1.2]
        let lambda0: f64 = 0.6;
        let p = MeanFieldParams::new(3, vec![1.0], vec![1.0], lambda0)
            .unwrap()
            .with_sigma(|x, _, out| {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = 1.0 + 0.2 * v.sin();
                }
            });
        let ratio = p.split_lipschitz(2000, 3).unwrap();
        let bound = 0.2 / (lambda0 * (lambda0 - p.lambda)).sqrt();
        assert!(ratio > 0.0 && ratio <= bound, "{ratio} vs {bound}");
    }

    #[test]
    fn dissipation_scan_covers_far_point() {
        let p = MeanFieldParams::new(1, vec![1.0], vec![1.0], 1.0).unwrap();
        let m = mf_model(&p, 2000, 0).unwrap();
        let x = [10.0];
        let lv = 1.0 + 2.0 * (100.0 - 10_000.0);
        assert!((dissipation_excess(&p, &x, RegimeId(0)) - (lv + 101.0)).abs() < 1e-9);
        assert!(lv <= -101.0 + m.dissipation_k);
        assert!(m.dissipation_k > 0.0);
    }
}
