//! Model interface: drift `b(x,k)`, diffusion `sigma(x,k)`, segment-dependent
//! switching rates `q_kl(phi)` and the global rate bound `H`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::HistorySegment;

/// Regime index, 0-based in memory and 1-based whenever printed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RegimeId(pub usize);

impl RegimeId {
    /// Parses the 1-based label used in files and on the command line.
    pub fn from_label(label: usize) -> Result<Self> {
        if label == 0 {
            return Err(Error::Validation("regime labels start at 1".into()));
        }
        Ok(RegimeId(label - 1))
    }

    pub fn label(self) -> usize {
        self.0 + 1
    }
}

impl fmt::Display for RegimeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0 + 1)
    }
}

/// Sparse off-diagonal rate row `{l: q_kl}`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RateRow {
    entries: Vec<(RegimeId, f64)>,
}

impl RateRow {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (RegimeId, f64)>) -> Self {
        let mut row = Self { entries: pairs.into_iter().collect() };
        row.sort();
        row
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn push(&mut self, target: RegimeId, rate: f64) {
        self.entries.push((target, rate));
    }

    /// Puts entries in ascending target order; stable, so duplicates keep
    /// their relative order and are caught by [`RateRow::check`].
    pub fn sort(&mut self) {
        self.entries.sort_by_key(|e| e.0);
    }

    pub fn entries(&self) -> &[(RegimeId, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Row sum accumulated in ascending target order.
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// Rate to `target`, zero when absent.
    pub fn get(&self, target: RegimeId) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.0 == target)
            .map(|e| e.1)
            .sum()
    }

    /// Structural checks for a row leaving `source`: finite, nonnegative,
    /// no self-entry, no duplicate target.
    pub fn check(&self, source: RegimeId) -> Result<()> {
        let mut prev: Option<RegimeId> = None;
        for &(l, q) in &self.entries {
            if !q.is_finite() {
                return Err(Error::Validation(format!("non-finite rate q_{source}{l} = {q}")));
            }
            if q < 0.0 {
                return Err(Error::Validation(format!("negative rate q_{source}{l} = {q}")));
            }
            if l == source {
                return Err(Error::Validation(format!("diagonal entry q_{source}{source} present")));
            }
            if prev == Some(l) {
                return Err(Error::Validation(format!("duplicate target {l} in row {source}")));
            }
            prev = Some(l);
        }
        Ok(())
    }
}

/// A regime-switching diffusion with segment-dependent switching.
///
/// Implementations must be pure functions of their arguments: simulation
/// workers call them concurrently.
pub trait Model: Send + Sync {
    fn dim(&self) -> usize;

    /// Global bound `H` on every row sum.
    fn rate_bound(&self) -> f64;

    /// Finite truncation of the regime space, if the model declares one.
    fn n_regimes(&self) -> Option<usize> {
        None
    }

    fn drift(&self, x: &[f64], k: RegimeId, out: &mut [f64]);

    /// Writes the `d x d` diffusion matrix into `out`.
    fn diffusion(&self, x: &[f64], k: RegimeId, out: &mut DMatrix<f64>);

    /// Writes the off-diagonal rates `q_k.(phi)` into `out` (already cleared).
    fn rates(&self, seg: &HistorySegment, k: RegimeId, out: &mut RateRow);

    /// Post-step state correction, e.g. a positivity clamp. No-op by default.
    fn project(&self, _x: &mut [f64]) {}
}

pub type DriftFn = dyn Fn(&[f64], RegimeId, &mut [f64]) + Send + Sync;
pub type DiffusionFn = dyn Fn(&[f64], RegimeId, &mut DMatrix<f64>) + Send + Sync;
pub type RatesFn = dyn Fn(&HistorySegment, RegimeId, &mut RateRow) + Send + Sync;
pub type ProjectFn = dyn Fn(&mut [f64]) + Send + Sync;

/// Closure-backed [`Model`].
#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    dim: usize,
    rate_bound: f64,
    n_regimes: Option<usize>,
    drift: Arc<DriftFn>,
    diffusion: Arc<DiffusionFn>,
    rates: Arc<RatesFn>,
    project: Option<Arc<ProjectFn>>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("rate_bound", &self.rate_bound)
            .field("n_regimes", &self.n_regimes)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    /// Zero drift, zero diffusion, no switching.
    pub fn new(dim: usize, rate_bound: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("model dimension must be positive".into()));
        }
        if !(rate_bound.is_finite() && rate_bound > 0.0) {
            return Err(Error::Validation(format!("rate bound H must be positive, got {rate_bound}")));
        }
        Ok(Self {
            name: "custom".into(),
            dim,
            rate_bound,
            n_regimes: None,
            drift: Arc::new(|_, _, out: &mut [f64]| out.fill(0.0)),
            diffusion: Arc::new(|_, _, out: &mut DMatrix<f64>| out.fill(0.0)),
            rates: Arc::new(|_, _, _| {}),
            project: None,
        })
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_regimes(mut self, n: usize) -> Self {
        self.n_regimes = Some(n);
        self
    }

    pub fn with_drift(
        mut self,
        f: impl Fn(&[f64], RegimeId, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.drift = Arc::new(f);
        self
    }

    pub fn with_diffusion(
        mut self,
        f: impl Fn(&[f64], RegimeId, &mut DMatrix<f64>) + Send + Sync + 'static,
    ) -> Self {
        self.diffusion = Arc::new(f);
        self
    }

    pub fn with_rates(
        mut self,
        f: impl Fn(&HistorySegment, RegimeId, &mut RateRow) + Send + Sync + 'static,
    ) -> Self {
        self.rates = Arc::new(f);
        self
    }

    /// Constant (segment-independent) rate matrix; `q[k][l]` for `k != l`,
    /// diagonal ignored.
    pub fn with_constant_rates(self, q: Vec<Vec<f64>>) -> Self {
        let n = q.len();
        self.with_regimes(n).with_rates(move |_, k, out| {
            if let Some(row) = q.get(k.0) {
                for (l, &rate) in row.iter().enumerate() {
                    if l != k.0 && rate != 0.0 {
                        out.push(RegimeId(l), rate);
                    }
                }
            }
        })
    }

    pub fn with_projection(mut self, f: impl Fn(&mut [f64]) + Send + Sync + 'static) -> Self {
        self.project = Some(Arc::new(f));
        self
    }
}

impl Model for ModelSpec {
    fn dim(&self) -> usize {
        self.dim
    }

    fn rate_bound(&self) -> f64 {
        self.rate_bound
    }

    fn n_regimes(&self) -> Option<usize> {
        self.n_regimes
    }

    fn drift(&self, x: &[f64], k: RegimeId, out: &mut [f64]) {
        (self.drift)(x, k, out)
    }

    fn diffusion(&self, x: &[f64], k: RegimeId, out: &mut DMatrix<f64>) {
        (self.diffusion)(x, k, out)
    }

    fn rates(&self, seg: &HistorySegment, k: RegimeId, out: &mut RateRow) {
        (self.rates)(seg, k, out)
    }

    fn project(&self, x: &mut [f64]) {
        if let Some(p) = &self.project {
            p(x)
        }
    }
}

/// The same model with switching switched off, so the regime stays at its
/// starting value.
pub struct FrozenModel<'a> {
    inner: &'a dyn Model,
}

impl<'a> FrozenModel<'a> {
    pub fn new(inner: &'a dyn Model) -> Self {
        Self { inner }
    }
}

impl Model for FrozenModel<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn rate_bound(&self) -> f64 {
        self.inner.rate_bound()
    }

    fn n_regimes(&self) -> Option<usize> {
        self.inner.n_regimes()
    }

    fn drift(&self, x: &[f64], k: RegimeId, out: &mut [f64]) {
        self.inner.drift(x, k, out)
    }

    fn diffusion(&self, x: &[f64], k: RegimeId, out: &mut DMatrix<f64>) {
        self.inner.diffusion(x, k, out)
    }

    fn rates(&self, _seg: &HistorySegment, _k: RegimeId, _out: &mut RateRow) {}

    fn project(&self, x: &mut [f64]) {
        self.inner.project(x)
    }
}

/// Simulation controls shared by the single and coupled simulators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    /// Distance below which two coupled copies in the same regime are glued.
    pub meet_eps: f64,
    /// Abort radius; a path leaving the ball `|x| <= state_cap` is flagged.
    #[serde(default)]
    pub state_cap: Option<f64>,
}

impl SimConfig {
    /// Defaults `meet_eps` to `0.01 * sqrt(dt)`.
    pub fn new(dt: f64, horizon: f64, n_paths: usize, seed: u64) -> Self {
        Self { dt, horizon, n_paths, seed, meet_eps: 1e-2 * dt.sqrt(), state_cap: None }
    }

    pub fn with_meet_eps(mut self, eps: f64) -> Self {
        self.meet_eps = eps;
        self
    }

    pub fn with_state_cap(mut self, cap: f64) -> Self {
        self.state_cap = Some(cap);
        self
    }

    /// Checks ranges; `delay` is the segment length `r` of the model run.
    pub fn validate(&self, delay: f64) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.dt) {
            return Err(Error::Validation(format!(
                "horizon {} must be finite and at least dt = {}",
                self.horizon, self.dt
            )));
        }
        if self.n_paths == 0 {
            return Err(Error::Validation("n_paths must be positive".into()));
        }
        if !(self.meet_eps.is_finite() && self.meet_eps > 0.0) {
            return Err(Error::Validation(format!("meet_eps must be positive, got {}", self.meet_eps)));
        }
        if let Some(cap) = self.state_cap {
            if !(cap > 0.0) {
                return Err(Error::Validation(format!("state_cap must be positive, got {cap}")));
            }
        }
        crate::segment::grid_steps(delay, self.dt)?;
        Ok(())
    }

    /// Number of Euler steps needed to reach the horizon.
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil().max(1.0) as usize
    }
}

pub type LyapunovFn = dyn Fn(&[f64], RegimeId) -> f64 + Send + Sync;
pub type GradientFn = dyn Fn(&[f64], RegimeId, &mut [f64]) + Send + Sync;
pub type HessianFn = dyn Fn(&[f64], RegimeId, &mut DMatrix<f64>) + Send + Sync;

/// Lyapunov function `V(x,k)` with per-regime constants `gamma_k`.
#[derive(Clone)]
pub struct LyapunovSpec {
    pub v: Arc<LyapunovFn>,
    pub gamma: Vec<f64>,
    pub gradient: Option<Arc<GradientFn>>,
    pub hessian: Option<Arc<HessianFn>>,
    /// Finite-difference step used when derivatives are not supplied.
    pub h_fd: f64,
}

impl LyapunovSpec {
    pub fn new(v: impl Fn(&[f64], RegimeId) -> f64 + Send + Sync + 'static, gamma: Vec<f64>) -> Self {
        Self { v: Arc::new(v), gamma, gradient: None, hessian: None, h_fd: 1e-4 }
    }

    pub fn with_derivatives(
        mut self,
        gradient: impl Fn(&[f64], RegimeId, &mut [f64]) + Send + Sync + 'static,
        hessian: impl Fn(&[f64], RegimeId, &mut DMatrix<f64>) + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self.hessian = Some(Arc::new(hessian));
        self
    }

    /// `gamma_k`; the last entry covers regimes beyond the list.
    pub fn gamma_for(&self, k: RegimeId) -> f64 {
        self.gamma
            .get(k.0)
            .or(self.gamma.last())
            .copied()
            .unwrap_or(0.0)
    }

    /// `|x|^2 + 1`, the default choice for the built-in models.
    pub fn quadratic(gamma: Vec<f64>) -> Self {
        Self::new(|x, _| x.iter().map(|v| v * v).sum::<f64>() + 1.0, gamma).with_derivatives(
            |x, _, g| {
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi = 2.0 * xi;
                }
            },
            |_, _, h| {
                h.fill(0.0);
                h.fill_diagonal(2.0);
            },
        )
    }
}
