//! Spot checks of a model against the standing assumptions: nonnegative
//! rates bounded by `H`, finite coefficients, and the Lyapunov inequality
//! `L_k V <= gamma_k (1 + V)`.

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{LyapunovSpec, Model, RateRow, RegimeId};
use crate::segment::HistorySegment;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NegativeRate,
    NonFiniteRate,
    RowSumExceedsBound,
    DiagonalEntry,
    DuplicateTarget,
    NonFiniteDrift,
    NonFiniteDiffusion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub regime: RegimeId,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at k={}", self.detail, self.regime)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub n_checked: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// How sample segments and regimes are drawn for spot checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleDomain {
    pub delay: f64,
    pub dt: f64,
    /// Sampled states lie in the ball of this radius.
    pub radius: f64,
    /// Regimes sampled when the model declares no truncation.
    pub regimes: usize,
}

impl SampleDomain {
    pub fn new(delay: f64, dt: f64, radius: f64, regimes: usize) -> Self {
        Self { delay, dt, radius, regimes }
    }

    fn n_regimes(&self, m: &dyn Model) -> usize {
        m.n_regimes().unwrap_or(self.regimes).max(1)
    }

    /// A smooth random segment: start point plus a scaled random walk,
    /// clipped to the sampling ball.
    pub fn sample_segment(&self, dim: usize, rng: &mut impl Rng) -> Result<HistorySegment> {
        let steps = crate::segment::grid_steps(self.delay, self.dt)?;
        let mut cur: Vec<f64> = (0..dim)
            .map(|_| self.radius * (2.0 * rng.random::<f64>() - 1.0) / (dim as f64).sqrt())
            .collect();
        let scale = self.radius / ((steps + 1) as f64).sqrt();
        let mut pts = Vec::with_capacity(steps + 1);
        for _ in 0..=steps {
            pts.push(cur.clone());
            for c in cur.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *c = (*c + 0.5 * scale * z).clamp(-self.radius, self.radius);
            }
        }
        HistorySegment::new(self.delay, self.dt, &pts, 0.0)
    }
}

fn guarded<T>(input: impl FnOnce() -> String, f: impl FnOnce() -> T) -> Result<T> {
    catch_unwind(AssertUnwindSafe(f)).map_err(|p| {
        let message = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "callback panicked".into());
        Error::ModelFault { input: input(), message }
    })
}

/// Checks one rate row against the structural rules and the bound `h`.
pub fn check_rate_row(row: &RateRow, k: RegimeId, h: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen: Vec<RegimeId> = Vec::new();
    for &(l, q) in row.entries() {
        if !q.is_finite() {
            out.push(Violation {
                kind: ViolationKind::NonFiniteRate,
                regime: k,
                detail: format!("non-finite rate q_{k}{l} = {q}"),
            });
        } else if q < 0.0 {
            out.push(Violation {
                kind: ViolationKind::NegativeRate,
                regime: k,
                detail: format!("negative rate q_{k}{l} = {q}"),
            });
        }
        if l == k {
            out.push(Violation {
                kind: ViolationKind::DiagonalEntry,
                regime: k,
                detail: format!("diagonal entry q_{k}{k} present"),
            });
        }
        if seen.contains(&l) {
            out.push(Violation {
                kind: ViolationKind::DuplicateTarget,
                regime: k,
                detail: format!("duplicate target {l}"),
            });
        }
        seen.push(l);
    }
    let sum = row.total();
    if sum > h {
        out.push(Violation {
            kind: ViolationKind::RowSumExceedsBound,
            regime: k,
            detail: format!("row sum {sum} > H = {h}"),
        });
    }
    out
}

/// Samples `n_samples` (segment, regime) pairs and reports every violated
/// rule. Deterministic given `seed`.
pub fn validate_model(
    m: &dyn Model,
    domain: &SampleDomain,
    n_samples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if n_samples == 0 {
        return Err(Error::Validation("n_samples must be at least 1".into()));
    }
    let d = m.dim();
    let h = m.rate_bound();
    let n_reg = domain.n_regimes(m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ValidationReport::default();
    let mut row = RateRow::new();
    let mut b = vec![0.0; d];
    let mut s = DMatrix::zeros(d, d);
    for _ in 0..n_samples {
        let seg = domain.sample_segment(d, &mut rng)?;
        let k = RegimeId(rng.random_range(0..n_reg));
        let x = seg.head().to_vec();
        let input = || format!("x={x:?}, k={k}");
        row.clear();
        guarded(input, || m.rates(&seg, k, &mut row))?;
        row.sort();
        report.violations.extend(check_rate_row(&row, k, h));
        guarded(input, || m.drift(&x, k, &mut b))?;
        if b.iter().any(|v| !v.is_finite()) {
            report.violations.push(Violation {
                kind: ViolationKind::NonFiniteDrift,
                regime: k,
                detail: format!("non-finite drift at x={x:?}"),
            });
        }
        guarded(input, || m.diffusion(&x, k, &mut s))?;
        if s.iter().any(|v| !v.is_finite()) {
            report.violations.push(Violation {
                kind: ViolationKind::NonFiniteDiffusion,
                regime: k,
                detail: format!("non-finite diffusion at x={x:?}"),
            });
        }
        report.n_checked += 1;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovPoint {
    pub x: Vec<f64>,
    pub k: RegimeId,
    /// `L_k V(x)`.
    pub generator: f64,
    /// `gamma_k (1 + V(x))`.
    pub bound: f64,
    pub flagged: bool,
    /// Finite differences disagreed between step `h` and `h/2`.
    pub fd_unreliable: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LyapunovReport {
    pub points: Vec<LyapunovPoint>,
    /// `V` grew along every sampled ray.
    pub coercive: bool,
}

impl LyapunovReport {
    pub fn n_flagged(&self) -> usize {
        self.points.iter().filter(|p| p.flagged || p.fd_unreliable).count()
    }

    pub fn passed(&self) -> bool {
        self.coercive && self.n_flagged() == 0
    }
}

fn fd_derivatives(v: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> (Vec<f64>, DMatrix<f64>) {
    let d = x.len();
    let mut g = vec![0.0; d];
    let mut hess = DMatrix::zeros(d, d);
    let mut p = x.to_vec();
    let v0 = v(x);
    for i in 0..d {
        p[i] = x[i] + h;
        let vp = v(&p);
        p[i] = x[i] - h;
        let vm = v(&p);
        p[i] = x[i];
        g[i] = (vp - vm) / (2.0 * h);
        hess[(i, i)] = (vp - 2.0 * v0 + vm) / (h * h);
        for j in 0..i {
            let mut eval = |si: f64, sj: f64| {
                p[i] = x[i] + si * h;
                p[j] = x[j] + sj * h;
                let r = v(&p);
                p[i] = x[i];
                p[j] = x[j];
                r
            };
            let mixed = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * h * h);
            hess[(i, j)] = mixed;
            hess[(j, i)] = mixed;
        }
    }
    (g, hess)
}

fn generator_value(b: &[f64], a: &DMatrix<f64>, g: &[f64], hess: &DMatrix<f64>) -> f64 {
    let drift: f64 = b.iter().zip(g).map(|(bi, gi)| bi * gi).sum();
    0.5 * a.component_mul(hess).sum() + drift
}

/// Evaluates `L_k V = tr(sigma sigma^T D^2 V)/2 + <b, DV>` at each sample and
/// flags points exceeding `gamma_k (1 + V)`.
pub fn lyapunov_check(
    m: &dyn Model,
    lyap: &LyapunovSpec,
    samples: &[(Vec<f64>, RegimeId)],
) -> Result<LyapunovReport> {
    let d = m.dim();
    let mut b = vec![0.0; d];
    let mut s = DMatrix::zeros(d, d);
    let mut points = Vec::with_capacity(samples.len());
    for (x, k) in samples {
        if x.len() != d {
            return Err(Error::Shape(format!("sample of length {} for a {d}-dimensional model", x.len())));
        }
        let k = *k;
        let input = || format!("x={x:?}, k={k}");
        guarded(input, || m.drift(x, k, &mut b))?;
        guarded(input, || m.diffusion(x, k, &mut s))?;
        let a = &s * s.transpose();
        let v_at = |y: &[f64]| (lyap.v)(y, k);
        let v0 = v_at(x);
        let (value, fd_unreliable) = match (&lyap.gradient, &lyap.hessian) {
            (Some(gf), Some(hf)) => {
                let mut g = vec![0.0; d];
                let mut hess = DMatrix::zeros(d, d);
                gf(x, k, &mut g);
                hf(x, k, &mut hess);
                (generator_value(&b, &a, &g, &hess), false)
            }
            _ => {
                let scale = x.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
                let h = lyap.h_fd * scale;
                let (g1, h1) = fd_derivatives(&v_at, x, h);
                let (g2, h2) = fd_derivatives(&v_at, x, 0.5 * h);
                let l1 = generator_value(&b, &a, &g1, &h1);
                let l2 = generator_value(&b, &a, &g2, &h2);
                let bad = !l1.is_finite() || (l1 - l2).abs() > 1e-3 * (1.0 + l2.abs());
                (l2, bad)
            }
        };
        let bound = lyap.gamma_for(k) * (1.0 + v0);
        points.push(LyapunovPoint {
            x: x.clone(),
            k,
            generator: value,
            bound,
            flagged: !(value <= bound),
            fd_unreliable,
        });
    }
    let coercive = ray_growth(m.dim(), lyap, samples.first().map(|s| s.1).unwrap_or_default());
    Ok(LyapunovReport { points, coercive })
}

/// `V` increases along the coordinate rays `+-e_i` over radii 1..1e3.
fn ray_growth(d: usize, lyap: &LyapunovSpec, k: RegimeId) -> bool {
    let radii = [1.0, 10.0, 100.0, 1000.0];
    (0..d).all(|i| {
        [1.0, -1.0].iter().all(|sign| {
            let vals: Vec<f64> = radii
                .iter()
                .map(|r| {
                    let mut x = vec![0.0; d];
                    x[i] = sign * r;
                    (lyap.v)(&x, k)
                })
                .collect();
            vals.windows(2).all(|w| w[1] > w[0])
        })
    })
}
