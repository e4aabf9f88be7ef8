//! The radial test function `G` behind the mean-field coupling bound.
//!
//! With `g(r) = kappa r/(4 lambda) - r^3/(16 N (lambda + theta))` and
//! `Phi(v) = int_0^v g`, the profile is `f(s) = int_s^inf exp(Phi(v) - Phi(s)) dv`
//! and `G(rho) = int_0^rho f`. It satisfies `G'' = -1 - g G'`.

use std::io::Write;

use super::quad::adaptive_simpson;
use crate::csvout::{self, header, real};
use crate::error::{Error, Result};

/// Log-integrand drop at which the improper inner integral is cut off.
pub const CUTOFF_DROP: f64 = 40.0;

/// Default relative quadrature tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GParams {
    pub kappa: f64,
    pub lambda: f64,
    pub n: f64,
    pub theta: f64,
}

impl GParams {
    pub fn new(kappa: f64, lambda: f64, n: f64, theta: f64) -> Result<Self> {
        for (name, v) in [("kappa", kappa), ("lambda", lambda), ("N", n)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        if !(theta.is_finite() && theta >= 0.0) {
            return Err(Error::Validation(format!("theta must be nonnegative, got {theta}")));
        }
        Ok(Self { kappa, lambda, n, theta })
    }

    /// Coefficient of `r` in `g`.
    fn lin(&self) -> f64 {
        self.kappa / (4.0 * self.lambda)
    }

    /// Coefficient of `r^3` in `-g`.
    fn cub(&self) -> f64 {
        1.0 / (16.0 * self.n * (self.lambda + self.theta))
    }

    /// `Phi(v) = int_0^v g`.
    pub fn phi(&self, v: f64) -> f64 {
        let v2 = v * v;
        0.5 * self.lin() * v2 - 0.25 * self.cub() * v2 * v2
    }

    /// Positive root of `g`, where `Phi` peaks.
    pub fn peak(&self) -> f64 {
        (self.lin() / self.cub()).sqrt()
    }

    /// Upper cutoff for the inner integral from `s`: the first `v >= s` with
    /// `Phi(v) <= max_{[s,inf)} Phi - CUTOFF_DROP`.
    pub fn cutoff(&self, s: f64) -> f64 {
        let top = self.phi(s.max(self.peak()));
        // solve cub/4 u^2 - lin/2 u + (top - drop) = 0 for u = v^2, larger root
        let (a, b, c) = (0.25 * self.cub(), -0.5 * self.lin(), top - CUTOFF_DROP);
        let u = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        u.sqrt()
    }
}

/// `g(r) = kappa r/(4 lambda) - r^3/(16 N (lambda + theta))`.
pub fn g_fn(r: f64, p: &GParams) -> f64 {
    p.lin() * r - p.cub() * r * r * r
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol <= 1e-4) {
        return Err(Error::Domain(format!("quadrature tolerance must lie in (0, 1e-4], got {tol}")));
    }
    Ok(())
}

/// `f(s) = int_s^inf exp(Phi(v) - Phi(s)) dv`.
pub fn f_value(s: f64, p: &GParams, tol: f64) -> Result<f64> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::Domain(format!("f needs a finite s >= 0, got {s}")));
    }
    let hi = p.cutoff(s);
    if !(hi.is_finite() && hi >= s) {
        return Err(Error::Quadrature(format!(
            "inner integral cutoff not found from s = {s} (cutoff {hi}, peak {})",
            p.peak()
        )));
    }
    let base = p.phi(s);
    adaptive_simpson(&|v| (p.phi(v) - base).exp(), s, hi, tol)
}

/// `(G(rho), G'(rho) = f(rho))`.
#[allow(non_snake_case)]
pub fn G_fn(rho: f64, p: &GParams, tol: f64) -> Result<(f64, f64)> {
    check_tol(tol)?;
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::Domain(format!("G needs a finite rho >= 0, got {rho}")));
    }
    let fr = f_value(rho, p, tol)?;
    if rho == 0.0 {
        return Ok((0.0, fr));
    }
    Ok((integrate_f(p, 0.0, rho, tol)?, fr))
}

/// `G''(rho) = -1 - g(rho) G'(rho)`.
pub fn g_second(rho: f64, f: f64, p: &GParams) -> f64 {
    -1.0 - g_fn(rho, p) * f
}

/// `G` tabulated on a grid, with a rigorous bound on `G(inf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GFunctionTable {
    pub params: GParams,
    pub tol: f64,
    pub rho: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    /// Upper bound on `sup G = G(inf)`.
    pub g_inf: f64,
    /// Largest inner-integral cutoff used across the grid.
    pub max_cutoff: f64,
}

impl GFunctionTable {
    /// Tabulates on an ascending grid starting at 0.
    pub fn build(p: GParams, rho: &[f64], tol: f64) -> Result<Self> {
        check_tol(tol)?;
        if rho.first() != Some(&0.0) || rho.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("G grid must be strictly ascending from 0".into()));
        }
        let mut f = Vec::with_capacity(rho.len());
        let mut g = Vec::with_capacity(rho.len());
        let mut acc = 0.0;
        for (i, &r) in rho.iter().enumerate() {
            if i > 0 {
                acc += integrate_f(&p, rho[i - 1], r, tol)?;
            }
            f.push(f_value(r, &p, tol)?);
            g.push(acc);
        }
        let g_inf = g_infinity_bound(&p, tol)?;
        let max_cutoff = rho.iter().map(|r| p.cutoff(*r)).fold(0.0, f64::max);
        Ok(Self { params: p, tol, rho: rho.to_vec(), f, g, g_inf, max_cutoff })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let rows = (0..self.rho.len()).map(|i| vec![real(self.rho[i]), real(self.f[i]), real(self.g[i])]);
        csvout::write_table(w, &header(&["rho", "f", "G"]), rows)
    }

    /// `G(0) = 0`, `f >= 0`, `G` nondecreasing and below `g_inf`.
    pub fn invariants_hold(&self) -> bool {
        self.g.first() == Some(&0.0)
            && self.f.iter().all(|v| *v >= 0.0)
            && self.g.windows(2).all(|w| w[1] >= w[0])
            && self.g.iter().all(|v| *v <= self.g_inf)
    }
}

fn integrate_f(p: &GParams, a: f64, b: f64, tol: f64) -> Result<f64> {
    let err = std::cell::Cell::new(None);
    let integrand = |s: f64| match f_value(s, p, tol) {
        Ok(v) => v,
        Err(e) => {
            err.set(Some(e.to_string()));
            f64::NAN
        }
    };
    let v = adaptive_simpson(&integrand, a, b, tol);
    if let Some(msg) = err.take() {
        return Err(Error::Quadrature(msg));
    }
    v
}

/// `G(s1) + ln(c s1^2/(c s1^2 - a))/(2a)` with `s1` twice the peak of `Phi`,
/// using `f(s) <= 1/|g(s)|` past the peak (`a`, `c` the coefficients of `g`).
pub fn g_infinity_bound(p: &GParams, tol: f64) -> Result<f64> {
    let s1 = 2.0 * p.peak();
    let head = integrate_f(p, 0.0, s1, tol)?;
    let (a, c) = (p.lin(), p.cub());
    let cs = c * s1 * s1;
    Ok(head * (1.0 + tol) + (cs / (cs - a)).ln() / (2.0 * a))
}
