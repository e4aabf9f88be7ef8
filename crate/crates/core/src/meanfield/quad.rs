//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;
const COARSE_PANELS: usize = 64;

/// Composite Simpson rule on `panels` (even) equal subintervals.
pub fn composite_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels + panels % 2;
    let h = (b - a) / panels as f64;
    let mut sum = f(a) + f(b);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// `int_a^b f` to relative accuracy `rel_tol`, measured against a coarse
/// 64-panel estimate of the integral's magnitude.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let scale = composite_simpson(f, a, b, COARSE_PANELS).abs();
    if !scale.is_finite() {
        return Err(Error::Quadrature(format!("integrand not finite on [{a}, {b}]")));
    }
    if scale == 0.0 {
        return Ok(0.0);
    }
    let eps = rel_tol * scale;
    // seed the recursion with the coarse panels so narrow peaks are not missed
    let h = (b - a) / COARSE_PANELS as f64;
    let mut total = 0.0;
    for i in 0..COARSE_PANELS {
        let lo = a + i as f64 * h;
        let hi = if i + 1 == COARSE_PANELS { b } else { lo + h };
        let (flo, fhi, fm) = (f(lo), f(hi), f(0.5 * (lo + hi)));
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fm + fhi);
        total += recurse(f, lo, hi, flo, fm, fhi, whole, eps / COARSE_PANELS as f64, MAX_DEPTH)?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * eps {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Quadrature(format!(
            "adaptive Simpson did not converge on [{a}, {b}], residual {delta:e}"
        )));
    }
    Ok(recurse(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)?
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_exponentials() {
        let v = adaptive_simpson(&|x: f64| x * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        let v = adaptive_simpson(&|x: f64| x.exp(), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn narrow_gaussian_peak() {
        let s = 1e-2;
        let v = adaptive_simpson(&|x: f64| (-(x - 0.37) * (x - 0.37) / (2.0 * s * s)).exp(), -1.0, 1.0, 1e-10).unwrap();
        let exact = s * (2.0 * std::f64::consts::PI).sqrt();
        assert!((v - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn reversed_and_empty_intervals() {
        assert_eq!(adaptive_simpson(&|x: f64| x, 1.0, 1.0, 1e-8).unwrap(), 0.0);
        let v = adaptive_simpson(&|x: f64| x, 1.0, 0.0, 1e-8).unwrap();
        assert!((v + 0.5).abs() < 1e-12);
    }

    #[test]
    fn non_finite_integrand_rejected() {
        assert!(adaptive_simpson(&|_x: f64| f64::NAN, 0.0, 1.0, 1e-8).is_err());
    }
}
