//! Generator of the coupled process applied to a smooth test function:
//! diffusion part `tr(a_hat D^2 f)/2 + <(b(x,k), b(y,l)), Df>` with
//! `a_hat = tau tau^T`, plus the coupled jump part.

use nalgebra::DMatrix;

use super::jump_law::coupled_jump_law;
use super::reflection::coupled_diffusion;
use crate::error::{Error, Result};
use crate::model::{Model, RateRow, RegimeId};
use crate::segment::HistorySegment;
use crate::switching::checked_rates;

/// A function on `R^d x S x R^d x S` with analytic derivatives in `(x, y)`.
pub trait CoupledTestFn: Sync {
    fn value(&self, x: &[f64], k: RegimeId, y: &[f64], l: RegimeId) -> f64;

    /// Gradient in the stacked variable `(x, y)`, length `2d`.
    fn gradient(&self, x: &[f64], k: RegimeId, y: &[f64], l: RegimeId, out: &mut [f64]);

    /// Hessian in `(x, y)`, `2d x 2d`.
    fn hessian(&self, x: &[f64], k: RegimeId, y: &[f64], l: RegimeId, out: &mut DMatrix<f64>);
}

type Scalar = dyn Fn(f64) -> f64 + Send + Sync;

/// `F(|x - y|)` from a profile with its first two derivatives; regimes ignored.
pub struct RadialFn {
    pub value: Box<Scalar>,
    pub d1: Box<Scalar>,
    pub d2: Box<Scalar>,
}

impl RadialFn {
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { value: Box::new(value), d1: Box::new(d1), d2: Box::new(d2) }
    }
}

impl CoupledTestFn for RadialFn {
    fn value(&self, x: &[f64], _k: RegimeId, y: &[f64], _l: RegimeId) -> f64 {
        (self.value)(crate::segment::dist(x, y))
    }

    fn gradient(&self, x: &[f64], _k: RegimeId, y: &[f64], _l: RegimeId, out: &mut [f64]) {
        let d = x.len();
        let r = crate::segment::dist(x, y);
        let g = if r > 0.0 { (self.d1)(r) / r } else { 0.0 };
        for i in 0..d {
            out[i] = g * (x[i] - y[i]);
            out[d + i] = -out[i];
        }
    }

    fn hessian(&self, x: &[f64], _k: RegimeId, y: &[f64], _l: RegimeId, out: &mut DMatrix<f64>) {
        let d = x.len();
        out.fill(0.0);
        let r = crate::segment::dist(x, y);
        if r == 0.0 {
            return;
        }
        let (f1, f2) = ((self.d1)(r), (self.d2)(r));
        for i in 0..d {
            for j in 0..d {
                let ei = (x[i] - y[i]) / r;
                let ej = (x[j] - y[j]) / r;
                let id = if i == j { 1.0 } else { 0.0 };
                let v = f2 * ei * ej + f1 / r * (id - ei * ej);
                out[(i, j)] = v;
                out[(d + i, d + j)] = v;
                out[(i, d + j)] = -v;
                out[(d + i, j)] = -v;
            }
        }
    }
}

/// Coupled generator at `(phi(0), k, psi(0), l)`; rates use the full segments.
pub fn coupling_generator_apply(
    f: &dyn CoupledTestFn,
    phi: &HistorySegment,
    k: RegimeId,
    psi: &HistorySegment,
    l: RegimeId,
    m: &dyn Model,
) -> Result<f64> {
    phi.check_same_grid(psi)?;
    let (x, y) = (phi.head(), psi.head());
    let d = m.dim();
    if x.len() != d {
        return Err(Error::Shape(format!("segments have dimension {}, model has {d}", x.len())));
    }
    let cd = coupled_diffusion(x, k, y, l, m)?;
    let a_hat = cd.covariance();
    let mut grad = vec![0.0; 2 * d];
    let mut hess = DMatrix::zeros(2 * d, 2 * d);
    f.gradient(x, k, y, l, &mut grad);
    f.hessian(x, k, y, l, &mut hess);
    let diffusion = 0.5 * a_hat.component_mul(&hess).sum()
        + cd.drift.iter().zip(&grad).map(|(b, g)| b * g).sum::<f64>();

    let h = m.rate_bound();
    let (mut row_k, mut row_l) = (RateRow::new(), RateRow::new());
    checked_rates(m, phi, k, h, &mut row_k)?;
    checked_rates(m, psi, l, h, &mut row_l)?;
    let law = coupled_jump_law(&row_k, &row_l, k, l)?;
    let f0 = f.value(x, k, y, l);
    let jumps: f64 = law
        .entries()
        .iter()
        .map(|&((mi, ni), q)| q * (f.value(x, mi, y, ni) - f0))
        .sum();
    Ok(diffusion + jumps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    struct Const;
    impl CoupledTestFn for Const {
        fn value(&self, _: &[f64], _: RegimeId, _: &[f64], _: RegimeId) -> f64 {
            1.0
        }
        fn gradient(&self, _: &[f64], _: RegimeId, _: &[f64], _: RegimeId, out: &mut [f64]) {
            out.fill(0.0)
        }
        fn hessian(&self, _: &[f64], _: RegimeId, _: &[f64], _: RegimeId, out: &mut DMatrix<f64>) {
            out.fill(0.0)
        }
    }

    struct OffDiagonal;
    impl CoupledTestFn for OffDiagonal {
        fn value(&self, _: &[f64], k: RegimeId, _: &[f64], l: RegimeId) -> f64 {
            f64::from(u8::from(k != l))
        }
        fn gradient(&self, _: &[f64], _: RegimeId, _: &[f64], _: RegimeId, out: &mut [f64]) {
            out.fill(0.0)
        }
        fn hessian(&self, _: &[f64], _: RegimeId, _: &[f64], _: RegimeId, out: &mut DMatrix<f64>) {
            out.fill(0.0)
        }
    }

    fn three_state() -> ModelSpec {
        ModelSpec::new(1, 4.0)
            .unwrap()
            .with_drift(|x, k, b| b[0] = -(1.0 + k.0 as f64) * x[0])
            .with_diffusion(|x, _, s| s[(0, 0)] = 1.0 + 0.1 * x[0].sin())
            .with_rates(|seg, k, out| {
                let m = seg.time_average()[0].tanh();
                match k.0 {
                    0 => {
                        out.push(RegimeId(1), 2.0);
                        out.push(RegimeId(2), 1.0 + m);
                    }
                    1 => {
                        out.push(RegimeId(0), 1.0);
                        out.push(RegimeId(2), 2.0 - m);
                    }
                    _ => out.push(RegimeId(0), 0.5),
                }
            })
    }

    #[test]
    fn constants_are_annihilated() {
        let m = three_state();
        let phi = HistorySegment::constant(1.0, 0.5, &[0.3]).unwrap();
        let psi = HistorySegment::constant(1.0, 0.5, &[-1.0]).unwrap();
        for (k, l) in [(0, 0), (0, 1), (2, 1)] {
            let v = coupling_generator_apply(&Const, &phi, RegimeId(k), &psi, RegimeId(l), &m).unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn indicator_of_separation() {
        let m = three_state();
        let phi = HistorySegment::constant(1.0, 0.5, &[0.8]).unwrap();
        let psi = HistorySegment::constant(1.0, 0.5, &[-0.4]).unwrap();
        let (k, l) = (RegimeId(0), RegimeId(1));
        let v = coupling_generator_apply(&OffDiagonal, &phi, k, &psi, l, &m).unwrap();
        let mut rk = RateRow::new();
        let mut rl = RateRow::new();
        m.rates(&phi, k, &mut rk);
        m.rates(&psi, l, &mut rl);
        rk.sort();
        rl.sort();
        let common = rk.get(RegimeId(2)).min(rl.get(RegimeId(2)));
        let expected = -(common + rk.get(l) + rl.get(k));
        assert!((v - expected).abs() < 1e-14, "{v} vs {expected}");
    }
}
