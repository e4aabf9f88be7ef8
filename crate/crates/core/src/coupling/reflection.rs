use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Model, RegimeId};

/// Squared distances below this are treated as a zero direction.
pub const DEGENERATE_GUARD: f64 = 1e-300;

/// `I - 2 e e^T` with `e = (x - y)/|x - y|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionMatrix {
    direction: Vec<f64>,
}

impl ReflectionMatrix {
    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    /// `v - 2 e (e . v)` without forming the matrix.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        self.apply_in_place(&mut out);
        out
    }

    pub fn apply_in_place(&self, v: &mut [f64]) {
        let proj: f64 = self.direction.iter().zip(v.iter()).map(|(e, x)| e * x).sum();
        for (vi, ei) in v.iter_mut().zip(&self.direction) {
            *vi -= 2.0 * proj * ei;
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id - 2.0 * self.direction[i] * self.direction[j]
        })
    }
}

/// Reflection across the hyperplane orthogonal to `x - y`.
pub fn reflection_matrix(x: &[f64], y: &[f64]) -> Result<ReflectionMatrix> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("points of length {} and {}", x.len(), y.len())));
    }
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let sq: f64 = diff.iter().map(|v| v * v).sum();
    if !(sq >= DEGENERATE_GUARD) || !sq.is_finite() {
        return Err(Error::DegenerateDirection(sq));
    }
    let norm = sq.sqrt();
    Ok(ReflectionMatrix { direction: diff.into_iter().map(|v| v / norm).collect() })
}

/// Which diffusion coupling applies to a state `(x, k, y, l)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingCase {
    /// `k = l`, `x != y`: shared noise, second copy reflected.
    Reflection,
    /// `k = l`, `x = y`: identical noise.
    March,
    /// `k != l`: independent noises.
    Independent,
}

pub fn coupling_case(x: &[f64], k: RegimeId, y: &[f64], l: RegimeId) -> CouplingCase {
    if k != l {
        CouplingCase::Independent
    } else if x == y {
        CouplingCase::March
    } else {
        CouplingCase::Reflection
    }
}

/// `2d x 2d` diffusion `tau` and stacked drift of the coupled pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledDiffusion {
    pub case: CouplingCase,
    pub tau: DMatrix<f64>,
    pub drift: Vec<f64>,
}

impl CoupledDiffusion {
    /// `tau tau^T`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.tau * self.tau.transpose()
    }
}

pub fn coupled_diffusion(
    x: &[f64],
    k: RegimeId,
    y: &[f64],
    l: RegimeId,
    m: &dyn Model,
) -> Result<CoupledDiffusion> {
    let d = m.dim();
    if x.len() != d || y.len() != d {
        return Err(Error::Shape(format!("states must have length {d}")));
    }
    let mut sx = DMatrix::zeros(d, d);
    let mut sy = DMatrix::zeros(d, d);
    m.diffusion(x, k, &mut sx);
    m.diffusion(y, l, &mut sy);
    let mut drift = vec![0.0; 2 * d];
    m.drift(x, k, &mut drift[..d]);
    m.drift(y, l, &mut drift[d..]);
    let case = coupling_case(x, k, y, l);
    let mut tau = DMatrix::zeros(2 * d, 2 * d);
    tau.view_mut((0, 0), (d, d)).copy_from(&sx);
    match case {
        CouplingCase::Reflection => {
            let h = reflection_matrix(x, y)?.matrix();
            tau.view_mut((d, 0), (d, d)).copy_from(&(&sy * h));
        }
        CouplingCase::March => tau.view_mut((d, 0), (d, d)).copy_from(&sx),
        CouplingCase::Independent => tau.view_mut((d, d), (d, d)).copy_from(&sy),
    }
    Ok(CoupledDiffusion { case, tau, drift })
}
