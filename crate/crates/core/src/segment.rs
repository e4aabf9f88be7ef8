//! Trailing path segment `{X(t+s): -r <= s <= 0}` stored on a uniform grid.
//!
//! The buffer is a ring of `r/dt + 1` points, oldest first. Pushing a new
//! point drops the oldest one and advances the head time by `dt`, so the
//! length never changes.

use crate::error::{Error, Result};

/// Relative slack used when checking that `dt` divides `r`.
const GRID_TOL: f64 = 1e-9;

/// Number of grid steps `r/dt`, rejecting configurations where `dt` does not
/// divide `r` exactly.
pub fn grid_steps(delay: f64, dt: f64) -> Result<usize> {
    if !(delay.is_finite() && delay > 0.0) {
        return Err(Error::Validation(format!("delay must be positive, got {delay}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Validation(format!("dt must be positive, got {dt}")));
    }
    if dt > delay * (1.0 + GRID_TOL) {
        return Err(Error::Validation(format!("dt = {dt} exceeds delay r = {delay}")));
    }
    let ratio = delay / dt;
    let n = ratio.round();
    if (ratio - n).abs() > GRID_TOL * ratio.max(1.0) {
        return Err(Error::Validation(format!(
            "dt = {dt} does not divide delay r = {delay} (r/dt = {ratio})"
        )));
    }
    Ok(n as usize)
}

#[derive(Debug, Clone)]
pub struct HistorySegment {
    delay: f64,
    dt: f64,
    dim: usize,
    steps: usize,
    /// Ring storage, `(steps + 1) * dim` values.
    data: Vec<f64>,
    /// Ring slot holding the oldest point.
    start: usize,
    head_time: f64,
}

impl HistorySegment {
    /// Builds a segment from explicit points ordered oldest to newest.
    pub fn new(delay: f64, dt: f64, points: &[Vec<f64>], head_time: f64) -> Result<Self> {
        let steps = grid_steps(delay, dt)?;
        if points.len() != steps + 1 {
            return Err(Error::Shape(format!(
                "segment needs {} points for r/dt = {steps}, got {}",
                steps + 1,
                points.len()
            )));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::Shape("segment points must have dimension >= 1".into()));
        }
        let mut data = Vec::with_capacity((steps + 1) * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::Shape(format!(
                    "mixed point dimensions {} and {}",
                    dim,
                    p.len()
                )));
            }
            check_finite(p)?;
            data.extend_from_slice(p);
        }
        Ok(Self { delay, dt, dim, steps, data, start: 0, head_time })
    }

    /// Constant initial history `phi(s) = x0` on `[-r, 0]`, head time 0.
    pub fn constant(delay: f64, dt: f64, x0: &[f64]) -> Result<Self> {
        Self::from_fn(delay, dt, x0.len(), |_| x0.to_vec())
    }

    /// History sampled from `f(s)` for grid offsets `s` in `[-r, 0]`, head time 0.
    pub fn from_fn(delay: f64, dt: f64, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let steps = grid_steps(delay, dt)?;
        let points: Vec<Vec<f64>> = (0..=steps)
            .map(|i| f(-delay + i as f64 * dt))
            .collect();
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Shape(format!("history function must return {dim}-vectors")));
        }
        Self::new(delay, dt, &points, 0.0)
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of grid steps `r/dt`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of stored points, always `r/dt + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn head_time(&self) -> f64 {
        self.head_time
    }

    fn slot(&self, i: usize) -> usize {
        (self.start + i) % (self.steps + 1)
    }

    /// Point `i`, counted from the oldest (`i = 0`, time `t - r`).
    pub fn point(&self, i: usize) -> &[f64] {
        assert!(i <= self.steps, "segment index {i} out of range");
        let s = self.slot(i) * self.dim;
        &self.data[s..s + self.dim]
    }

    /// Current value `phi(0) = X(t)`.
    pub fn head(&self) -> &[f64] {
        self.point(self.steps)
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..=self.steps).map(move |i| self.point(i))
    }

    /// Drops the oldest point, appends `x`, and advances the head time by `dt`.
    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!(
                "pushing a {}-vector into a {}-dimensional segment",
                x.len(),
                self.dim
            )));
        }
        check_finite(x)?;
        let s = self.start * self.dim;
        self.data[s..s + self.dim].copy_from_slice(x);
        self.start = (self.start + 1) % (self.steps + 1);
        self.head_time += self.dt;
        Ok(())
    }

    /// Overwrites the newest point in place (used when gluing two coupled copies).
    pub fn set_head(&mut self, x: &[f64]) {
        let s = self.slot(self.steps) * self.dim;
        self.data[s..s + self.dim].copy_from_slice(x);
    }

    /// Sup norm `max_i |phi_i|` over the stored grid.
    pub fn sup_norm(&self) -> f64 {
        self.points().map(norm).fold(0.0, f64::max)
    }

    /// `max_i |a_i - b_i|` over the shared grid.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .points()
            .zip(other.points())
            .map(|(a, b)| dist(a, b))
            .fold(0.0, f64::max))
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.steps != other.steps || self.dt != other.dt {
            return Err(Error::Shape(format!(
                "segment grids differ: (d={}, r/dt={}, dt={}) vs (d={}, r/dt={}, dt={})",
                self.dim, self.steps, self.dt, other.dim, other.steps, other.dt
            )));
        }
        Ok(())
    }

    /// Linearly interpolated value at offset `s` in `[-r, 0]`.
    pub fn at(&self, s: f64) -> Vec<f64> {
        let u = ((s + self.delay) / self.dt).clamp(0.0, self.steps as f64);
        let i = (u.floor() as usize).min(self.steps);
        if i == self.steps {
            return self.head().to_vec();
        }
        let w = u - i as f64;
        self.point(i)
            .iter()
            .zip(self.point(i + 1))
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect()
    }

    /// Trapezoidal time average of the segment over `[t - r, t]`.
    pub fn time_average(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for i in 0..=self.steps {
            let w = if i == 0 || i == self.steps { 0.5 } else { 1.0 };
            for (a, v) in acc.iter_mut().zip(self.point(i)) {
                *a += w * v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= self.steps as f64);
        acc
    }

    /// Bitwise equality of the stored points (grid assumed shared).
    pub fn same_points(&self, other: &Self) -> bool {
        self.points().zip(other.points()).all(|(a, b)| a == b)
    }
}

fn check_finite(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericOverflow(format!("non-finite state {x:?}")))
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
