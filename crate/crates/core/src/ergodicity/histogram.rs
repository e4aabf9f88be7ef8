//! Direct two-sample estimate of the variation distance between two scalar
//! laws from equal-width histograms.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvEstimate {
    /// `sum_i |p_i - q_i|` on the variation-norm scale `[0, 2]`.
    pub raw: f64,
    /// `raw` minus its expected value under equal bin probabilities, floored at 0.
    pub corrected: f64,
    pub se: f64,
}

pub fn histogram_tv(a: &[f64], b: &[f64], bins: usize) -> Result<TvEstimate> {
    if a.is_empty() || b.is_empty() || bins == 0 {
        return Err(Error::Validation("histogram TV needs two nonempty samples and bins > 0".into()));
    }
    let (lo, hi) = a
        .iter()
        .chain(b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::NumericOverflow("non-finite sample in histogram TV".into()));
    }
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let count = |s: &[f64]| {
        let mut c = vec![0usize; bins];
        for v in s {
            let i = (((v - lo) / width) as usize).min(bins - 1);
            c[i] += 1;
        }
        c
    };
    let (ca, cb) = (count(a), count(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut raw = 0.0;
    let mut floor = 0.0;
    let mut var = 0.0;
    for i in 0..bins {
        let (p, q) = (ca[i] as f64 / na, cb[i] as f64 / nb);
        raw += (p - q).abs();
        let pooled = (ca[i] + cb[i]) as f64 / (na + nb);
        floor += (2.0 / std::f64::consts::PI).sqrt() * (pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb)).sqrt();
        var += p * (1.0 - p) / na + q * (1.0 - q) / nb;
    }
    Ok(TvEstimate { raw, corrected: (raw - floor).max(0.0), se: var.sqrt() })
}
