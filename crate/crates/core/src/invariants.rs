//! Deterministic invariant suites across all modules, run by `validate`.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::coupling::{coupled_jump_law, expected_total, marginal_consistency_check, reflection_matrix};
use crate::csvout;
use crate::ergodicity::{polylog_bound_check, TheoryConstants};
use crate::error::Result;
use crate::meanfield::{
    default_ou, drift_condition_check, drift_grid, lambda_split, GFunctionTable, GParams, MeanFieldParams,
};
use crate::model::{RateRow, RegimeId};
use crate::switching::IntervalTable;
use crate::validate::{validate_model, SampleDomain};

/// Fault injected into a suite to show that it can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corruption {
    /// Adds a small rate to one entry of every coupled jump law.
    RateLaw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub n_checked: usize,
    pub n_failed: usize,
    /// First failure, if any.
    pub first_failure: Option<String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.n_failed == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantReport {
    pub suites: Vec<SuiteResult>,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteResult::passed)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let rows = self.suites.iter().map(|s| {
            vec![s.name.to_string(), s.n_checked.to_string(), s.n_failed.to_string(), s.passed().to_string()]
        });
        csvout::write_table(w, &csvout::header(&["suite", "n_checked", "n_failed", "ok"]), rows)
    }

    /// Hex SHA-256 of the CSV rendering.
    pub fn hash(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(Sha256::digest(&buf).iter().map(|b| format!("{b:02x}")).collect())
    }
}

struct Tally {
    name: &'static str,
    n_checked: usize,
    n_failed: usize,
    first_failure: Option<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self { name, n_checked: 0, n_failed: 0, first_failure: None }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.n_checked += 1;
        if !ok {
            self.n_failed += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(what());
            }
        }
    }

    fn done(self) -> SuiteResult {
        SuiteResult { name: self.name, n_checked: self.n_checked, n_failed: self.n_failed, first_failure: self.first_failure }
    }
}

/// Sparse random row out of `source` over `n` regimes.
pub fn random_rate_row(rng: &mut impl Rng, source: RegimeId, n: usize) -> RateRow {
    let mut row = RateRow::new();
    for l in 0..n {
        if l != source.0 && rng.random::<f64>() < 0.3 {
            row.push(RegimeId(l), rng.random_range(0.0..2.0));
        }
    }
    row.sort();
    row
}

fn jump_law_suite(rng: &mut ChaCha8Rng, corruption: Option<Corruption>) -> Result<SuiteResult> {
    let mut t = Tally::new("jump_law_marginals");
    for _ in 0..500 {
        let n = rng.random_range(2..=50);
        let k = RegimeId(rng.random_range(0..n));
        let l = if rng.random::<bool>() { k } else { RegimeId(rng.random_range(0..n)) };
        let (rk, rl) = (random_rate_row(rng, k, n), random_rate_row(rng, l, n));
        let mut law = coupled_jump_law(&rk, &rl, k, l)?;
        if corruption == Some(Corruption::RateLaw) && !law.entries().is_empty() {
            law.perturb(0, 1e-3);
        }
        let ok = marginal_consistency_check(&law, &rk, &rl, k, l)
            && (law.total() - expected_total(&rk, &rl, k, l)).abs() <= 1e-12 * (1.0 + law.total());
        t.check(ok, || format!("pair ({k}, {l}) over {n} regimes"));
    }
    Ok(t.done())
}

fn reflection_suite(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut t = Tally::new("reflection_algebra");
    for _ in 0..300 {
        let d = rng.random_range(1..=16);
        let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let h = reflection_matrix(&x, &y)?.matrix();
        let orth = (&h * &h - nalgebra::DMatrix::identity(d, d)).amax();
        let sym = (&h - h.transpose()).amax();
        let diff = nalgebra::DVector::from_iterator(d, x.iter().zip(&y).map(|(a, b)| a - b));
        let flip = (&h * &diff + &diff).amax();
        t.check(orth <= 1e-12 && sym <= 1e-12 && flip <= 1e-12 * (1.0 + diff.amax()), || format!("d = {d}"));
    }
    Ok(t.done())
}

fn interval_suite(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut t = Tally::new("interval_table");
    for _ in 0..200 {
        let n = rng.random_range(2..=20);
        let k = RegimeId(rng.random_range(0..n));
        let row = random_rate_row(rng, k, n);
        let table = IntervalTable::build(&row, k)?;
        let ok = (table.total() - row.total()).abs() <= 1e-12 * (1.0 + row.total())
            && table.intervals().windows(2).all(|w| w[0].hi == w[1].lo);
        t.check(ok, || format!("row out of {k}"));
    }
    Ok(t.done())
}

fn constants_suite(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut t = Tally::new("theory_constants");
    for _ in 0..500 {
        let c = TheoryConstants::new(
            rng.random_range(1e-3..5.0),
            rng.random_range(1e-3..10.0),
            rng.random_range(1e-3..5.0),
            rng.random_range(1e-2..10.0),
        )?;
        t.check(c.invariants_hold(), || format!("{c:?}"));
    }
    for i in 1..=9 {
        let rho = i as f64 / 10.0;
        for n in 1..=8 {
            let p = polylog_bound_check(rho, n)?;
            t.check(p.ok, || format!("polylog rho = {rho}, n = {n}"));
        }
    }
    Ok(t.done())
}

fn meanfield_suite(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut t = Tally::new("meanfield_g_and_drift");
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
    let table = GFunctionTable::build(GParams::new(4.0, 1.0, 1.0, 0.5)?, &grid, 1e-8)?;
    t.check(table.invariants_hold(), || "G table invariants".into());
    let p = MeanFieldParams::new(2, vec![1.0, 0.5], vec![1.0, 2.0], 1.0)?;
    let c = p.validate(200, rng.random())?;
    let gp = p.g_params(&c)?;
    let dist: Vec<f64> = (1..=10).map(|i| i as f64 * 0.5).collect();
    let pts = drift_grid(2, &dist, 3, 3.0, rng.random());
    for k in 0..2 {
        let rep = drift_condition_check(&p, &gp, RegimeId(k), &pts, 1e-6, 1e-8)?;
        for row in &rep.rows {
            t.check(row.ok(), || format!("drift condition at r = {}, k = {}", row.r, k + 1));
        }
    }
    for _ in 0..100 {
        let s: Vec<f64> = (0..4).map(|_| rng.random_range(0.8..1.2)).collect();
        let split = lambda_split(&s, 0.3)?;
        let worst = s
            .iter()
            .zip(&split.sigma_lambda)
            .map(|(a, b)| (0.3 + b * b - a * a).abs())
            .fold(0.0, f64::max);
        t.check(worst <= 1e-12, || format!("split identity for {s:?}"));
    }
    Ok(t.done())
}

fn model_suite(seed: u64) -> Result<SuiteResult> {
    let mut t = Tally::new("builtin_models");
    let (ou, _) = default_ou();
    let rep = validate_model(&ou, &SampleDomain::new(1.0, 0.1, 5.0, 2), 200, seed)?;
    t.n_checked += rep.n_checked;
    if let Some(v) = rep.violations.first() {
        t.n_failed += rep.violations.len();
        t.first_failure = Some(v.to_string());
    }
    Ok(t.done())
}

pub fn run_invariant_suites(seed: u64, corruption: Option<Corruption>) -> Result<InvariantReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(InvariantReport {
        suites: vec![
            jump_law_suite(&mut rng, corruption)?,
            reflection_suite(&mut rng)?,
            interval_suite(&mut rng)?,
            constants_suite(&mut rng)?,
            meanfield_suite(&mut rng)?,
            model_suite(seed)?,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_run_passes_with_stable_hash() {
        let a = run_invariant_suites(7, None).unwrap();
        assert!(a.passed(), "{:?}", a.suites.iter().find(|s| !s.passed()));
        let b = run_invariant_suites(7, None).unwrap();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
    }

    #[test]
    fn corrupted_rates_fail_marginals() {
        let r = run_invariant_suites(7, Some(Corruption::RateLaw)).unwrap();
        let s = r.suites.iter().find(|s| s.name == "jump_law_marginals").unwrap();
        assert!(!s.passed());
        assert!(r.suites.iter().filter(|s| s.name != "jump_law_marginals").all(|s| s.passed()));
    }
}
