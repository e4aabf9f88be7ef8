//! Acceptance suite. Each test prints one `PASS`/`FAIL` line, then asserts.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use regime_coupler::batch::{path_rng, try_map_indexed};
use regime_coupler::coupling::{
    couple_batch, coupled_jump_law, coupling_generator_apply, empirical_tk_certificate, marginal_consistency_check,
    reflection_matrix, CoupledInit, CoupledStepper, CoupledTestFn, RadialFn, StopRule,
};
use regime_coupler::ergodicity::{
    geometric_tail_check, histogram_tv, polylog_bound_check, time_grid, tv_upper_bound, TailCurve, TheoryConstants,
};
use regime_coupler::meanfield::{
    default_ou, drift_condition_check, drift_grid, mf_coupled_simulate, GParams, MeanFieldParams, G_fn,
};
use regime_coupler::switching::sample_snapshots;
use regime_coupler::{HistorySegment, Model, RateRow, RegimeId, SimConfig};

fn report(id: u32, name: &str, ok: bool, elapsed: Duration, budget: Option<Duration>, detail: &str) {
    let within = budget.is_none_or(|b| elapsed <= b);
    let verdict = if ok && within { "PASS" } else { "FAIL" };
    let budget = budget.map(|b| format!(" / budget {:.0}s", b.as_secs_f64())).unwrap_or_default();
    println!("criterion {id:>2} {verdict} {name}: {detail} [{:.2}s{budget}]", elapsed.as_secs_f64());
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
    assert!(within, "criterion {id} ({name}) exceeded its runtime budget");
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn sparse_row(rng: &mut ChaCha8Rng, source: usize, n: usize) -> RateRow {
    let mut row = RateRow::new();
    for l in 0..n {
        if l != source && rng.random::<f64>() < 0.3 {
            row.push(RegimeId(l), rng.random_range(0.0..3.0));
        }
    }
    row.sort();
    row
}

// Oracle: marginals and totals recomputed from the raw law entries.
#[test]
fn c01_basic_coupling_algebra() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut n_bad = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=50);
        let k = rng.random_range(0..n);
        let l = if rng.random::<bool>() { k } else { rng.random_range(0..n) };
        let (rk, rl) = (sparse_row(&mut rng, k, n), sparse_row(&mut rng, l, n));
        let law = coupled_jump_law(&rk, &rl, RegimeId(k), RegimeId(l)).unwrap();
        if !marginal_consistency_check(&law, &rk, &rl, RegimeId(k), RegimeId(l)) {
            n_bad += 1;
        }
        let (mut first, mut second) = (vec![0.0; n], vec![0.0; n]);
        for &((m, p), q) in law.entries() {
            if m.0 != k {
                first[m.0] += q;
            }
            if p.0 != l {
                second[p.0] += q;
            }
        }
        for m in 0..n {
            let (a, b) = (rk.get(RegimeId(m)), rl.get(RegimeId(m)));
            if m != k {
                worst = worst.max((first[m] - a).abs());
            }
            if m != l {
                worst = worst.max((second[m] - b).abs());
            }
            // (a - b)^+ + a ^ b = a
            worst = worst.max(((a - b).max(0.0) + a.min(b) - a).abs());
        }
        let shared: f64 = (0..n)
            .filter(|&m| m != k && m != l)
            .map(|m| rk.get(RegimeId(m)).max(rl.get(RegimeId(m))))
            .sum();
        let expected = if k == l { shared } else { shared + rk.get(RegimeId(l)) + rl.get(RegimeId(k)) };
        worst = worst.max((law.total() - expected).abs());
    }
    let ok = n_bad == 0 && worst <= 1e-12;
    report(1, "basic_coupling_algebra", ok, start.elapsed(), secs(5), &format!("1000 row pairs, max error {worst:.2e}"));
}

#[test]
fn c02_reflection_algebra() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let d = rng.random_range(1..=16);
        let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let h = reflection_matrix(&x, &y).unwrap().matrix();
        worst = worst.max((h.transpose() * &h - DMatrix::identity(d, d)).amax());
        worst = worst.max((&h - h.transpose()).amax());
        let diff = nalgebra::DVector::from_iterator(d, x.iter().zip(&y).map(|(a, b)| a - b));
        let scale = diff.norm();
        worst = worst.max((&h * &diff + &diff).amax() / scale);
        // a vector orthogonal to x - y is left fixed
        let mut v = nalgebra::DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let u = &diff / scale;
        v -= &u * u.dot(&v);
        worst = worst.max((&h * &v - &v).amax() / v.norm().max(1.0));
    }
    report(2, "reflection_algebra", worst <= 1e-12, start.elapsed(), secs(1), &format!("1000 pairs, max error {worst:.2e}"));
}

#[test]
fn c03_closed_form_constants() {
    let start = Instant::now();
    let c = TheoryConstants::new(1.0, 2.0, 1.0, 1.0).unwrap();
    let target = 0.5 * (-3f64).exp();
    let mut ok = (c.delta2 - target).abs() <= 1e-12;
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for _ in 0..1000 {
        let (h, m, r, a) =
            (rng.random_range(1e-3..2.0), rng.random_range(1e-3..5.0), rng.random_range(1e-3..2.0), rng.random_range(1e-2..10.0));
        let c = TheoryConstants::new(h, m, r, a).unwrap();
        ok &= c.invariants_hold();
        ok &= c.delta2 > 0.0 && c.delta2 <= 0.5 && c.rho >= 0.5 && c.rho < 1.0 && c.beta_lb > 0.0;
        let d2 = 0.5 * (-h * (m + r)).exp();
        let big_r = m + r + 2.0 / a;
        let rel = |x: f64, y: f64| ((x - y) / y).abs();
        worst = worst
            .max(rel(c.delta2, d2))
            .max(rel(c.big_r, big_r))
            .max(rel(c.r_hat, 2.0 * big_r / d2))
            .max(rel(c.beta_lb, d2 / (2.0 * big_r)))
            .max((c.rho - (1.0 - d2 / 2.0)).abs());
    }
    ok &= worst <= 1e-12;
    report(
        3,
        "closed_form_constants",
        ok,
        start.elapsed(),
        secs(1),
        &format!("delta2 = {:.10} vs {target:.10}; 1000 random inputs, max rel error {worst:.2e}", c.delta2),
    );
}

/// Regime-entry rate from off-diagonal pairs: `min_{k != l} q_kl + q_lk + sum_m q_km ^ q_lm`.
fn entry_rate(q: &[Vec<f64>]) -> f64 {
    let n = q.len();
    let mut best = f64::INFINITY;
    for k in 0..n {
        for l in 0..n {
            if k != l {
                let shared: f64 = (0..n).filter(|&m| m != k && m != l).map(|m| q[k][m].min(q[l][m])).sum();
                best = best.min(q[k][l] + q[l][k] + shared);
            }
        }
    }
    best
}

const OU_Q: [[f64; 2]; 2] = [[0.0, 0.5], [0.5, 0.0]];
const OU_H: f64 = 0.5;
const DELAY: f64 = 1.0;

fn ou_q() -> Vec<Vec<f64>> {
    OU_Q.iter().map(|r| r.to_vec()).collect()
}

/// Smallest certified `M` over both frozen regimes of the benchmark.
fn certified_m(model: &dyn Model) -> f64 {
    let cfg = SimConfig::new(0.01, 1.0, 1000, 404);
    let pts = [-2.0, 0.0, 2.0];
    let pairs: Vec<(Vec<f64>, Vec<f64>)> =
        pts.iter().flat_map(|&x| pts.iter().filter(move |&&y| y != x).map(move |&y| (vec![x], vec![y]))).collect();
    let grid: Vec<f64> = (1..=20).map(|i| 0.5 * i as f64).collect();
    (0..2)
        .map(|k| {
            let cert = empirical_tk_certificate(model, RegimeId(k), DELAY, &cfg, &pairs, &grid, 0).unwrap();
            cert.m_hat.expect("certificate found no M on the grid")
        })
        .fold(0.0, f64::max)
}

#[test]
fn c04_coupling_time_lower_bound() {
    let start = Instant::now();
    let (model, _) = default_ou();
    let m_hat = certified_m(&model);
    let alpha = entry_rate(&ou_q());
    let c = TheoryConstants::new(OU_H, m_hat, DELAY, alpha).unwrap();
    let cfg = SimConfig::new(0.01, m_hat + DELAY + 1.0, 10_000, 4);
    let inits = [
        CoupledInit::constant(DELAY, 0.01, &[2.0], RegimeId(0), &[-2.0], RegimeId(0)).unwrap(),
        CoupledInit::constant(DELAY, 0.01, &[-2.0], RegimeId(1), &[2.0], RegimeId(1)).unwrap(),
    ];
    let runs = couple_batch(&model, &inits, &cfg, StopRule::Coupling, 0).unwrap();
    let n = runs.len() as f64;
    let p = runs.iter().filter(|r| r.couple_time.is_some_and(|t| t < m_hat + DELAY)).count() as f64 / n;
    let se = (p * (1.0 - p) / n).sqrt();
    let ok = p >= c.delta2 - 3.0 * se;
    report(
        4,
        "coupling_time_lower_bound",
        ok,
        start.elapsed(),
        secs(120),
        &format!("M = {m_hat}, P(T < M + r) = {p:.4} (se {se:.4}) >= delta2 = {:.4}", c.delta2),
    );
}

#[test]
fn c05_geometric_tail() {
    let start = Instant::now();
    let (model, _) = default_ou();
    let m_hat = certified_m(&model);
    let c = TheoryConstants::new(OU_H, m_hat, DELAY, entry_rate(&ou_q())).unwrap();
    let horizon = 3.0 * c.big_r + 1.0;
    let cfg = SimConfig::new(0.01, horizon, 10_000, 5);
    let inits = [
        CoupledInit::constant(DELAY, 0.01, &[2.0], RegimeId(0), &[-2.0], RegimeId(1)).unwrap(),
        CoupledInit::constant(DELAY, 0.01, &[3.0], RegimeId(1), &[-3.0], RegimeId(1)).unwrap(),
    ];
    let runs = couple_batch(&model, &inits, &cfg, StopRule::Coupling, 0).unwrap();
    let samples: Vec<Option<f64>> = runs.iter().map(|r| r.couple_time).collect();
    let tail = TailCurve::from_samples(&samples, &time_grid(horizon, 0.1), horizon).unwrap();
    let rows = geometric_tail_check(&tail, &c).unwrap();
    let n = samples.len() as f64;
    let mut ok = rows.len() == 3;
    let mut detail = format!("R = {:.3}, rho = {:.4};", c.big_r, c.rho);
    for row in &rows {
        let cut = row.n as f64 * c.big_r;
        let p = samples.iter().filter(|t| t.is_none_or(|t| t >= cut)).count() as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        ok &= (p - row.p_hat).abs() <= 1e-12 && p <= c.rho.powi(row.n as i32) + 3.0 * se && row.ok;
        detail.push_str(&format!(" n={}: {p:.4} <= {:.4}", row.n, row.bound));
    }
    report(5, "geometric_tail", ok, start.elapsed(), secs(120), &detail);
}

#[test]
fn c06_tv_dominance() {
    let start = Instant::now();
    let (model, _) = default_ou();
    let dt: f64 = 0.01;
    let times = [0.5, 1.0, 2.0, 3.0, 5.0];
    let steps: Vec<usize> = times.iter().map(|t| (t / dt).round() as usize).collect();
    let (x0, k0, y0, l0) = (2.0, RegimeId(0), -2.0, RegimeId(1));

    let snap = |x: f64, k: RegimeId, seed: u64| {
        let init = HistorySegment::constant(DELAY, dt, &[x]).unwrap();
        let cfg = SimConfig::new(dt, 5.0, 100_000, seed);
        sample_snapshots(&model, &init, k, &cfg, &steps, 0).unwrap()
    };
    let (a, b) = (snap(x0, k0, 61), snap(y0, l0, 62));

    let cfg = SimConfig::new(dt, 5.0, 10_000, 63);
    let init = CoupledInit::constant(DELAY, dt, &[x0], k0, &[y0], l0).unwrap();
    let runs = couple_batch(&model, &[init], &cfg, StopRule::Coupling, 0).unwrap();
    let samples: Vec<Option<f64>> = runs.iter().map(|r| r.couple_time).collect();
    let tail = TailCurve::from_samples(&samples, &times, 5.0).unwrap();

    let mut ok = true;
    let mut detail = String::new();
    for (j, &t) in times.iter().enumerate() {
        let col = |s: &Vec<Vec<Option<regime_coupler::switching::Snapshot>>>| -> Vec<f64> {
            s.iter().map(|p| p[j].as_ref().expect("path diverged").x[0]).collect()
        };
        let est = histogram_tv(&col(&a), &col(&b), 200).unwrap();
        let (bound, bound_se) = tv_upper_bound(&tail, t);
        let combined = (est.se * est.se + bound_se * bound_se).sqrt();
        let pass = est.corrected <= bound + 3.0 * combined;
        ok &= pass;
        detail.push_str(&format!(" t={t}: {:.4} <= {:.4};", est.corrected, bound));
    }
    report(6, "tv_dominance", ok, start.elapsed(), secs(300), detail.trim());
}

#[test]
fn c07_zeta_moment() {
    let start = Instant::now();
    let (model, _) = default_ou();
    let alpha = entry_rate(&ou_q());
    let dt = 1e-3;
    let cfg = SimConfig::new(dt, 20.0, 10_000, 7);
    let inits = [
        CoupledInit::constant(DELAY, dt, &[1.0], RegimeId(0), &[-1.0], RegimeId(1)).unwrap(),
        CoupledInit::constant(DELAY, dt, &[-1.0], RegimeId(1), &[1.0], RegimeId(0)).unwrap(),
    ];
    let runs = couple_batch(&model, &inits, &cfg, StopRule::EnterDiagonal, 0).unwrap();
    let censored = runs.iter().filter(|r| r.first_enter.is_none()).count();
    let z: Vec<f64> = runs.iter().filter_map(|r| r.first_enter).collect();
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let ok = censored == 0 && mean <= 1.0 / alpha + 3.0 * se;
    report(
        7,
        "zeta1_moment",
        ok,
        start.elapsed(),
        secs(60),
        &format!("mean = {mean:.4} (se {se:.4}) <= 1/alpha = {:.4}, {censored} censored", 1.0 / alpha),
    );
}

#[test]
fn c08_polylog_inequality() {
    let start = Instant::now();
    let mut ok = true;
    let mut worst_series: f64 = 0.0;
    let mut worst_eq: f64 = 0.0;
    for i in 1..=9 {
        let rho = i as f64 / 10.0;
        for n in 1..=8u32 {
            let c = polylog_bound_check(rho, n).unwrap();
            // oracle: direct summation until the terms are negligible
            let mut sum = 0.0;
            for j in 1..20_000 {
                let term = (j as f64).powi(n as i32 - 1) * rho.powi(j);
                sum += term;
                if j > 200 && term < 1e-20 * sum {
                    break;
                }
            }
            worst_series = worst_series.max(((c.lhs - sum) / sum).abs());
            ok &= c.ok && sum <= c.rhs * (1.0 + 1e-12);
            if n == 1 {
                worst_eq = worst_eq.max((c.lhs - c.rhs).abs());
            }
        }
    }
    ok &= worst_eq <= 1e-12 && worst_series <= 1e-10;
    report(
        8,
        "polylog_inequality",
        ok,
        start.elapsed(),
        secs(1),
        &format!("72 cases; n = 1 gap {worst_eq:.2e}; series mismatch {worst_series:.2e}"),
    );
}

/// Trapezoid oracle for `G` on `[0, rho_max]`: cumulative sums of
/// `exp(Phi)` backwards from a far cutoff, then of `f` forwards.
fn g_trapezoid(p: &GParams, rho_max: f64, h: f64) -> impl Fn(f64) -> f64 {
    let lin = p.kappa / (4.0 * p.lambda);
    let cub = 1.0 / (16.0 * p.n * (p.lambda + p.theta));
    let phi = move |v: f64| 0.5 * lin * v * v - 0.25 * cub * v.powi(4);
    let mut end = rho_max.max((lin / cub).sqrt());
    let top = phi(end);
    while phi(end) > top - 60.0 || end < rho_max {
        end += 0.5;
    }
    let n = (end / h).ceil() as usize;
    let v: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    let mut tail = vec![0.0; n + 1];
    for i in (0..n).rev() {
        tail[i] = tail[i + 1] + 0.5 * h * (phi(v[i]).exp() + phi(v[i + 1]).exp());
    }
    let f: Vec<f64> = (0..=n).map(|i| tail[i] * (-phi(v[i])).exp()).collect();
    let mut g = vec![0.0; n + 1];
    for i in 1..=n {
        g[i] = g[i - 1] + 0.5 * h * (f[i - 1] + f[i]);
    }
    move |rho: f64| {
        let i = ((rho / h).floor() as usize).min(n - 1);
        let w = (rho - v[i]) / h;
        g[i] * (1.0 - w) + g[i + 1] * w
    }
}

#[test]
fn c09_g_function_and_drift() {
    let start = Instant::now();
    let gp = GParams::new(4.0, 1.0, 1.0, 0.5).unwrap();
    let oracle = g_trapezoid(&gp, 10.0, 2e-4);
    let mut worst: f64 = 0.0;
    for i in 1..=10 {
        let rho = i as f64;
        let (g, _) = G_fn(rho, &gp, 1e-10).unwrap();
        worst = worst.max(((g - oracle(rho)) / oracle(rho)).abs());
    }
    let (g0, _) = G_fn(0.0, &gp, 1e-10).unwrap();

    let p = MeanFieldParams::new(2, vec![1.0, 0.5], vec![1.0, 0.5], 1.0).unwrap();
    let sampled = p.validate(1000, 9).unwrap();
    let mf_gp = p.g_params(&sampled).unwrap();
    let distances: Vec<f64> = (1..=100).map(|i| 0.1 * i as f64).collect();
    let pts = drift_grid(2, &distances, 10, 3.0, 9);
    let rep = drift_condition_check(&p, &mf_gp, RegimeId(0), &pts, 1e-6, 1e-9).unwrap();
    let ok = worst <= 1e-6 && g0 == 0.0 && pts.len() == 1000 && rep.rows.len() == 1000 && rep.passed();
    report(
        9,
        "g_function_and_drift",
        ok,
        start.elapsed(),
        secs(30),
        &format!(
            "quadrature vs trapezoid max rel {worst:.2e}; G(0) = {g0}; drift {} of {} pass",
            rep.rows.len() - rep.n_failed(),
            rep.rows.len()
        ),
    );
}

#[test]
fn c10_meanfield_coupling_bound() {
    let start = Instant::now();
    let p = MeanFieldParams::new(2, vec![1.0, 0.5], vec![1.0, 0.5], 1.0).unwrap();
    let sampled = p.validate(1000, 10).unwrap();
    let gp = p.g_params(&sampled).unwrap();
    let h = 1e-3;
    let distances = [0.5, 1.0, 2.0];
    let oracle = g_trapezoid(&gp, 2.5, h);
    let inits: Vec<(Vec<f64>, Vec<f64>)> = distances
        .iter()
        .map(|&d| {
            let c = d / (2.0 * 2f64.sqrt());
            (vec![c, c], vec![-c, -c])
        })
        .collect();
    let cfg = SimConfig::new(1e-3, 200.0, 5000, 10);
    let rows = mf_coupled_simulate(&p, &gp, RegimeId(0), &inits, &cfg, 1e-9, 0).unwrap();
    let mut ok = rows.len() == 3;
    let mut detail = String::new();
    for r in &rows {
        let bound = oracle(r.distance) / (2.0 * p.lambda);
        ok &= r.n_censored == 0 && ((r.bound - bound) / bound).abs() <= 1e-4 && r.mean_t <= bound + 3.0 * r.se;
        detail.push_str(&format!(" |x-y|={:.2}: {:.3} <= {:.3e};", r.distance, r.mean_t, bound));
    }
    report(10, "meanfield_coupling_bound", ok, start.elapsed(), secs(180), detail.trim());
}

/// `x y + 1{k != l}(x + y) + k/2` in one dimension.
struct Mixed;

impl CoupledTestFn for Mixed {
    fn value(&self, x: &[f64], k: RegimeId, y: &[f64], l: RegimeId) -> f64 {
        let off = if k != l { 1.0 } else { 0.0 };
        x[0] * y[0] + off * (x[0] + y[0]) + 0.5 * k.0 as f64
    }
    fn gradient(&self, x: &[f64], k: RegimeId, y: &[f64], l: RegimeId, out: &mut [f64]) {
        let off = if k != l { 1.0 } else { 0.0 };
        out[0] = y[0] + off;
        out[1] = x[0] + off;
    }
    fn hessian(&self, _: &[f64], _: RegimeId, _: &[f64], _: RegimeId, out: &mut DMatrix<f64>) {
        out.fill(0.0);
        out[(0, 1)] = 1.0;
        out[(1, 0)] = 1.0;
    }
}

// One-step Euler bias allowance; the observed error fits within 3 SE alone.
const GENERATOR_BIAS_C: f64 = 10.0;

#[test]
fn c11_generator_consistency() {
    let start = Instant::now();
    let (model, _) = default_ou();
    let dt = 1e-3;
    let n = 100_000;
    let points = [
        (1.0, 0, -0.5, 0),
        (0.5, 0, -1.0, 1),
        (-1.0, 1, 1.5, 0),
        (2.0, 1, -1.0, 1),
        (0.3, 0, 1.3, 1),
    ];
    let radial = RadialFn::new(|r| r * r, |r| 2.0 * r, |_| 2.0);
    let fns: [(&str, &dyn CoupledTestFn); 2] = [("squared distance", &radial), ("mixed", &Mixed)];
    let mut ok = true;
    let mut worst_ratio: f64 = 0.0;
    for (fi, (_, f)) in fns.iter().enumerate() {
        for (pi, &(x, k, y, l)) in points.iter().enumerate() {
            let (k, l) = (RegimeId(k), RegimeId(l));
            let phi = HistorySegment::constant(DELAY, dt, &[x]).unwrap();
            let psi = HistorySegment::constant(DELAY, dt, &[y]).unwrap();
            let exact = coupling_generator_apply(*f, &phi, k, &psi, l, &model).unwrap();
            let f0 = f.value(&[x], k, &[y], l);
            let cfg = SimConfig::new(dt, dt, n, 1100 + (fi * 10 + pi) as u64);
            let incr = try_map_indexed(n, 0, |i| {
                let mut rng = path_rng(cfg.seed, i as u64);
                let mut st = CoupledStepper::new(&model, phi.clone(), k, psi.clone(), l, &cfg, &mut rng)?;
                st.step(&mut rng)?;
                let (k1, l1) = st.regimes();
                Ok((f.value(st.x(), k1, st.y(), l1) - f0) / dt)
            })
            .unwrap();
            let mean = incr.iter().sum::<f64>() / n as f64;
            let var = incr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let se = (var / n as f64).sqrt();
            let allowed = 3.0 * se + GENERATOR_BIAS_C * dt;
            worst_ratio = worst_ratio.max((mean - exact).abs() / allowed);
            ok &= (mean - exact).abs() <= allowed;
        }
    }
    report(
        11,
        "generator_consistency",
        ok,
        start.elapsed(),
        secs(120),
        &format!("2 functions x 5 points, worst |error| / (3 SE + C dt) = {worst_ratio:.3}"),
    );
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_regime-coupler")
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn c12_determinism() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let mf = tmp.path().join("meanfield.toml");
    std::fs::write(&mf, "model = \"meanfield\"\n\n[meanfield]\ndistances = [0.5, 1.0]\nn_paths = 200\n").unwrap();
    let runs = [
        ("simulate", configs_dir().join("simulate_ou.toml")),
        ("couple", configs_dir().join("couple_ou.toml")),
        ("bounds", configs_dir().join("bounds.toml")),
        ("meanfield", mf),
        ("validate", configs_dir().join("validate.toml")),
    ];
    let mut ok = true;
    let mut detail = String::new();
    for (cmd, config) in &runs {
        let mut outputs = Vec::new();
        for (tag, workers) in [("a", "1"), ("b", "4"), ("c", "4")] {
            let out = tmp.path().join(format!("{cmd}_{tag}"));
            let status = Command::new(bin())
                .args([cmd, "--config"])
                .arg(config)
                .args(["--seed", "2024", "--workers", workers, "--out"])
                .arg(&out)
                .output()
                .unwrap();
            ok &= status.status.success();
            outputs.push(csv_files(&out));
        }
        let same = !outputs[0].is_empty() && outputs.iter().all(|o| *o == outputs[0]);
        ok &= same;
        detail.push_str(&format!(" {cmd}: {} csv {};", outputs[0].len(), if same { "identical" } else { "DIFFER" }));
    }
    report(12, "determinism", ok, start.elapsed(), None, detail.trim());
}
