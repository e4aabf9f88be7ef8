use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{CoupleSection, MeanFieldSection, RunConfig, StopChoice};
use super::models::{mean_field_params, resolve_model};
use crate::batch::{path_rng, try_map_indexed};
use crate::coupling::{couple_batch, simulate_coupled, write_summary_csv, CoupledInit, StopRule};
use crate::csvout::{self, real};
use crate::ergodicity::{moment_mgf_bounds, polylog_bound_check, time_grid, write_checks_csv, CheckRow, TailCurve, TheoryConstants};
use crate::error::{Error, Result};
use crate::invariants::{run_invariant_suites, Corruption};
use crate::meanfield::{
    drift_condition_check, drift_grid, g_infinity_bound, mf_coupled_simulate, mf_model, write_mf_summary_csv, GFunctionTable, DEFAULT_TOL,
};
use crate::model::{Model, RegimeId, SimConfig};
use crate::segment::HistorySegment;
use crate::switching::simulate_hybrid;

/// Settings resolved from flags, config and environment.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: RunConfig,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
}

/// Files written and diagnostics raised by one command.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(String, String)>,
    pub messages: Vec<String>,
    pub warnings: Vec<String>,
    /// Set when a numerical check failed; the command still wrote its files.
    pub failure: Option<String>,
}

impl Outcome {
    fn write(&mut self, dir: &Path, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        fs::write(dir.join(name), &buf)?;
        self.files.push((name.to_string(), hex(&Sha256::digest(&buf))));
        Ok(())
    }

    fn say(&mut self, msg: impl Into<String>) {
        self.messages.push(msg.into());
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    seed: u64,
    workers: usize,
    crate_version: &'a str,
    model: &'a str,
    config: &'a RunConfig,
    files: Vec<FileEntry<'a>>,
    warnings: &'a [String],
    failure: Option<&'a str>,
}

#[derive(Serialize)]
struct FileEntry<'a> {
    name: &'a str,
    sha256: &'a str,
}

fn section<T: Clone>(s: &Option<T>, name: &str) -> Result<T> {
    s.clone().ok_or_else(|| Error::Config(format!("missing [{name}] section")))
}

fn regime(label: usize, what: &str) -> Result<RegimeId> {
    RegimeId::from_label(label).map_err(|_| Error::Config(format!("{what}: regime labels start at 1")))
}

fn check_dim(v: &[f64], dim: usize, what: &str) -> Result<()> {
    if v.len() != dim {
        return Err(Error::Config(format!("{what} has {} entries, model dimension is {dim}", v.len())));
    }
    Ok(())
}

pub fn run_command(command: &str, ctx: &RunContext) -> Result<Outcome> {
    fs::create_dir_all(&ctx.out)?;
    let mut out = match command {
        "simulate" => cmd_simulate(ctx),
        "couple" => cmd_couple(ctx),
        "bounds" => cmd_bounds(ctx),
        "meanfield" => cmd_meanfield(ctx),
        "validate" => cmd_validate(ctx),
        other => Err(Error::Config(format!("unknown command '{other}'"))),
    }?;
    let meta = Metadata {
        command,
        seed: ctx.seed,
        workers: ctx.workers,
        crate_version: env!("CARGO_PKG_VERSION"),
        model: &ctx.config.model,
        config: &ctx.config,
        files: out.files.iter().map(|(n, h)| FileEntry { name: n, sha256: h }).collect(),
        warnings: &out.warnings,
        failure: out.failure.as_deref(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(ctx.out.join(format!("{command}.metadata.json")), json + "\n")?;
    out.files.sort();
    Ok(out)
}

fn mf_section(ctx: &RunContext) -> MeanFieldSection {
    ctx.config.meanfield.clone().unwrap_or_default()
}

pub fn cmd_simulate(ctx: &RunContext) -> Result<Outcome> {
    let s = section(&ctx.config.simulate, "simulate")?;
    let model = resolve_model(&ctx.config.model, &mf_section(ctx))?;
    check_dim(&s.x0, model.dim(), "simulate.x0")?;
    let mut cfg = SimConfig::new(s.dt, s.horizon, s.n_paths, ctx.seed);
    if let Some(cap) = s.state_cap {
        cfg = cfg.with_state_cap(cap);
    }
    cfg.validate(s.delay)?;
    let init = HistorySegment::constant(s.delay, s.dt, &s.x0)?;
    let k0 = regime(s.regime, "simulate.regime")?;

    let runs = try_map_indexed(s.n_paths, ctx.workers, |i| {
        let mut rng = path_rng(ctx.seed, i as u64);
        let path = simulate_hybrid(&model, &init, k0, &cfg, &mut rng)?;
        let last = path.len() - 1;
        let mut row = vec![i.to_string(), real(path.time(last))];
        row.extend(path.state(last).iter().map(|v| real(*v)));
        row.push(path.regimes[last].to_string());
        row.push(path.events.len().to_string());
        row.push(path.diverged_at.is_some().to_string());
        Ok((row, (i == 0).then_some(path)))
    })?;

    let mut out = Outcome::default();
    let dir = &ctx.out;
    let mut names = vec!["path_id".to_string(), "t".into()];
    names.extend((1..=model.dim()).map(|i| format!("x_{i}")));
    names.extend(["lambda".to_string(), "n_switches".into(), "diverged".into()]);
    let first = runs[0].1.clone().expect("path 0 kept");
    let n_div = runs.iter().filter(|r| r.0.last().is_some_and(|d| d == "true")).count();
    out.write(dir, "path.csv", |w| first.write_csv(w))?;
    out.write(dir, "events.csv", |w| first.write_events_csv(w))?;
    out.write(dir, "summary.csv", |w| csvout::write_table(w, &names, runs.into_iter().map(|r| r.0)))?;
    out.say(format!("simulated {} path(s) of model {} to t = {}", s.n_paths, model.name, s.horizon));
    if n_div > 0 {
        out.warnings.push(format!("{n_div} of {} paths diverged", s.n_paths));
    }
    Ok(out)
}

fn stop_rule(s: StopChoice) -> StopRule {
    match s {
        StopChoice::Horizon => StopRule::Horizon,
        StopChoice::Meeting => StopRule::Meeting,
        StopChoice::Coupling => StopRule::Coupling,
        StopChoice::EnterDiagonal => StopRule::EnterDiagonal,
    }
}

pub fn cmd_couple(ctx: &RunContext) -> Result<Outcome> {
    let s: CoupleSection = section(&ctx.config.couple, "couple")?;
    let model = resolve_model(&ctx.config.model, &mf_section(ctx))?;
    check_dim(&s.x0, model.dim(), "couple.x0")?;
    check_dim(&s.y0, model.dim(), "couple.y0")?;
    let mut cfg = SimConfig::new(s.dt, s.horizon, s.n_paths, ctx.seed);
    if let Some(eps) = s.meet_eps {
        cfg = cfg.with_meet_eps(eps);
    }
    cfg.validate(s.delay)?;
    let (k, l) = (regime(s.k, "couple.k")?, regime(s.l, "couple.l")?);
    let init = CoupledInit::constant(s.delay, s.dt, &s.x0, k, &s.y0, l)?;
    let stop = stop_rule(s.stop);
    let runs = couple_batch(&model, std::slice::from_ref(&init), &cfg, stop, ctx.workers)?;

    let mut rng = path_rng(ctx.seed, 0);
    let first = simulate_coupled(&model, &init.phi, k, &init.psi, l, &cfg, stop, true, &mut rng)?;
    let step = s.tail_step.unwrap_or(s.horizon / 100.0);
    let samples: Vec<Option<f64>> = runs.iter().map(|r| r.couple_time).collect();
    let tail = TailCurve::from_samples(&samples, &time_grid(s.horizon, step), s.horizon)?;

    let mut out = Outcome::default();
    let dir = &ctx.out;
    out.write(dir, "coupling_summary.csv", |w| write_summary_csv(&runs, w))?;
    out.write(dir, "tail.csv", |w| tail.write_csv(w))?;
    if let Some(p) = first.path {
        out.write(dir, "coupled_path.csv", |w| p.write_csv(w))?;
    }
    out.say(format!(
        "coupled {} path(s); {} coupled before t = {}",
        s.n_paths,
        s.n_paths - tail.n_censored,
        s.horizon
    ));
    if tail.n_censored > 0 {
        out.warnings.push(format!(
            "{} of {} paths censored at the horizon {}; tail estimates beyond it are lower bounds",
            tail.n_censored, s.n_paths, s.horizon
        ));
    }
    let n_div = runs.iter().filter(|r| r.diverged).count();
    if n_div > 0 {
        out.warnings.push(format!("{n_div} of {} paths diverged", s.n_paths));
    }
    Ok(out)
}

pub fn cmd_bounds(ctx: &RunContext) -> Result<Outcome> {
    let s = section(&ctx.config.bounds, "bounds")?;
    let c = TheoryConstants::new(s.h, s.m, s.r, s.alpha)?;
    let lambdas: Vec<f64> = s.mgf_fractions.iter().map(|f| f / c.r_hat).collect();
    let table = moment_mgf_bounds(&c, s.n_moments, &lambdas)?;
    let mut out = Outcome::default();
    let mut checks = Vec::new();
    if c.rho < 1.0 {
        for n in 1..=8 {
            let p = polylog_bound_check(c.rho, n)?;
            checks.push(CheckRow { name: format!("polylog_{n}"), lhs: p.lhs, rhs: p.rhs, ok: p.ok });
        }
    } else {
        out.warnings.push("rho rounds to 1; polylog checks skipped".into());
    }

    let dir = &ctx.out;
    out.write(dir, "constants.csv", |w| c.write_csv(w))?;
    out.write(dir, "moments.csv", |w| {
        csvout::write_table(w, &csvout::header(&["n", "bound"]), table.moments.iter().map(|(n, b)| vec![n.to_string(), real(*b)]))
    })?;
    out.write(dir, "mgf.csv", |w| {
        csvout::write_table(w, &csvout::header(&["lambda", "bound"]), table.mgf.iter().map(|(l, b)| vec![real(*l), real(*b)]))
    })?;
    out.write(dir, "checks.csv", |w| write_checks_csv(&checks, w))?;
    out.say(format!(
        "delta2 = {:e}, rho = {}, R = {}, R_hat = {:e}, beta >= {:e}",
        c.delta2, c.rho, c.big_r, c.r_hat, c.beta_lb
    ));
    if let Some(gamma) = s.gamma {
        let b = c.beta_gamma_lb(gamma)?;
        out.write(dir, "beta_gamma.csv", |w| {
            csvout::write_table(w, &csvout::header(&["gamma", "beta_lower_bound"]), [vec![real(gamma), real(b)]])
        })?;
        out.say(format!("beta({gamma}) >= (1 - 2/gamma)/R_hat = {b:e}"));
    }
    if let Some(bad) = checks.iter().find(|r| !r.ok) {
        out.failure = Some(format!("{} failed: {} > {}", bad.name, bad.lhs, bad.rhs));
    }
    Ok(out)
}

pub fn cmd_meanfield(ctx: &RunContext) -> Result<Outcome> {
    let s = mf_section(ctx);
    let p = mean_field_params(&s)?;
    let mm = mf_model(&p, 2000, ctx.seed)?;
    let k = regime(s.regime, "meanfield.regime")?;
    if k.0 >= p.n_regimes() {
        return Err(Error::Config(format!("meanfield.regime {} exceeds the {} declared regimes", s.regime, p.n_regimes())));
    }
    if !(s.rho_step > 0.0 && s.rho_max >= s.rho_step) {
        return Err(Error::Config("meanfield needs 0 < rho_step <= rho_max".into()));
    }
    let gp = p.g_params(&mm.constants)?;
    let grid = time_grid(s.rho_max, s.rho_step);
    let table = GFunctionTable::build(gp, &grid, DEFAULT_TOL)?;
    let pts = drift_grid(p.n, &grid[1..], s.directions, p.sample_radius, ctx.seed);
    let drift = drift_condition_check(&p, &gp, k, &pts, 1e-6, DEFAULT_TOL)?;

    let mut out = Outcome::default();
    let dir = &ctx.out;
    out.write(dir, "g_table.csv", |w| table.write_csv(w))?;
    out.write(dir, "drift_check.csv", |w| drift.write_csv(w))?;
    let sensitivity = lambda_sensitivity(&p, ctx.seed)?;
    out.write(dir, "lambda_sensitivity.csv", |w| {
        let rows = sensitivity.iter().map(|r| r.iter().map(|v| real(*v)).collect::<Vec<_>>());
        csvout::write_table(w, &csvout::header(&["lambda", "kappa", "theta", "G_inf", "mean_T_bound"]), rows)
    })?;
    out.say(format!(
        "kappa = {}, theta = {}, lambda = {}, dissipation K = {}",
        gp.kappa, gp.theta, p.lambda, mm.dissipation_k
    ));
    out.say(format!("G(inf) <= {:e}; G table invariants {}", table.g_inf, if table.invariants_hold() { "hold" } else { "FAIL" }));
    out.say(format!(
        "drift condition: {} of {} grid points pass",
        drift.rows.len() - drift.n_failed(),
        drift.rows.len()
    ));
    let mut failures = Vec::new();
    if !drift.passed() {
        failures.push(format!("drift condition failed at {} grid points", drift.n_failed()));
    }
    if !table.invariants_hold() {
        failures.push("G table invariants failed".to_string());
    }

    if !s.distances.is_empty() {
        let unit = 1.0 / (p.n as f64).sqrt();
        let inits: Vec<(Vec<f64>, Vec<f64>)> = s
            .distances
            .iter()
            .map(|d| (vec![0.5 * d * unit; p.n], vec![-0.5 * d * unit; p.n]))
            .collect();
        let cfg = SimConfig::new(s.dt, s.horizon, s.n_paths, ctx.seed);
        let rows = mf_coupled_simulate(&p, &gp, k, &inits, &cfg, DEFAULT_TOL, ctx.workers)?;
        out.write(dir, "coupling_bound.csv", |w| write_mf_summary_csv(&rows, w))?;
        for r in &rows {
            out.say(format!(
                "|x - y| = {}: empirical_mean_T = {:.4} (se {:.4}) <= bound {:.4e}: {}",
                r.distance,
                r.mean_t,
                r.se,
                r.bound,
                r.ok()
            ));
            if r.n_censored > 0 {
                out.warnings.push(format!("{} paths censored at distance {}", r.n_censored, r.distance));
            }
        }
        if rows.iter().any(|r| !r.ok()) {
            failures.push("empirical coupling time exceeds the G bound".to_string());
        }
    }
    if !failures.is_empty() {
        out.failure = Some(failures.join("; "));
    }
    Ok(out)
}

/// `G(inf)/(2 lambda)`, the uniform bound on the mean coupling time, for
/// `lambda` at a quarter, half and three quarters of `lambda0`.
fn lambda_sensitivity(p: &crate::meanfield::MeanFieldParams, seed: u64) -> Result<Vec<[f64; 5]>> {
    [0.25, 0.5, 0.75]
        .iter()
        .map(|frac| {
            let q = p.clone().with_lambda(frac * p.lambda0)?;
            let gp = q.g_params(&q.validate(2000, seed)?)?;
            let g_inf = g_infinity_bound(&gp, DEFAULT_TOL)?;
            Ok([q.lambda, gp.kappa, gp.theta, g_inf, g_inf / (2.0 * q.lambda)])
        })
        .collect()
}

pub fn cmd_validate(ctx: &RunContext) -> Result<Outcome> {
    let corrupt = ctx.config.validate.as_ref().is_some_and(|v| v.corrupt_rates);
    let report = run_invariant_suites(ctx.seed, corrupt.then_some(Corruption::RateLaw))?;
    let mut out = Outcome::default();
    out.write(&ctx.out, "invariants.csv", |w| report.write_csv(w))?;
    for s in &report.suites {
        let status = if s.passed() { "pass" } else { "FAIL" };
        let mut line = format!("{status} {} ({} checked, {} failed)", s.name, s.n_checked, s.n_failed);
        if let Some(f) = &s.first_failure {
            line.push_str(&format!(": {f}"));
        }
        out.say(line);
    }
    out.say(format!("report hash {}", report.hash()?));
    if !report.passed() {
        let failed: Vec<&str> = report.suites.iter().filter(|s| !s.passed()).map(|s| s.name).collect();
        out.failure = Some(format!("suites failed: {}", failed.join(", ")));
    }
    Ok(out)
}
