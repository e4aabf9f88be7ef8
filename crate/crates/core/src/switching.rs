//! Simulation of the switching component and of the hybrid path `(X, Lambda)`.
//!
//! Switching uses thinning against the global bound `H`: candidate times come
//! from a Poisson(H) clock and a candidate is accepted by drawing `z` uniform
//! on `[0, H)` and locating it in the interval table built from the current
//! rate row. A candidate in `(t_n, t_{n+1}]` sees the segment at `t_n` and the
//! new regime takes effect at `t_{n+1}`.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::batch;
use crate::csvout::{self, header, real};
use crate::error::{Error, Result};
use crate::model::{Model, RateRow, RegimeId, SimConfig};
use crate::segment::HistorySegment;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub target: RegimeId,
    pub lo: f64,
    pub hi: f64,
}

/// Consecutive intervals `[lo, hi)` of length `q_il`, ascending in `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalTable {
    pub source: RegimeId,
    intervals: Vec<Interval>,
}

impl IntervalTable {
    pub fn build(row: &RateRow, source: RegimeId) -> Result<Self> {
        let mut sorted = row.clone();
        sorted.sort();
        sorted.check(source)?;
        let mut intervals = Vec::with_capacity(sorted.len());
        let mut lo = 0.0;
        for &(target, q) in sorted.entries() {
            let hi = lo + q;
            if q > 0.0 {
                intervals.push(Interval { target, lo, hi });
            }
            lo = hi;
        }
        Ok(Self { source, intervals })
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn total(&self) -> f64 {
        self.intervals.last().map(|iv| iv.hi).unwrap_or(0.0)
    }

    pub fn locate(&self, z: f64) -> Option<RegimeId> {
        self.intervals
            .iter()
            .find(|iv| iv.lo <= z && z < iv.hi)
            .map(|iv| iv.target)
    }

    /// Displacement `j - i` when `z` falls in the interval of target `j`, else 0.
    pub fn h_eval(&self, z: f64) -> i64 {
        match self.locate(z) {
            Some(j) => j.0 as i64 - self.source.0 as i64,
            None => 0,
        }
    }
}

/// Allocation-free equivalent of `IntervalTable::build(row, _).locate(z)` for
/// a sorted, checked row.
pub(crate) fn locate_in_row(row: &RateRow, z: f64) -> Option<RegimeId> {
    let mut lo = 0.0;
    for &(target, q) in row.entries() {
        let hi = lo + q;
        if q > 0.0 && lo <= z && z < hi {
            return Some(target);
        }
        lo = hi;
    }
    None
}

/// Evaluates, sorts and checks the row `q_k.(seg)` against the bound `h`.
pub(crate) fn checked_rates(
    model: &dyn Model,
    seg: &HistorySegment,
    k: RegimeId,
    h: f64,
    row: &mut RateRow,
) -> Result<()> {
    row.clear();
    model.rates(seg, k, row);
    row.sort();
    row.check(k)?;
    let sum = row.total();
    if sum > h {
        return Err(Error::RateBoundExceeded { sum, bound: h, regime: k.label() });
    }
    Ok(())
}

/// First accepted switch in `(t0, t_max]` from regime `k`, with candidates
/// from a Poisson(`h`) clock and the segment supplied by `segment_at`.
pub fn next_switch_thinning(
    model: &dyn Model,
    mut segment_at: impl FnMut(f64) -> HistorySegment,
    k: RegimeId,
    h: f64,
    t0: f64,
    t_max: f64,
    rng: &mut impl Rng,
) -> Result<Option<(f64, RegimeId)>> {
    if !(h > 0.0) {
        return Err(Error::Validation(format!("thinning bound must be positive, got {h}")));
    }
    let mut row = RateRow::new();
    let mut t = t0;
    loop {
        let e: f64 = rng.sample(Exp1);
        t += e / h;
        if t > t_max {
            return Ok(None);
        }
        let seg = segment_at(t);
        checked_rates(model, &seg, k, h, &mut row)?;
        let z = rng.random::<f64>() * h;
        if let Some(l) = locate_in_row(&row, z) {
            return Ok(Some((t, l)));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchEvent {
    pub time: f64,
    pub from: RegimeId,
    pub to: RegimeId,
}

/// Outcome of one Euler step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Ok,
    /// State became non-finite or left the `state_cap` ball.
    Diverged,
}

/// Euler–Maruyama integrator interlaced with thinning, one grid step at a time.
pub struct HybridStepper<'m> {
    model: &'m dyn Model,
    seg: HistorySegment,
    k: RegimeId,
    step: usize,
    dt: f64,
    sqrt_dt: f64,
    h: f64,
    state_cap: Option<f64>,
    next_candidate: f64,
    b: Vec<f64>,
    s: DMatrix<f64>,
    x_new: Vec<f64>,
    row: RateRow,
}

impl<'m> HybridStepper<'m> {
    pub fn new(
        model: &'m dyn Model,
        seg: HistorySegment,
        k: RegimeId,
        cfg: &SimConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let d = model.dim();
        if seg.dim() != d {
            return Err(Error::Shape(format!(
                "initial segment has dimension {}, model has {d}",
                seg.dim()
            )));
        }
        cfg.validate(seg.delay())?;
        if (seg.dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
            return Err(Error::Shape(format!(
                "segment step {} differs from simulation dt {}",
                seg.dt(),
                cfg.dt
            )));
        }
        let h = model.rate_bound();
        let e: f64 = rng.sample(Exp1);
        Ok(Self {
            model,
            seg,
            k,
            step: 0,
            dt: cfg.dt,
            sqrt_dt: cfg.dt.sqrt(),
            h,
            state_cap: cfg.state_cap,
            next_candidate: e / h,
            b: vec![0.0; d],
            s: DMatrix::zeros(d, d),
            x_new: vec![0.0; d],
            row: RateRow::new(),
        })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn state(&self) -> &[f64] {
        self.seg.head()
    }

    pub fn regime(&self) -> RegimeId {
        self.k
    }

    pub fn segment(&self) -> &HistorySegment {
        &self.seg
    }

    /// Advances one grid step; accepted switches are appended to `events`.
    pub fn step(&mut self, rng: &mut impl Rng, events: &mut Vec<SwitchEvent>) -> Result<StepStatus> {
        let x = self.seg.head();
        self.model.drift(x, self.k, &mut self.b);
        self.model.diffusion(x, self.k, &mut self.s);
        let d = x.len();
        for i in 0..d {
            self.x_new[i] = x[i] + self.b[i] * self.dt;
        }
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            let z = z * self.sqrt_dt;
            for i in 0..d {
                self.x_new[i] += self.s[(i, j)] * z;
            }
        }
        self.model.project(&mut self.x_new);

        let t_next = (self.step + 1) as f64 * self.dt;
        while self.next_candidate <= t_next {
            checked_rates(self.model, &self.seg, self.k, self.h, &mut self.row)?;
            let z = rng.random::<f64>() * self.h;
            if let Some(l) = locate_in_row(&self.row, z) {
                events.push(SwitchEvent { time: t_next, from: self.k, to: l });
                self.k = l;
            }
            let e: f64 = rng.sample(Exp1);
            self.next_candidate += e / self.h;
        }

        self.step += 1;
        let finite = self.x_new.iter().all(|v| v.is_finite());
        let inside = match self.state_cap {
            Some(cap) => crate::segment::norm(&self.x_new) <= cap,
            None => true,
        };
        if !finite || !inside {
            return Ok(StepStatus::Diverged);
        }
        self.seg.push(&self.x_new)?;
        Ok(StepStatus::Ok)
    }
}

/// Grid path of `(X, Lambda)` with its switch events.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridPath {
    pub dim: usize,
    pub dt: f64,
    /// Flattened states, `dim` values per grid point.
    pub states: Vec<f64>,
    pub regimes: Vec<RegimeId>,
    pub events: Vec<SwitchEvent>,
    /// Time at which the state became non-finite or left the cap ball.
    pub diverged_at: Option<f64>,
}

impl HybridPath {
    pub fn len(&self) -> usize {
        self.regimes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regimes.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut names = vec!["t".to_string()];
        names.extend((1..=self.dim).map(|i| format!("x_{i}")));
        names.push("lambda".into());
        let rows = (0..self.len()).map(|i| {
            let mut r = vec![real(self.time(i))];
            r.extend(self.state(i).iter().map(|v| real(*v)));
            r.push(self.regimes[i].to_string());
            r
        });
        csvout::write_table(w, &names, rows)
    }

    pub fn write_events_csv<W: Write>(&self, w: W) -> Result<()> {
        let rows = self
            .events
            .iter()
            .map(|e| vec![real(e.time), e.from.to_string(), e.to.to_string()]);
        csvout::write_table(w, &header(&["t", "from", "to"]), rows)
    }
}

/// Simulates one hybrid path on `[0, horizon]` and records every grid point.
pub fn simulate_hybrid(
    model: &dyn Model,
    init: &HistorySegment,
    k0: RegimeId,
    cfg: &SimConfig,
    rng: &mut impl Rng,
) -> Result<HybridPath> {
    let mut stepper = HybridStepper::new(model, init.clone(), k0, cfg, rng)?;
    let n = cfg.n_steps();
    let d = model.dim();
    let mut path = HybridPath {
        dim: d,
        dt: cfg.dt,
        states: Vec::with_capacity((n + 1) * d),
        regimes: Vec::with_capacity(n + 1),
        events: Vec::new(),
        diverged_at: None,
    };
    path.states.extend_from_slice(stepper.state());
    path.regimes.push(stepper.regime());
    for _ in 0..n {
        if stepper.step(rng, &mut path.events)? == StepStatus::Diverged {
            path.diverged_at = Some(stepper.time());
            break;
        }
        path.states.extend_from_slice(stepper.state());
        path.regimes.push(stepper.regime());
    }
    Ok(path)
}

/// State and regime of one path at a requested grid step.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub x: Vec<f64>,
    pub k: RegimeId,
}

/// Runs `cfg.n_paths` independent paths and records each at the given grid
/// steps (ascending). Diverged paths yield `None` from their failure on.
pub fn sample_snapshots(
    model: &dyn Model,
    init: &HistorySegment,
    k0: RegimeId,
    cfg: &SimConfig,
    steps: &[usize],
    workers: usize,
) -> Result<Vec<Vec<Option<Snapshot>>>> {
    if steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("snapshot steps must be strictly increasing".into()));
    }
    batch::try_map_indexed(cfg.n_paths, workers, |p| {
        let mut rng = batch::path_rng(cfg.seed, p as u64);
        let mut st = HybridStepper::new(model, init.clone(), k0, cfg, &mut rng)?;
        let mut events = Vec::new();
        let mut out = Vec::with_capacity(steps.len());
        let mut alive = true;
        for &target in steps {
            while alive && st.step_index() < target {
                alive = st.step(&mut rng, &mut events)? == StepStatus::Ok;
                events.clear();
            }
            out.push(alive.then(|| Snapshot { x: st.state().to_vec(), k: st.regime() }));
        }
        Ok(out)
    })
}

/// Holding time in the starting regime for each of `n` paths, censored at
/// the horizon (reported as `f64::INFINITY`).
pub fn first_switch_times(
    model: &dyn Model,
    init: &HistorySegment,
    k0: RegimeId,
    cfg: &SimConfig,
    workers: usize,
) -> Result<Vec<f64>> {
    batch::try_map_indexed(cfg.n_paths, workers, |p| {
        let mut rng = batch::path_rng(cfg.seed, p as u64);
        let mut st = HybridStepper::new(model, init.clone(), k0, cfg, &mut rng)?;
        let mut events = Vec::new();
        for _ in 0..cfg.n_steps() {
            if st.step(&mut rng, &mut events)? == StepStatus::Diverged {
                break;
            }
            if let Some(e) = events.first() {
                return Ok(e.time);
            }
        }
        Ok(f64::INFINITY)
    })
}
