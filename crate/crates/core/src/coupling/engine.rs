//! Coupled simulation of `(X, Lambda, Y, Lambda')`.
//!
//! Diffusion: reflection coupling while the regimes agree, independent noises
//! while they differ, identical noise once glued. A meeting inside a step is
//! detected from the Brownian-bridge crossing probability of the projected
//! difference `e . (X - Y)`, or when the copies end within `meet_eps`; the
//! second copy is then set to the first. Switching uses a single Poisson(2H)
//! clock shared by both copies, with targets drawn from the basic coupling of
//! the two rate rows.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use super::jump_law::{coupled_jump_law, CoupledJumpLaw, RegimePair};
use super::reflection::DEGENERATE_GUARD;
use crate::batch;
use crate::csvout::{self, header, opt_real, real};
use crate::error::{Error, Result};
use crate::model::{Model, RateRow, RegimeId, SimConfig};
use crate::segment::{dist, HistorySegment};
use crate::switching::checked_rates;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZetaKind {
    /// The regime pair entered the diagonal `{k = l}`.
    Enter,
    /// The regime pair left the diagonal.
    Exit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaEvent {
    pub time: f64,
    pub kind: ZetaKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledEvent {
    pub time: f64,
    pub from: RegimePair,
    pub to: RegimePair,
}

/// When a coupled run may stop before the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    Horizon,
    /// First meeting time `T_hat`.
    Meeting,
    /// Coupling time `T` (segments and regimes equal).
    Coupling,
    /// First time the regimes agree.
    EnterDiagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub time: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub k: RegimeId,
    pub l: RegimeId,
    pub glued: bool,
    pub meet_time: Option<f64>,
    pub couple_time: Option<f64>,
    pub glue_start: Option<f64>,
    pub zeta: Vec<ZetaEvent>,
    /// Raw coupled switch events.
    pub events: Vec<CoupledEvent>,
    pub diverged_at: Option<f64>,
}

impl CoupledState {
    /// First entrance of the regime pair into the diagonal, `zeta_1`.
    pub fn first_enter(&self) -> Option<f64> {
        self.zeta.iter().find(|z| z.kind == ZetaKind::Enter).map(|z| z.time)
    }
}

/// Stepper for one coupled path.
pub struct CoupledStepper<'m> {
    model: &'m dyn Model,
    seg_x: HistorySegment,
    seg_y: HistorySegment,
    k: RegimeId,
    l: RegimeId,
    glued: bool,
    glue_step: Option<usize>,
    meet_step: Option<usize>,
    couple_step: Option<usize>,
    zeta: Vec<ZetaEvent>,
    events: Vec<CoupledEvent>,
    step: usize,
    lag_steps: usize,
    dt: f64,
    sqrt_dt: f64,
    h: f64,
    meet_eps: f64,
    state_cap: Option<f64>,
    next_candidate: f64,
    bx: Vec<f64>,
    by: Vec<f64>,
    sx: DMatrix<f64>,
    sy: DMatrix<f64>,
    xi: Vec<f64>,
    eta: Vec<f64>,
    e: Vec<f64>,
    x_new: Vec<f64>,
    y_new: Vec<f64>,
    row_k: RateRow,
    row_l: RateRow,
}

impl<'m> CoupledStepper<'m> {
    pub fn new(
        model: &'m dyn Model,
        phi: HistorySegment,
        k: RegimeId,
        psi: HistorySegment,
        l: RegimeId,
        cfg: &SimConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let d = model.dim();
        phi.check_same_grid(&psi)?;
        if phi.dim() != d {
            return Err(Error::Shape(format!("segments have dimension {}, model has {d}", phi.dim())));
        }
        cfg.validate(phi.delay())?;
        if (phi.dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
            return Err(Error::Shape(format!("segment step {} differs from dt {}", phi.dt(), cfg.dt)));
        }
        let h = model.rate_bound();
        let e: f64 = rng.sample(Exp1);
        let mut s = Self {
            model,
            lag_steps: phi.steps(),
            seg_x: phi,
            seg_y: psi,
            k,
            l,
            glued: false,
            glue_step: None,
            meet_step: None,
            couple_step: None,
            zeta: Vec::new(),
            events: Vec::new(),
            step: 0,
            dt: cfg.dt,
            sqrt_dt: cfg.dt.sqrt(),
            h,
            meet_eps: cfg.meet_eps,
            state_cap: cfg.state_cap,
            next_candidate: e / (2.0 * h),
            bx: vec![0.0; d],
            by: vec![0.0; d],
            sx: DMatrix::zeros(d, d),
            sy: DMatrix::zeros(d, d),
            xi: vec![0.0; d],
            eta: vec![0.0; d],
            e: vec![0.0; d],
            x_new: vec![0.0; d],
            y_new: vec![0.0; d],
            row_k: RateRow::new(),
            row_l: RateRow::new(),
        };
        if k == l {
            s.zeta.push(ZetaEvent { time: 0.0, kind: ZetaKind::Enter });
            if s.seg_x.head() == s.seg_y.head() {
                s.glue(0);
            }
        }
        Ok(s)
    }

    fn glue(&mut self, step: usize) {
        self.glued = true;
        self.glue_step = Some(step);
        self.meet_step.get_or_insert(step);
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn x(&self) -> &[f64] {
        self.seg_x.head()
    }

    pub fn y(&self) -> &[f64] {
        self.seg_y.head()
    }

    pub fn regimes(&self) -> RegimePair {
        (self.k, self.l)
    }

    pub fn glued(&self) -> bool {
        self.glued
    }

    pub fn meet_time(&self) -> Option<f64> {
        self.meet_step.map(|s| s as f64 * self.dt)
    }

    pub fn couple_time(&self) -> Option<f64> {
        self.couple_step.map(|s| s as f64 * self.dt)
    }

    pub fn should_stop(&self, rule: StopRule) -> bool {
        match rule {
            StopRule::Horizon => false,
            StopRule::Meeting => self.meet_step.is_some(),
            StopRule::Coupling => self.couple_step.is_some(),
            StopRule::EnterDiagonal => self.k == self.l,
        }
    }

    /// Euler move of one copy from `x` with drift `b`, diffusion `s` and noise `z`.
    fn euler(out: &mut [f64], x: &[f64], b: &[f64], s: &DMatrix<f64>, z: &[f64], dt: f64, sqrt_dt: f64) {
        let d = x.len();
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                acc += s[(i, j)] * z[j];
            }
            out[i] = x[i] + b[i] * dt + acc * sqrt_dt;
        }
    }

    fn diffusion_step(&mut self, rng: &mut impl Rng) -> bool {
        let d = self.bx.len();
        let (x, y) = (self.seg_x.head(), self.seg_y.head());
        self.model.drift(x, self.k, &mut self.bx);
        self.model.diffusion(x, self.k, &mut self.sx);
        for v in self.xi.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        Self::euler(&mut self.x_new, x, &self.bx, &self.sx, &self.xi, self.dt, self.sqrt_dt);
        self.model.project(&mut self.x_new);
        if self.glued {
            self.y_new.copy_from_slice(&self.x_new);
            return false;
        }
        self.model.drift(y, self.l, &mut self.by);
        self.model.diffusion(y, self.l, &mut self.sy);
        if self.k != self.l {
            for v in self.eta.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            Self::euler(&mut self.y_new, y, &self.by, &self.sy, &self.eta, self.dt, self.sqrt_dt);
            self.model.project(&mut self.y_new);
            return false;
        }

        let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        if sq < DEGENERATE_GUARD {
            self.y_new.copy_from_slice(&self.x_new);
            return true;
        }
        let z0 = sq.sqrt();
        for i in 0..d {
            self.e[i] = (x[i] - y[i]) / z0;
        }
        let proj: f64 = self.e.iter().zip(&self.xi).map(|(e, v)| e * v).sum();
        for i in 0..d {
            self.eta[i] = self.xi[i] - 2.0 * proj * self.e[i];
        }
        Self::euler(&mut self.y_new, y, &self.by, &self.sy, &self.eta, self.dt, self.sqrt_dt);
        self.model.project(&mut self.y_new);

        if dist(&self.x_new, &self.y_new) <= self.meet_eps {
            self.y_new.copy_from_slice(&self.x_new);
            return true;
        }
        let z1: f64 = (0..d).map(|i| self.e[i] * (self.x_new[i] - self.y_new[i])).sum();
        if z1 <= 0.0 {
            self.y_new.copy_from_slice(&self.x_new);
            return true;
        }
        // noise loading of e.(X - Y): w = (sigma_x - sigma_y H)^T e
        let mut sye = vec![0.0; d];
        for i in 0..d {
            for j in 0..d {
                sye[i] += self.sy[(i, j)] * self.e[j];
            }
        }
        let e_sy_e: f64 = (0..d).map(|i| self.e[i] * sye[i]).sum();
        let mut var = 0.0;
        for j in 0..d {
            let mut w = 0.0;
            for i in 0..d {
                w += self.e[i] * (self.sx[(i, j)] - self.sy[(i, j)]);
            }
            w += 2.0 * e_sy_e * self.e[j];
            var += w * w;
        }
        var *= self.dt;
        if var > 0.0 {
            let p = (-2.0 * z0 * z1 / var).exp();
            if rng.random::<f64>() < p {
                self.y_new.copy_from_slice(&self.x_new);
                return true;
            }
        }
        false
    }

    fn coupled_law(&mut self) -> Result<CoupledJumpLaw> {
        checked_rates(self.model, &self.seg_x, self.k, self.h, &mut self.row_k)?;
        checked_rates(self.model, &self.seg_y, self.l, self.h, &mut self.row_l)?;
        coupled_jump_law(&self.row_k, &self.row_l, self.k, self.l)
    }

    /// Advances one grid step. Returns `false` when the path diverged.
    pub fn step(&mut self, rng: &mut impl Rng) -> Result<bool> {
        let met = self.diffusion_step(rng);
        let next = self.step + 1;
        let t_next = next as f64 * self.dt;
        if met {
            self.glue(next);
        }

        let envelope = 2.0 * self.h;
        while self.next_candidate <= t_next {
            let law = self.coupled_law()?;
            if law.total() > envelope {
                return Err(Error::RateBoundExceeded {
                    sum: law.total(),
                    bound: envelope,
                    regime: self.k.label(),
                });
            }
            let z = rng.random::<f64>() * envelope;
            if let Some((m, n)) = law.locate(z) {
                self.jump(t_next, next, m, n)?;
            }
            let e: f64 = rng.sample(Exp1);
            self.next_candidate += e / envelope;
        }

        self.step = next;
        let ok = [&self.x_new, &self.y_new].iter().all(|v| {
            v.iter().all(|c| c.is_finite())
                && self.state_cap.is_none_or(|cap| crate::segment::norm(v) <= cap)
        });
        if !ok {
            return Ok(false);
        }
        self.seg_x.push(&self.x_new)?;
        self.seg_y.push(&self.y_new)?;
        if let (true, Some(g), None) = (self.glued, self.glue_step, self.couple_step) {
            if next >= g + self.lag_steps {
                self.couple_step = Some(g + self.lag_steps);
            }
        }
        Ok(true)
    }

    fn jump(&mut self, t: f64, step: usize, m: RegimeId, n: RegimeId) -> Result<()> {
        let was_diag = self.k == self.l;
        self.events.push(CoupledEvent { time: t, from: (self.k, self.l), to: (m, n) });
        self.k = m;
        self.l = n;
        let is_diag = m == n;
        if was_diag && !is_diag {
            if self.couple_step.is_some() {
                return Err(Error::Assumption(format!(
                    "regimes separated at t = {t} after the segments coincided"
                )));
            }
            self.zeta.push(ZetaEvent { time: t, kind: ZetaKind::Exit });
            self.glued = false;
            self.glue_step = None;
        } else if !was_diag && is_diag {
            self.zeta.push(ZetaEvent { time: t, kind: ZetaKind::Enter });
            if self.y_new == self.x_new {
                self.glue(step);
            }
        }
        Ok(())
    }

    pub fn into_state(self, diverged_at: Option<f64>) -> CoupledState {
        CoupledState {
            time: self.time(),
            x: self.seg_x.head().to_vec(),
            y: self.seg_y.head().to_vec(),
            k: self.k,
            l: self.l,
            glued: self.glued,
            meet_time: self.meet_step.map(|s| s as f64 * self.dt),
            couple_time: self.couple_step.map(|s| s as f64 * self.dt),
            glue_start: self.glue_step.map(|s| s as f64 * self.dt),
            zeta: self.zeta,
            events: self.events,
            diverged_at,
        }
    }
}

/// Grid record of a coupled run.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPath {
    pub dim: usize,
    pub dt: f64,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub ks: Vec<RegimeId>,
    pub ls: Vec<RegimeId>,
    pub glued: Vec<bool>,
}

impl CoupledPath {
    fn new(dim: usize, dt: f64) -> Self {
        Self { dim, dt, xs: vec![], ys: vec![], ks: vec![], ls: vec![], glued: vec![] }
    }

    fn record(&mut self, s: &CoupledStepper<'_>) {
        self.xs.extend_from_slice(s.x());
        self.ys.extend_from_slice(s.y());
        self.ks.push(s.k);
        self.ls.push(s.l);
        self.glued.push(s.glued);
    }

    pub fn len(&self) -> usize {
        self.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ks.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y(&self, i: usize) -> &[f64] {
        &self.ys[i * self.dim..(i + 1) * self.dim]
    }

    /// Columns `t, x, y, k, l, glued`; for `d > 1` the state columns expand
    /// to `x_1..x_d, y_1..y_d`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut names = vec!["t".to_string()];
        if self.dim == 1 {
            names.extend(["x".to_string(), "y".to_string()]);
        } else {
            names.extend((1..=self.dim).map(|i| format!("x_{i}")));
            names.extend((1..=self.dim).map(|i| format!("y_{i}")));
        }
        names.extend(["k", "l", "glued"].map(String::from));
        let rows = (0..self.len()).map(|i| {
            let mut r = vec![real(i as f64 * self.dt)];
            r.extend(self.x(i).iter().map(|v| real(*v)));
            r.extend(self.y(i).iter().map(|v| real(*v)));
            r.push(self.ks[i].to_string());
            r.push(self.ls[i].to_string());
            r.push(u8::from(self.glued[i]).to_string());
            r
        });
        csvout::write_table(w, &names, rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledOutcome {
    pub state: CoupledState,
    pub path: Option<CoupledPath>,
}

/// Runs one coupled path until `stop` fires or the horizon is reached.
#[allow(clippy::too_many_arguments)]
pub fn simulate_coupled(
    model: &dyn Model,
    phi: &HistorySegment,
    k: RegimeId,
    psi: &HistorySegment,
    l: RegimeId,
    cfg: &SimConfig,
    stop: StopRule,
    record: bool,
    rng: &mut impl Rng,
) -> Result<CoupledOutcome> {
    let mut st = CoupledStepper::new(model, phi.clone(), k, psi.clone(), l, cfg, rng)?;
    let mut path = record.then(|| CoupledPath::new(model.dim(), cfg.dt));
    if let Some(p) = path.as_mut() {
        p.record(&st);
    }
    let mut diverged_at = None;
    for _ in 0..cfg.n_steps() {
        if st.should_stop(stop) {
            break;
        }
        if !st.step(rng)? {
            diverged_at = Some(st.time());
            break;
        }
        if let Some(p) = path.as_mut() {
            p.record(&st);
        }
    }
    Ok(CoupledOutcome { state: st.into_state(diverged_at), path })
}

/// Initial data `(phi, k, psi, l)` for a coupled run.
#[derive(Debug, Clone)]
pub struct CoupledInit {
    pub phi: HistorySegment,
    pub k: RegimeId,
    pub psi: HistorySegment,
    pub l: RegimeId,
}

impl CoupledInit {
    /// Constant histories at `x` and `y`.
    pub fn constant(delay: f64, dt: f64, x: &[f64], k: RegimeId, y: &[f64], l: RegimeId) -> Result<Self> {
        Ok(Self {
            phi: HistorySegment::constant(delay, dt, x)?,
            k,
            psi: HistorySegment::constant(delay, dt, y)?,
            l,
        })
    }
}

/// Per-path result of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSummary {
    pub path_id: usize,
    pub init_index: usize,
    pub meet_time: Option<f64>,
    pub couple_time: Option<f64>,
    pub first_enter: Option<f64>,
    pub n_zeta: usize,
    pub diverged: bool,
}

/// Runs `cfg.n_paths` coupled paths; path `i` starts from `inits[i % len]`
/// and uses stream `i` of `cfg.seed`.
pub fn couple_batch(
    model: &dyn Model,
    inits: &[CoupledInit],
    cfg: &SimConfig,
    stop: StopRule,
    workers: usize,
) -> Result<Vec<CouplingSummary>> {
    if inits.is_empty() {
        return Err(Error::Validation("at least one initial pair is required".into()));
    }
    batch::try_map_indexed(cfg.n_paths, workers, |i| {
        let init = &inits[i % inits.len()];
        let mut rng = batch::path_rng(cfg.seed, i as u64);
        let out = simulate_coupled(model, &init.phi, init.k, &init.psi, init.l, cfg, stop, false, &mut rng)?;
        let s = out.state;
        Ok(CouplingSummary {
            path_id: i,
            init_index: i % inits.len(),
            meet_time: s.meet_time,
            couple_time: s.couple_time,
            first_enter: s.first_enter(),
            n_zeta: s.zeta.len(),
            diverged: s.diverged_at.is_some(),
        })
    })
}

/// Summary CSV: `path_id, T_hat, T, n_zeta, diverged`; undetermined times are empty.
pub fn write_summary_csv<W: Write>(summaries: &[CouplingSummary], w: W) -> Result<()> {
    let rows = summaries.iter().map(|s| {
        vec![
            s.path_id.to_string(),
            opt_real(s.meet_time),
            opt_real(s.couple_time),
            s.n_zeta.to_string(),
            u8::from(s.diverged).to_string(),
        ]
    });
    csvout::write_table(w, &header(&["path_id", "T_hat", "T", "n_zeta", "diverged"]), rows)
}
