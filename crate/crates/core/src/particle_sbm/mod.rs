//! Critical branching Brownian particles approximating the superprocess.
//!
//! Each particle carries mass 1/N, moves as a Brownian motion and branches
//! at rate (1+β)N^β into a Slack-distributed number of children. Time is
//! discretized on a uniform grid: every step first displaces all particles,
//! then each particle branches independently with probability rate·dt at its
//! new position. Events are stamped with the end time of their step.

mod observable;
mod panel;
mod recorder;

pub use observable::{
    psi0, GaussianPanel, GreenPanel, IntervalIndicator, Mass, Observable, OccupationGrid, PsiPower,
    ScalarFn, SharedObservable,
};
pub use panel::{ExpPanelSums, GaussPanelSums, Slot, UniformPanel};
pub use recorder::{BranchEvent, EventLog, PathRecorder, Snapshot};

use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::gamma;

use crate::error::{check_beta, domain, usage, LabError, Result};
use crate::kernels_green::FiniteMeasure;
use crate::rng_stable::{OffspringLaw, RngStream};

pub const DEFAULT_PARTICLE_CAP: usize = 10_000_000;
/// Largest allowed branching probability per step.
pub const MAX_BRANCH_PROBABILITY: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub beta: f64,
    /// Particle-count scale N; each particle has mass 1/N.
    pub n_scale: u64,
    pub dim: usize,
    /// Upper bound on the time step. The run uses the largest step not above
    /// it that puts every snapshot time on the step grid.
    pub dt: f64,
    pub t_end: f64,
    /// Spacing of snapshots; nonpositive means initial and final only.
    pub snapshot_dt: f64,
    pub particle_cap: usize,
    /// Keep particle positions in every snapshot.
    pub keep_positions: bool,
}

impl ModelParams {
    /// Parameters with dt = 0.1 / branch_rate and snapshots at 0 and t_end.
    pub fn new(beta: f64, n_scale: u64, dim: usize, t_end: f64) -> Self {
        let rate = (1.0 + beta) * (n_scale as f64).powf(beta);
        Self {
            beta,
            n_scale,
            dim,
            dt: MAX_BRANCH_PROBABILITY / rate,
            t_end,
            snapshot_dt: 0.0,
            particle_cap: DEFAULT_PARTICLE_CAP,
            keep_positions: false,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_snapshot_dt(mut self, snapshot_dt: f64) -> Self {
        self.snapshot_dt = snapshot_dt;
        self
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.particle_cap = cap;
        self
    }

    pub fn with_positions(mut self, keep: bool) -> Self {
        self.keep_positions = keep;
        self
    }

    /// (1+β)·N^β.
    pub fn branch_rate(&self) -> f64 {
        (1.0 + self.beta) * (self.n_scale as f64).powf(self.beta)
    }

    /// β(β+1)/Γ(1-β), the jump-intensity constant of the limit.
    pub fn c_beta(&self) -> f64 {
        self.beta * (self.beta + 1.0) / gamma(1.0 - self.beta)
    }

    pub fn steps(&self) -> usize {
        if self.t_end <= 0.0 {
            return 0;
        }
        let per = |span: f64| (span / self.dt - 1e-9).ceil().max(1.0) as usize;
        match self.snapshot_count() {
            Some(n) => n * per(self.t_end / n as f64),
            None => per(self.t_end),
        }
    }

    // Number of snapshot intervals when snapshot_dt divides t_end.
    fn snapshot_count(&self) -> Option<usize> {
        if self.snapshot_dt <= 0.0 {
            return None;
        }
        let r = self.t_end / self.snapshot_dt;
        let n = r.round();
        (n >= 1.0 && (r - n).abs() < 1e-9 * r.max(1.0)).then_some(n as usize)
    }

    pub fn effective_dt(&self) -> f64 {
        match self.steps() {
            0 => 0.0,
            n => self.t_end / n as f64,
        }
    }

    pub fn snapshot_every(&self) -> usize {
        let steps = self.steps().max(1);
        if self.snapshot_dt <= 0.0 || self.t_end <= 0.0 {
            steps
        } else if let Some(n) = self.snapshot_count() {
            steps / n
        } else {
            ((self.snapshot_dt / self.effective_dt()).round() as usize).clamp(1, steps)
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if self.n_scale == 0 {
            return domain("N must be positive");
        }
        if !(self.dim == 1 || self.dim == 2) {
            return domain(format!("dimension must be 1 or 2, got {}", self.dim));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return domain(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return domain(format!("t_end must be nonnegative, got {}", self.t_end));
        }
        let p = self.branch_rate() * self.dt;
        if p > MAX_BRANCH_PROBABILITY * (1.0 + 1e-12) {
            return domain(format!(
                "branch_rate·dt = {:.6} exceeds {MAX_BRANCH_PROBABILITY} (branch_rate = {:.6}, dt = {})",
                p,
                self.branch_rate(),
                self.dt
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleState {
    pub time: f64,
    pub dim: usize,
    /// `dim` consecutive coordinates per particle.
    pub coords: Vec<f64>,
    pub mass_per_particle: f64,
}

impl ParticleState {
    pub fn count(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn total_mass(&self) -> f64 {
        self.count() as f64 * self.mass_per_particle
    }
}

/// ⌊N·μ(ℝ)⌉ particles drawn i.i.d. from μ/μ(ℝ). In two dimensions each
/// coordinate is drawn independently from the same normalized measure.
pub fn init_particles(mu: &FiniteMeasure, params: &ModelParams, stream: &mut RngStream) -> Result<ParticleState> {
    if !(mu.total_mass() > 0.0) {
        return domain("initial measure has zero mass");
    }
    let count = (params.n_scale as f64 * mu.total_mass()).round() as usize;
    if count > params.particle_cap {
        return Err(LabError::Resource(format!(
            "initial particle count {count} exceeds cap {}",
            params.particle_cap
        )));
    }
    let coords = (0..count * params.dim).map(|_| mu.sample_point(stream)).collect();
    Ok(ParticleState {
        time: 0.0,
        dim: params.dim,
        coords,
        mass_per_particle: 1.0 / params.n_scale as f64,
    })
}

/// Reusable per-run state for [`step`].
pub struct Stepper {
    law: OffspringLaw,
    sd: f64,
    dt: f64,
    p: f64,
    log1mp: f64,
    cap: usize,
    picks: Vec<(usize, u64)>,
}

impl Stepper {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let dt = params.effective_dt().max(f64::MIN_POSITIVE);
        let p = params.branch_rate() * dt;
        Ok(Self {
            law: OffspringLaw::new(params.beta)?,
            sd: dt.sqrt(),
            dt,
            p,
            log1mp: (-p).ln_1p(),
            cap: params.particle_cap,
            picks: Vec::new(),
        })
    }

    /// Same as [`Stepper::new`] but with the branch rate forced to `rate`
    /// (zero disables branching).
    pub fn with_rate(params: &ModelParams, rate: f64) -> Result<Self> {
        let mut s = Self::new(params)?;
        s.p = rate * s.dt;
        s.log1mp = (-s.p).ln_1p();
        Ok(s)
    }

    pub fn law(&self) -> &OffspringLaw {
        &self.law
    }

    /// Advances `state` by one step, appending branchings to `events`.
    pub fn step(&mut self, state: &mut ParticleState, stream: &mut RngStream, events: &mut EventLog) -> Result<()> {
        let t_new = state.time + self.dt;
        self.advance(state, stream, events, t_new)
    }

    fn advance(&mut self, state: &mut ParticleState, stream: &mut RngStream, events: &mut EventLog, t_new: f64) -> Result<()> {
        let dim = state.dim;
        for x in state.coords.iter_mut() {
            let z: f64 = StandardNormal.sample(stream);
            *x += self.sd * z;
        }
        state.time = t_new;
        let n = state.count();
        if n == 0 || self.p <= 0.0 {
            return Ok(());
        }
        // Geometric skipping over particles that do not branch.
        self.picks.clear();
        let mut i = (stream.next_open01().ln() / self.log1mp).floor();
        while i < n as f64 {
            let idx = i as usize;
            let k = self.law.sample(stream);
            events.push(t_new, &state.coords[idx * dim..(idx + 1) * dim], k);
            self.picks.push((idx, k));
            i += 1.0 + (stream.next_open01().ln() / self.log1mp).floor();
        }
        let mut total = n as u64;
        for &(_, k) in &self.picks {
            total = total.saturating_add(k).saturating_sub(1);
        }
        if total > self.cap as u64 {
            return Err(LabError::Resource(format!(
                "particle count {total} exceeds cap {} at t = {t_new}",
                self.cap
            )));
        }
        for &(idx, k) in &self.picks {
            for _ in 1..k {
                for c in 0..dim {
                    let v = state.coords[idx * dim + c];
                    state.coords.push(v);
                }
            }
        }
        // Deaths in decreasing index order; births sit beyond index n.
        for &(idx, k) in self.picks.iter().rev() {
            if k == 0 {
                let last = state.coords.len() / dim - 1;
                for c in 0..dim {
                    state.coords.swap(idx * dim + c, last * dim + c);
                }
                state.coords.truncate(last * dim);
            }
        }
        Ok(())
    }
}

/// One step of the particle system; returns the new branch events.
pub fn step(state: &mut ParticleState, params: &ModelParams, stream: &mut RngStream) -> Result<EventLog> {
    let mut stepper = Stepper::new(params)?;
    let mut events = EventLog::new(state.dim);
    stepper.step(state, stream, &mut events)?;
    Ok(events)
}

fn evaluate(observables: &[SharedObservable], state: &ParticleState, out: &mut [Vec<f64>]) {
    for (o, v) in observables.iter().zip(out.iter_mut()) {
        v.iter_mut().for_each(|x| *x = 0.0);
        o.accumulate(&state.coords, state.dim, state.mass_per_particle, v);
    }
}

/// Runs the particle system from μ to `params.t_end`, integrating every
/// registered observable over the step grid.
pub fn simulate(
    mu: &FiniteMeasure,
    params: &ModelParams,
    observables: &[SharedObservable],
    stream: &mut RngStream,
) -> Result<PathRecorder> {
    params.validate()?;
    for o in observables {
        if let Some(d) = o.dim() {
            if d != params.dim {
                return usage(format!("observable {} expects dimension {d}, run has {}", o.name(), params.dim));
            }
        }
    }
    let state = init_particles(mu, params, stream)?;
    simulate_from(state, params, observables, stream)
}

/// As [`simulate`], starting from an explicit particle state at time 0.
pub fn simulate_from(
    mut state: ParticleState,
    params: &ModelParams,
    observables: &[SharedObservable],
    stream: &mut RngStream,
) -> Result<PathRecorder> {
    params.validate()?;
    let steps = params.steps();
    let dt = params.effective_dt();
    let every = params.snapshot_every();
    let mut stepper = Stepper::new(params)?;

    let mut prev: Vec<Vec<f64>> = observables.iter().map(|o| vec![0.0; o.len()]).collect();
    let mut cur = prev.clone();
    let mut acc = prev.clone();
    evaluate(observables, &state, &mut prev);

    let snap = |step: usize, st: &ParticleState| Snapshot {
        step,
        time: st.time,
        count: st.count(),
        positions: params.keep_positions.then(|| st.coords.clone()),
    };
    let mut rec = PathRecorder {
        params: params.clone(),
        dt,
        observables: observables.to_vec(),
        snapshots: vec![snap(0, &state)],
        instant: vec![prev.clone()],
        occupation: vec![acc.clone()],
        counts: Vec::with_capacity(steps + 1),
        events: EventLog::new(params.dim),
        extinction_time: (state.count() == 0).then_some(0.0),
    };
    rec.counts.push(state.count());

    for k in 1..=steps {
        let t_new = k as f64 * dt;
        stepper.advance(&mut state, stream, &mut rec.events, t_new)?;
        evaluate(observables, &state, &mut cur);
        let half = 0.5 * dt;
        for o in 0..observables.len() {
            for j in 0..cur[o].len() {
                acc[o][j] += half * (prev[o][j] + cur[o][j]);
            }
        }
        std::mem::swap(&mut prev, &mut cur);
        rec.counts.push(state.count());
        if state.count() == 0 && rec.extinction_time.is_none() {
            rec.extinction_time = Some(t_new);
        }
        if k % every == 0 || k == steps {
            rec.snapshots.push(snap(k, &state));
            rec.instant.push(prev.clone());
            rec.occupation.push(acc.clone());
        }
    }
    Ok(rec)
}

/// M̂_t(f) = Σ_{events with time ≤ t} f(location)·(offspring - 1)/N.
pub fn martingale_event_sum<F: Fn(f64) -> f64>(recorder: &PathRecorder, f: F, t: f64) -> Result<f64> {
    if t > recorder.horizon() * (1.0 + 1e-12) + 1e-15 {
        return usage(format!("t = {t} beyond horizon {}", recorder.horizon()));
    }
    let ev = recorder.events();
    if ev.dim() != 1 {
        return usage("event sums of real functions need a one-dimensional run");
    }
    let n = ev.count_until(t);
    let inv_n = 1.0 / recorder.params().n_scale as f64;
    Ok((0..n)
        .map(|i| f(ev.locations[i]) * (ev.offspring[i] as f64 - 1.0) * inv_n)
        .sum())
}

/// All events with net mass above `threshold`, as (time, first coordinate, size).
pub fn extract_big_jumps(recorder: &PathRecorder, threshold: f64) -> Result<Vec<(f64, f64, f64)>> {
    if !(threshold > 0.0) {
        return domain("threshold must be positive");
    }
    let n_scale = recorder.params().n_scale;
    Ok(recorder
        .events()
        .iter()
        .filter_map(|e| {
            let r = e.net_mass(n_scale);
            (r > threshold).then_some((e.time, e.location[0], r))
        })
        .collect())
}

/// Largest net mass of a branching in [x1, x2] up to time t (0 if none).
pub fn interval_jump_max(recorder: &PathRecorder, x1: f64, x2: f64, t: f64) -> Result<f64> {
    if !(x1 < x2) {
        return domain("interval needs x1 < x2");
    }
    let ev = recorder.events();
    let n = ev.count_until(t);
    let n_scale = recorder.params().n_scale;
    Ok((0..n)
        .map(|i| ev.get(i))
        .filter(|e| e.location[0] >= x1 && e.location[0] <= x2)
        .map(|e| e.net_mass(n_scale))
        .fold(0.0, f64::max))
}
