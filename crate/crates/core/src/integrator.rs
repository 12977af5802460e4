//! Explicit time stepping of the coupled `(f_k, Θ_k)` system.
//!
//! Stages are evaluated lazily: the right-hand side of a stage is a handful
//! of scalars plus separable targets, and a single fused pass over each
//! field updates both the running accumulator and the next stage input.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::models::{Problem, SpeciesRhs, SystemState};

/// Maximum number of dt halvings when a step loses positivity.
pub const DEFAULT_MAX_HALVINGS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    #[default]
    Rk4,
}

impl Scheme {
    /// `(a_{i+1}, b_i, c_i)`: next-stage coefficient, weight and stage time.
    fn tableau(self) -> &'static [(f64, f64, f64)] {
        match self {
            Scheme::Euler => &[(0.0, 1.0, 0.0)],
            Scheme::Rk4 => &[
                (0.5, 1.0 / 6.0, 0.0),
                (0.5, 1.0 / 3.0, 0.5),
                (1.0, 1.0 / 3.0, 0.5),
                (0.0, 1.0 / 6.0, 1.0),
            ],
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Scheme::Euler => 1,
            Scheme::Rk4 => 4,
        }
    }
}

/// Reusable stage buffers.
#[derive(Debug, Default)]
pub struct Stepper {
    acc: Option<SystemState>,
    stage: Option<SystemState>,
    pub max_halvings: u32,
    /// Number of steps that needed the positivity fallback.
    pub fallbacks: usize,
}

fn copy_into(dst: &mut Option<SystemState>, src: &SystemState) {
    match dst {
        Some(d) if d.species.len() == src.species.len() => {
            d.time = src.time;
            for (a, b) in d.species.iter_mut().zip(&src.species) {
                a.theta = b.theta;
                a.f.values_mut().copy_from_slice(b.f.values());
            }
        }
        _ => *dst = Some(src.clone()),
    }
}

impl Stepper {
    pub fn new() -> Self {
        Stepper { max_halvings: DEFAULT_MAX_HALVINGS, ..Default::default() }
    }

    /// One step of `scheme`, falling back to halved Euler sub-steps when the
    /// result would lose positivity.
    pub fn step(&mut self, problem: &Problem, state: &SystemState, dt: f64, scheme: Scheme) -> Result<SystemState> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        match self.raw_step(problem, state, dt, scheme) {
            Err(e @ (Error::PositivityLoss { .. } | Error::NonpositiveTemperature { what: "Theta", .. })) => {
                self.fallbacks += 1;
                warn!("t = {:.6}: {e}; retrying with halved Euler steps", state.time);
                let mut last = e;
                for h in 1..=self.max_halvings {
                    let parts = 1usize << h;
                    let sub = dt / parts as f64;
                    let mut cur = state.clone();
                    let mut ok = true;
                    for _ in 0..parts {
                        match self.raw_step(problem, &cur, sub, Scheme::Euler) {
                            Ok(next) => cur = next,
                            Err(e @ (Error::PositivityLoss { .. }
                            | Error::NonpositiveTemperature { what: "Theta", .. })) => {
                                last = e;
                                ok = false;
                                break;
                            }
                            Err(e) => return Err(e),
                        }
                    }
                    if ok {
                        cur.time = state.time + dt;
                        return Ok(cur);
                    }
                }
                Err(last)
            }
            other => other,
        }
    }

    fn raw_step(&mut self, problem: &Problem, state: &SystemState, dt: f64, scheme: Scheme) -> Result<SystemState> {
        copy_into(&mut self.acc, state);
        copy_into(&mut self.stage, state);
        let acc = self.acc.as_mut().expect("buffer");
        let stage = self.stage.as_mut().expect("buffer");
        let tableau = scheme.tableau();
        for (i, &(a_next, b, c)) in tableau.iter().enumerate() {
            stage.time = state.time + c * dt;
            let rhs = problem.rhs(stage)?;
            let last_stage = i + 1 == tableau.len();
            for (k, r) in rhs.iter().enumerate() {
                let base = &state.species[k];
                let (acc_k, stage_k) = (&mut acc.species[k], &mut stage.species[k]);
                fused_update(problem, r, base.f.values(), acc_k.f.values_mut(), stage_k.f.values_mut(), dt * b, if last_stage { None } else { Some(dt * a_next) }, base.f.grid());
                if let (Some(th_acc), Some(th_base)) = (acc_k.theta.as_mut(), base.theta) {
                    *th_acc += dt * b * r.dtheta;
                    if let Some(th_stage) = stage_k.theta.as_mut() {
                        *th_stage = th_base + dt * a_next * r.dtheta;
                    }
                }
            }
        }
        let time = state.time + dt;
        let mut out = self.acc.take().expect("buffer");
        out.time = time;
        for s in &out.species {
            let min = min_value(problem, s.f.values(), s.f.grid().block_len());
            if min < 0.0 {
                self.acc = Some(out);
                return Err(Error::PositivityLoss { time, min });
            }
            if let Some(t) = s.theta {
                if !(t > 0.0) {
                    self.acc = Some(out);
                    return Err(Error::NonpositiveTemperature { what: "Theta", value: t });
                }
            }
        }
        // hand the previous state's buffers back for reuse next time
        Ok(out)
    }
}

fn min_value(problem: &Problem, values: &[f64], block: usize) -> f64 {
    exec::map_blocks(problem.exec, values.len(), block, |_, r| {
        values[r].iter().copied().fold(f64::INFINITY, f64::min)
    })
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}

/// `k = Σ w G − λ·stage`; `acc += wb·k`; `stage = base + wa·k`.
#[allow(clippy::too_many_arguments)]
fn fused_update(
    problem: &Problem,
    rhs: &SpeciesRhs,
    base: &[f64],
    acc: &mut [f64],
    stage: &mut [f64],
    wb: f64,
    wa: Option<f64>,
    grid: &crate::grid::PhaseGrid,
) {
    let block = grid.block_len();
    let decay = rhs.decay;
    exec::for_each_block_mut2(problem.exec, block, acc, stage, base, |bi, acc, stage, base| {
        let start = bi * block;
        rhs.for_rows(grid, start..start + acc.len(), |cells, sum| {
            let off = cells.start - start;
            let n = cells.len();
            let (acc, stage, base) = (&mut acc[off..off + n], &mut stage[off..off + n], &base[off..off + n]);
            match wa {
                Some(wa) => {
                    for j in 0..n {
                        let k = sum[j] - decay * stage[j];
                        acc[j] += wb * k;
                        stage[j] = base[j] + wa * k;
                    }
                }
                None => {
                    for j in 0..n {
                        let k = sum[j] - decay * stage[j];
                        acc[j] += wb * k;
                    }
                }
            }
        });
    });
}

/// One step from `state`; see [`Stepper::step`].
pub fn step(problem: &Problem, state: &SystemState, dt: f64, scheme: Scheme) -> Result<SystemState> {
    Stepper::new().step(problem, state, dt, scheme)
}

/// Fixed-step integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub t_end: f64,
    /// `None` selects `0.05/ν_max` at the initial state.
    pub dt: Option<f64>,
    pub scheme: Scheme,
    /// Observe every `stride` steps (and always at the first and last step).
    pub stride: usize,
}

impl RunSettings {
    pub fn new(t_end: f64) -> Self {
        RunSettings { t_end, dt: None, scheme: Scheme::Rk4, stride: 1 }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }
}

/// Result of [`run`]. A numerical failure ends the run early and is kept
/// in `aborted` together with everything observed until then.
#[derive(Debug)]
pub struct RunOutcome<R> {
    pub records: Vec<R>,
    pub final_state: SystemState,
    pub aborted: Option<Error>,
    pub steps: usize,
    pub dt: f64,
    pub fallbacks: usize,
}

/// Integrates to `t_end` with a fixed step, calling `observer` on the
/// initial state, every `stride` steps and on the final state.
pub fn run<R>(
    problem: &Problem,
    initial: SystemState,
    settings: RunSettings,
    mut observer: impl FnMut(&SystemState) -> Result<R>,
) -> Result<RunOutcome<R>> {
    problem.check_state(&initial)?;
    if !(settings.t_end >= 0.0 && settings.t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_end must be nonnegative, got {}", settings.t_end)));
    }
    let mut records = vec![observer(&initial)?];
    if settings.t_end == 0.0 {
        return Ok(RunOutcome { records, final_state: initial, aborted: None, steps: 0, dt: 0.0, fallbacks: 0 });
    }
    let dt0 = match settings.dt {
        Some(dt) => dt,
        None => problem.default_dt(&initial)?,
    };
    if !(dt0 > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt0}")));
    }
    let steps = (settings.t_end / dt0 - 1e-9).ceil().max(1.0) as usize;
    let dt = settings.t_end / steps as f64;
    let stride = settings.stride.max(1);
    let t0 = initial.time;
    let mut stepper = Stepper::new();
    let mut state = initial;
    let mut aborted = None;
    let mut done = 0;
    for n in 1..=steps {
        let next = stepper.step(problem, &state, dt, settings.scheme).and_then(|mut s| {
            s.time = t0 + n as f64 * dt;
            if n % stride == 0 || n == steps {
                observer(&s).map(|r| (s, Some(r)))
            } else {
                Ok((s, None))
            }
        });
        match next {
            Ok((s, r)) => {
                let old = std::mem::replace(&mut state, s);
                stepper.acc = Some(old);
                records.extend(r);
                done = n;
            }
            Err(e) => {
                aborted = Some(Error::AbortedAtTime { time: state.time, source: Box::new(e) });
                break;
            }
        }
    }
    Ok(RunOutcome { records, final_state: state, aborted, steps: done, dt, fallbacks: stepper.fallbacks })
}
