//! Experiment descriptions, their execution and the built-in scenario
//! library.
//!
//! An [`Experiment`] is a plain serde structure, so the command-line runner
//! reads it from a configuration file while tests build it in code. Running
//! it produces a [`Outcome`]: diagnostic records for every variant plus one
//! [`CheckResult`] per invariant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    check_lemma_inequalities, fit_decay_rate, l1_distance, totals, DecayFit, DiagnosticRecord, FitOptions,
    Recorder, TemperatureBounds, TheoremConstants, Totals,
};
use crate::error::{Error, Result};
use crate::initial::{auto_grids, initial_state, GridOptions, InitialCondition, MaxwellianParams};
use crate::integrator::{run, RunSettings, Scheme};
use crate::maxwellians::{exchange_coefficients, exchange_residuals, Closure, GaussianTarget};
use crate::models::{ModelKind, Problem, SystemState};
use crate::moments::{MacroState, Moments};
use crate::oracle::MomentSystem;
use crate::species::{admissible_bounds, validate_mixture_params, CollisionModel, MixtureParams, SpeciesSpec};

fn three() -> usize {
    3
}

fn yes() -> bool {
    true
}

/// What an experiment does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Integrate the kinetic equations and record diagnostics.
    #[default]
    Kinetic,
    /// Random admissible mixture parameters and states; checks the
    /// interspecies exchange balance.
    ExchangeSweep,
    /// Random states; checks the entropy inequalities behind the proofs.
    LemmaSweep,
}

/// Time stepping of a kinetic experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub t_end: f64,
    /// Defaults to `0.05 / ν_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default)]
    pub scheme: Scheme,
    /// Record every `stride` steps.
    #[serde(default = "one_usize")]
    pub stride: usize,
}

fn one_usize() -> usize {
    1
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec { t_end: 10.0, dt: None, scheme: Scheme::Rk4, stride: 1 }
    }
}

/// One run of a kinetic experiment with some species parameters replaced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// `z_k` of the first `z.len()` species.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub z: Vec<f64>,
    /// ALPP `θ` of the first species.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Expected binding branch of the rate constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binding: Option<String>,
    /// Compare the fitted `|Λ_k − Θ_k|` decay with the moment spectrum.
    #[serde(default)]
    pub gap_rate: bool,
}

impl Variant {
    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let mut parts = Vec::new();
        if !self.z.is_empty() {
            let z: Vec<String> = self.z.iter().map(|z| format!("{z}")).collect();
            parts.push(format!("z={}", z.join("/")));
        }
        if let Some(t) = self.theta {
            parts.push(format!("theta={t}"));
        }
        if parts.is_empty() {
            "base".into()
        } else {
            parts.join(" ")
        }
    }
}

/// Envelope check of the controlled relative entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvelopeCheck {
    pub factor: f64,
    /// Decades of decay the run must cover unless it reaches `noise_floor`.
    pub decades: f64,
    /// Records whose relative entropies are all below this are not compared.
    pub noise_floor: f64,
}

impl Default for EnvelopeCheck {
    fn default() -> Self {
        EnvelopeCheck { factor: 1.01, decades: 5.0, noise_floor: 1e-12 }
    }
}

/// Distance of the final state from the common equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquilibriumCheck {
    pub l1: f64,
    pub spread: f64,
}

impl Default for EquilibriumCheck {
    fn default() -> Self {
        EquilibriumCheck { l1: 1e-5, spread: 1e-6 }
    }
}

/// Invariants asserted by an experiment. An absent entry is not checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Checks {
    /// Relative drift of particle numbers, momentum and energy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conservation: Option<f64>,
    /// Largest allowed relative increase of the Lyapunov function between records.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_monotone: Option<f64>,
    /// Lower bound `−tol` on the total entropy production.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub production: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<EquilibriumCheck>,
    /// Relative tolerance between fitted gap rate and moment eigenvalue.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_rate: Option<f64>,
    /// Relative tolerance between the fitted `|T_tr − T_equ|` rate and `θA_ν`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpp_rate: Option<f64>,
    /// `‖f − M_{0,1}‖₁` below its pointwise bound at every record.
    pub alpp_l1: bool,
    /// Sup-norm tolerance between kinetic and moment-equation trajectories.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<f64>,
    /// `‖f − g‖₁ ≤ 4H(f|g)^{1/2}` at every record.
    #[serde(default = "yes")]
    pub csiszar_kullback: bool,
    /// Tolerance of the exchange balance residuals.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exchange: Option<f64>,
    /// Lower bound `−tol` on lemma slacks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemmas: Option<f64>,
}

impl Default for Checks {
    fn default() -> Self {
        Checks {
            conservation: None,
            lyapunov_monotone: None,
            production: None,
            envelope: None,
            equilibrium: None,
            gap_rate: None,
            alpp_rate: None,
            alpp_l1: false,
            oracle: None,
            csiszar_kullback: true,
            exchange: None,
            lemmas: None,
        }
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub task: Task,
    pub model: ModelKind,
    #[serde(default = "three")]
    pub d: usize,
    #[serde(default)]
    pub species: Vec<SpeciesSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureParams>,
    #[serde(default)]
    pub collision: CollisionModel,
    #[serde(default)]
    pub closure: Closure,
    #[serde(default)]
    pub grid: GridOptions,
    #[serde(default)]
    pub initial: Vec<InitialCondition>,
    /// Initial `Θ_k`; empty means `Θ_k(0) = T^r_k(0)`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub theta0: Vec<f64>,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub bounds: TemperatureBounds,
    /// Sample count of the sweep tasks.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub checks: Checks,
}

fn default_samples() -> usize {
    1000
}

impl Experiment {
    /// Minimal kinetic experiment; everything else at its default.
    pub fn new(name: &str, model: ModelKind, species: Vec<SpeciesSpec>, initial: Vec<InitialCondition>) -> Self {
        Experiment {
            name: name.into(),
            task: Task::Kinetic,
            model,
            d: 3,
            species,
            mixture: None,
            collision: CollisionModel::default(),
            closure: Closure::default(),
            grid: GridOptions::default(),
            initial,
            theta0: Vec::new(),
            run: RunSpec::default(),
            seed: 0,
            bounds: TemperatureBounds::default(),
            samples: default_samples(),
            variants: Vec::new(),
            checks: Checks::default(),
        }
    }

    /// The same experiment with every implicit default written out: one
    /// equilibrium Maxwellian per species when no initial condition is
    /// given, and explicit internal-dof slots.
    pub fn resolved(mut self) -> Self {
        if self.initial.is_empty() && self.task != Task::ExchangeSweep {
            self.initial = self
                .species
                .iter()
                .map(|s| {
                    let l = if self.model == ModelKind::AlppOneSpecies { 0 } else { s.internal_dof };
                    InitialCondition::Maxwellian(MaxwellianParams::new(1.0, vec![0.0; self.d], vec![0.0; l], 1.0, 1.0))
                })
                .collect();
        }
        for s in &mut self.species {
            if s.global_dof_slots.is_empty() {
                s.global_dof_slots = (0..s.internal_dof).collect();
            }
        }
        self
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::InvalidArgument("experiment name is empty".into()));
        }
        if self.d == 0 {
            return Err(Error::InvalidArgument("d must be positive".into()));
        }
        self.bounds.validate()?;
        match self.task {
            Task::ExchangeSweep => {
                if self.samples == 0 {
                    return Err(Error::InvalidArgument("samples must be positive".into()));
                }
                Ok(())
            }
            Task::LemmaSweep | Task::Kinetic => {
                if !(self.run.t_end >= 0.0 && self.run.t_end.is_finite()) {
                    return Err(Error::InvalidArgument(format!("t_end must be nonnegative, got {}", self.run.t_end)));
                }
                if let Some(dt) = self.run.dt {
                    if !(dt > 0.0 && dt.is_finite()) {
                        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
                    }
                }
                for v in &self.variants {
                    if v.z.len() > self.species.len() {
                        return Err(Error::InvalidArgument(format!(
                            "variant {} sets z for {} species, the model has {}",
                            v.label(),
                            v.z.len(),
                            self.species.len()
                        )));
                    }
                    self.species_for(v).iter().try_for_each(SpeciesSpec::validate)?;
                }
                self.build(&Variant::default()).map(|_| ())
            }
        }
    }

    fn species_for(&self, v: &Variant) -> Vec<SpeciesSpec> {
        let mut specs = self.species.clone();
        for (s, z) in specs.iter_mut().zip(&v.z) {
            s.z = *z;
        }
        if let (Some(t), Some(s)) = (v.theta, specs.first_mut()) {
            s.theta = t;
        }
        specs
    }

    /// Problem and initial state of one variant.
    pub fn build(&self, v: &Variant) -> Result<(Problem, SystemState)> {
        let specs = self.species_for(v);
        let grids = auto_grids(self.model, &specs, &self.initial, self.d, &self.grid)?;
        let mut p = Problem::new(self.model, specs, self.mixture, grids)?;
        p.collision = self.collision;
        p.closure = self.closure;
        let theta0: Vec<Option<f64>> = self.theta0.iter().copied().map(Some).collect();
        let s = initial_state(&p, &self.initial, &theta0, self.seed)?;
        Ok((p, s))
    }

    fn variants(&self) -> Vec<Variant> {
        if self.variants.is_empty() {
            vec![Variant::default()]
        } else {
            self.variants.clone()
        }
    }
}

/// Result of one invariant check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    /// Counted towards the exit status.
    pub asserted: bool,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, variant: Option<&str>, passed: bool, value: f64, limit: f64, detail: String) -> Self {
        CheckResult {
            name: name.into(),
            variant: variant.map(str::to_string),
            asserted: true,
            passed,
            value,
            limit,
            detail,
        }
    }

    fn report_only(mut self) -> Self {
        self.asserted = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedFit {
    pub name: String,
    pub fit: DecayFit,
    /// The rate the fit is compared with.
    pub reference: Option<f64>,
}

/// Records and derived quantities of one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRun {
    pub label: String,
    pub records: Vec<DiagnosticRecord>,
    pub constants: Option<TheoremConstants>,
    pub fits: Vec<NamedFit>,
    /// Decay rates of the linearised moment equations at the final state.
    pub spectrum: Vec<f64>,
    pub steps: usize,
    pub dt: f64,
    pub fallbacks: usize,
    pub aborted: Option<String>,
}

/// One sample of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub draw: usize,
    pub name: String,
    pub species: Option<usize>,
    pub value: f64,
    pub hypotheses_met: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub experiment: String,
    pub runs: Vec<VariantRun>,
    pub sweep: Vec<SweepRow>,
    pub checks: Vec<CheckResult>,
}

/// Exit status of an outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Passed,
    Failed,
    Aborted,
}

impl Outcome {
    pub fn aborted(&self) -> bool {
        self.runs.iter().any(|r| r.aborted.is_some())
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| c.asserted && !c.passed).collect()
    }

    pub fn status(&self) -> Status {
        if self.aborted() {
            Status::Aborted
        } else if self.failures().is_empty() {
            Status::Passed
        } else {
            Status::Failed
        }
    }

    /// Asserted checks of the given name.
    pub fn checks_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a CheckResult> + 'a {
        self.checks.iter().filter(move |c| c.name == name)
    }
}

/// Runs an experiment to completion. Configuration errors are returned as
/// `Err`; numerical failures end the affected variant and are kept in its
/// [`VariantRun::aborted`].
pub fn run_experiment(exp: &Experiment) -> Result<Outcome> {
    exp.validate()?;
    let mut out = Outcome { experiment: exp.name.clone(), runs: Vec::new(), sweep: Vec::new(), checks: Vec::new() };
    match exp.task {
        Task::ExchangeSweep => exchange_sweep(exp, &mut out),
        Task::LemmaSweep => lemma_sweep(exp, &mut out)?,
        Task::Kinetic => {
            for v in exp.variants() {
                kinetic(exp, &v, &mut out)?;
            }
        }
    }
    Ok(out)
}

struct Observed {
    record: DiagnosticRecord,
    raw: Option<Vec<f64>>,
}

fn kinetic(exp: &Experiment, v: &Variant, out: &mut Outcome) -> Result<()> {
    let label = v.label();
    let (p, s0) = exp.build(v)?;
    let sys = MomentSystem::from_problem(&p);
    let want_raw = exp.checks.oracle.is_some();
    let initial_totals = totals(&p, &p.snapshot(&s0)?);
    let mut settings = RunSettings::new(v.t_end.unwrap_or(exp.run.t_end))
        .with_scheme(exp.run.scheme)
        .with_stride(exp.run.stride);
    if let Some(dt) = v.dt.or(exp.run.dt) {
        settings = settings.with_dt(dt);
    }
    let mut rec = Recorder::new(exp.bounds);
    let outcome = run(&p, s0, settings, |st| {
        let record = rec.record(&p, st)?;
        let raw = if want_raw {
            let macros = record
                .species
                .iter()
                .map(|s| s.state.clone().ok_or(Error::VacuumState { density: 0.0, floor: p.density_floor }))
                .collect::<Result<Vec<MacroState>>>()?;
            Some(sys.raw_from_macro(&macros))
        } else {
            None
        };
        Ok(Observed { record, raw })
    })?;
    let aborted = outcome.aborted.as_ref().map(|e| e.to_string());
    let final_state = outcome.final_state;
    let (records, raws): (Vec<DiagnosticRecord>, Vec<Option<Vec<f64>>>) =
        outcome.records.into_iter().map(|o| (o.record, o.raw)).unzip();
    let final_macros: Option<Vec<MacroState>> =
        records.last().and_then(|r| r.species.iter().map(|s| s.state.clone()).collect());
    let spectrum = final_macros
        .as_ref()
        .and_then(|m| sys.predict_linear_rates(m).ok())
        .map(|s| s.rates())
        .unwrap_or_default();
    let mut vr = VariantRun {
        label: label.clone(),
        constants: rec.constants().cloned(),
        records,
        fits: Vec::new(),
        spectrum,
        steps: outcome.steps,
        dt: outcome.dt,
        fallbacks: outcome.fallbacks,
        aborted,
    };
    let lbl = Some(label.as_str());
    let checks = &exp.checks;
    let recs = &vr.records;

    if let Some(tol) = checks.conservation {
        let worst = recs
            .iter()
            .map(|r| {
                r.number_residuals.iter().copied().fold(0.0, f64::max).max(r.momentum_residual).max(r.energy_residual)
            })
            .fold(0.0, f64::max);
        let last = recs.last();
        let detail = match last {
            Some(r) => format!(
                "final residuals: numbers {:?}, momentum {:.3e}, energy {:.3e}",
                r.number_residuals, r.momentum_residual, r.energy_residual
            ),
            None => String::new(),
        };
        out.checks.push(CheckResult::new("conservation", lbl, worst < tol, worst, tol, detail));
    }
    if let Some(tol) = checks.lyapunov_monotone {
        let worst = recs
            .windows(2)
            .map(|w| (w[1].lyapunov - w[0].lyapunov) / w[0].lyapunov.abs().max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max);
        let worst = if recs.len() < 2 { 0.0 } else { worst };
        let detail = format!(
            "{} records, L from {:.10e} to {:.10e}",
            recs.len(),
            recs.first().map_or(0.0, |r| r.lyapunov),
            recs.last().map_or(0.0, |r| r.lyapunov)
        );
        out.checks.push(CheckResult::new("lyapunov_monotone", lbl, worst <= tol, worst, tol, detail));
    }
    if let Some(tol) = checks.production {
        let worst = recs.iter().map(|r| r.production).fold(f64::INFINITY, f64::min);
        out.checks.push(CheckResult::new(
            "production",
            lbl,
            worst >= -tol,
            worst,
            -tol,
            "smallest total entropy production".into(),
        ));
    }
    if checks.csiszar_kullback {
        let bad = recs.iter().filter(|r| !r.ck_holds).count();
        let worst = recs
            .iter()
            .flat_map(|r| r.species.iter().filter(|s| s.state.is_some()))
            .flat_map(|s| [s.ck_against_m(), s.ck_against_mt()])
            .map(|c| c.l1 - c.bound)
            .fold(f64::NEG_INFINITY, f64::max);
        out.checks.push(CheckResult::new(
            "csiszar_kullback",
            lbl,
            bad == 0,
            worst,
            0.0,
            format!("{bad} of {} records violate; largest l1 - 4 H^(1/2) shown", recs.len()),
        ));
    }
    if let Some(env) = checks.envelope {
        envelope_check(env, recs, lbl, out);
    }
    if let Some(eq) = checks.equilibrium {
        match equilibrium_distance(&p, &final_state, &initial_totals) {
            Ok(r) => {
                let (l1, spread, detail) = r;
                out.checks.push(CheckResult::new("equilibrium_l1", lbl, l1 < eq.l1, l1, eq.l1, detail.clone()));
                out.checks.push(CheckResult::new("equilibrium_spread", lbl, spread < eq.spread, spread, eq.spread, detail));
            }
            Err(e) => {
                out.checks.push(CheckResult::new("equilibrium_l1", lbl, false, f64::NAN, eq.l1, e.to_string()));
            }
        }
    }
    if let (Some(expected), Some(c)) = (&v.binding, &vr.constants) {
        let got = c.binding_label();
        let values: Vec<String> = c.branches.iter().map(|b| format!("{}={:.6}", b.label, b.value)).collect();
        out.checks.push(CheckResult::new(
            "binding_branch",
            lbl,
            got == expected,
            c.rate,
            c.rate,
            format!("expected {expected}, got {got}; {}", values.join(", ")),
        ));
    }
    if let Some(c) = &vr.constants {
        if v.binding.is_none() && c.kind != ModelKind::AlppOneSpecies {
            out.checks.push(
                CheckResult::new(
                    "binding_branch",
                    lbl,
                    true,
                    c.rate,
                    c.rate,
                    format!("attained {}", c.binding_label()),
                )
                .report_only(),
            );
        }
    }
    if v.gap_rate {
        let tol = checks.gap_rate.unwrap_or(0.05);
        gap_rate_check(&p, &mut vr, tol, lbl, out);
    }
    if let Some(tol) = checks.alpp_rate {
        alpp_rate_check(&p, &mut vr, tol, lbl, out);
    }
    if checks.alpp_l1 {
        let recs = &vr.records;
        let worst = recs
            .iter()
            .filter_map(|r| r.l1_bound.map(|b| r.species[0].l1_f_mt / b))
            .fold(0.0, f64::max);
        let covered = recs.iter().all(|r| r.l1_bound.is_some());
        out.checks.push(CheckResult::new(
            "alpp_l1_bound",
            lbl,
            covered && worst <= 1.0 + 1e-12,
            worst,
            1.0,
            "largest ratio of the L1 distance to its bound".into(),
        ));
    }
    if let Some(tol) = checks.oracle {
        oracle_check(&sys, &vr, &raws, exp.run.stride, tol, lbl, out);
    }
    if let Some(reason) = &vr.aborted {
        out.checks.push(CheckResult::new("run_completed", lbl, false, vr.steps as f64, f64::NAN, reason.clone()));
    }
    out.runs.push(vr);
    Ok(())
}

fn envelope_check(env: EnvelopeCheck, recs: &[DiagnosticRecord], lbl: Option<&str>, out: &mut Outcome) {
    let Some(first) = recs.first() else { return };
    let start = first.envelope;
    let mut worst: f64 = 0.0;
    let mut smallest = f64::INFINITY;
    let mut floor_reached = false;
    for r in recs {
        let h = r.max_rel_f_mt();
        if h < env.noise_floor {
            floor_reached = true;
            continue;
        }
        smallest = smallest.min(h);
        worst = worst.max(h / r.envelope);
    }
    let decades = if smallest.is_finite() && smallest > 0.0 { (start / smallest).log10() } else { 0.0 };
    out.checks.push(CheckResult::new(
        "envelope",
        lbl,
        worst <= env.factor,
        worst,
        env.factor,
        format!("largest H(f|M~)/envelope over {:.2} decades", decades),
    ));
    out.checks.push(CheckResult::new(
        "envelope_decades",
        lbl,
        decades >= env.decades || floor_reached,
        decades,
        env.decades,
        if floor_reached { "noise floor reached".into() } else { "decades of decay covered".into() },
    ));
}

/// L1 distance of the final fields from the Maxwellians at the common
/// velocity and temperature fixed by the conserved totals, and the spread
/// of all final temperatures.
fn equilibrium_distance(p: &Problem, state: &SystemState, initial: &Totals) -> Result<(f64, f64, String)> {
    let snap = p.snapshot(state)?;
    let macros: Vec<&MacroState> = snap
        .macros
        .iter()
        .map(|m| m.as_ref().ok_or(Error::VacuumState { density: 0.0, floor: p.density_floor }))
        .collect::<Result<_>>()?;
    let d = p.d();
    let specs = p.species();
    let rho: f64 = macros.iter().zip(specs).map(|(m, s)| s.mass * m.n).sum();
    let u: Vec<f64> = initial.momentum.iter().map(|p| p / rho).collect();
    let u2: f64 = u.iter().map(|x| x * x).sum();
    let mut internal_kinetic = 0.0;
    let mut dofs = 0.0;
    for (m, s) in macros.iter().zip(specs) {
        internal_kinetic += 0.5 * s.mass * m.n * m.eta_bar.iter().map(|e| e * e).sum::<f64>();
        dofs += 0.5 * (d + s.internal_dof) as f64 * m.n;
    }
    let t = (initial.energy - 0.5 * rho * u2 - internal_kinetic) / dofs;
    let mut l1 = 0.0f64;
    let mut own = 0.0f64;
    let mut temps = Vec::new();
    for (k, m) in macros.iter().enumerate() {
        let grid = &p.grids()[k];
        let f = &state.species[k].f;
        let g = GaussianTarget::isotropic(m.n, &u, &m.eta_bar, t, t, specs[k].mass)?
            .separable(grid, p.closure)?
            .materialize(grid, p.exec);
        l1 = l1.max(l1_distance(f, &g)?);
        own = own.max(l1_distance(f, &p.species_maxwellian(&snap, k)?.materialize(grid, p.exec))?);
        temps.extend([m.t_t, m.t_r_or_zero(), m.lambda, m.theta_or_lambda()]);
    }
    let hi = temps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = temps.iter().copied().fold(f64::INFINITY, f64::min);
    let du = macros
        .windows(2)
        .map(|w| w[0].u.iter().zip(&w[1].u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    Ok((l1, hi - lo, format!("T = {t:.12}, |u1-u2| = {du:.3e}, max ||f-M_k||_1 = {own:.3e}")))
}

fn gap_rate_check(p: &Problem, vr: &mut VariantRun, tol: f64, lbl: Option<&str>, out: &mut Outcome) {
    let series: Vec<(f64, f64)> = vr
        .records
        .iter()
        .filter_map(|r| r.species[0].state.as_ref().map(|m| (r.time, (m.lambda - m.theta_or_lambda()).abs())))
        .collect();
    let fit = match fit_decay_rate(&series, &FitOptions::default().with_noise_floor(1e-12)) {
        Ok(f) => f,
        Err(e) => {
            out.checks.push(CheckResult::new("gap_rate", lbl, false, f64::NAN, tol, e.to_string()));
            return;
        }
    };
    let Some(eig) = nearest(&vr.spectrum, fit.rate) else {
        out.checks.push(CheckResult::new("gap_rate", lbl, false, fit.rate, tol, "no moment spectrum".into()));
        return;
    };
    let err = (fit.rate - eig).abs() / eig;
    let branch = vr.constants.as_ref().map_or(String::new(), |c| {
        format!(", rate constant {:.6} ({}) for {}", c.rate, c.binding_label(), p.kind())
    });
    out.checks.push(CheckResult::new(
        "gap_rate",
        lbl,
        err <= tol,
        err,
        tol,
        format!("fitted {:.8} (R^2 {:.6}), eigenvalue {:.8}{branch}", fit.rate, fit.r_squared, eig),
    ));
    vr.fits.push(NamedFit { name: "lambda_theta_gap".into(), fit, reference: Some(eig) });
}

fn nearest(rates: &[f64], target: f64) -> Option<f64> {
    rates.iter().copied().min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
}

fn alpp_rate_check(p: &Problem, vr: &mut VariantRun, tol: f64, lbl: Option<&str>, out: &mut Outcome) {
    let spec = &p.species()[0];
    let expected = spec.theta * spec.collision_self;
    let series: Vec<(f64, f64)> = vr
        .records
        .iter()
        .filter_map(|r| r.species[0].state.as_ref().map(|m| (r.time, (m.t_t - m.t_total).abs())))
        .collect();
    match fit_decay_rate(&series, &FitOptions::default().with_noise_floor(1e-12)) {
        Ok(fit) => {
            let err = (fit.rate - expected).abs() / expected;
            out.checks.push(CheckResult::new(
                "alpp_rate",
                lbl,
                err <= tol,
                err,
                tol,
                format!("fitted {:.8} (R^2 {:.6}) against theta*A = {expected:.8}", fit.rate, fit.r_squared),
            ));
            vr.fits.push(NamedFit { name: "temperature_gap".into(), fit, reference: Some(expected) });
        }
        Err(e) => out.checks.push(CheckResult::new("alpp_rate", lbl, false, f64::NAN, tol, e.to_string())),
    }
    let h: Vec<(f64, f64)> = vr.records.iter().map(|r| (r.time, r.composite)).collect();
    if let Ok(fit) = fit_decay_rate(&h, &FitOptions::default().with_noise_floor(1e-12)) {
        out.checks.push(
            CheckResult::new(
                "alpp_entropy_rate",
                lbl,
                fit.rate >= expected * (1.0 - tol),
                fit.rate,
                expected,
                "fitted decay of H(f|M01) against theta*A".into(),
            )
            .report_only(),
        );
        vr.fits.push(NamedFit { name: "relative_entropy".into(), fit, reference: Some(expected) });
    }
}

fn oracle_check(
    sys: &MomentSystem,
    vr: &VariantRun,
    raws: &[Option<Vec<f64>>],
    stride: usize,
    tol: f64,
    lbl: Option<&str>,
    out: &mut Outcome,
) {
    let kinetic: Vec<&Vec<f64>> = raws.iter().flatten().collect();
    let (Some(x0), Some(first), Some(last)) = (kinetic.first(), vr.records.first(), vr.records.last()) else {
        out.checks.push(CheckResult::new("oracle", lbl, false, f64::NAN, tol, "no moments recorded".into()));
        return;
    };
    let t_end = last.time - first.time;
    let traj = if t_end > 0.0 { sys.integrate(x0, t_end, vr.dt, stride) } else { Ok(vec![(0.0, x0.to_vec())]) };
    let traj = match traj {
        Ok(t) => t,
        Err(e) => {
            out.checks.push(CheckResult::new("oracle", lbl, false, f64::NAN, tol, e.to_string()));
            return;
        }
    };
    if traj.len() != kinetic.len() {
        out.checks.push(CheckResult::new(
            "oracle",
            lbl,
            false,
            f64::NAN,
            tol,
            format!("{} oracle samples against {} kinetic records", traj.len(), kinetic.len()),
        ));
        return;
    }
    let worst = traj
        .iter()
        .zip(&kinetic)
        .flat_map(|((_, x), y)| x.iter().zip(y.iter()).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    out.checks.push(CheckResult::new(
        "oracle",
        lbl,
        worst < tol,
        worst,
        tol,
        format!("sup-norm over {} samples of {} raw moments", traj.len(), x0.len()),
    ));
}

fn random_moments(rng: &mut ChaCha8Rng, d: usize, l: usize, n: (f64, f64), u: f64, eta: f64) -> Moments {
    Moments {
        n: rng.random_range(n.0..n.1),
        u: (0..d).map(|_| rng.random_range(-u..=u)).collect(),
        eta_bar: (0..l).map(|_| rng.random_range(-eta..=eta)).collect(),
        t_t: rng.random_range(0.3..3.0),
        t_r: Some(rng.random_range(0.3..3.0)),
    }
}

fn exchange_sweep(exp: &Experiment, out: &mut Outcome) {
    let tol = exp.checks.exchange.unwrap_or(1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(exp.seed);
    let d = exp.d;
    let (mut draws, mut attempts) = (0usize, 0usize);
    let (mut worst_mom, mut worst_energy, mut min_temp) = (0.0f64, 0.0f64, f64::INFINITY);
    let mut failures = Vec::new();
    while draws < exp.samples && attempts < 100 * exp.samples {
        attempts += 1;
        let mut specs = [1usize, 2].map(|_| {
            SpeciesSpec::new(
                rng.random_range(0.3..3.0),
                rng.random_range(1..=3),
                rng.random_range(0.2..2.0),
                rng.random_range(0.2..2.0),
            )
        });
        if rng.random_bool(0.5) {
            let l1 = specs[0].internal_dof;
            specs[1].global_dof_slots = (l1..l1 + specs[1].internal_dof).collect();
        }
        let sr = [&specs[0], &specs[1]];
        let Ok(probe) = admissible_bounds(&MixtureParams::default(), sr, d) else { continue };
        let lo = probe.convex_lower.max(0.0);
        let delta = lo + rng.random_range(0.0..=1.0) * (1.0 - lo);
        let beta = lo + rng.random_range(0.0..=1.0) * (1.0 - lo);
        let Ok(b) = admissible_bounds(&MixtureParams { delta, beta, ..Default::default() }, sr, d) else {
            continue;
        };
        let params = MixtureParams {
            delta,
            beta,
            alpha: rng.random_range(0.0..=1.0),
            gamma: rng.random_range(0.0..=1.0) * b.gamma_max.max(0.0),
            gamma_tilde: rng.random_range(0.0..=1.0) * b.gamma_tilde_max.max(0.0),
        };
        let Ok(params) = validate_mixture_params(params, sr, d) else { continue };
        let states = [0, 1].map(|k| {
            let m = random_moments(&mut rng, d, specs[k].internal_dof, (0.2, 3.0), 1.0, 0.5);
            MacroState::from_moments(&m, Some(rng.random_range(0.3..3.0)))
        });
        let [Ok(a), Ok(c)] = states else { continue };
        let draw = draws;
        draws += 1;
        match exchange_coefficients([&a, &c], sr, &params) {
            Ok(coeff) => {
                let (mr, er) = exchange_residuals([&a, &c], sr, &coeff).unwrap_or((f64::NAN, f64::NAN));
                let t = [coeff[0].lambda, coeff[0].theta, coeff[1].lambda, coeff[1].theta]
                    .into_iter()
                    .fold(f64::INFINITY, f64::min);
                worst_mom = worst_mom.max(if mr.is_nan() { f64::INFINITY } else { mr });
                worst_energy = worst_energy.max(if er.is_nan() { f64::INFINITY } else { er });
                min_temp = min_temp.min(t);
                for (name, value) in [("momentum", mr), ("energy", er), ("min_temperature", t)] {
                    out.sweep.push(SweepRow { draw, name: name.into(), species: None, value, hypotheses_met: true });
                }
            }
            Err(e) => {
                min_temp = min_temp.min(match e {
                    Error::NonpositiveExchangeTemperature { value, .. } => value,
                    _ => f64::NAN,
                });
                failures.push(format!("draw {draw}: {e}"));
            }
        }
    }
    let enough = draws == exp.samples;
    let note = format!("{draws} admissible draws of {attempts} attempts");
    out.checks.push(CheckResult::new("exchange_momentum", None, enough && worst_mom < tol, worst_mom, tol, note.clone()));
    out.checks.push(CheckResult::new("exchange_energy", None, enough && worst_energy < tol, worst_energy, tol, note));
    let detail = if failures.is_empty() {
        "smallest interspecies temperature".into()
    } else {
        failures.iter().take(5).cloned().collect::<Vec<_>>().join("; ")
    };
    out.checks.push(CheckResult::new(
        "exchange_temperatures",
        None,
        enough && failures.is_empty() && min_temp > 0.0,
        min_temp,
        0.0,
        detail,
    ));
}

fn lemma_sweep(exp: &Experiment, out: &mut Outcome) -> Result<()> {
    let tol = exp.checks.lemmas.unwrap_or(1e-8);
    let (p, _) = exp.build(&Variant::default())?;
    let d = p.d();
    let specs = p.species().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(exp.seed);
    let target = exp.samples;
    let mut met: Vec<(String, Option<usize>, usize, f64)> = Vec::new();
    let mut unmet_min: Vec<(String, f64)> = Vec::new();
    let mut draws = 0usize;
    let max_draws = 2000 * target.max(1);
    loop {
        if draws >= max_draws || (!met.is_empty() && met.iter().all(|m| m.2 >= target)) {
            break;
        }
        let macros: Option<Vec<Option<MacroState>>> = specs
            .iter()
            .map(|s| {
                let m = random_moments(&mut rng, d, s.internal_dof, (0.5, 2.0), 0.5, 0.3);
                let theta = m.t_r.unwrap_or(0.0) * rng.random_range(0.005..1.0f64).powi(2);
                MacroState::from_moments(&m, (s.internal_dof > 0).then_some(theta)).ok().map(Some)
            })
            .collect();
        let Some(macros) = macros else { continue };
        let Ok(snap) = p.snapshot_from_macros(macros) else { continue };
        let report = check_lemma_inequalities(&p, &snap, exp.bounds);
        let draw = draws;
        draws += 1;
        for c in &report.checks {
            out.sweep.push(SweepRow {
                draw,
                name: c.name.clone(),
                species: c.species,
                value: c.slack,
                hypotheses_met: c.hypotheses_met,
            });
            if c.hypotheses_met {
                let e = match met.iter_mut().find(|m| m.0 == c.name && m.1 == c.species) {
                    Some(e) => e,
                    None => {
                        met.push((c.name.clone(), c.species, 0, f64::INFINITY));
                        met.last_mut().expect("pushed")
                    }
                };
                if e.2 < target {
                    e.2 += 1;
                    e.3 = e.3.min(c.slack);
                }
            } else {
                match unmet_min.iter_mut().find(|m| m.0 == c.name) {
                    Some(e) => e.1 = e.1.min(c.slack),
                    None => unmet_min.push((c.name.clone(), c.slack)),
                }
                if met.iter().all(|m| m.0 != c.name || m.1 != c.species) {
                    met.push((c.name.clone(), c.species, 0, f64::INFINITY));
                }
            }
        }
    }
    for (name, species, count, min) in &met {
        let label = match species {
            Some(k) => format!("{name}[{}]", k + 1),
            None => name.clone(),
        };
        out.checks.push(CheckResult::new(
            "lemma",
            Some(&label),
            *count >= target && *min >= -tol,
            if *count > 0 { *min } else { f64::NAN },
            -tol,
            format!("{count} states with hypotheses met (target {target}) in {draws} draws"),
        ));
    }
    for (name, min) in unmet_min {
        out.checks.push(
            CheckResult::new(
                "lemma_unmet",
                Some(&name),
                min >= -tol,
                min,
                -tol,
                "smallest slack among states violating the hypotheses".into(),
            )
            .report_only(),
        );
    }
    Ok(())
}

fn maxwellian(n: f64, u: &[f64], lambda: f64, theta: f64) -> InitialCondition {
    InitialCondition::Maxwellian(MaxwellianParams::new(n, u.to_vec(), Vec::new(), lambda, theta))
}

fn grid(velocity_points: usize, internal_points: usize) -> GridOptions {
    GridOptions { velocity_points, internal_points, energy_points: 24, safety: 1.2 }
}

fn conservation(name: &str, model: ModelKind) -> Experiment {
    let mut e = Experiment::new(
        name,
        model,
        vec![SpeciesSpec::new(1.0, 2, 2.0, 1.0), SpeciesSpec::new(1.5, 2, 2.0, 1.0)],
        vec![maxwellian(1.0, &[0.3, 0.0, 0.0], 1.2, 0.8), maxwellian(1.0, &[-0.2, 0.1, 0.0], 0.9, 1.1)],
    );
    e.grid = GridOptions { velocity_points: 24, internal_points: 16, ..GridOptions::default() };
    e.run = RunSpec { t_end: 10.0, dt: Some(0.05), scheme: Scheme::Rk4, stride: 20 };
    e.checks.conservation = Some(1e-8);
    e
}

fn oracle(name: &str, model: ModelKind) -> Experiment {
    let (species, initial) = match model {
        ModelKind::AlppOneSpecies => (
            vec![SpeciesSpec::new(1.0, 2, 1.0, 0.0).with_theta(0.5)],
            vec![maxwellian(1.0, &[0.2, 0.0, 0.0], 1.4, 0.7)],
        ),
        ModelKind::KppOneSpecies | ModelKind::BipOneSpecies => (
            vec![SpeciesSpec::new(1.0, 2, 1.0, 0.0).with_z(2.0)],
            vec![maxwellian(1.0, &[0.2, 0.0, 0.0], 1.4, 0.7)],
        ),
        ModelKind::KppMixture | ModelKind::NewMixture => (
            vec![SpeciesSpec::new(1.0, 2, 2.0, 1.0).with_z(2.0), SpeciesSpec::new(1.5, 1, 2.0, 1.0)],
            vec![maxwellian(1.0, &[0.2, 0.0, 0.0], 1.4, 0.7), maxwellian(0.8, &[-0.1, 0.0, 0.0], 0.9, 1.2)],
        ),
    };
    let mut e = Experiment::new(name, model, species, initial);
    e.grid = grid(14, 12);
    e.run = RunSpec { t_end: 2.0, dt: Some(0.02), scheme: Scheme::Rk4, stride: 5 };
    e.checks.oracle = Some(1e-5);
    e
}

/// One scenario per verified property; `run-all` executes all of them.
pub fn library() -> Vec<Experiment> {
    let mut out = vec![
        conservation("conservation_kpp_mixture", ModelKind::KppMixture),
        conservation("conservation_new_mixture", ModelKind::NewMixture),
    ];

    let mut e = Experiment::new(
        "equilibrium",
        ModelKind::NewMixture,
        vec![SpeciesSpec::new(1.0, 1, 2.0, 2.0), SpeciesSpec::new(1.5, 1, 2.0, 2.0)],
        vec![maxwellian(1.0, &[0.3, 0.0, 0.0], 1.3, 0.8), maxwellian(1.0, &[-0.2, 0.0, 0.0], 0.9, 1.1)],
    );
    e.grid = grid(16, 16);
    e.run = RunSpec { t_end: 40.0, dt: Some(0.1), scheme: Scheme::Rk4, stride: 20 };
    e.checks.equilibrium = Some(EquilibriumCheck::default());
    out.push(e);

    let mut e = Experiment::new(
        "h_theorem",
        ModelKind::NewMixture,
        vec![SpeciesSpec::new(1.0, 2, 2.0, 1.0), SpeciesSpec::new(1.5, 1, 2.0, 1.0)],
        vec![maxwellian(1.0, &[0.3, 0.0, 0.0], 1.2, 0.8), maxwellian(1.0, &[-0.2, 0.0, 0.0], 0.9, 1.1)],
    );
    e.grid = grid(12, 10);
    e.run = RunSpec { t_end: 4.0, dt: None, scheme: Scheme::Rk4, stride: 1 };
    e.variants = [0.1, 1.0, 10.0].iter().map(|&z| Variant { z: vec![z, z], ..Default::default() }).collect();
    e.checks.lyapunov_monotone = Some(1e-8);
    e.checks.production = Some(1e-8);
    out.push(e);

    let mut e = Experiment::new(
        "envelope",
        ModelKind::NewMixture,
        vec![SpeciesSpec::new(1.0, 2, 1.0, 0.5), SpeciesSpec::new(1.5, 1, 1.0, 0.5)],
        vec![maxwellian(1.0, &[0.3, 0.0, 0.0], 1.2, 0.8), maxwellian(1.0, &[-0.2, 0.0, 0.0], 0.9, 1.1)],
    );
    e.grid = grid(16, 12);
    e.theta0 = vec![1.0, 0.95];
    e.run = RunSpec { t_end: 20.0, dt: None, scheme: Scheme::Rk4, stride: 20 };
    e.checks.envelope = Some(EnvelopeCheck::default());
    out.push(e);

    let mut e = Experiment::new(
        "regimes",
        ModelKind::NewMixture,
        vec![SpeciesSpec::new(1.0, 2, 2.0, 0.1), SpeciesSpec::new(1.5, 1, 4.0, 0.1)],
        vec![maxwellian(1.0, &[0.0; 3], 1.2, 0.7), maxwellian(1.0, &[0.0; 3], 1.0, 1.0)],
    );
    e.grid = grid(14, 12);
    e.run = RunSpec { t_end: 10.0, dt: None, scheme: Scheme::Rk4, stride: 5 };
    e.variants = vec![
        Variant { z: vec![0.1], t_end: Some(3.0), binding: Some("maxwellization_1".into()), ..Default::default() },
        Variant { z: vec![1.0], ..Default::default() },
        Variant {
            z: vec![10.0],
            t_end: Some(40.0),
            dt: Some(0.05),
            binding: Some("temperature_1".into()),
            gap_rate: true,
            ..Default::default()
        },
    ];
    e.checks.gap_rate = Some(0.05);
    out.push(e);

    let mut e = Experiment::new(
        "alpp_rate",
        ModelKind::AlppOneSpecies,
        vec![SpeciesSpec::new(1.0, 2, 1.0, 0.0)],
        vec![maxwellian(1.0, &[0.0; 3], 1.5, 0.6)],
    );
    e.grid = grid(16, 0);
    e.run = RunSpec { t_end: 10.0, dt: Some(0.05), scheme: Scheme::Rk4, stride: 4 };
    e.variants = vec![
        Variant { theta: Some(0.25), t_end: Some(40.0), ..Default::default() },
        Variant { theta: Some(1.0), ..Default::default() },
    ];
    e.checks.alpp_rate = Some(0.01);
    e.checks.alpp_l1 = true;
    out.push(e);

    for (name, model) in [
        ("oracle_alpp", ModelKind::AlppOneSpecies),
        ("oracle_kpp", ModelKind::KppOneSpecies),
        ("oracle_bip", ModelKind::BipOneSpecies),
        ("oracle_kpp_mixture", ModelKind::KppMixture),
        ("oracle_new_mixture", ModelKind::NewMixture),
    ] {
        out.push(oracle(name, model));
    }

    let mut e = Experiment::new("exchange", ModelKind::NewMixture, Vec::new(), Vec::new());
    e.task = Task::ExchangeSweep;
    e.samples = 1000;
    e.seed = 7;
    e.checks.exchange = Some(1e-12);
    e.checks.csiszar_kullback = false;
    out.push(e);

    let mut e = Experiment::new(
        "lemmas",
        ModelKind::KppMixture,
        vec![SpeciesSpec::new(1.0, 2, 1.0, 0.2).with_z(0.05), SpeciesSpec::new(1.5, 1, 0.8, 0.3).with_z(0.05)],
        vec![maxwellian(1.0, &[], 1.0, 1.0), maxwellian(1.0, &[], 1.0, 1.0)],
    );
    e.task = Task::LemmaSweep;
    e.grid = grid(8, 6);
    e.samples = 100;
    e.seed = 11;
    e.bounds = TemperatureBounds { a: 4.0, b: 1.0 };
    e.checks.lemmas = Some(1e-8);
    e.checks.csiszar_kullback = false;
    out.push(e);
    out
}

/// The built-in scenario of the given name.
pub fn builtin(name: &str) -> Option<Experiment> {
    library().into_iter().find(|e| e.name == name)
}
