//! The five relaxation models and their right-hand sides.
//!
//! Every model is written as
//!
//! ```text
//! ∂t f_k = Σ_t w_t G_t − λ_k f_k,      dΘ_k/dt = r_k,
//! ```
//!
//! where the targets `G_t` are separable Maxwellians and `w_t`, `λ_k`, `r_k`
//! are scalars fixed by the current moments. [`SpeciesRhs`] stores exactly
//! this data so the integrator can fuse the evaluation into its stage update.

pub mod alpp;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::grid::{DistributionField, PhaseGrid, SeparableField};
use crate::maxwellians::{
    equilibrium_target, exchange_coefficients, interspecies_equilibrium_target, interspecies_target,
    species_target, Closure, ExchangeCoefficients,
};
use crate::moments::{axis_marginals, moments_from_marginals, MacroState, DEFAULT_DENSITY_FLOOR};
use crate::species::{validate_mixture_params, CollisionModel, MixtureParams, SpeciesSpec};

/// Which relaxation model drives the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// Andries, Le Tallec, Perlat, Perthame: one species, scalar internal energy.
    #[serde(rename = "ALPP_one_species")]
    AlppOneSpecies,
    /// Klingenberg, Pirner, Puppo reduced to one species.
    #[serde(rename = "KPP_one_species")]
    KppOneSpecies,
    /// Bernard, Iollo, Puppo: one species.
    #[serde(rename = "BIP_one_species")]
    BipOneSpecies,
    /// Klingenberg, Pirner, Puppo two-species mixture.
    #[serde(rename = "KPP_mixture")]
    KppMixture,
    /// Mixture model with the equilibrium interspecies Maxwellian in the
    /// temperature relaxation.
    #[serde(rename = "NEW_mixture")]
    NewMixture,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::AlppOneSpecies,
        ModelKind::KppOneSpecies,
        ModelKind::BipOneSpecies,
        ModelKind::KppMixture,
        ModelKind::NewMixture,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::AlppOneSpecies => "ALPP_one_species",
            ModelKind::KppOneSpecies => "KPP_one_species",
            ModelKind::BipOneSpecies => "BIP_one_species",
            ModelKind::KppMixture => "KPP_mixture",
            ModelKind::NewMixture => "NEW_mixture",
        }
    }

    pub fn is_mixture(self) -> bool {
        matches!(self, ModelKind::KppMixture | ModelKind::NewMixture)
    }

    pub fn species_count(self) -> usize {
        if self.is_mixture() {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model kind `{s}`")))
    }
}

/// A fully validated model: kind, species, mixture parameters and grids.
#[derive(Debug, Clone)]
pub struct Problem {
    kind: ModelKind,
    species: Vec<SpeciesSpec>,
    params: Option<MixtureParams>,
    grids: Vec<Arc<PhaseGrid>>,
    pub collision: CollisionModel,
    pub closure: Closure,
    pub exec: Exec,
    pub density_floor: f64,
}

impl Problem {
    pub fn new(
        kind: ModelKind,
        species: Vec<SpeciesSpec>,
        params: Option<MixtureParams>,
        grids: Vec<Arc<PhaseGrid>>,
    ) -> Result<Self> {
        let count = kind.species_count();
        if species.len() != count || grids.len() != count {
            return Err(Error::ModelMismatch(format!(
                "{kind} needs {count} species and grids, got {} and {}",
                species.len(),
                grids.len()
            )));
        }
        for s in &species {
            s.validate()?;
        }
        let d = grids[0].d();
        for (k, (s, g)) in species.iter().zip(&grids).enumerate() {
            if g.d() != d {
                return Err(Error::ModelMismatch("all species need the same velocity dimension".into()));
            }
            let expected = match kind {
                ModelKind::AlppOneSpecies => {
                    if s.internal_dof == 0 {
                        return Err(Error::InvalidSpecies(
                            "the ALPP model needs at least one internal degree of freedom".into(),
                        ));
                    }
                    1
                }
                _ => s.internal_dof,
            };
            if g.l() != expected {
                return Err(Error::ModelMismatch(format!(
                    "grid of species {k} has {} internal axes, expected {expected}",
                    g.l()
                )));
            }
        }
        if kind == ModelKind::AlppOneSpecies && grids[0].internal_axes()[0].min < 0.0 {
            return Err(Error::InvalidGrid("the ALPP internal variable I must be nonnegative".into()));
        }
        let params = if kind.is_mixture() {
            if species.iter().any(|s| s.internal_dof == 0) {
                return Err(Error::InvalidSpecies(
                    "mixture models need at least one internal degree of freedom per species".into(),
                ));
            }
            let p = params.unwrap_or_default();
            Some(validate_mixture_params(p, [&species[0], &species[1]], d)?)
        } else {
            None
        };
        Ok(Problem {
            kind,
            species,
            params,
            grids,
            collision: CollisionModel::default(),
            closure: Closure::default(),
            exec: Exec::default(),
            density_floor: DEFAULT_DENSITY_FLOOR,
        })
    }

    pub fn with_collision(mut self, c: CollisionModel) -> Self {
        self.collision = c;
        self
    }

    pub fn with_closure(mut self, c: Closure) -> Self {
        self.closure = c;
        self
    }

    pub fn with_exec(mut self, e: Exec) -> Self {
        self.exec = e;
        self
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn species(&self) -> &[SpeciesSpec] {
        &self.species
    }

    pub fn params(&self) -> Option<&MixtureParams> {
        self.params.as_ref()
    }

    pub fn grids(&self) -> &[Arc<PhaseGrid>] {
        &self.grids
    }

    pub fn d(&self) -> usize {
        self.grids[0].d()
    }

    /// Whether species `k` carries the auxiliary temperature `Θ_k`.
    pub fn has_theta(&self, k: usize) -> bool {
        self.kind != ModelKind::AlppOneSpecies && self.species[k].internal_dof > 0
    }

    /// Builds a state from the fields, taking `Θ_k = T^r_k` where needed.
    pub fn state_from_fields(&self, fields: Vec<DistributionField>) -> Result<SystemState> {
        let mut species = Vec::with_capacity(fields.len());
        for (k, f) in fields.into_iter().enumerate() {
            let theta = if self.has_theta(k) {
                let m = moments_from_marginals(
                    &axis_marginals(&f, self.exec),
                    f.grid(),
                    self.species[k].mass,
                    self.density_floor,
                )?;
                m.t_r
            } else {
                None
            };
            species.push(SpeciesState { f, theta });
        }
        let state = SystemState { time: 0.0, species };
        self.check_state(&state)?;
        Ok(state)
    }

    pub fn check_state(&self, state: &SystemState) -> Result<()> {
        if state.species.len() != self.species.len() {
            return Err(Error::ModelMismatch("wrong number of species in state".into()));
        }
        for (k, s) in state.species.iter().enumerate() {
            if s.f.grid() != &self.grids[k] && **s.f.grid() != *self.grids[k] {
                return Err(Error::ModelMismatch(format!("species {k} lives on a different grid")));
            }
            match (self.has_theta(k), s.theta) {
                (true, Some(t)) if t > 0.0 => {}
                (true, Some(t)) => {
                    return Err(Error::NonpositiveTemperature { what: "Theta", value: t })
                }
                (false, None) => {}
                _ => {
                    return Err(Error::ModelMismatch(format!(
                        "species {k}: Theta must be present exactly when the model evolves it"
                    )))
                }
            }
        }
        Ok(())
    }

    /// Macroscopic fields and collision rates at the current state.
    pub fn snapshot(&self, state: &SystemState) -> Result<Snapshot> {
        if self.kind == ModelKind::AlppOneSpecies {
            return alpp::snapshot(self, state);
        }
        let mut macros = Vec::with_capacity(self.species.len());
        for (k, s) in state.species.iter().enumerate() {
            let marg = axis_marginals(&s.f, self.exec);
            match moments_from_marginals(&marg, s.f.grid(), self.species[k].mass, self.density_floor) {
                Ok(m) => macros.push(Some(MacroState::from_moments(&m, s.theta)?)),
                Err(Error::VacuumState { .. }) if self.kind.is_mixture() => macros.push(None),
                Err(e) => return Err(e),
            }
        }
        self.snapshot_from_macros(macros)
    }

    /// Rates and exchange coefficients for given macroscopic states; `None`
    /// marks a vacuum species.
    pub fn snapshot_from_macros(&self, macros: Vec<Option<MacroState>>) -> Result<Snapshot> {
        if macros.len() != self.species.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} species states, got {}",
                self.species.len(),
                macros.len()
            )));
        }
        let density = |k: usize| macros[k].as_ref().map_or(0.0, |m: &MacroState| m.n);
        let rates: Vec<(f64, f64)> = (0..self.species.len())
            .map(|k| {
                let other = if self.kind.is_mixture() { density(1 - k) } else { 0.0 };
                self.collision.rates(&self.species[k], density(k), other)
            })
            .collect();
        let exchange = match (self.kind.is_mixture(), macros.first(), macros.get(1)) {
            (true, Some(Some(a)), Some(Some(b))) => Some(exchange_coefficients(
                [a, b],
                [&self.species[0], &self.species[1]],
                self.params.as_ref().expect("mixture params"),
            )?),
            _ => None,
        };
        Ok(Snapshot { macros, rates, exchange })
    }

    fn macro_of<'a>(&self, snap: &'a Snapshot, k: usize) -> Result<&'a MacroState> {
        snap.macros[k]
            .as_ref()
            .ok_or(Error::VacuumState { density: 0.0, floor: self.density_floor })
    }

    /// The relaxation target `M_k` (for ALPP: the Gaussian `G̃`).
    pub fn species_maxwellian(&self, snap: &Snapshot, k: usize) -> Result<SeparableField> {
        if self.kind == ModelKind::AlppOneSpecies {
            return alpp::gaussian(self, snap, false);
        }
        species_target(self.macro_of(snap, k)?, &self.species[k])?.separable(&self.grids[k], self.closure)
    }

    /// The equilibrium Maxwellian `M̃_k` (for ALPP: `M_{0,1}`).
    pub fn equilibrium_maxwellian(&self, snap: &Snapshot, k: usize) -> Result<SeparableField> {
        if self.kind == ModelKind::AlppOneSpecies {
            return alpp::gaussian(self, snap, true);
        }
        equilibrium_target(self.macro_of(snap, k)?, &self.species[k])?.separable(&self.grids[k], self.closure)
    }

    /// `M_kj`, when both species are present.
    pub fn interspecies_maxwellian(&self, snap: &Snapshot, k: usize) -> Result<Option<SeparableField>> {
        match &snap.exchange {
            Some(c) => Ok(Some(
                interspecies_target(&c[k], &self.species[k])?.separable(&self.grids[k], self.closure)?,
            )),
            None => Ok(None),
        }
    }

    /// `M̃_kj`, when both species are present.
    pub fn interspecies_equilibrium_maxwellian(
        &self,
        snap: &Snapshot,
        k: usize,
    ) -> Result<Option<SeparableField>> {
        match &snap.exchange {
            Some(c) => Ok(Some(
                interspecies_equilibrium_target(&c[k], &self.species[k])?
                    .separable(&self.grids[k], self.closure)?,
            )),
            None => Ok(None),
        }
    }

    /// `dΘ_k/dt` from the moment form of the temperature relaxation.
    pub fn theta_rate(&self, snap: &Snapshot, k: usize) -> Result<f64> {
        if !self.has_theta(k) {
            return Ok(0.0);
        }
        let Some(m) = snap.macros[k].as_ref() else {
            return Ok(0.0);
        };
        let (s, c) = snap.rates[k];
        let theta = m.theta_or_lambda();
        let t_r = m.t_r_or_zero();
        let relax = s / self.species[k].collision_number(self.d()) * (m.lambda - theta);
        let cross = |f: &dyn Fn(&ExchangeCoefficients) -> f64| {
            snap.exchange.as_ref().map_or(0.0, |e| c * f(&e[k]))
        };
        Ok(match self.kind {
            ModelKind::AlppOneSpecies => 0.0,
            ModelKind::KppOneSpecies => relax + s * (theta - t_r),
            ModelKind::BipOneSpecies => relax,
            ModelKind::KppMixture => relax + s * (theta - t_r) + cross(&|e| e.theta - t_r),
            ModelKind::NewMixture => relax + cross(&|e| e.t_total - theta),
        })
    }

    /// Right-hand side of every species in separable form.
    pub fn rhs_from_snapshot(&self, snap: &Snapshot) -> Result<Vec<SpeciesRhs>> {
        if self.kind == ModelKind::AlppOneSpecies {
            return Ok(vec![alpp::rhs(self, snap)?]);
        }
        let mut out = Vec::with_capacity(self.species.len());
        for k in 0..self.species.len() {
            if snap.macros[k].is_none() {
                out.push(SpeciesRhs::zero());
                continue;
            }
            let (s, c) = snap.rates[k];
            let mut targets = Vec::with_capacity(2);
            let mut decay = 0.0;
            if s > 0.0 {
                targets.push((s, self.species_maxwellian(snap, k)?));
                decay += s;
            }
            if c > 0.0 {
                if let Some(m) = self.interspecies_maxwellian(snap, k)? {
                    targets.push((c, m));
                    decay += c;
                }
            }
            out.push(SpeciesRhs { targets, decay, dtheta: self.theta_rate(snap, k)? });
        }
        Ok(out)
    }

    pub fn rhs(&self, state: &SystemState) -> Result<Vec<SpeciesRhs>> {
        self.rhs_from_snapshot(&self.snapshot(state)?)
    }

    /// Largest relaxation rate in the system, including the temperature
    /// relaxation `ν_kk n_k / z_k`.
    pub fn max_rate(&self, snap: &Snapshot) -> f64 {
        (0..self.species.len())
            .map(|k| {
                let (s, c) = snap.rates[k];
                if self.kind == ModelKind::AlppOneSpecies {
                    s
                } else {
                    s + c + s / self.species[k].z
                }
            })
            .fold(0.0, f64::max)
    }

    /// Default time step `0.05 / ν_max`.
    pub fn default_dt(&self, state: &SystemState) -> Result<f64> {
        let rate = self.max_rate(&self.snapshot(state)?);
        if !(rate > 0.0) {
            return Err(Error::InvalidArgument("all relaxation rates vanish; give dt explicitly".into()));
        }
        Ok(0.05 / rate)
    }
}

/// Moments, Maxwellian parameters and rates derived from one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// `None` for a vacuum species in a mixture.
    pub macros: Vec<Option<MacroState>>,
    /// `(ν_kk n_k, ν_kj n_j)` per species; for ALPP `(A_ν, 0)`.
    pub rates: Vec<(f64, f64)>,
    pub exchange: Option<[ExchangeCoefficients; 2]>,
}

/// Kinetic field and auxiliary temperature of one species.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesState {
    pub f: DistributionField,
    /// `Θ_k`; `None` for ALPP and for species without internal degrees of freedom.
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub time: f64,
    pub species: Vec<SpeciesState>,
}

/// `∂t f = Σ w_t G_t − decay·f` and `dΘ/dt = dtheta`.
#[derive(Debug, Clone)]
pub struct SpeciesRhs {
    pub targets: Vec<(f64, SeparableField)>,
    pub decay: f64,
    pub dtheta: f64,
}

impl SpeciesRhs {
    pub fn zero() -> Self {
        SpeciesRhs { targets: Vec::new(), decay: 0.0, dtheta: 0.0 }
    }

    /// Calls `g(cells, target_sum)` for every row of `range`, where
    /// `target_sum[j] = Σ_t w_t G_t` on the row.
    pub(crate) fn for_rows(
        &self,
        grid: &PhaseGrid,
        range: std::ops::Range<usize>,
        mut g: impl FnMut(std::ops::Range<usize>, &[f64]),
    ) {
        let row = grid.row_len();
        let mut buf = vec![0.0; row];
        grid.walk_rows(range, |outer, cells| {
            buf.iter_mut().for_each(|b| *b = 0.0);
            for (w, t) in &self.targets {
                let pre = w * t.row_prefix(outer);
                if pre == 0.0 {
                    continue;
                }
                for (b, x) in buf.iter_mut().zip(t.last_factor()) {
                    *b += pre * x;
                }
            }
            let len = cells.len();
            g(cells, &buf[..len]);
        });
    }

    /// Materialises `∂t f` for the given field.
    pub fn evaluate(&self, f: &DistributionField, exec: Exec) -> Vec<f64> {
        let grid = f.grid();
        let block = grid.block_len();
        let mut out = vec![0.0; grid.len()];
        let values = f.values();
        exec::for_each_block_mut(exec, block, &mut out, |b, chunk| {
            let start = b * block;
            self.for_rows(grid, start..start + chunk.len(), |cells, sum| {
                for (j, c) in cells.enumerate() {
                    chunk[c - start] = sum[j] - self.decay * values[c];
                }
            });
        });
        out
    }
}

/// Time derivative of one species: `(∂t f_k, dΘ_k/dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsValue {
    pub df: Vec<f64>,
    pub dtheta: f64,
}

fn evaluate_checked(problem: &Problem, state: &SystemState, kind: ModelKind) -> Result<Vec<RhsValue>> {
    if problem.kind() != kind {
        return Err(Error::ModelMismatch(format!("problem is {}, not {kind}", problem.kind())));
    }
    problem.check_state(state)?;
    let rhs = problem.rhs(state)?;
    Ok(rhs
        .iter()
        .zip(&state.species)
        .map(|(r, s)| RhsValue { df: r.evaluate(&s.f, problem.exec), dtheta: r.dtheta })
        .collect())
}

/// `A_ν(G̃[f] − f)`.
pub fn rhs_alpp(problem: &Problem, state: &SystemState) -> Result<Vec<f64>> {
    Ok(evaluate_checked(problem, state, ModelKind::AlppOneSpecies)?.remove(0).df)
}

/// `νn(M − f)` with the temperature relaxation including `νn(Θ − T^r)`.
pub fn rhs_kpp_one_species(problem: &Problem, state: &SystemState) -> Result<RhsValue> {
    Ok(evaluate_checked(problem, state, ModelKind::KppOneSpecies)?.remove(0))
}

/// `νn(M − f)` with pure temperature relaxation `(νn/Z_r)(Λ − Θ)`.
pub fn rhs_bip_one_species(problem: &Problem, state: &SystemState) -> Result<RhsValue> {
    Ok(evaluate_checked(problem, state, ModelKind::BipOneSpecies)?.remove(0))
}

pub fn rhs_kpp_mixture(problem: &Problem, state: &SystemState) -> Result<Vec<RhsValue>> {
    evaluate_checked(problem, state, ModelKind::KppMixture)
}

pub fn rhs_new_mixture(problem: &Problem, state: &SystemState) -> Result<Vec<RhsValue>> {
    evaluate_checked(problem, state, ModelKind::NewMixture)
}

#[cfg(test)]
mod tests;
