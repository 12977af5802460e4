//! Initial-condition recipes and automatic grid extents.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, DistributionField, PhaseGrid};
use crate::maxwellians::{Closure, GaussianTarget};
use crate::models::{alpp, ModelKind, Problem, SystemState};
use crate::species::SpeciesSpec;

/// Parameters `(n, u, η̄, Λ, Θ)` of one Maxwellian. Empty `u` or `eta_bar`
/// mean zero vectors. For the ALPP model `lambda` is `T_tr` and `theta` is
/// `T_int`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxwellianParams {
    #[serde(default = "one")]
    pub n: f64,
    #[serde(default)]
    pub u: Vec<f64>,
    #[serde(default)]
    pub eta_bar: Vec<f64>,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "one")]
    pub theta: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for MaxwellianParams {
    fn default() -> Self {
        MaxwellianParams { n: 1.0, u: Vec::new(), eta_bar: Vec::new(), lambda: 1.0, theta: 1.0 }
    }
}

impl MaxwellianParams {
    pub fn new(n: f64, u: Vec<f64>, eta_bar: Vec<f64>, lambda: f64, theta: f64) -> Self {
        MaxwellianParams { n, u, eta_bar, lambda, theta }
    }

    fn padded(v: &[f64], len: usize) -> Result<Vec<f64>> {
        match v.len() {
            0 => Ok(vec![0.0; len]),
            n if n == len => Ok(v.to_vec()),
            n => Err(Error::InvalidArgument(format!("vector of length {n}, expected {len}"))),
        }
    }

    fn sample(&self, kind: ModelKind, spec: &SpeciesSpec, grid: &Arc<PhaseGrid>) -> Result<DistributionField> {
        let u = Self::padded(&self.u, grid.d())?;
        if kind == ModelKind::AlppOneSpecies {
            let g = alpp::build_gaussian(
                grid,
                spec.mass,
                spec.internal_dof as f64,
                self.n,
                &u,
                self.lambda,
                self.theta,
                Closure::Sampled,
            )?;
            return Ok(g.materialize(grid, Default::default()));
        }
        let eta = Self::padded(&self.eta_bar, grid.l())?;
        GaussianTarget::isotropic(self.n, &u, &eta, self.lambda, self.theta, spec.mass)?
            .sample(grid, Default::default())
    }
}

/// How the distribution of one species is initialised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Maxwellian(MaxwellianParams),
    /// Sum of Maxwellians.
    BiMaxwellian { components: Vec<MaxwellianParams> },
    /// `M · max(0, 1 + amplitude·ξ)` with `ξ` uniform on `[−1, 1]` per cell.
    Perturbed { base: MaxwellianParams, amplitude: f64 },
}

impl InitialCondition {
    pub fn components(&self) -> Vec<&MaxwellianParams> {
        match self {
            InitialCondition::Maxwellian(p) => vec![p],
            InitialCondition::BiMaxwellian { components } => components.iter().collect(),
            InitialCondition::Perturbed { base, .. } => vec![base],
        }
    }

    /// Samples the field of species `k`. The noise stream depends only on
    /// `seed` and `k`.
    pub fn build(
        &self,
        kind: ModelKind,
        spec: &SpeciesSpec,
        grid: &Arc<PhaseGrid>,
        seed: u64,
        k: usize,
    ) -> Result<DistributionField> {
        match self {
            InitialCondition::Maxwellian(p) => p.sample(kind, spec, grid),
            InitialCondition::BiMaxwellian { components } => {
                let mut it = components.iter();
                let first = it
                    .next()
                    .ok_or_else(|| Error::InvalidArgument("bi-Maxwellian without components".into()))?;
                let mut f = first.sample(kind, spec, grid)?;
                for p in it {
                    f.add_scaled(&p.sample(kind, spec, grid)?, 1.0)?;
                }
                Ok(f)
            }
            InitialCondition::Perturbed { base, amplitude } => {
                let f = base.sample(kind, spec, grid)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                let values = f
                    .values()
                    .iter()
                    .map(|v| v * (1.0 + amplitude * rng.random_range(-1.0..=1.0)).max(0.0))
                    .collect();
                DistributionField::new(grid.clone(), values)
            }
        }
    }
}

/// Builds the initial state. `theta0[k]` overrides the default
/// `Θ_k(0) = T^r_k(0)`.
pub fn initial_state(
    problem: &Problem,
    conditions: &[InitialCondition],
    theta0: &[Option<f64>],
    seed: u64,
) -> Result<SystemState> {
    if conditions.len() != problem.species().len() {
        return Err(Error::ModelMismatch(format!(
            "{} initial conditions for {} species",
            conditions.len(),
            problem.species().len()
        )));
    }
    let fields = conditions
        .iter()
        .enumerate()
        .map(|(k, c)| c.build(problem.kind(), &problem.species()[k], &problem.grids()[k], seed, k))
        .collect::<Result<Vec<_>>>()?;
    let mut state = problem.state_from_fields(fields)?;
    for (k, t) in theta0.iter().enumerate() {
        if let (Some(t), Some(s)) = (t, state.species.get_mut(k)) {
            if problem.has_theta(k) {
                s.theta = Some(*t);
            }
        }
    }
    problem.check_state(&state)?;
    Ok(state)
}

/// Resolution and extent of automatically sized grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridOptions {
    pub velocity_points: usize,
    pub internal_points: usize,
    /// Points on the scalar internal axis of the ALPP model.
    pub energy_points: usize,
    /// Widening of the `±6√(T/m)` half-width.
    pub safety: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { velocity_points: 24, internal_points: 16, energy_points: 32, safety: 1.35 }
    }
}

/// Grids covering every initial component of every species, including the
/// heating caused by relaxing relative velocities.
pub fn auto_grids(
    kind: ModelKind,
    species: &[SpeciesSpec],
    conditions: &[InitialCondition],
    d: usize,
    opts: &GridOptions,
) -> Result<Vec<Arc<PhaseGrid>>> {
    if d == 0 {
        return Err(Error::InvalidGrid("velocity dimension must be positive".into()));
    }
    let comps: Vec<&MaxwellianParams> = conditions.iter().flat_map(|c| c.components()).collect();
    let t_max = comps.iter().map(|p| p.lambda.max(p.theta)).fold(0.0, f64::max);
    let coord = |p: &MaxwellianParams, a: usize| p.u.get(a).copied().unwrap_or(0.0);
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in &comps {
        for a in 0..d {
            lo[a] = lo[a].min(coord(p, a));
            hi[a] = hi[a].max(coord(p, a));
        }
    }
    let span2: f64 = lo.iter().zip(&hi).map(|(l, h)| (h - l) * (h - l)).sum();
    let m_max = species.iter().map(|s| s.mass).fold(0.0, f64::max);
    let t_hi = t_max + m_max * span2 / d as f64;
    let mut out = Vec::with_capacity(species.len());
    for (k, spec) in species.iter().enumerate() {
        let half = 6.0 * opts.safety * (t_hi / spec.mass).sqrt();
        let velocity = (0..d)
            .map(|a| Axis::new(lo[a] - half, hi[a] + half, opts.velocity_points))
            .collect::<Result<Vec<_>>>()?;
        let internal = if kind == ModelKind::AlppOneSpecies {
            let delta = spec.internal_dof as f64;
            vec![Axis::new(0.0, (30.0 * opts.safety * t_hi).powf(delta / 2.0), opts.energy_points)?]
        } else {
            let own: Vec<&MaxwellianParams> = conditions.get(k).map(|c| c.components()).unwrap_or_default();
            (0..spec.internal_dof)
                .map(|a| {
                    let e = |p: &&MaxwellianParams| p.eta_bar.get(a).copied().unwrap_or(0.0);
                    let elo = own.iter().map(e).fold(0.0, f64::min);
                    let ehi = own.iter().map(e).fold(0.0, f64::max);
                    Axis::new(elo - half, ehi + half, opts.internal_points)
                })
                .collect::<Result<Vec<_>>>()?
        };
        out.push(Arc::new(PhaseGrid::new(velocity, internal)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::compute_moments;

    fn problem(kind: ModelKind, conds: &[InitialCondition], opts: GridOptions) -> Problem {
        let species: Vec<SpeciesSpec> =
            (0..kind.species_count()).map(|_| SpeciesSpec::new(1.0, 2, 1.0, 1.0)).collect();
        let grids = auto_grids(kind, &species, conds, 2, &opts).unwrap();
        Problem::new(kind, species, None, grids).unwrap()
    }

    #[test]
    fn maxwellian_recipe_sets_theta_to_internal_temperature() {
        let c = vec![InitialCondition::Maxwellian(MaxwellianParams::new(1.0, vec![], vec![], 1.5, 0.7))];
        let opts = GridOptions { velocity_points: 20, internal_points: 16, ..Default::default() };
        let p = problem(ModelKind::KppOneSpecies, &c, opts);
        let s = initial_state(&p, &c, &[None], 0).unwrap();
        let m = compute_moments(&s.species[0].f, &p.species()[0]).unwrap();
        assert!((m.t_t - 1.5).abs() < 1e-6);
        assert_eq!(s.species[0].theta, m.t_r);
        let s = initial_state(&p, &c, &[Some(0.9)], 0).unwrap();
        assert_eq!(s.species[0].theta, Some(0.9));
    }

    #[test]
    fn perturbation_is_seeded_and_nonnegative() {
        let base = MaxwellianParams::default();
        let c = vec![InitialCondition::Perturbed { base, amplitude: 1.5 }];
        let opts = GridOptions { velocity_points: 8, internal_points: 6, ..Default::default() };
        let p = problem(ModelKind::BipOneSpecies, &c, opts);
        let a = initial_state(&p, &c, &[None], 42).unwrap();
        let b = initial_state(&p, &c, &[None], 42).unwrap();
        let e = initial_state(&p, &c, &[None], 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, e);
        assert!(a.species[0].f.min_value() >= 0.0);
    }

    #[test]
    fn bimaxwellian_mass_adds_up() {
        let c = vec![InitialCondition::BiMaxwellian {
            components: vec![
                MaxwellianParams::new(0.5, vec![-0.5, 0.0], vec![], 1.0, 1.0),
                MaxwellianParams::new(0.7, vec![0.5, 0.0], vec![], 0.8, 1.2),
            ],
        }];
        let opts = GridOptions { velocity_points: 24, internal_points: 16, ..Default::default() };
        let p = problem(ModelKind::KppOneSpecies, &c, opts);
        let s = initial_state(&p, &c, &[None], 0).unwrap();
        assert!((s.species[0].f.mass() - 1.2).abs() < 1e-3);
    }

    #[test]
    fn alpp_grid_starts_at_zero() {
        let c = vec![InitialCondition::Maxwellian(MaxwellianParams::default())];
        let species = vec![SpeciesSpec::new(1.0, 2, 1.0, 0.0)];
        let g = auto_grids(ModelKind::AlppOneSpecies, &species, &c, 3, &GridOptions::default()).unwrap();
        assert_eq!(g[0].l(), 1);
        assert_eq!(g[0].internal_axes()[0].min, 0.0);
    }
}
