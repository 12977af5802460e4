//! One-species model with a scalar internal-energy variable `I ≥ 0`.
//!
//! The internal energy of a particle is `ε(I) = I^{2/δ}` where `δ` is the
//! number of internal degrees of freedom. The relaxation target is
//!
//! ```text
//! G̃ = ρ Λ_δ (2πT/m)^{-d/2} T_rel^{-δ/2} exp(−m|v−u|²/(2T) − ε(I)/T_rel)
//! ```
//!
//! with `T = (1−θ)T_tr + θT_equ`, `T_rel = θT_equ + (1−θ)T_int` and
//! `Λ_δ = 1/Γ(δ/2 + 1)`.
//!
//! In a [`Snapshot`] the macroscopic fields are stored in a [`MacroState`]
//! as follows: `t_t = T_tr`, `t_r = T_int`, `lambda = T`, `theta = T_rel`,
//! `t_total = T_equ`; `eta_bar` is empty.

use statrs::function::gamma::ln_gamma;

use super::{Problem, Snapshot, SpeciesRhs, SystemState};
use crate::error::{Error, Result};
use crate::grid::{PhaseGrid, SeparableField};
use crate::maxwellians::{fit_exponential_axis, fit_gaussian_axis, sampled_gaussian_axis, Closure};
use crate::moments::{axis_marginals, mean_var, MacroState};

/// Normalisation constant `Λ_δ = 1/Γ(δ/2 + 1)`.
pub fn normalisation(delta: f64) -> f64 {
    (-ln_gamma(delta / 2.0 + 1.0)).exp()
}

/// `ε(I) = I^{2/δ}` at the internal-axis nodes.
pub fn internal_energy_nodes(grid: &PhaseGrid, delta: f64) -> Vec<f64> {
    grid.nodes(grid.d()).iter().map(|i| i.powf(2.0 / delta)).collect()
}

/// Macroscopic temperatures of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlppTemperatures {
    pub t_tr: f64,
    pub t_int: f64,
    pub t_equ: f64,
    /// Velocity temperature of `G̃`.
    pub t: f64,
    pub t_rel: f64,
}

impl AlppTemperatures {
    pub fn new(t_tr: f64, t_int: f64, d: usize, delta: f64, theta: f64) -> Self {
        let t_equ = (d as f64 * t_tr + delta * t_int) / (d as f64 + delta);
        AlppTemperatures {
            t_tr,
            t_int,
            t_equ,
            t: (1.0 - theta) * t_tr + theta * t_equ,
            t_rel: theta * t_equ + (1.0 - theta) * t_int,
        }
    }
}

pub(super) fn snapshot(problem: &Problem, state: &SystemState) -> Result<Snapshot> {
    let spec = &problem.species()[0];
    let f = &state.species[0].f;
    let grid = f.grid();
    let d = grid.d();
    let delta = spec.internal_dof as f64;
    let marg = axis_marginals(f, problem.exec);
    let rho = grid.cell_volume() * marg[0].iter().sum::<f64>();
    if !(rho >= problem.density_floor) || rho == 0.0 {
        return Err(Error::VacuumState { density: rho, floor: problem.density_floor });
    }
    let mut u = Vec::with_capacity(d);
    let mut var = 0.0;
    for (a, m) in marg.iter().take(d).enumerate() {
        let (mu, v) = mean_var(grid.nodes(a), m);
        u.push(mu);
        var += v;
    }
    let eps = internal_energy_nodes(grid, delta);
    let (e_int, _) = mean_var(&eps, &marg[d]);
    let t = AlppTemperatures::new(spec.mass * var / d as f64, 2.0 * e_int / delta, d, delta, spec.theta);
    for (what, v) in [("T_tr", t.t_tr), ("T_int", t.t_int)] {
        if !(v > 0.0) {
            return Err(Error::NonpositiveTemperature { what, value: v });
        }
    }
    let m = MacroState {
        n: rho,
        u,
        eta_bar: Vec::new(),
        t_t: t.t_tr,
        t_r: Some(t.t_int),
        lambda: t.t,
        theta: Some(t.t_rel),
        t_total: t.t_equ,
    };
    Ok(Snapshot { macros: vec![Some(m)], rates: vec![(spec.collision_self, 0.0)], exchange: None })
}

/// `G̃`, or with `equilibrium` the Maxwellian `M_{0,1}` at `T_equ`.
pub(super) fn gaussian(problem: &Problem, snap: &Snapshot, equilibrium: bool) -> Result<SeparableField> {
    let m = snap.macros[0].as_ref().expect("ALPP snapshot has a state");
    let (t, t_rel) = if equilibrium {
        (m.t_total, m.t_total)
    } else {
        (m.lambda, m.theta.expect("ALPP snapshot has T_rel"))
    };
    build_gaussian(&problem.grids()[0], problem.species()[0].mass, problem.species()[0].internal_dof as f64, m.n, &m.u, t, t_rel, problem.closure)
}

/// The factored Gaussian with velocity temperature `t` and internal
/// temperature `t_rel`.
#[allow(clippy::too_many_arguments)]
pub fn build_gaussian(
    grid: &PhaseGrid,
    mass: f64,
    delta: f64,
    rho: f64,
    u: &[f64],
    t: f64,
    t_rel: f64,
    closure: Closure,
) -> Result<SeparableField> {
    if !(t > 0.0) {
        return Err(Error::NonpositiveTemperature { what: "T", value: t });
    }
    if !(t_rel > 0.0) {
        return Err(Error::NonpositiveTemperature { what: "T_rel", value: t_rel });
    }
    let d = grid.d();
    let mut logs = Vec::with_capacity(d + 1);
    for (a, &ua) in u.iter().enumerate().take(d) {
        let nodes = grid.nodes(a);
        logs.push(match closure {
            Closure::Sampled => sampled_gaussian_axis(nodes, ua, t / mass),
            Closure::Conservative => fit_gaussian_axis(nodes, grid.axis(a).spacing(), ua, t / mass)?,
        });
    }
    let eps = internal_energy_nodes(grid, delta);
    logs.push(match closure {
        Closure::Sampled => {
            let c = normalisation(delta).ln() - 0.5 * delta * t_rel.ln();
            eps.iter().map(|e| c - e / t_rel).collect()
        }
        Closure::Conservative => {
            fit_exponential_axis(&eps, grid.axis(d).spacing(), 0.5 * delta * t_rel, 1.0 / t_rel)?
        }
    });
    Ok(SeparableField::from_log_factors(rho, logs))
}

pub(super) fn rhs(problem: &Problem, snap: &Snapshot) -> Result<SpeciesRhs> {
    let a = snap.rates[0].0;
    if a == 0.0 {
        return Ok(SpeciesRhs::zero());
    }
    Ok(SpeciesRhs { targets: vec![(a, gaussian(problem, snap, false)?)], decay: a, dtheta: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Midpoint quadrature of `∫_0^∞ exp(−I^{2/δ}/T) dI` after `I = y^δ`.
    fn quad_norm(delta: f64, t: f64) -> f64 {
        let n = 200_000;
        let top = (80.0 * t).sqrt();
        let h = top / n as f64;
        (0..n)
            .map(|i| {
                let y = (i as f64 + 0.5) * h;
                (-y * y / t).exp() * delta * y.powf(delta - 1.0)
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn normalisation_matches_quadrature() {
        assert!((normalisation(2.0) - 1.0).abs() < 1e-14);
        for (delta, t) in [(2.0, 1.0), (2.0, 1.7), (3.0, 0.8), (1.0, 1.2), (5.0, 1.0)] {
            let q = quad_norm(delta, t);
            // ∫ G̃ dI = 1 requires Λ_δ T^{-δ/2} ∫ exp(−ε/T) dI = 1
            let mass = normalisation(delta) * t.powf(-delta / 2.0) * q;
            assert!((mass - 1.0).abs() < 1e-8, "delta {delta}: {mass}");
        }
    }

    #[test]
    fn theta_one_uses_equilibrium_temperature() {
        let t = AlppTemperatures::new(2.0, 1.0, 3, 2.0, 1.0);
        assert_eq!(t.t, t.t_equ);
        assert_eq!(t.t_rel, t.t_equ);
        assert!((t.t_equ - 1.6).abs() < 1e-15);
    }
}
