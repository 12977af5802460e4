//! Maxwellian closures and interspecies exchange coefficients.
//!
//! Every Maxwellian used by the models is a product of one-dimensional
//! factors, one per grid axis. Two discretisations are available:
//!
//! * [`Closure::Sampled`] evaluates the continuous Gaussian at the nodes.
//! * [`Closure::Conservative`] uses, on each axis, the discrete exponential
//!   family member `exp(b y − c y²)` whose discrete mass, mean and variance
//!   equal the prescribed values exactly. Relaxation towards such a target
//!   conserves the discrete moments to round-off, and a sampled grid
//!   Maxwellian's own conservative closure reproduces it up to quadrature
//!   error.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::{DistributionField, PhaseGrid, SeparableField};
use crate::moments::{equilibrium_temperature, MacroState};
use crate::species::{epsilon, MixtureParams, SpeciesSpec};

/// Discretisation of the Maxwellian targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closure {
    Sampled,
    #[default]
    Conservative,
}

/// Density with a per-axis mean and variance. Describes an axis-aligned
/// Gaussian on the whole grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTarget {
    pub n: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianTarget {
    /// Isotropic blocks: variance `lambda/m` on the `d` velocity axes and
    /// `theta/m` on the internal ones.
    pub fn isotropic(
        n: f64,
        u: &[f64],
        eta_bar: &[f64],
        lambda: f64,
        theta: f64,
        mass: f64,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::NonpositiveTemperature { what: "Lambda", value: lambda });
        }
        if !eta_bar.is_empty() && !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::NonpositiveTemperature { what: "Theta", value: theta });
        }
        let mut mean = u.to_vec();
        mean.extend_from_slice(eta_bar);
        let mut var = vec![lambda / mass; u.len()];
        var.extend(std::iter::repeat_n(theta / mass, eta_bar.len()));
        Ok(GaussianTarget { n, mean, var })
    }

    /// The factored field on `grid` under the given closure.
    pub fn separable(&self, grid: &PhaseGrid, closure: Closure) -> Result<SeparableField> {
        if self.mean.len() != grid.n_axes() {
            return Err(Error::ModelMismatch(format!(
                "target has {} axes, grid has {}",
                self.mean.len(),
                grid.n_axes()
            )));
        }
        let mut logs = Vec::with_capacity(self.mean.len());
        for a in 0..self.mean.len() {
            let nodes = grid.nodes(a);
            let lf = match closure {
                Closure::Sampled => sampled_gaussian_axis(nodes, self.mean[a], self.var[a]),
                Closure::Conservative => {
                    fit_gaussian_axis(nodes, grid.axis(a).spacing(), self.mean[a], self.var[a])?
                }
            };
            logs.push(lf);
        }
        Ok(SeparableField::from_log_factors(self.n.max(0.0), logs))
    }

    pub fn sample(&self, grid: &Arc<PhaseGrid>, exec: Exec) -> Result<DistributionField> {
        Ok(self.separable(grid, Closure::Sampled)?.materialize(grid, exec))
    }
}

/// `ln` of the normalised continuous Gaussian density at the nodes.
pub fn sampled_gaussian_axis(nodes: &[f64], mean: f64, var: f64) -> Vec<f64> {
    let c = -0.5 * (2.0 * PI * var).ln();
    nodes.iter().map(|x| c - (x - mean).powi(2) / (2.0 * var)).collect()
}

fn log_normalise(exponents: &mut [f64], h: f64) {
    let max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = exponents.iter().map(|e| (e - max).exp()).sum::<f64>() * h;
    let shift = max + z.ln();
    for e in exponents.iter_mut() {
        *e -= shift;
    }
}

/// Weighted central moments `E[y^k]`, `k = 1..4`, of `exp(b y − c y²)`.
fn family_moments(y: &[f64], b: f64, c: f64) -> [f64; 4] {
    let max = y.iter().map(|y| b * y - c * y * y).fold(f64::NEG_INFINITY, f64::max);
    let mut s = [0.0; 5];
    for &yi in y {
        let w = (b * yi - c * yi * yi - max).exp();
        let y2 = yi * yi;
        s[0] += w;
        s[1] += w * yi;
        s[2] += w * y2;
        s[3] += w * y2 * yi;
        s[4] += w * y2 * y2;
    }
    [s[1] / s[0], s[2] / s[0], s[3] / s[0], s[4] / s[0]]
}

/// `ln` of the discrete density `∝ exp(b y − c y²)`, `y = x − mean`, with
/// unit quadrature mass and exactly the given discrete mean and variance.
pub fn fit_gaussian_axis(nodes: &[f64], h: f64, mean: f64, var: f64) -> Result<Vec<f64>> {
    if !(var > 0.0 && var.is_finite() && mean.is_finite()) {
        return Err(Error::ClosureFailure(format!("invalid target mean {mean}, variance {var}")));
    }
    let y: Vec<f64> = nodes.iter().map(|x| x - mean).collect();
    let sd = var.sqrt();
    let residual = |m: &[f64; 4]| (m[0] / sd).hypot((m[1] - var) / var);
    let (mut b, mut c) = (0.0, 0.5 / var);
    let mut m = family_moments(&y, b, c);
    let mut r = residual(&m);
    for _ in 0..200 {
        if r < 1e-15 {
            break;
        }
        let j11 = m[1] - m[0] * m[0];
        let j12 = -(m[2] - m[0] * m[1]);
        let j21 = m[2] - m[0] * m[1];
        let j22 = -(m[3] - m[1] * m[1]);
        let det = j11 * j22 - j12 * j21;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let f0 = -m[0];
        let f1 = -(m[1] - var);
        let db = (f0 * j22 - j12 * f1) / det;
        let dc = (j11 * f1 - j21 * f0) / det;
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let (nb, nc) = (b + t * db, c + t * dc);
            let nm = family_moments(&y, nb, nc);
            let nr = residual(&nm);
            if nr < r {
                b = nb;
                c = nc;
                m = nm;
                r = nr;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if !(r < 1e-11) {
        return Err(Error::ClosureFailure(format!(
            "no discrete Gaussian with mean {mean:.6e} and variance {var:.6e} on [{:.4}, {:.4}] (residual {r:.3e})",
            nodes[0],
            nodes[nodes.len() - 1]
        )));
    }
    let mut e: Vec<f64> = y.iter().map(|y| b * y - c * y * y).collect();
    log_normalise(&mut e, h);
    Ok(e)
}

/// `ln` of the discrete density `∝ exp(−λ ε_i)` with unit quadrature mass
/// and discrete mean of `ε` equal to `target`.
pub fn fit_exponential_axis(eps: &[f64], h: f64, target: f64, lambda0: f64) -> Result<Vec<f64>> {
    let stats = |lam: f64| {
        let min = eps.iter().copied().fold(f64::INFINITY, f64::min);
        let mut s = [0.0; 3];
        for &e in eps {
            let w = (-lam * (e - min)).exp();
            s[0] += w;
            s[1] += w * e;
            s[2] += w * e * e;
        }
        let mean = s[1] / s[0];
        (mean, s[2] / s[0] - mean * mean)
    };
    let mut lam = lambda0;
    let (mut mean, mut var) = stats(lam);
    let mut r = ((mean - target) / target).abs();
    for _ in 0..200 {
        if r < 1e-15 {
            break;
        }
        if !(var > 0.0) {
            break;
        }
        let step = (mean - target) / var;
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let nl = lam + t * step;
            let (nm, nv) = stats(nl);
            let nr = ((nm - target) / target).abs();
            if nr < r {
                lam = nl;
                mean = nm;
                var = nv;
                r = nr;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if !(r < 1e-11) {
        return Err(Error::ClosureFailure(format!(
            "no discrete exponential with mean energy {target:.6e} (residual {r:.3e})"
        )));
    }
    let mut e: Vec<f64> = eps.iter().map(|e| -lam * e).collect();
    log_normalise(&mut e, h);
    Ok(e)
}

/// Target of the species Maxwellian `M_k` with parameters `(n, u, η̄, Λ, Θ)`.
pub fn species_target(state: &MacroState, spec: &SpeciesSpec) -> Result<GaussianTarget> {
    GaussianTarget::isotropic(
        state.n,
        &state.u,
        &state.eta_bar,
        state.lambda,
        state.theta_or_lambda(),
        spec.mass,
    )
}

/// Target of the equilibrium Maxwellian `M̃_k` at the total temperature `T`.
pub fn equilibrium_target(state: &MacroState, spec: &SpeciesSpec) -> Result<GaussianTarget> {
    GaussianTarget::isotropic(state.n, &state.u, &state.eta_bar, state.t_total, state.t_total, spec.mass)
}

/// Parameters of the interspecies Maxwellian `M_kj` seen by species `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeCoefficients {
    pub n: f64,
    pub u: Vec<f64>,
    /// Mean internal variable restricted to the species' own slots.
    pub eta_bar: Vec<f64>,
    pub lambda: f64,
    pub theta: f64,
    pub t_total: f64,
}

pub fn interspecies_target(coeff: &ExchangeCoefficients, spec: &SpeciesSpec) -> Result<GaussianTarget> {
    GaussianTarget::isotropic(coeff.n, &coeff.u, &coeff.eta_bar, coeff.lambda, coeff.theta, spec.mass)
}

pub fn interspecies_equilibrium_target(
    coeff: &ExchangeCoefficients,
    spec: &SpeciesSpec,
) -> Result<GaussianTarget> {
    GaussianTarget::isotropic(coeff.n, &coeff.u, &coeff.eta_bar, coeff.t_total, coeff.t_total, spec.mass)
}

/// Samples `M_k` on the grid.
pub fn build_species_maxwellian(
    state: &MacroState,
    spec: &SpeciesSpec,
    grid: &Arc<PhaseGrid>,
) -> Result<DistributionField> {
    species_target(state, spec)?.sample(grid, Exec::default())
}

/// Samples `M̃_k` on the grid.
pub fn build_equilibrium_maxwellian(
    state: &MacroState,
    spec: &SpeciesSpec,
    grid: &Arc<PhaseGrid>,
) -> Result<DistributionField> {
    equilibrium_target(state, spec)?.sample(grid, Exec::default())
}

/// Samples `M_kj` on the grid.
pub fn build_interspecies_maxwellian(
    coeff: &ExchangeCoefficients,
    spec: &SpeciesSpec,
    grid: &Arc<PhaseGrid>,
) -> Result<DistributionField> {
    interspecies_target(coeff, spec)?.sample(grid, Exec::default())
}

/// Samples `M̃_kj` on the grid.
pub fn build_interspecies_equilibrium_maxwellian(
    coeff: &ExchangeCoefficients,
    spec: &SpeciesSpec,
    grid: &Arc<PhaseGrid>,
) -> Result<DistributionField> {
    interspecies_equilibrium_target(coeff, spec)?.sample(grid, Exec::default())
}

/// Dimension of the global internal variable shared by both species.
pub fn global_internal_dim(specs: [&SpeciesSpec; 2]) -> usize {
    specs
        .iter()
        .flat_map(|s| s.slots())
        .map(|s| s + 1)
        .max()
        .unwrap_or(0)
}

/// Places a species-local vector into the global internal variable.
pub fn embed(local: &[f64], slots: &[usize], dim: usize) -> Vec<f64> {
    let mut g = vec![0.0; dim];
    for (v, &s) in local.iter().zip(slots) {
        g[s] = *v;
    }
    g
}

/// Restricts a global vector to a species' slots.
pub fn project(global: &[f64], slots: &[usize]) -> Vec<f64> {
    slots.iter().map(|&s| global[s]).collect()
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Interspecies Maxwellian parameters for `(k, j) = (1, 2)` and `(2, 1)`.
///
/// Both species need at least one internal degree of freedom.
pub fn exchange_coefficients(
    states: [&MacroState; 2],
    specs: [&SpeciesSpec; 2],
    params: &MixtureParams,
) -> Result<[ExchangeCoefficients; 2]> {
    let eps = epsilon(specs)?;
    let [s1, s2] = states;
    let d = s1.d();
    let (l1, l2) = (specs[0].internal_dof, specs[1].internal_dof);
    if l1 == 0 || l2 == 0 {
        return Err(Error::ModelMismatch(
            "mixture models need internal degrees of freedom in both species".into(),
        ));
    }
    if s2.d() != d || s1.l() != l1 || s2.l() != l2 {
        return Err(Error::ModelMismatch("state dimensions do not match the species".into()));
    }
    let (m1, m2) = (specs[0].mass, specs[1].mass);
    let MixtureParams { delta, beta, alpha, gamma, gamma_tilde } = *params;
    let (th1, th2) = (s1.theta_or_lambda(), s2.theta_or_lambda());
    let (lf1, lf2) = (l1 as f64, l2 as f64);
    let mr = m1 / m2 * eps;

    let u12: Vec<f64> = s1.u.iter().zip(&s2.u).map(|(a, b)| delta * a + (1.0 - delta) * b).collect();
    let u21: Vec<f64> = s1.u.iter().zip(&s2.u).map(|(a, b)| b - mr * (1.0 - delta) * (b - a)).collect();

    let slots1 = specs[0].slots();
    let slots2 = specs[1].slots();
    let dim = global_internal_dim(specs);
    let e1 = embed(&s1.eta_bar, &slots1, dim);
    let e2 = embed(&s2.eta_bar, &slots2, dim);
    let g12: Vec<f64> = e1.iter().zip(&e2).map(|(a, b)| beta * a + (1.0 - beta) * b).collect();
    let g21: Vec<f64> = e1.iter().zip(&e2).map(|(a, b)| b - mr * (1.0 - beta) * (b - a)).collect();
    let eta12 = project(&g12, &slots1);
    let eta21 = project(&g21, &slots2);

    let du2 = dist2(&s1.u, &s2.u);
    let de2 = dist2(&e1, &e2);

    let lambda12 = alpha * s1.lambda + (1.0 - alpha) * s2.lambda + gamma * du2;
    let theta12 = (lf1 * th1 + lf2 * th2) / (lf1 + lf2) + gamma_tilde * de2;
    let lambda21 = (eps * m1 * (1.0 - delta) * (mr * (delta - 1.0) + delta + 1.0) / d as f64 - eps * gamma) * du2
        + eps * (1.0 - alpha) * s1.lambda
        + (1.0 - eps * (1.0 - alpha)) * s2.lambda;
    let share = eps * lf1 / (lf1 + lf2);
    let theta21 = share * th1 + (1.0 - share) * th2
        - lf1 / lf2 * eps * gamma_tilde * de2
        - eps * m1 / lf2 * (norm2(&eta12) - norm2(&s1.eta_bar))
        - m2 / lf2 * (norm2(&eta21) - norm2(&s2.eta_bar));

    for (what, v) in [
        ("Lambda_12", lambda12),
        ("Theta_12", theta12),
        ("Lambda_21", lambda21),
        ("Theta_21", theta21),
    ] {
        if !(v > 0.0) {
            return Err(Error::NonpositiveExchangeTemperature { what, value: v });
        }
    }
    Ok([
        ExchangeCoefficients {
            n: s1.n,
            u: u12,
            eta_bar: eta12,
            lambda: lambda12,
            theta: theta12,
            t_total: equilibrium_temperature(lambda12, theta12, d, l1),
        },
        ExchangeCoefficients {
            n: s2.n,
            u: u21,
            eta_bar: eta21,
            lambda: lambda21,
            theta: theta21,
            t_total: equilibrium_temperature(lambda21, theta21, d, l2),
        },
    ])
}

/// Residuals of the momentum and energy exchange balance,
/// `Σ_k ν_kj n_j n_k (…)`, normalised by the size of the exchanged terms.
pub fn exchange_residuals(
    states: [&MacroState; 2],
    specs: [&SpeciesSpec; 2],
    coeffs: &[ExchangeCoefficients; 2],
) -> Result<(f64, f64)> {
    let eps = epsilon(specs)?;
    // ν_12 n_2 n_1 : ν_21 n_1 n_2 = ε : 1
    let w = [eps, 1.0];
    let d = states[0].d() as f64;
    let mut mom = vec![0.0; states[0].d()];
    let mut mom_scale = 0.0f64;
    let mut energy = 0.0;
    let mut energy_scale = 0.0f64;
    for k in 0..2 {
        let (s, c, m, l) = (states[k], &coeffs[k], specs[k].mass, specs[k].internal_dof as f64);
        for (a, (ukj, uk)) in c.u.iter().zip(&s.u).enumerate() {
            let t = w[k] * m * (ukj - uk);
            mom[a] += t;
            mom_scale = mom_scale.max(w[k] * m * (ukj.abs() + uk.abs()));
        }
        let after = d * c.lambda + l * c.theta + m * norm2(&c.u) + m * norm2(&c.eta_bar);
        let before = d * s.lambda + l * s.theta_or_lambda() + m * norm2(&s.u) + m * norm2(&s.eta_bar);
        energy += w[k] * (after - before);
        energy_scale = energy_scale.max(w[k] * (after.abs() + before.abs()));
    }
    let mom_res = norm2(&mom).sqrt() / mom_scale.max(f64::MIN_POSITIVE);
    Ok((
        if mom_scale == 0.0 { 0.0 } else { mom_res },
        energy.abs() / energy_scale.max(f64::MIN_POSITIVE),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;
    use crate::moments::{compute_moments, mean_var};
    use crate::species::validate_mixture_params;
    use proptest::prelude::*;

    fn grid(d: usize, l: usize, points: usize, half: f64) -> Arc<PhaseGrid> {
        let ax = Axis::new(-half, half, points).unwrap();
        Arc::new(PhaseGrid::new(vec![ax; d], vec![ax; l]).unwrap())
    }

    fn spec(m: f64, l: usize) -> SpeciesSpec {
        SpeciesSpec::new(m, l, 1.0, 1.0)
    }

    #[test]
    fn peak_value() {
        let g = grid(3, 2, 5, 1.0);
        let s = MacroState::maxwellian(1.0, vec![0.0; 3], vec![0.0; 2], 1.0, 1.0);
        let f = build_species_maxwellian(&s, &spec(1.0, 2), &g).unwrap();
        let centre = g.flat_index(&[2, 2, 2, 2, 2]);
        assert!((f.values()[centre] - (2.0 * PI).powf(-2.5)).abs() < 1e-15);
        assert!((f.values()[centre] - 0.010_105_326).abs() < 1e-9);
    }

    #[test]
    fn sampled_moments_reproduce_parameters() {
        let g = grid(3, 2, 24, 8.0);
        let s = MacroState::maxwellian(1.3, vec![0.2, -0.1, 0.0], vec![0.1, 0.0], 1.2, 0.9);
        let sp = spec(1.0, 2);
        let m = compute_moments(&build_species_maxwellian(&s, &sp, &g).unwrap(), &sp).unwrap();
        assert!((m.n - 1.3).abs() < 1e-6);
        assert!((m.u[0] - 0.2).abs() < 1e-6 && (m.eta_bar[0] - 0.1).abs() < 1e-6);
        assert!((m.t_t - 1.2).abs() < 1e-6 && (m.t_r.unwrap() - 0.9).abs() < 1e-6);
        let m = compute_moments(&build_equilibrium_maxwellian(&s, &sp, &g).unwrap(), &sp).unwrap();
        assert!((m.t_t - s.t_total).abs() < 1e-6 && (m.t_r.unwrap() - s.t_total).abs() < 1e-6);
    }

    #[test]
    fn zero_density_gives_zero_field() {
        let g = grid(1, 1, 6, 4.0);
        let s = MacroState::maxwellian(0.0, vec![0.0], vec![0.0], 1.0, 1.0);
        let f = build_species_maxwellian(&s, &spec(1.0, 1), &g).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonpositive_temperature_is_rejected() {
        let g = grid(1, 1, 6, 4.0);
        let s = MacroState::maxwellian(1.0, vec![0.0], vec![0.0], -1.0, 1.0);
        assert!(matches!(
            build_species_maxwellian(&s, &spec(1.0, 1), &g),
            Err(Error::NonpositiveTemperature { .. })
        ));
    }

    #[test]
    fn equal_temperatures_make_both_maxwellians_identical() {
        let g = grid(2, 1, 10, 6.0);
        let s = MacroState::maxwellian(1.0, vec![0.3, 0.0], vec![0.0], 1.4, 1.4);
        let sp = spec(1.0, 1);
        let a = build_species_maxwellian(&s, &sp, &g).unwrap();
        let b = build_equilibrium_maxwellian(&s, &sp, &g).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-15);
        }
    }

    #[test]
    fn equilibrium_maxwellian_has_lower_entropy() {
        let g = grid(3, 2, 16, 8.0);
        let s = MacroState::maxwellian(1.0, vec![0.0; 3], vec![0.0; 2], 2.0, 1.0);
        let sp = spec(1.0, 2);
        let h = |f: &DistributionField| {
            f.values().iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>() * g.cell_volume()
        };
        let m = build_species_maxwellian(&s, &sp, &g).unwrap();
        let mt = build_equilibrium_maxwellian(&s, &sp, &g).unwrap();
        assert!(h(&mt) < h(&m));
    }

    #[test]
    fn conservative_fit_matches_moments_exactly() {
        let ax = Axis::new(-5.0, 6.0, 12).unwrap();
        let nodes = ax.nodes();
        for (mean, var) in [(0.3, 1.0), (1.7, 0.6), (-0.2, 2.5), (0.0, 0.4)] {
            let lf = fit_gaussian_axis(&nodes, ax.spacing(), mean, var).unwrap();
            let p: Vec<f64> = lf.iter().map(|x| x.exp()).collect();
            let mass: f64 = p.iter().sum::<f64>() * ax.spacing();
            let (m, v) = mean_var(&nodes, &p);
            assert!((mass - 1.0).abs() < 1e-14);
            assert!((m - mean).abs() < 1e-13, "{m} vs {mean}");
            assert!((v - var).abs() < 1e-13 * var.max(1.0), "{v} vs {var}");
        }
    }

    #[test]
    fn conservative_fit_is_close_to_sampled_on_fine_grid() {
        let ax = Axis::new(-8.0, 8.0, 32).unwrap();
        let nodes = ax.nodes();
        let a = fit_gaussian_axis(&nodes, ax.spacing(), 0.1, 1.1).unwrap();
        let b = sampled_gaussian_axis(&nodes, 0.1, 1.1);
        for (x, y) in a.iter().zip(&b) {
            assert!((x.exp() - y.exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn exponential_fit() {
        let ax = Axis::new(0.0, 30.0, 40).unwrap();
        let eps: Vec<f64> = ax.nodes();
        let lf = fit_exponential_axis(&eps, ax.spacing(), 1.5, 1.0).unwrap();
        let p: Vec<f64> = lf.iter().map(|x| x.exp()).collect();
        let (m, _) = mean_var(&eps, &p);
        assert!((m - 1.5).abs() < 1e-13);
        assert!((p.iter().sum::<f64>() * ax.spacing() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn impossible_fit_fails() {
        let ax = Axis::new(-1.0, 1.0, 4).unwrap();
        assert!(fit_gaussian_axis(&ax.nodes(), ax.spacing(), 0.0, 100.0).is_err());
    }

    fn two(l: usize, eps: f64, m2: f64) -> [SpeciesSpec; 2] {
        [SpeciesSpec::new(1.0, l, 1.0, eps), SpeciesSpec::new(m2, l, 1.0, 1.0)]
    }

    #[test]
    fn exchange_examples() {
        let s = two(2, 1.0, 1.0);
        let p = MixtureParams { delta: 1.0, beta: 1.0, alpha: 0.5, gamma: 0.0, gamma_tilde: 0.0 };
        let a = MacroState::maxwellian(1.0, vec![0.1, 0.0, 0.0], vec![0.0; 2], 2.0, 2.0);
        let b = MacroState::maxwellian(1.0, vec![0.1, 0.0, 0.0], vec![0.0; 2], 1.0, 1.0);
        let c = exchange_coefficients([&a, &b], [&s[0], &s[1]], &p).unwrap();
        assert_eq!(c[0].u, a.u);
        assert_eq!(c[1].u, b.u);
        assert!((c[0].lambda - 1.5).abs() < 1e-15 && (c[1].lambda - 1.5).abs() < 1e-15);
        assert!((c[0].theta - 1.5).abs() < 1e-15 && (c[1].theta - 1.5).abs() < 1e-15);

        let s = two(1, 1.0, 2.0);
        let p = MixtureParams { delta: 0.5, ..Default::default() };
        let a = MacroState::maxwellian(1.0, vec![0.0], vec![0.0], 1.0, 1.0);
        let b = MacroState::maxwellian(1.0, vec![1.0], vec![0.0], 1.0, 1.0);
        let c = exchange_coefficients([&a, &b], [&s[0], &s[1]], &p).unwrap();
        assert!((c[0].u[0] - 0.5).abs() < 1e-15);
        assert!((c[1].u[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn common_equilibrium_is_fixed() {
        let s = two(2, 1.0, 1.7);
        let p = MixtureParams { delta: 0.7, beta: 0.4, alpha: 0.3, gamma: 0.01, gamma_tilde: 0.01 };
        let st = MacroState::maxwellian(1.0, vec![0.2, 0.1, 0.0], vec![0.0; 2], 1.3, 1.3);
        let st2 = MacroState { n: 0.7, ..st.clone() };
        let c = exchange_coefficients([&st, &st2], [&s[0], &s[1]], &p).unwrap();
        for k in &c {
            assert!((k.lambda - 1.3).abs() < 1e-14 && (k.theta - 1.3).abs() < 1e-14);
            assert!(k.u.iter().zip(&st.u).all(|(a, b)| (a - b).abs() < 1e-15));
        }
        assert_eq!(c[0].n, 1.0);
        assert_eq!(c[1].n, 0.7);
    }

    #[test]
    fn unit_parameters_reduce_to_species_one() {
        let s = two(2, 1.0, 1.0);
        let p = MixtureParams { delta: 1.0, beta: 1.0, alpha: 1.0, gamma: 0.0, gamma_tilde: 0.0 };
        let a = MacroState::maxwellian(1.0, vec![0.3, 0.0, 0.0], vec![0.2, 0.1], 2.0, 1.5);
        let b = MacroState::maxwellian(1.0, vec![-0.1, 0.0, 0.0], vec![0.0, 0.3], 1.0, 1.0);
        let c = exchange_coefficients([&a, &b], [&s[0], &s[1]], &p).unwrap();
        assert_eq!(c[0].u, a.u);
        assert_eq!(c[0].eta_bar, a.eta_bar);
        assert_eq!(c[0].lambda, a.lambda);
    }

    #[test]
    fn interspecies_equilibrium_temperature() {
        let c = ExchangeCoefficients {
            n: 1.0,
            u: vec![0.0; 3],
            eta_bar: vec![0.0; 2],
            lambda: 2.0,
            theta: 1.0,
            t_total: equilibrium_temperature(2.0, 1.0, 3, 2),
        };
        assert!((c.t_total - 1.6).abs() < 1e-15);
        let g = grid(3, 2, 20, 8.0);
        let sp = spec(1.0, 2);
        let m = compute_moments(&build_interspecies_equilibrium_maxwellian(&c, &sp, &g).unwrap(), &sp).unwrap();
        assert!((m.t_t - 1.6).abs() < 1e-6 && (m.t_r.unwrap() - 1.6).abs() < 1e-6);
        let m = compute_moments(&build_interspecies_maxwellian(&c, &sp, &g).unwrap(), &sp).unwrap();
        assert!((m.t_t - 2.0).abs() < 1e-6 && (m.t_r.unwrap() - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn exchange_balances(
            m2 in 0.3f64..3.0, eps in 0.2f64..1.0, dfrac in 0.0f64..1.0, bfrac in 0.0f64..1.0,
            alpha in 0.0f64..1.0, gf in 0.0f64..1.0, gtf in 0.0f64..1.0,
            u1 in -1.0f64..1.0, u2 in -1.0f64..1.0, e1 in -0.5f64..0.5, e2 in -0.5f64..0.5,
            l1 in 0.5f64..2.0, l2 in 0.5f64..2.0, t1 in 0.5f64..2.0, t2 in 0.5f64..2.0,
            shared in proptest::bool::ANY,
        ) {
            let mut s = two(2, eps, m2);
            if !shared {
                s[1].global_dof_slots = vec![2, 3];
            }
            let sr = [&s[0], &s[1]];
            let b = admissible_bounds_for(&s, dfrac, bfrac);
            let p = MixtureParams {
                delta: b.0, beta: b.1, alpha,
                gamma: gf * b.2, gamma_tilde: gtf * b.3,
            };
            if validate_mixture_params(p, sr, 3).is_err() { return Ok(()); }
            let a = MacroState::maxwellian(1.0, vec![u1, 0.1, 0.0], vec![e1, 0.0], l1, t1);
            let bb = MacroState::maxwellian(0.8, vec![u2, 0.0, 0.2], vec![0.0, e2], l2, t2);
            let c = exchange_coefficients([&a, &bb], sr, &p);
            let c = match c { Ok(c) => c, Err(Error::NonpositiveExchangeTemperature { .. }) => return Ok(()), Err(e) => panic!("{e}") };
            let (mr, er) = exchange_residuals([&a, &bb], sr, &c).unwrap();
            prop_assert!(mr < 1e-12, "momentum residual {}", mr);
            prop_assert!(er < 1e-12, "energy residual {}", er);
        }
    }

    fn admissible_bounds_for(s: &[SpeciesSpec; 2], dfrac: f64, bfrac: f64) -> (f64, f64, f64, f64) {
        let probe = crate::species::admissible_bounds(&MixtureParams::default(), [&s[0], &s[1]], 3).unwrap();
        let lo = probe.convex_lower;
        let delta = lo + dfrac * (1.0 - lo);
        let beta = lo + bfrac * (1.0 - lo);
        let b = crate::species::admissible_bounds(
            &MixtureParams { delta, beta, ..Default::default() },
            [&s[0], &s[1]],
            3,
        )
        .unwrap();
        (delta, beta, b.gamma_max, b.gamma_tilde_max)
    }
}
