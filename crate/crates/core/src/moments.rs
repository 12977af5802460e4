//! Macroscopic quantities of discrete distribution fields.
//!
//! All moments are obtained from the per-axis marginals of `f`, which are
//! accumulated in a single row-wise pass. Centred second moments are then
//! formed on the (small) marginals with the two-pass formula.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::grid::DistributionField;
use crate::species::SpeciesSpec;

/// Density below which a species counts as vacuum.
pub const DEFAULT_DENSITY_FLOOR: f64 = 1e-12;

/// Density, means and temperatures measured directly from `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: f64,
    pub u: Vec<f64>,
    pub eta_bar: Vec<f64>,
    pub t_t: f64,
    /// `None` for species without internal degrees of freedom.
    pub t_r: Option<f64>,
}

/// Every macroscopic field of one species, including the Maxwellian
/// temperatures `Λ`, `Θ` and the total temperature `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroState {
    pub n: f64,
    pub u: Vec<f64>,
    pub eta_bar: Vec<f64>,
    pub t_t: f64,
    pub t_r: Option<f64>,
    pub lambda: f64,
    pub theta: Option<f64>,
    pub t_total: f64,
}

impl MacroState {
    /// Completes measured moments with the auxiliary temperature `Θ`.
    pub fn from_moments(m: &Moments, theta: Option<f64>) -> Result<Self> {
        let d = m.u.len();
        let l = m.eta_bar.len();
        let (lambda, theta) = match (m.t_r, theta) {
            (Some(t_r), Some(theta)) if l > 0 => {
                if !(theta > 0.0) {
                    return Err(Error::NonpositiveTemperature { what: "Theta", value: theta });
                }
                (lambda_from_constraint(m.t_t, t_r, theta, d, l)?, Some(theta))
            }
            (None, _) if l == 0 => (lambda_from_constraint(m.t_t, 0.0, 0.0, d, 0)?, None),
            _ => {
                return Err(Error::InvalidArgument(
                    "Theta must be given exactly when the species has internal degrees of freedom"
                        .into(),
                ))
            }
        };
        let t_total = equilibrium_temperature(lambda, theta.unwrap_or(lambda), d, l);
        Ok(MacroState {
            n: m.n,
            u: m.u.clone(),
            eta_bar: m.eta_bar.clone(),
            t_t: m.t_t,
            t_r: m.t_r,
            lambda,
            theta,
            t_total,
        })
    }

    /// State of a Maxwellian with parameters `(n, u, η̄, Λ, Θ)`, for which
    /// `T^t = Λ` and `T^r = Θ`.
    pub fn maxwellian(n: f64, u: Vec<f64>, eta_bar: Vec<f64>, lambda: f64, theta: f64) -> Self {
        let d = u.len();
        let l = eta_bar.len();
        let (t_r, th) = if l > 0 { (Some(theta), Some(theta)) } else { (None, None) };
        MacroState {
            n,
            u,
            eta_bar,
            t_t: lambda,
            t_r,
            lambda,
            theta: th,
            t_total: equilibrium_temperature(lambda, theta, d, l),
        }
    }

    pub fn d(&self) -> usize {
        self.u.len()
    }

    pub fn l(&self) -> usize {
        self.eta_bar.len()
    }

    /// `Θ`, or `Λ` when there are no internal degrees of freedom.
    pub fn theta_or_lambda(&self) -> f64 {
        self.theta.unwrap_or(self.lambda)
    }

    pub fn t_r_or_zero(&self) -> f64 {
        self.t_r.unwrap_or(0.0)
    }
}

/// `Λ = T^t + (l/d)(T^r − Θ)`.
pub fn lambda_from_constraint(t_t: f64, t_r: f64, theta: f64, d: usize, l: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidArgument("velocity dimension must be positive".into()));
    }
    let lambda = t_t + l as f64 / d as f64 * (t_r - theta);
    if !(lambda > 0.0) {
        return Err(Error::NonpositiveLambda(lambda));
    }
    Ok(lambda)
}

/// `T = (dΛ + lΘ)/(d + l)`.
pub fn equilibrium_temperature(lambda: f64, theta: f64, d: usize, l: usize) -> f64 {
    if l == 0 {
        lambda
    } else {
        (d as f64 * lambda + l as f64 * theta) / (d + l) as f64
    }
}

/// Per-axis marginal sums `Σ_{cells with i_a = i} f` for every axis.
pub fn axis_marginals(f: &DistributionField, exec: Exec) -> Vec<Vec<f64>> {
    let grid = f.grid();
    let dims = grid.dims().to_vec();
    let last = dims.len() - 1;
    let values = f.values();
    let partials = exec::map_blocks(exec, values.len(), grid.block_len(), |_, range| {
        let mut marg: Vec<Vec<f64>> = dims.iter().map(|&p| vec![0.0; p]).collect();
        grid.walk_rows(range, |outer, cells| {
            let row = &values[cells];
            let mut s = 0.0;
            for (acc, v) in marg[last].iter_mut().zip(row) {
                *acc += v;
                s += v;
            }
            for (a, &i) in outer.iter().enumerate() {
                marg[a][i] += s;
            }
        });
        marg
    });
    let mut total: Vec<Vec<f64>> = dims.iter().map(|&p| vec![0.0; p]).collect();
    for part in partials {
        for (t, p) in total.iter_mut().zip(part) {
            for (x, y) in t.iter_mut().zip(p) {
                *x += y;
            }
        }
    }
    total
}

/// Mean and variance of a weighted node set, two-pass.
pub(crate) fn mean_var(nodes: &[f64], weights: &[f64]) -> (f64, f64) {
    let z: f64 = weights.iter().sum();
    let mean = nodes.iter().zip(weights).map(|(x, w)| w * x).sum::<f64>() / z;
    let var = nodes
        .iter()
        .zip(weights)
        .map(|(x, w)| w * (x - mean) * (x - mean))
        .sum::<f64>()
        / z;
    (mean, var)
}

/// Moments with the default vacuum floor and parallel execution.
pub fn compute_moments(f: &DistributionField, spec: &SpeciesSpec) -> Result<Moments> {
    compute_moments_with(f, spec, DEFAULT_DENSITY_FLOOR, Exec::default())
}

pub fn compute_moments_with(
    f: &DistributionField,
    spec: &SpeciesSpec,
    floor: f64,
    exec: Exec,
) -> Result<Moments> {
    let grid = f.grid();
    let l = grid.l();
    if l != spec.internal_dof {
        return Err(Error::ModelMismatch(format!(
            "grid has {l} internal axes but the species has {} internal degrees of freedom",
            spec.internal_dof
        )));
    }
    let marg = axis_marginals(f, exec);
    moments_from_marginals(&marg, grid, spec.mass, floor)
}

pub(crate) fn moments_from_marginals(
    marg: &[Vec<f64>],
    grid: &crate::grid::PhaseGrid,
    mass: f64,
    floor: f64,
) -> Result<Moments> {
    let d = grid.d();
    let l = grid.l();
    let n = grid.cell_volume() * marg[0].iter().sum::<f64>();
    if !(n >= floor) || n == 0.0 {
        return Err(Error::VacuumState { density: n, floor });
    }
    let mut u = Vec::with_capacity(d);
    let mut eta_bar = Vec::with_capacity(l);
    let mut var_t = 0.0;
    let mut var_r = 0.0;
    for (a, m) in marg.iter().enumerate() {
        let (mean, var) = mean_var(grid.nodes(a), m);
        if a < d {
            u.push(mean);
            var_t += var;
        } else {
            eta_bar.push(mean);
            var_r += var;
        }
    }
    Ok(Moments {
        n,
        u,
        eta_bar,
        t_t: mass * var_t / d as f64,
        t_r: (l > 0).then(|| mass * var_r / l as f64),
    })
}

/// Pressure tensor `ℙ = m ∫ (v−u)(v−u)ᵀ f`.
pub fn pressure_tensor(f: &DistributionField, spec: &SpeciesSpec, u: &[f64]) -> DMatrix<f64> {
    let grid = f.grid();
    let d = grid.d();
    let values = f.values();
    let mut p = DMatrix::zeros(d, d);
    let mut dv = vec![0.0; d];
    for (i, &fv) in values.iter().enumerate() {
        if fv == 0.0 {
            continue;
        }
        let idx = grid.multi_index(i);
        for a in 0..d {
            dv[a] = grid.nodes(a)[idx[a]] - u[a];
        }
        for a in 0..d {
            for b in 0..d {
                p[(a, b)] += fv * dv[a] * dv[b];
            }
        }
    }
    p * (spec.mass * grid.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Axis, PhaseGrid};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn gaussian_field(d: usize, l: usize, points: usize) -> (Arc<PhaseGrid>, DistributionField) {
        let ax = Axis::new(-9.0, 9.0, points).unwrap();
        let g = Arc::new(PhaseGrid::new(vec![ax; d], vec![ax; l]).unwrap());
        let norm = (2.0 * std::f64::consts::PI).powf(-((d + l) as f64) / 2.0);
        let f = DistributionField::from_fn(g.clone(), |x| {
            norm * (-0.5 * x.iter().map(|y| y * y).sum::<f64>()).exp()
        })
        .unwrap();
        (g, f)
    }

    #[test]
    fn maxwellian_moments() {
        let (_, f) = gaussian_field(3, 2, 24);
        let spec = SpeciesSpec::new(1.0, 2, 1.0, 0.0);
        let m = compute_moments(&f, &spec).unwrap();
        assert!((m.n - 1.0).abs() < 1e-6);
        assert!(m.u.iter().chain(&m.eta_bar).all(|x| x.abs() < 1e-12));
        assert!((m.t_t - 1.0).abs() < 1e-6);
        assert!((m.t_r.unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn vacuum_is_reported() {
        let (g, _) = gaussian_field(1, 1, 4);
        let f = DistributionField::zeros(g);
        let spec = SpeciesSpec::new(1.0, 1, 1.0, 0.0);
        assert!(matches!(compute_moments(&f, &spec), Err(Error::VacuumState { .. })));
    }

    fn nested_loop_oracle(f: &DistributionField, m: f64) -> (f64, f64, f64, f64, f64) {
        let g = f.grid();
        let (x, y) = (g.nodes(0), g.nodes(1));
        let w = g.cell_volume();
        let mut n = 0.0;
        let mut sv = 0.0;
        let mut se = 0.0;
        for i in 0..x.len() {
            for j in 0..y.len() {
                let v = f.values()[i * y.len() + j];
                n += w * v;
                sv += w * v * x[i];
                se += w * v * y[j];
            }
        }
        let (u, eb) = (sv / n, se / n);
        let mut tt = 0.0;
        let mut tr = 0.0;
        for i in 0..x.len() {
            for j in 0..y.len() {
                let v = f.values()[i * y.len() + j];
                tt += w * v * m * (x[i] - u).powi(2);
                tr += w * v * m * (y[j] - eb).powi(2);
            }
        }
        (n, u, eb, tt / n, tr / n)
    }

    #[test]
    fn random_field_matches_nested_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = Arc::new(
            PhaseGrid::new(vec![Axis::new(-1.0, 2.0, 4).unwrap()], vec![Axis::new(0.0, 1.0, 4).unwrap()])
                .unwrap(),
        );
        let vals: Vec<f64> = (0..16).map(|_| rng.random::<f64>() + 0.01).collect();
        let f = DistributionField::new(g, vals).unwrap();
        let spec = SpeciesSpec::new(1.7, 1, 1.0, 0.0);
        let m = compute_moments(&f, &spec).unwrap();
        let (n, u, eb, tt, tr) = nested_loop_oracle(&f, 1.7);
        assert!((m.n - n).abs() < 1e-14);
        assert!((m.u[0] - u).abs() < 1e-14);
        assert!((m.eta_bar[0] - eb).abs() < 1e-14);
        assert!((m.t_t - tt).abs() < 1e-14);
        assert!((m.t_r.unwrap() - tr).abs() < 1e-14);
    }

    #[test]
    fn lambda_and_temperature_examples() {
        assert_eq!(lambda_from_constraint(1.0, 1.0, 1.0, 3, 2).unwrap(), 1.0);
        assert!((lambda_from_constraint(1.0, 2.0, 1.0, 3, 2).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(lambda_from_constraint(1.3, 7.0, 2.0, 3, 0).unwrap(), 1.3);
        assert!(matches!(lambda_from_constraint(0.1, 0.0, 5.0, 1, 1), Err(Error::NonpositiveLambda(_))));
        assert_eq!(equilibrium_temperature(1.0, 1.0, 3, 2), 1.0);
        assert!((equilibrium_temperature(2.0, 1.0, 3, 2) - 1.6).abs() < 1e-15);
        assert_eq!(equilibrium_temperature(2.0, 1.0, 3, 0), 2.0);
    }

    #[test]
    fn pressure_tensor_of_isotropic_gaussian() {
        let (_, f) = gaussian_field(2, 0, 30);
        let spec = SpeciesSpec::new(1.0, 0, 1.0, 0.0);
        let p = pressure_tensor(&f, &spec, &[0.0, 0.0]);
        assert!((p[(0, 0)] - 1.0).abs() < 1e-6 && p[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn policies_agree_bitwise() {
        let (_, f) = gaussian_field(3, 1, 20);
        let a = axis_marginals(&f, Exec::Sequential);
        let b = axis_marginals(&f, Exec::Parallel);
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn total_temperature_identity(tt in 0.1f64..5.0, tr in 0.1f64..5.0, th in 0.1f64..5.0,
                                      d in 1usize..4, l in 0usize..4) {
            if let Ok(lambda) = lambda_from_constraint(tt, tr, th, d, l) {
                let t = equilibrium_temperature(lambda, th, d, l);
                let direct = (d as f64 * tt + l as f64 * tr) / (d + l) as f64;
                prop_assert!((t - direct).abs() <= 1e-12 * direct.max(1.0));
            }
        }

        #[test]
        fn relabeling_equal_axes(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ax = Axis::new(-2.0, 2.0, 5).unwrap();
            let g = Arc::new(PhaseGrid::new(vec![ax, ax], vec![]).unwrap());
            let vals: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
            let swapped: Vec<f64> = (0..25).map(|k| vals[(k % 5) * 5 + k / 5]).collect();
            let spec = SpeciesSpec::new(1.0, 0, 1.0, 0.0);
            let a = compute_moments(&DistributionField::new(g.clone(), vals).unwrap(), &spec).unwrap();
            let b = compute_moments(&DistributionField::new(g, swapped).unwrap(), &spec).unwrap();
            prop_assert!((a.n - b.n).abs() < 1e-14);
            prop_assert!((a.t_t - b.t_t).abs() < 1e-13);
            prop_assert!((a.u[0] - b.u[1]).abs() < 1e-14);
        }
    }
}
