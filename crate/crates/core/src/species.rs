//! Species parameters, collision frequencies and mixture admissibility.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical and relaxation parameters of one species.
///
/// For the ALPP model `collision_self` is the frequency `A_ν` and
/// `internal_dof` is the number `δ` of internal degrees of freedom carried
/// by the scalar variable `I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesSpec {
    pub mass: f64,
    pub internal_dof: usize,
    /// Components of the global internal variable owned by this species
    /// (0-based). Defaults to `0..internal_dof`.
    #[serde(default)]
    pub global_dof_slots: Vec<usize>,
    pub collision_self: f64,
    #[serde(default)]
    pub collision_cross: f64,
    #[serde(default = "one")]
    pub z: f64,
    #[serde(default = "one")]
    pub theta: f64,
}

fn one() -> f64 {
    1.0
}

impl SpeciesSpec {
    /// A species with default slots `0..l`, `z = 1` and `θ = 1`.
    pub fn new(mass: f64, internal_dof: usize, collision_self: f64, collision_cross: f64) -> Self {
        SpeciesSpec {
            mass,
            internal_dof,
            global_dof_slots: (0..internal_dof).collect(),
            collision_self,
            collision_cross,
            z: 1.0,
            theta: 1.0,
        }
    }

    pub fn with_z(mut self, z: f64) -> Self {
        self.z = z;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_slots(mut self, slots: Vec<usize>) -> Self {
        self.global_dof_slots = slots;
        self
    }

    /// Slots with the `0..l` default filled in.
    pub fn slots(&self) -> Vec<usize> {
        if self.global_dof_slots.is_empty() {
            (0..self.internal_dof).collect()
        } else {
            self.global_dof_slots.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpecies(msg));
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return bad(format!("mass must be positive, got {}", self.mass));
        }
        if !(self.z.is_finite() && self.z > 0.0) {
            return bad(format!("z must be positive, got {}", self.z));
        }
        if !(self.collision_self.is_finite() && self.collision_self >= 0.0) {
            return bad(format!("collision_self must be nonnegative, got {}", self.collision_self));
        }
        if !(self.collision_cross.is_finite() && self.collision_cross >= 0.0) {
            return bad(format!("collision_cross must be nonnegative, got {}", self.collision_cross));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad(format!("theta must lie in (0, 1], got {}", self.theta));
        }
        let slots = self.slots();
        if slots.len() != self.internal_dof {
            return bad(format!(
                "{} global slots for {} internal degrees of freedom",
                slots.len(),
                self.internal_dof
            ));
        }
        let mut sorted = slots.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != slots.len() {
            return bad("global slots must be distinct".into());
        }
        Ok(())
    }

    /// Rotational collision number `Z_r` from `1/z = (1/Z_r)(d+l)/d`.
    pub fn collision_number(&self, d: usize) -> f64 {
        self.z * (d + self.internal_dof) as f64 / d as f64
    }
}

/// How the collision frequencies `ν_kj` depend on the densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionModel {
    /// `ν_kj = ν̃_kj`.
    Constant,
    /// `ν_kj = ν̃_kj / (n_1 + n_2)`.
    #[default]
    DensityWeighted,
}

impl CollisionModel {
    /// Self and cross relaxation rates `(ν_kk n_k, ν_kj n_j)` of species `k`.
    pub fn rates(self, spec: &SpeciesSpec, n_self: f64, n_other: f64) -> (f64, f64) {
        let scale = match self {
            CollisionModel::Constant => 1.0,
            CollisionModel::DensityWeighted => {
                let total = n_self + n_other;
                if total > 0.0 {
                    1.0 / total
                } else {
                    0.0
                }
            }
        };
        (
            spec.collision_self * scale * n_self,
            spec.collision_cross * scale * n_other,
        )
    }
}

/// Free parameters of the interspecies Maxwellians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureParams {
    #[serde(default = "half")]
    pub delta: f64,
    #[serde(default = "half")]
    pub beta: f64,
    #[serde(default = "half")]
    pub alpha: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub gamma_tilde: f64,
}

fn half() -> f64 {
    0.5
}

impl Default for MixtureParams {
    fn default() -> Self {
        MixtureParams { delta: 0.5, beta: 0.5, alpha: 0.5, gamma: 0.0, gamma_tilde: 0.0 }
    }
}

/// `ε = ν̃_12 / ν̃_21`.
pub fn epsilon(specs: [&SpeciesSpec; 2]) -> Result<f64> {
    let nu21 = specs[1].collision_cross;
    if !(nu21 > 0.0) {
        return Err(Error::UndefinedEpsilon);
    }
    Ok(specs[0].collision_cross / nu21)
}

/// Admissible ranges implied by the species data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibleBounds {
    pub epsilon: f64,
    /// Lower bound shared by `δ` and `β`.
    pub convex_lower: f64,
    pub gamma_max: f64,
    pub gamma_tilde_max: f64,
}

/// Evaluates the admissible ranges for the given `δ`, `β`.
pub fn admissible_bounds(
    params: &MixtureParams,
    specs: [&SpeciesSpec; 2],
    d: usize,
) -> Result<AdmissibleBounds> {
    let eps = epsilon(specs)?;
    let m1 = specs[0].mass;
    let r = m1 * eps / specs[1].mass;
    let l1 = specs[0].internal_dof as f64;
    let gamma_max = m1 / d as f64 * (1.0 - params.delta) * ((1.0 + r) * params.delta + 1.0 - r);
    let gamma_tilde_max = if l1 > 0.0 {
        m1 / l1 * (1.0 - params.beta) * ((1.0 + r) * params.beta + 1.0 - r)
    } else {
        0.0
    };
    Ok(AdmissibleBounds {
        epsilon: eps,
        convex_lower: (r - 1.0) / (1.0 + r),
        gamma_max,
        gamma_tilde_max,
    })
}

/// Checks every admissibility inequality and returns the parameters
/// unchanged, or the names of all violated constraints.
///
/// Besides the published inequalities this also requires `ε(1−α) ≤ 1`,
/// without which `Λ_21` can become negative for equal velocities.
pub fn validate_mixture_params(
    params: MixtureParams,
    specs: [&SpeciesSpec; 2],
    d: usize,
) -> Result<MixtureParams> {
    let b = admissible_bounds(&params, specs, d)?;
    let mut violated = Vec::new();
    let fields = [
        ("delta", params.delta),
        ("beta", params.beta),
        ("alpha", params.alpha),
        ("gamma", params.gamma),
        ("gamma_tilde", params.gamma_tilde),
    ];
    for (name, v) in fields {
        if !v.is_finite() {
            violated.push(format!("{name} (not finite)"));
        }
    }
    if !violated.is_empty() {
        return Err(Error::ConstraintViolated(violated));
    }
    let tol = 1e-14;
    let mut check = |ok: bool, name: &str| {
        if !ok {
            violated.push(name.to_string());
        }
    };
    check(params.delta >= b.convex_lower - tol && params.delta <= 1.0, "delta");
    check(params.beta >= b.convex_lower - tol && params.beta <= 1.0, "beta");
    check((0.0..=1.0).contains(&params.alpha), "alpha");
    check(params.gamma >= 0.0 && params.gamma <= b.gamma_max + tol, "gamma");
    check(
        params.gamma_tilde >= 0.0 && params.gamma_tilde <= b.gamma_tilde_max + tol,
        "gamma_tilde",
    );
    let (l1, l2) = (specs[0].internal_dof as f64, specs[1].internal_dof as f64);
    let share = if l1 + l2 > 0.0 { b.epsilon * l1 / (l1 + l2) } else { 0.0 };
    check(share > 0.0 && share <= 1.0 + tol, "epsilon_internal_share");
    check(b.epsilon * (1.0 - params.alpha) <= 1.0 + tol, "epsilon_alpha");
    if violated.is_empty() {
        Ok(params)
    } else {
        Err(Error::ConstraintViolated(violated))
    }
}
