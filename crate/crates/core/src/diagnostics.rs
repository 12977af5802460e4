//! Entropy functionals, entropy production, Lyapunov functions, theorem
//! constants, lemma checks and decay-rate fits.
//!
//! Dense fields are integrated by midpoint quadrature; integrals that only
//! involve separable fields are reduced to one-dimensional sums. Values of
//! `f` at or below [`ENTROPY_FLOOR`] contribute `f ln f = 0` and are counted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::grid::{DistributionField, PhaseGrid, SeparableField};
use crate::models::{ModelKind, Problem, Snapshot, SpeciesRhs, SystemState};
use crate::moments::MacroState;
use crate::species::CollisionModel;

pub const ENTROPY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, Default)]
struct TargetSums {
    f_ln_g: f64,
    g_ln_f: f64,
    bregman: f64,
    l1: f64,
}

#[derive(Debug, Clone, Default)]
struct DensePass {
    f_ln_f: f64,
    mass: f64,
    clamped: usize,
    targets: Vec<TargetSums>,
}

/// `x ln x − x + 1` at `x = e^r`, accurate for `x` near 1.
fn bregman_kernel(r: f64) -> f64 {
    if r.abs() < 1e-3 {
        let r2 = r * r;
        r2 * (0.5 + r * (1.0 / 3.0 + r * (1.0 / 8.0 + r * (1.0 / 30.0 + r * (1.0 / 144.0 + r / 840.0)))))
    } else {
        r + (r - 1.0) * r.exp_m1()
    }
}

/// One sweep over `f` accumulating `∫ f ln f` and, for every separable
/// target `g`, `∫ f ln g`, `∫ g ln f`, the Bregman sum of `f ln(f/g) − f + g`
/// and `‖f − g‖₁`.
fn dense_pass(f: &DistributionField, targets: &[&SeparableField], exec: Exec) -> Result<DensePass> {
    let grid = f.grid();
    let values = f.values();
    let ln_floor = ENTROPY_FLOOR.ln();
    let parts = exec::map_blocks(exec, values.len(), grid.block_len(), |_, range| {
        let mut acc = DensePass { targets: vec![TargetSums::default(); targets.len()], ..Default::default() };
        let mut unbounded = None;
        let mut prefix = vec![0.0; targets.len()];
        grid.walk_rows(range, |outer, cells| {
            for (p, t) in prefix.iter_mut().zip(targets) {
                *p = t.row_log_prefix(outer);
            }
            for (j, c) in cells.enumerate() {
                let fv = values[c];
                let above = fv > ENTROPY_FLOOR;
                let lf = if above { fv.ln() } else { ln_floor };
                if above {
                    acc.f_ln_f += fv * lf;
                } else {
                    acc.clamped += 1;
                }
                acc.mass += fv;
                for ((s, t), &pre) in acc.targets.iter_mut().zip(targets).zip(&prefix) {
                    let lg = pre + t.last_log_factor()[j];
                    let g = lg.exp();
                    if lg == f64::NEG_INFINITY {
                        if above {
                            unbounded = Some(fv);
                        }
                        s.l1 += fv.abs();
                        continue;
                    }
                    if above {
                        s.f_ln_g += fv * lg;
                        s.bregman += g * bregman_kernel(lf - lg);
                    } else {
                        s.f_ln_g += fv.max(0.0) * lg;
                        s.bregman += g;
                    }
                    s.g_ln_f += g * lf;
                    s.l1 += (fv - g).abs();
                }
            }
        });
        (acc, unbounded)
    });
    let vol = grid.cell_volume();
    let mut out = DensePass { targets: vec![TargetSums::default(); targets.len()], ..Default::default() };
    for (p, unbounded) in parts {
        if let Some(v) = unbounded {
            return Err(Error::UnboundedRelativeEntropy(v));
        }
        out.f_ln_f += p.f_ln_f;
        out.mass += p.mass;
        out.clamped += p.clamped;
        for (o, s) in out.targets.iter_mut().zip(&p.targets) {
            o.f_ln_g += s.f_ln_g;
            o.g_ln_f += s.g_ln_f;
            o.bregman += s.bregman;
            o.l1 += s.l1;
        }
    }
    out.f_ln_f *= vol;
    out.mass *= vol;
    for o in &mut out.targets {
        o.f_ln_g *= vol;
        o.g_ln_f *= vol;
        o.bregman *= vol;
        o.l1 *= vol;
    }
    Ok(out)
}

/// `H(f) = ∫ f ln f`.
pub fn entropy(f: &DistributionField, exec: Exec) -> f64 {
    dense_pass(f, &[], exec).map(|p| p.f_ln_f).unwrap_or(f64::NAN)
}

/// `H(f|g) = ∫ f ln(f/g)`, accumulated as `∫ [f ln(f/g) − f + g] + ∫(f − g)`.
pub fn relative_entropy(f: &DistributionField, g: &DistributionField, exec: Exec) -> Result<f64> {
    check_same_grid(f, g)?;
    let grid = f.grid();
    let (fv, gv) = (f.values(), g.values());
    let parts = exec::map_blocks(exec, fv.len(), grid.block_len(), |_, range| {
        let mut sum = 0.0;
        let mut mass = 0.0;
        for c in range {
            let (a, b) = (fv[c], gv[c]);
            mass += a - b;
            if a > ENTROPY_FLOOR {
                if !(b > ENTROPY_FLOOR) {
                    return Err(Error::UnboundedRelativeEntropy(a));
                }
                sum += b * bregman_kernel(a.ln() - b.ln());
            } else {
                sum += b.max(0.0);
            }
        }
        Ok((sum, mass))
    });
    let mut total = 0.0;
    for p in parts {
        let (s, m) = p?;
        total += s + m;
    }
    Ok(total * grid.cell_volume())
}

/// `‖f − g‖₁`.
pub fn l1_distance(f: &DistributionField, g: &DistributionField) -> Result<f64> {
    check_same_grid(f, g)?;
    let s: f64 = f.values().iter().zip(g.values()).map(|(a, b)| (a - b).abs()).sum();
    Ok(s * f.grid().cell_volume())
}

fn check_same_grid(f: &DistributionField, g: &DistributionField) -> Result<()> {
    if f.grid().dims() != g.grid().dims() {
        return Err(Error::InvalidField("fields live on different grids".into()));
    }
    Ok(())
}

/// `∫ a ln b` for two separable fields on the same grid.
pub fn separable_cross_entropy(a: &SeparableField, b: &SeparableField, grid: &PhaseGrid) -> f64 {
    if a.scale() == 0.0 {
        return 0.0;
    }
    let n = a.n_axes();
    let sums: Vec<f64> = (0..n).map(|x| grid.axis(x).spacing() * a.factor(x).iter().sum::<f64>()).collect();
    let mass = a.scale() * sums.iter().product::<f64>();
    if b.scale() <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut total = mass * b.scale().ln();
    for x in 0..n {
        let cross: f64 = a.factor(x).iter().zip(b.log_factor(x)).map(|(p, q)| p * q).sum::<f64>()
            * grid.axis(x).spacing();
        let others: f64 = sums.iter().enumerate().filter(|&(y, _)| y != x).map(|(_, s)| s).product();
        total += a.scale() * cross * others;
    }
    total
}

pub fn separable_entropy(a: &SeparableField, grid: &PhaseGrid) -> f64 {
    separable_cross_entropy(a, a, grid)
}

/// `H(a|b)` for separable fields of equal mass.
pub fn separable_relative_entropy(a: &SeparableField, b: &SeparableField, grid: &PhaseGrid) -> f64 {
    separable_entropy(a, grid) - separable_cross_entropy(a, b, grid)
}

/// Entropy of a continuous Maxwellian with density `n` and temperatures
/// `lambda`, `theta` over `d` velocity and `l` internal dimensions.
pub fn gaussian_entropy(n: f64, lambda: f64, theta: f64, mass: f64, d: usize, l: usize) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    let tau = std::f64::consts::TAU;
    let mut log_norm = d as f64 * (tau * lambda / mass).ln();
    if l > 0 {
        log_norm += l as f64 * (tau * theta / mass).ln();
    }
    n * n.ln() - 0.5 * n * log_norm - 0.5 * n * (d + l) as f64
}

/// Both sides of the Csiszar-Kullback inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CkCheck {
    pub l1: f64,
    pub relative_entropy: f64,
    /// `4 H(f|g)^{1/2}`.
    pub bound: f64,
    /// `(2 ‖f‖₁ H(f|g))^{1/2}`.
    pub sharp_bound: f64,
}

impl CkCheck {
    pub fn new(l1: f64, relative_entropy: f64, mass: f64) -> Self {
        let h = relative_entropy.max(0.0);
        CkCheck { l1, relative_entropy, bound: 4.0 * h.sqrt(), sharp_bound: (2.0 * mass * h).sqrt() }
    }

    pub fn holds(&self) -> bool {
        self.l1 <= self.bound + 1e-12
    }

    pub fn sharp_holds(&self) -> bool {
        self.l1 <= self.sharp_bound + 1e-12
    }
}

pub fn csiszar_kullback_bound(f: &DistributionField, g: &DistributionField, exec: Exec) -> Result<CkCheck> {
    let h = relative_entropy(f, g, exec)?;
    Ok(CkCheck::new(l1_distance(f, g)?, h, f.mass()))
}

/// Weight of `H(M_k)` in the Lyapunov function.
pub fn lyapunov_weights(problem: &Problem) -> Vec<f64> {
    let specs = problem.species();
    match problem.kind() {
        ModelKind::AlppOneSpecies => vec![0.0],
        ModelKind::KppOneSpecies | ModelKind::KppMixture => specs.iter().map(|s| 3.0 * s.z).collect(),
        ModelKind::BipOneSpecies | ModelKind::NewMixture => {
            let w = specs.iter().fold(1.0_f64, |acc, s| acc.max(s.z));
            vec![w; specs.len()]
        }
    }
}

/// Weight of `H(M_k|M̃_k)` in the quantity controlled by the convergence
/// theorem.
pub fn composite_weights(problem: &Problem) -> Vec<f64> {
    let w = lyapunov_weights(problem);
    match problem.kind() {
        ModelKind::BipOneSpecies | ModelKind::NewMixture => w.iter().map(|x| 2.0 * x).collect(),
        _ => w,
    }
}

/// Entropy functionals of one species at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesDiagnostics {
    pub state: Option<MacroState>,
    pub entropy_f: f64,
    pub entropy_m: f64,
    pub entropy_mt: f64,
    pub rel_f_m: f64,
    pub rel_f_mt: f64,
    pub rel_m_mt: f64,
    pub production: f64,
    pub l1_f_m: f64,
    pub l1_f_mt: f64,
    /// `∫ f ln(f/M) − f + M`, the relative entropy without the mass
    /// difference; used by the Csiszar-Kullback check.
    pub bregman_f_m: f64,
    pub bregman_f_mt: f64,
    pub mass: f64,
    pub clamped_cells: usize,
}

impl SpeciesDiagnostics {
    fn vacuum(f: &DistributionField, exec: Exec) -> Result<Self> {
        let pass = dense_pass(f, &[], exec)?;
        Ok(SpeciesDiagnostics {
            state: None,
            entropy_f: pass.f_ln_f,
            entropy_m: 0.0,
            entropy_mt: 0.0,
            rel_f_m: 0.0,
            rel_f_mt: 0.0,
            rel_m_mt: 0.0,
            production: 0.0,
            l1_f_m: 0.0,
            l1_f_mt: 0.0,
            bregman_f_m: 0.0,
            bregman_f_mt: 0.0,
            mass: pass.mass,
            clamped_cells: pass.clamped,
        })
    }

    pub fn ck_against_m(&self) -> CkCheck {
        CkCheck::new(self.l1_f_m, self.bregman_f_m, self.mass)
    }

    pub fn ck_against_mt(&self) -> CkCheck {
        CkCheck::new(self.l1_f_mt, self.bregman_f_mt, self.mass)
    }
}

/// Everything [`evaluate`] derives from one state.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub snapshot: Snapshot,
    pub species: Vec<SpeciesDiagnostics>,
    /// `Σ_k H(f_k) + W_k H(M_k)`.
    pub lyapunov: f64,
    /// `Σ_k H(f_k|M̃_k) + W'_k H(M_k|M̃_k)`.
    pub composite: f64,
}

impl Evaluation {
    pub fn total_production(&self) -> f64 {
        self.species.iter().map(|s| s.production).sum()
    }
}

pub fn evaluate(problem: &Problem, state: &SystemState) -> Result<Evaluation> {
    problem.check_state(state)?;
    let snap = problem.snapshot(state)?;
    let rhs = problem.rhs_from_snapshot(&snap)?;
    let weights = lyapunov_weights(problem);
    let cw = composite_weights(problem);
    let exec = problem.exec;
    let mut species = Vec::with_capacity(state.species.len());
    for (k, s) in state.species.iter().enumerate() {
        let f = &s.f;
        let grid = f.grid();
        if snap.macros[k].is_none() {
            species.push(SpeciesDiagnostics::vacuum(f, exec)?);
            continue;
        }
        let m = problem.species_maxwellian(&snap, k)?;
        let mt = problem.equilibrium_maxwellian(&snap, k)?;
        let r = &rhs[k];
        let mut targets: Vec<&SeparableField> = vec![&m, &mt];
        targets.extend(r.targets.iter().map(|(_, t)| t));
        let pass = dense_pass(f, &targets, exec)?;
        let h_f = pass.f_ln_f;
        let rhs_ln_f = r
            .targets
            .iter()
            .zip(&pass.targets[2..])
            .map(|((w, _), t)| w * t.g_ln_f)
            .sum::<f64>()
            - r.decay * h_f;
        let x = |a: &SeparableField, b: &SeparableField| separable_cross_entropy(a, b, grid);
        let h_m = x(&m, &m);
        let h_mt = x(&mt, &mt);
        let m_ln_m_tilde = x(&m, &mt);
        let dm_ln_m = if weights[k] == 0.0 {
            0.0
        } else {
            let state = snap.macros[k].as_ref().expect("present species");
            maxwellian_rate_ln(&m, state, r, problem.species()[k].mass, grid)
        };
        let mass_m = m.mass(grid);
        let mass_mt = mt.mass(grid);
        species.push(SpeciesDiagnostics {
            state: snap.macros[k].clone(),
            entropy_f: h_f,
            entropy_m: h_m,
            entropy_mt: h_mt,
            rel_f_m: pass.targets[0].bregman + pass.mass - mass_m,
            rel_f_mt: pass.targets[1].bregman + pass.mass - mass_mt,
            rel_m_mt: h_m - m_ln_m_tilde,
            production: -rhs_ln_f - weights[k] * dm_ln_m,
            l1_f_m: pass.targets[0].l1,
            l1_f_mt: pass.targets[1].l1,
            bregman_f_m: pass.targets[0].bregman,
            bregman_f_mt: pass.targets[1].bregman,
            mass: pass.mass,
            clamped_cells: pass.clamped,
        });
    }
    let lyapunov = species.iter().zip(&weights).map(|(s, w)| s.entropy_f + w * s.entropy_m).sum();
    let composite = species.iter().zip(&cw).map(|(s, w)| s.rel_f_mt + w * s.rel_m_mt).sum();
    Ok(Evaluation { snapshot: snap, species, lyapunov, composite })
}

/// Coefficients `(β, γ)` of a log-quadratic factor `α + βx − γx²`, read off
/// three nodes.
fn log_quadratic(nodes: &[f64], logs: &[f64]) -> (f64, f64) {
    let p = nodes.len();
    let (i0, i1, i2) = (0, p / 2, p - 1);
    let (x0, x1, x2) = (nodes[i0], nodes[i1], nodes[i2]);
    let (y0, y1, y2) = (logs[i0], logs[i1], logs[i2]);
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    (d01 - curv * (x0 + x1), -curv)
}

/// `∫ (∂t M) ln M` for the discrete Maxwellian `M` of a species whose
/// distribution evolves by `rhs`. `M` shares its per-axis means with `f` and
/// has variance `Λ/m` on velocity axes and `Θ/m` on internal axes, so only
/// the rates of these moments enter.
fn maxwellian_rate_ln(m: &SeparableField, state: &MacroState, rhs: &SpeciesRhs, mass: f64, grid: &PhaseGrid) -> f64 {
    let d = grid.d();
    let l = grid.l();
    let n = state.n;
    let mean: Vec<f64> = state.u.iter().chain(&state.eta_bar).copied().collect();
    let moments: Vec<(f64, Vec<(f64, f64)>)> = rhs
        .targets
        .iter()
        .map(|(w, t)| (w * t.mass(grid), (0..d + l).map(|a| t.axis_mean_var(grid, a)).collect()))
        .collect();
    let dmean: Vec<f64> = (0..d + l)
        .map(|a| (moments.iter().map(|(wm, mv)| wm * mv[a].0).sum::<f64>() - rhs.decay * n * mean[a]) / n)
        .collect();
    // rate of the per-particle second moment summed over a block of axes
    let block_rate = |axes: std::ops::Range<usize>, temp: f64, dof: usize| {
        let gain: f64 = moments
            .iter()
            .map(|(wm, mv)| wm * axes.clone().map(|a| mv[a].1 + mv[a].0 * mv[a].0).sum::<f64>())
            .sum();
        let own = n * (dof as f64 * temp / mass + axes.clone().map(|a| mean[a] * mean[a]).sum::<f64>());
        let second = (gain - rhs.decay * own) / n;
        let drift: f64 = axes.map(|a| 2.0 * mean[a] * dmean[a]).sum();
        mass * (second - drift) / dof as f64
    };
    let dt_t = block_rate(0..d, state.t_t, d);
    let (dlambda, dtheta) = if l > 0 {
        let dt_r = block_rate(d..d + l, state.t_r_or_zero(), l);
        let dtheta = rhs.dtheta;
        (dt_t + l as f64 / d as f64 * (dt_r - dtheta), dtheta)
    } else {
        (dt_t, 0.0)
    };
    (0..d + l)
        .map(|a| {
            let (beta, gamma) = log_quadratic(grid.nodes(a), m.log_factor(a));
            let dvar = if a < d { dlambda } else { dtheta } / mass;
            n * (beta * dmean[a] - gamma * (dvar + 2.0 * mean[a] * dmean[a]))
        })
        .sum()
}

/// Entropy production `D_k` of every species.
pub fn entropy_production(problem: &Problem, state: &SystemState) -> Result<Vec<f64>> {
    Ok(evaluate(problem, state)?.species.iter().map(|s| s.production).collect())
}

/// The model's Lyapunov function `Σ_k H(f_k) + W_k H(M_k)`.
pub fn lyapunov(problem: &Problem, state: &SystemState) -> Result<f64> {
    Ok(evaluate(problem, state)?.lyapunov)
}

/// User bounds `B ≤ temperatures ≤ A` entering the hypotheses of the slow
/// relaxation convergence theorem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureBounds {
    pub a: f64,
    pub b: f64,
}

impl Default for TemperatureBounds {
    fn default() -> Self {
        TemperatureBounds { a: 1.0, b: 1.0 }
    }
}

impl TemperatureBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.a >= self.b && self.a.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature bounds need A >= B > 0, got A = {}, B = {}",
                self.a, self.b
            )));
        }
        Ok(())
    }

    /// `max{1, A/B}`.
    pub fn ratio(&self) -> f64 {
        (self.a / self.b).max(1.0)
    }

    /// `c_k = (d+l)²/l · max{1, A/B}`; `None` for `l = 0`.
    pub fn temperature_factor(&self, d: usize, l: usize) -> Option<f64> {
        (l > 0).then(|| ((d + l) * (d + l)) as f64 / l as f64 * self.ratio())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub label: String,
    pub value: f64,
}

fn argmin(branches: &[Branch]) -> usize {
    branches
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, b)| if b.value < bv { (i, b.value) } else { (bi, bv) })
        .0
}

/// Rate constants of the convergence theorems and the hypotheses they rest on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    pub kind: ModelKind,
    pub branches: Vec<Branch>,
    pub binding: usize,
    /// Decay rate of the controlled relative entropy, `C`, `C̃` or `θA_ν`.
    pub rate: f64,
    /// Alternative branches `min{ν_kk n_k + ν_kj n_j, ν_kk n_k / z_k}` whose
    /// minimum, scaled by `2c/3`, is the rate reached by the Gronwall argument
    /// for the models with kinetic temperature equations.
    pub proof_branches: Vec<Branch>,
    pub proof_rate: Option<f64>,
    /// `c = min_k (1 − ν_kj n_j / ν_kk n_k)`.
    pub margin: Option<f64>,
    /// `c_k` of the temperature-ratio hypothesis.
    pub temperature_factors: Vec<Option<f64>>,
    pub lyapunov_weights: Vec<f64>,
    /// The result depends on the user's temperature bounds.
    pub conditional_on_bounds: bool,
    pub unmet: Vec<String>,
}

impl TheoremConstants {
    pub fn binding_label(&self) -> &str {
        &self.branches[self.binding].label
    }

    pub fn certified(&self) -> bool {
        self.unmet.is_empty()
    }

    pub fn certify(&self) -> Result<&Self> {
        if self.unmet.is_empty() {
            Ok(self)
        } else {
            Err(Error::HypothesisUnmet(self.unmet.clone()))
        }
    }
}

pub fn theorem_constants(problem: &Problem, snap: &Snapshot, bounds: TemperatureBounds) -> Result<TheoremConstants> {
    bounds.validate()?;
    let kind = problem.kind();
    let d = problem.d();
    let specs = problem.species();
    let present: Vec<usize> = (0..specs.len()).filter(|&k| snap.macros[k].is_some()).collect();
    let weights = lyapunov_weights(problem);
    let mut unmet = Vec::new();
    let mut out = TheoremConstants {
        kind,
        branches: Vec::new(),
        binding: 0,
        rate: 0.0,
        proof_branches: Vec::new(),
        proof_rate: None,
        margin: None,
        temperature_factors: specs.iter().map(|s| bounds.temperature_factor(d, s.internal_dof)).collect(),
        lyapunov_weights: weights,
        conditional_on_bounds: false,
        unmet: Vec::new(),
    };
    match kind {
        ModelKind::AlppOneSpecies => {
            let theta = specs[0].theta;
            if !(theta > 0.0 && theta <= 1.0) {
                unmet.push(format!("theta = {theta} outside (0, 1]"));
            }
            out.branches.push(Branch { label: "theta_a".into(), value: theta * snap.rates[0].0 });
        }
        ModelKind::BipOneSpecies | ModelKind::NewMixture => {
            for &k in &present {
                let (s, c) = snap.rates[k];
                let z = specs[k].z;
                let i = k + 1;
                out.branches.push(Branch { label: format!("maxwellization_{i}"), value: s + c });
                out.branches.push(Branch { label: format!("temperature_{i}"), value: s / z + c });
            }
        }
        ModelKind::KppOneSpecies | ModelKind::KppMixture => {
            out.conditional_on_bounds = true;
            let margin = present
                .iter()
                .map(|&k| {
                    let (s, c) = snap.rates[k];
                    if s > 0.0 {
                        1.0 - c / s
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .fold(1.0_f64, f64::min);
            if !(margin > 0.0) {
                unmet.push(format!("no c in (0, 1) with nu_kk n_k >= nu_kj n_j + c nu_kk n_k (margin {margin})"));
            }
            if problem.collision != CollisionModel::DensityWeighted {
                unmet.push("collision frequencies are not density weighted".into());
            }
            let cm = margin.max(0.0);
            for &k in &present {
                let (s, c) = snap.rates[k];
                let spec = &specs[k];
                let z = spec.z;
                let i = k + 1;
                out.branches.push(Branch { label: format!("maxwellization_{i}"), value: s + c });
                out.branches.push(Branch { label: format!("temperature_{i}"), value: 2.0 * cm / (3.0 * z) * s });
                out.proof_branches.push(Branch { label: format!("maxwellization_{i}"), value: s + c });
                out.proof_branches.push(Branch { label: format!("temperature_{i}"), value: s / z });
                let m = snap.macros[k].as_ref().expect("present species");
                match out.temperature_factors[k] {
                    None => unmet.push(format!("species {i} has no internal degrees of freedom")),
                    Some(ck) => {
                        let t_r = m.t_r_or_zero();
                        let theta = m.theta_or_lambda();
                        if t_r < ck * theta {
                            unmet.push(format!("species {i}: T^r = {t_r:.6e} below c_k Theta = {:.6e}", ck * theta));
                        }
                    }
                }
                let nu_sum = spec.collision_self + if kind.is_mixture() { spec.collision_cross } else { 0.0 };
                let need = nu_sum * bounds.ratio();
                if s / z < need {
                    unmet.push(format!("species {i}: nu_kk n_k / z_k = {:.6e} below {need:.6e}", s / z));
                }
            }
            out.margin = Some(margin);
            let p = argmin(&out.proof_branches);
            out.proof_rate = Some(2.0 * cm / 3.0 * out.proof_branches[p].value);
        }
    }
    if out.branches.is_empty() {
        return Err(Error::VacuumState { density: 0.0, floor: problem.density_floor });
    }
    out.binding = argmin(&out.branches);
    out.rate = out.branches[out.binding].value;
    out.unmet = unmet;
    Ok(out)
}

/// One checked inequality. `slack ≥ 0` means it holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub name: String,
    pub species: Option<usize>,
    pub slack: f64,
    pub hypotheses_met: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub checks: Vec<LemmaCheck>,
}

impl LemmaReport {
    /// Checks whose hypotheses hold but whose slack is below `-tol`.
    pub fn violations(&self, tol: f64) -> Vec<&LemmaCheck> {
        self.checks.iter().filter(|c| c.hypotheses_met && !(c.slack >= -tol)).collect()
    }

    pub fn get(&self, name: &str, species: Option<usize>) -> Option<&LemmaCheck> {
        self.checks.iter().find(|c| c.name == name && c.species == species)
    }
}

/// Evaluates the entropy inequalities behind the convergence proofs in
/// closed form for continuous Maxwellians with the snapshot's parameters.
pub fn check_lemma_inequalities(problem: &Problem, snap: &Snapshot, bounds: TemperatureBounds) -> LemmaReport {
    let kind = problem.kind();
    let mut report = LemmaReport::default();
    if kind == ModelKind::AlppOneSpecies {
        return report;
    }
    let d = problem.d();
    let df = d as f64;
    let specs = problem.species();
    let ratio = bounds.ratio();
    let push = |r: &mut LemmaReport, name: &str, k: Option<usize>, slack: f64, ok: bool| {
        r.checks.push(LemmaCheck { name: name.into(), species: k, slack, hypotheses_met: ok });
    };
    for (k, m) in snap.macros.iter().enumerate() {
        let Some(m) = m else { continue };
        let spec = &specs[k];
        let l = spec.internal_dof;
        let lf = l as f64;
        let (lambda, theta, t) = (m.lambda, m.theta_or_lambda(), m.t_total);
        let mut mtilde = df * (t / lambda).ln();
        if l > 0 {
            mtilde += lf * (t / theta).ln();
        }
        push(&mut report, "mtilde", Some(k), 0.5 * m.n * mtilde, true);
        if l == 0 {
            continue;
        }
        let (s, c) = snap.rates[k];
        let asstemp = bounds.temperature_factor(d, l).is_some_and(|ck| m.t_r_or_zero() >= ck * theta);
        let first = 0.5 * df * t / lambda + 0.5 * lf * t / theta - 0.5 * (df + lf);
        push(&mut report, "lemm1_first", Some(k), first, asstemp);
        let x = 0.5 * df * m.t_t / lambda + 0.5 * lf * m.t_r_or_zero() / theta;
        let partner = snap.exchange.as_ref().filter(|_| c > 0.0).map(|e| &e[k]);
        let (cross_term, shift) = match partner {
            Some(e) => {
                let du: f64 = e.u.iter().zip(&m.u).map(|(a, b)| (a - b).powi(2)).sum();
                let de: f64 = e.eta_bar.iter().zip(&m.eta_bar).map(|(a, b)| (a - b).powi(2)).sum();
                (
                    0.5 * df * e.lambda / lambda + 0.5 * lf * e.theta / theta,
                    spec.mass * (du / (2.0 * lambda) + de / (2.0 * theta)),
                )
            }
            None => (0.5 * (df + lf), 0.0),
        };
        let ratios_ok = partner.is_none_or(|e| e.lambda / lambda <= ratio && e.theta / theta <= ratio);
        let second = (s + c) * x - s * 0.5 * (df + lf) - c * cross_term;
        push(&mut report, "lemm1_second", Some(k), second, asstemp && ratios_ok);
        if matches!(kind, ModelKind::KppOneSpecies | ModelKind::KppMixture) {
            let z = spec.z;
            let z_max = if second > 0.0 { s * first / second } else { f64::INFINITY };
            let value = -s * first + 3.0 * z * (s * (x - 0.5 * (df + lf)) + c * (x - cross_term - shift));
            push(&mut report, "lemm3", Some(k), -m.n * value, asstemp && z <= z_max);
        }
    }
    if let (Some(e), [Some(m1), Some(m2)]) = (snap.exchange.as_ref(), &snap.macros[..]) {
        let c1 = snap.rates[0].1;
        let c2 = snap.rates[1].1;
        let h = |k: usize, n: f64, lam: f64, th: f64| {
            gaussian_entropy(n, lam, th, specs[k].mass, d, specs[k].internal_dof)
        };
        let in2 = c1 * (h(0, m1.n, m1.lambda, m1.theta_or_lambda()) - h(0, e[0].n, e[0].lambda, e[0].theta))
            + c2 * (h(1, m2.n, m2.lambda, m2.theta_or_lambda()) - h(1, e[1].n, e[1].lambda, e[1].theta));
        let in3 = c1 * (h(0, m1.n, m1.t_total, m1.t_total) - h(0, e[0].n, e[0].t_total, e[0].t_total))
            + c2 * (h(1, m2.n, m2.t_total, m2.t_total) - h(1, e[1].n, e[1].t_total, e[1].t_total));
        push(&mut report, "in2", None, in2, true);
        push(&mut report, "in3", None, in3, true);
    }
    report
}

/// Options of [`fit_decay_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Time window; the whole series when `None`.
    pub window: Option<(f64, f64)>,
    /// Leading fraction of the window left out as transient.
    pub skip_fraction: f64,
    /// Samples are used only until the value first drops below
    /// `1e3 · noise_floor`.
    pub noise_floor: f64,
    pub min_samples: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { window: None, skip_fraction: 0.1, noise_floor: 0.0, min_samples: 10 }
    }
}

impl FitOptions {
    pub fn with_window(mut self, t0: f64, t1: f64) -> Self {
        self.window = Some((t0, t1));
        self
    }

    pub fn with_noise_floor(mut self, floor: f64) -> Self {
        self.noise_floor = floor;
        self
    }

    pub fn with_skip_fraction(mut self, skip: f64) -> Self {
        self.skip_fraction = skip;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `−slope` of `ln(value)` against `t`.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
    pub t_first: f64,
    pub t_last: f64,
}

pub fn fit_decay_rate(series: &[(f64, f64)], opts: &FitOptions) -> Result<DecayFit> {
    if series.is_empty() {
        return Err(Error::DegenerateSeries("empty series".into()));
    }
    let (w0, w1) = opts.window.unwrap_or_else(|| {
        series.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(t, _)| (a.min(t), b.max(t)))
    });
    let start = w0 + opts.skip_fraction * (w1 - w0);
    let cutoff = 1e3 * opts.noise_floor;
    let mut pts = Vec::new();
    for &(t, v) in series.iter().filter(|&&(t, _)| t >= start && t <= w1) {
        if opts.noise_floor > 0.0 && v < cutoff {
            break;
        }
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::DegenerateSeries(format!("value {v:e} at t = {t} is not positive")));
        }
        pts.push((t, v.ln()));
    }
    if pts.len() < opts.min_samples.max(2) {
        return Err(Error::DegenerateSeries(format!(
            "{} samples in the fit window, need {}",
            pts.len(),
            opts.min_samples.max(2)
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    if !(stt > 0.0) {
        return Err(Error::DegenerateSeries("all samples share one time".into()));
    }
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r_squared = if ss_tot > 1e-300 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(DecayFit {
        rate: -slope,
        intercept,
        r_squared,
        samples: pts.len(),
        t_first: pts[0].0,
        t_last: pts[pts.len() - 1].0,
    })
}

/// Conserved totals of a state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub numbers: Vec<f64>,
    pub momentum: Vec<f64>,
    pub energy: f64,
    /// Thermal momentum `Σ_k n_k (m_k T_k)^{1/2}`, the scale of momentum residuals.
    pub momentum_scale: f64,
}

pub fn totals(problem: &Problem, snap: &Snapshot) -> Totals {
    let d = problem.d();
    let mut out = Totals { numbers: Vec::new(), momentum: vec![0.0; d], energy: 0.0, momentum_scale: 0.0 };
    for (k, m) in snap.macros.iter().enumerate() {
        let Some(m) = m else {
            out.numbers.push(0.0);
            continue;
        };
        let spec = &problem.species()[k];
        let mass = spec.mass;
        out.numbers.push(m.n);
        for (p, u) in out.momentum.iter_mut().zip(&m.u) {
            *p += mass * m.n * u;
        }
        let u2: f64 = m.u.iter().map(|u| u * u).sum();
        let e2: f64 = m.eta_bar.iter().map(|e| e * e).sum();
        out.energy += 0.5 * mass * m.n * (u2 + e2)
            + 0.5 * d as f64 * m.n * m.t_t
            + 0.5 * spec.internal_dof as f64 * m.n * m.t_r_or_zero();
        out.momentum_scale += m.n * (mass * m.t_total).sqrt();
    }
    out
}

/// Everything recorded at one output time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub time: f64,
    pub species: Vec<SpeciesDiagnostics>,
    /// `|n_k − n_k(0)| / n_k(0)`.
    pub number_residuals: Vec<f64>,
    pub momentum_residual: f64,
    pub energy_residual: f64,
    pub lyapunov: f64,
    pub composite: f64,
    pub production: f64,
    /// Theorem bound on the controlled relative entropy at this time.
    pub envelope: f64,
    /// The alternative bound for the models with kinetic temperature equations.
    pub proof_envelope: Option<f64>,
    /// Pointwise bound on `‖f − M_{0,1}‖₁` for the one-species Gaussian model.
    pub l1_bound: Option<f64>,
    pub ck_holds: bool,
}

impl DiagnosticRecord {
    /// Largest controlled relative entropy `max_k H(f_k|M̃_k)`.
    pub fn max_rel_f_mt(&self) -> f64 {
        self.species.iter().map(|s| s.rel_f_mt).fold(0.0, f64::max)
    }
}

/// Turns states into [`DiagnosticRecord`]s relative to the first recorded
/// state.
#[derive(Debug, Clone)]
pub struct Recorder {
    bounds: TemperatureBounds,
    baseline: Option<Baseline>,
}

#[derive(Debug, Clone)]
struct Baseline {
    t0: f64,
    totals: Totals,
    composite: f64,
    constants: TheoremConstants,
    lemmas: LemmaReport,
}

impl Recorder {
    pub fn new(bounds: TemperatureBounds) -> Self {
        Recorder { bounds, baseline: None }
    }

    /// Theorem constants at the first recorded state.
    pub fn constants(&self) -> Option<&TheoremConstants> {
        self.baseline.as_ref().map(|b| &b.constants)
    }

    /// Lemma report at the first recorded state.
    pub fn lemmas(&self) -> Option<&LemmaReport> {
        self.baseline.as_ref().map(|b| &b.lemmas)
    }

    pub fn initial_composite(&self) -> Option<f64> {
        self.baseline.as_ref().map(|b| b.composite)
    }

    pub fn record(&mut self, problem: &Problem, state: &SystemState) -> Result<DiagnosticRecord> {
        let ev = evaluate(problem, state)?;
        let now = totals(problem, &ev.snapshot);
        if self.baseline.is_none() {
            self.baseline = Some(Baseline {
                t0: state.time,
                totals: now.clone(),
                composite: ev.composite,
                constants: theorem_constants(problem, &ev.snapshot, self.bounds)?,
                lemmas: check_lemma_inequalities(problem, &ev.snapshot, self.bounds),
            });
        }
        let base = self.baseline.as_ref().expect("baseline set");
        let t = state.time - base.t0;
        let c = &base.constants;
        let envelope = base.composite * (-c.rate * t).exp();
        let proof_envelope = c.proof_rate.map(|r| base.composite * (-r * t).exp());
        let l1_bound = (problem.kind() == ModelKind::AlppOneSpecies)
            .then(|| (2.0 * base.composite).sqrt() * (-0.5 * c.rate * t).exp());
        let number_residuals = now
            .numbers
            .iter()
            .zip(&base.totals.numbers)
            .map(|(n, n0)| if *n0 > 0.0 { (n - n0).abs() / n0 } else { n.abs() })
            .collect();
        let dp: f64 = now
            .momentum
            .iter()
            .zip(&base.totals.momentum)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let p0: f64 = base.totals.momentum.iter().map(|p| p * p).sum::<f64>().sqrt();
        let momentum_residual = dp / p0.max(base.totals.momentum_scale);
        let energy_residual = (now.energy - base.totals.energy).abs() / base.totals.energy.abs();
        let ck_holds = ev
            .species
            .iter()
            .filter(|s| s.state.is_some())
            .all(|s| s.ck_against_m().holds() && s.ck_against_mt().holds());
        Ok(DiagnosticRecord {
            time: state.time,
            production: ev.total_production(),
            species: ev.species,
            number_residuals,
            momentum_residual,
            energy_residual,
            lyapunov: ev.lyapunov,
            composite: ev.composite,
            envelope,
            proof_envelope,
            l1_bound,
            ck_holds,
        })
    }
}
