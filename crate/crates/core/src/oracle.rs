//! Closed moment equations of the space-homogeneous models.
//!
//! In the space-homogeneous case every model closes on its first moments:
//! the moments of the Maxwellians on the right-hand side are known in closed
//! form, so density, momentum, second moments and `Θ_k` obey an ODE system
//! that needs no quadrature. This module integrates that system and
//! linearises it, and serves as the reference for the kinetic solver.
//!
//! Per species the raw moment vector is
//!
//! * ALPP: `[ρ, ρu (d), E_t, E_int]` with `E_t = ∫ m|v|² f`, `E_int = ∫ ε(I) f`;
//! * otherwise: `[n, n u (d), n η̄ (l), E_t, E_r, Θ]` with
//!   `E_t = ∫ m|v|² f`, `E_r = ∫ m|η|² f` and `Θ` present only when `l ≥ 1`.

use nalgebra::{DMatrix, Schur};
use nalgebra::Complex;

type Complex64 = Complex<f64>;

use crate::error::{Error, Result};
use crate::maxwellians::exchange_coefficients;
use crate::models::{ModelKind, Problem};
use crate::moments::MacroState;
use crate::species::{CollisionModel, MixtureParams, SpeciesSpec};

/// Moment equations of one [`Problem`].
#[derive(Debug, Clone)]
pub struct MomentSystem {
    pub kind: ModelKind,
    pub species: Vec<SpeciesSpec>,
    pub params: Option<MixtureParams>,
    pub collision: CollisionModel,
    pub d: usize,
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `∫ m|x|² G dx` per unit density for the isotropic Gaussian with mean
/// `mean` and variance `temp/m` on each of `mean.len()` axes.
pub fn gaussian_second_moment(mass: f64, mean: &[f64], temp: f64) -> f64 {
    mean.len() as f64 * temp + mass * norm2(mean)
}

/// `∫ I^{2/δ} Λ_δ T^{-δ/2} exp(−I^{2/δ}/T) dI`.
pub fn alpp_internal_energy(delta: f64, temp: f64) -> f64 {
    0.5 * delta * temp
}

impl MomentSystem {
    pub fn from_problem(problem: &Problem) -> Self {
        MomentSystem {
            kind: problem.kind(),
            species: problem.species().to_vec(),
            params: problem.params().copied(),
            collision: problem.collision,
            d: problem.d(),
        }
    }

    fn alpp(&self) -> bool {
        self.kind == ModelKind::AlppOneSpecies
    }

    fn block_len(&self, k: usize) -> usize {
        let l = self.species[k].internal_dof;
        if self.alpp() {
            self.d + 3
        } else {
            1 + self.d + l + 2 + usize::from(l > 0)
        }
    }

    pub fn len(&self) -> usize {
        (0..self.species.len()).map(|k| self.block_len(k)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn offsets(&self) -> Vec<usize> {
        let mut o = Vec::with_capacity(self.species.len());
        let mut acc = 0;
        for k in 0..self.species.len() {
            o.push(acc);
            acc += self.block_len(k);
        }
        o
    }

    /// Raw moments of the given macroscopic states.
    pub fn raw_from_macro(&self, states: &[MacroState]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        for (k, s) in states.iter().enumerate() {
            let m = self.species[k].mass;
            x.push(s.n);
            x.extend(s.u.iter().map(|u| s.n * u));
            if self.alpp() {
                let delta = self.species[k].internal_dof as f64;
                x.push(s.n * gaussian_second_moment(m, &s.u, s.t_t));
                x.push(s.n * alpp_internal_energy(delta, s.t_r_or_zero()));
                continue;
            }
            let l = self.species[k].internal_dof;
            x.extend(s.eta_bar.iter().map(|e| s.n * e));
            x.push(s.n * gaussian_second_moment(m, &s.u, s.t_t));
            x.push(s.n * gaussian_second_moment(m, &s.eta_bar, s.t_r_or_zero()));
            if l > 0 {
                x.push(s.theta_or_lambda());
            }
        }
        x
    }

    /// Macroscopic states of a raw moment vector; `None` marks vacuum.
    pub fn macro_from_raw(&self, x: &[f64]) -> Result<Vec<Option<MacroState>>> {
        let mut out = Vec::with_capacity(self.species.len());
        let d = self.d;
        for (k, o) in self.offsets().into_iter().enumerate() {
            let spec = &self.species[k];
            let m = spec.mass;
            let n = x[o];
            if n <= 0.0 {
                out.push(None);
                continue;
            }
            let u: Vec<f64> = x[o + 1..o + 1 + d].iter().map(|v| v / n).collect();
            if self.alpp() {
                let t_t = (x[o + 1 + d] / n - m * norm2(&u)) / d as f64;
                let delta = spec.internal_dof as f64;
                let t_int = x[o + 2 + d] / n / alpp_internal_energy(delta, 1.0);
                let t_equ = (d as f64 * t_tr_guard(t_t)? + delta * t_int) / (d as f64 + delta);
                let th = spec.theta;
                out.push(Some(MacroState {
                    n,
                    u,
                    eta_bar: Vec::new(),
                    t_t,
                    t_r: Some(t_int),
                    lambda: (1.0 - th) * t_t + th * t_equ,
                    theta: Some(th * t_equ + (1.0 - th) * t_int),
                    t_total: t_equ,
                }));
                continue;
            }
            let l = spec.internal_dof;
            let eta: Vec<f64> = x[o + 1 + d..o + 1 + d + l].iter().map(|v| v / n).collect();
            let e = o + 1 + d + l;
            let t_t = (x[e] / n - m * norm2(&u)) / d as f64;
            let (t_r, theta) = if l > 0 {
                (Some((x[e + 1] / n - m * norm2(&eta)) / l as f64), Some(x[e + 2]))
            } else {
                (None, None)
            };
            // Λ and T written out here rather than shared with the kinetic code
            let lambda = t_t + l as f64 / d as f64 * (t_r.unwrap_or(0.0) - theta.unwrap_or(0.0));
            if !(lambda > 0.0) {
                return Err(Error::NonpositiveLambda(lambda));
            }
            let t_total = (d as f64 * lambda + l as f64 * theta.unwrap_or(0.0)) / (d + l) as f64;
            out.push(Some(MacroState { n, u, eta_bar: eta, t_t, t_r, lambda, theta, t_total }));
        }
        Ok(out)
    }

    /// Time derivative of the raw moments at the given macroscopic states.
    pub fn macro_rhs(&self, states: &[Option<MacroState>]) -> Result<Vec<f64>> {
        let n_of = |k: usize| states.get(k).and_then(|s| s.as_ref()).map_or(0.0, |s| s.n);
        let mixture = self.kind.is_mixture();
        let exchange = match (mixture, states.first(), states.get(1)) {
            (true, Some(Some(a)), Some(Some(b))) => Some(exchange_coefficients(
                [a, b],
                [&self.species[0], &self.species[1]],
                self.params.as_ref().ok_or_else(|| Error::ModelMismatch("missing mixture params".into()))?,
            )?),
            _ => None,
        };
        let mut dx = Vec::with_capacity(self.len());
        let d = self.d as f64;
        for (k, st) in states.iter().enumerate() {
            let spec = &self.species[k];
            let m = spec.mass;
            let Some(s) = st else {
                dx.extend(std::iter::repeat_n(0.0, self.block_len(k)));
                continue;
            };
            if self.alpp() {
                for (what, v) in [("T_tr", s.t_t), ("T_int", s.t_r_or_zero())] {
                    if !(v > 0.0) {
                        return Err(Error::NonpositiveTemperature { what, value: v });
                    }
                }
                let a = spec.collision_self;
                let delta = spec.internal_dof as f64;
                let t_rel = s.theta.unwrap_or(s.t_total);
                let et_now = gaussian_second_moment(m, &s.u, s.t_t);
                dx.push(0.0);
                dx.extend(std::iter::repeat_n(0.0, self.d));
                dx.push(a * s.n * (gaussian_second_moment(m, &s.u, s.lambda) - et_now));
                dx.push(a * s.n * (alpp_internal_energy(delta, t_rel) - alpp_internal_energy(delta, s.t_r_or_zero())));
                continue;
            }
            let other = if mixture { n_of(1 - k) } else { 0.0 };
            let (sr, c) = self.collision.rates(spec, s.n, other);
            let l = spec.internal_dof;
            let lf = l as f64;
            let theta = s.theta_or_lambda();
            let t_r = s.t_r_or_zero();
            let cross = exchange.as_ref().map(|e| &e[k]).filter(|_| c > 0.0);
            // density
            dx.push(0.0);
            // momentum and internal mean
            for a in 0..self.d {
                dx.push(cross.map_or(0.0, |e| c * s.n * (e.u[a] - s.u[a])));
            }
            for a in 0..l {
                dx.push(cross.map_or(0.0, |e| c * s.n * (e.eta_bar[a] - s.eta_bar[a])));
            }
            // second moments
            let et_now = gaussian_second_moment(m, &s.u, s.t_t);
            let er_now = gaussian_second_moment(m, &s.eta_bar, t_r);
            let mut det = sr * s.n * d * (s.lambda - s.t_t);
            let mut der = sr * s.n * lf * (theta - t_r);
            if let Some(e) = cross {
                det += c * s.n * (gaussian_second_moment(m, &e.u, e.lambda) - et_now);
                der += c * s.n * (gaussian_second_moment(m, &e.eta_bar, e.theta) - er_now);
            }
            dx.push(det);
            dx.push(der);
            if l > 0 {
                let z_r = spec.z * (self.d + l) as f64 / d;
                let relax = sr / z_r * (s.lambda - theta);
                dx.push(match self.kind {
                    ModelKind::KppOneSpecies => relax + sr * (theta - t_r),
                    ModelKind::BipOneSpecies => relax,
                    ModelKind::KppMixture => relax + sr * (theta - t_r) + cross.map_or(0.0, |e| c * (e.theta - t_r)),
                    ModelKind::NewMixture => relax + cross.map_or(0.0, |e| c * (e.t_total - theta)),
                    ModelKind::AlppOneSpecies => unreachable!(),
                });
            }
        }
        Ok(dx)
    }

    pub fn rhs_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.macro_rhs(&self.macro_from_raw(x)?)
    }

    /// Classical RK4 with fixed step; returns `(t, x)` every `stride` steps
    /// and at the end.
    pub fn integrate(&self, x0: &[f64], t_end: f64, dt: f64, stride: usize) -> Result<Vec<(f64, Vec<f64>)>> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
        let h = if steps > 0 { t_end / steps as f64 } else { 0.0 };
        let stride = stride.max(1);
        let mut x = x0.to_vec();
        let mut out = vec![(0.0, x.clone())];
        let axpy = |x: &[f64], k: &[f64], a: f64| x.iter().zip(k).map(|(x, k)| x + a * k).collect::<Vec<_>>();
        for n in 1..=steps {
            let k1 = self.rhs_raw(&x)?;
            let k2 = self.rhs_raw(&axpy(&x, &k1, h / 2.0))?;
            let k3 = self.rhs_raw(&axpy(&x, &k2, h / 2.0))?;
            let k4 = self.rhs_raw(&axpy(&x, &k3, h))?;
            for i in 0..x.len() {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if n % stride == 0 || n == steps {
                out.push((n as f64 * h, x.clone()));
            }
        }
        Ok(out)
    }

    /// Central-difference Jacobian of the raw moment equations at `x`.
    /// Columns of vacuum species are left at zero.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = x.len();
        let mut j = DMatrix::zeros(n, n);
        let offsets = self.offsets();
        let vacuum = |c: usize| {
            let k = offsets.iter().rposition(|&o| o <= c).unwrap_or(0);
            x[offsets[k]] <= 0.0
        };
        for c in 0..n {
            if vacuum(c) {
                continue;
            }
            let h = 1e-6 * x[c].abs().max(1.0);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[c] += h;
            xm[c] -= h;
            let fp = self.rhs_raw(&xp)?;
            let fm = self.rhs_raw(&xm)?;
            for r in 0..n {
                j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        Ok(j)
    }

    /// Spectrum of the linearised moment equations.
    pub fn predict_linear_rates(&self, states: &[MacroState]) -> Result<Spectrum> {
        let x = self.raw_from_macro(states);
        let j = self.jacobian(&x)?;
        let n = j.nrows();
        let schur = [f64::EPSILON, 1e-13, 1e-11, 1e-9]
            .into_iter()
            .find_map(|eps| Schur::try_new(j.clone(), eps, 200 * n.max(1)))
            .ok_or_else(|| Error::InvalidArgument("Schur iteration of the moment Jacobian did not converge".into()))?;
        let mut all: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
        all.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let scale = all.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        let (zero, decaying): (Vec<Complex64>, Vec<Complex64>) =
            all.iter().partition(|z| z.norm() <= 1e-6 * scale);
        Ok(Spectrum { eigenvalues: all, conserved: zero, decaying })
    }
}

fn t_tr_guard(t: f64) -> Result<f64> {
    if t > 0.0 {
        Ok(t)
    } else {
        Err(Error::NonpositiveTemperature { what: "T_tr", value: t })
    }
}

/// Eigenvalues of the linearised moment equations, sorted by real part.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    /// Eigenvalues indistinguishable from zero (conserved directions).
    pub conserved: Vec<Complex64>,
    /// The remaining eigenvalues.
    pub decaying: Vec<Complex64>,
}

impl Spectrum {
    /// Decay rates `−Re λ` of the non-conserved modes, slowest first.
    pub fn rates(&self) -> Vec<f64> {
        let mut r: Vec<f64> = self.decaying.iter().map(|z| -z.re).collect();
        r.sort_by(f64::total_cmp);
        r
    }

    pub fn slowest_rate(&self) -> Option<f64> {
        self.rates().first().copied()
    }

    /// The decay rate closest to `target`.
    pub fn nearest_rate(&self, target: f64) -> Option<f64> {
        self.rates().into_iter().min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
    }
}

/// `d/dt` of the raw moments for `problem` at the given states.
pub fn macro_rhs(problem: &Problem, states: &[MacroState]) -> Result<Vec<f64>> {
    let sys = MomentSystem::from_problem(problem);
    sys.macro_rhs(&states.iter().cloned().map(Some).collect::<Vec<_>>())
}

/// Spectrum of the linearised moment equations of `problem` at `states`.
pub fn predict_linear_rates(problem: &Problem, states: &[MacroState]) -> Result<Spectrum> {
    MomentSystem::from_problem(problem).predict_linear_rates(states)
}
