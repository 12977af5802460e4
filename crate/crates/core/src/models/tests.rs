use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::grid::Axis;
use crate::initial::{auto_grids, initial_state, GridOptions, InitialCondition, MaxwellianParams};
use crate::maxwellians::GaussianTarget;
use crate::oracle::MomentSystem;

const OPTS: GridOptions = GridOptions { velocity_points: 12, internal_points: 12, energy_points: 16, safety: 1.0 };

fn species(kind: ModelKind) -> Vec<SpeciesSpec> {
    match kind {
        ModelKind::AlppOneSpecies => vec![SpeciesSpec::new(1.0, 2, 1.0, 0.0).with_theta(0.5)],
        ModelKind::KppOneSpecies | ModelKind::BipOneSpecies => {
            vec![SpeciesSpec::new(1.0, 2, 1.0, 0.0).with_z(2.0)]
        }
        _ => vec![
            SpeciesSpec::new(1.0, 2, 1.0, 0.6).with_z(2.0),
            SpeciesSpec::new(1.5, 1, 0.8, 1.2).with_z(0.5),
        ],
    }
}

fn problem(kind: ModelKind, conds: &[InitialCondition]) -> Problem {
    let sp = species(kind);
    let grids = auto_grids(kind, &sp, conds, 3, &OPTS).unwrap();
    let params = kind.is_mixture().then(|| MixtureParams { gamma: 0.05, ..Default::default() });
    Problem::new(kind, sp, params, grids).unwrap()
}

fn maxwellian(n: f64, u: Vec<f64>, eta: Vec<f64>, lambda: f64, theta: f64) -> InitialCondition {
    InitialCondition::Maxwellian(MaxwellianParams::new(n, u, eta, lambda, theta))
}

/// Conservative Maxwellians at common velocity and temperature.
fn equilibrium(problem: &Problem, u: &[f64], t: f64) -> SystemState {
    let fields: Vec<DistributionField> = (0..problem.species().len())
        .map(|k| {
            let g = &problem.grids()[k];
            let spec = &problem.species()[k];
            let n = 1.0 + 0.5 * k as f64;
            let sep = if problem.kind() == ModelKind::AlppOneSpecies {
                alpp::build_gaussian(g, spec.mass, spec.internal_dof as f64, n, u, t, t, Closure::Conservative)
                    .unwrap()
            } else {
                GaussianTarget::isotropic(n, u, &vec![0.0; g.l()], t, t, spec.mass)
                    .unwrap()
                    .separable(g, Closure::Conservative)
                    .unwrap()
            };
            sep.materialize(g, Exec::Sequential)
        })
        .collect();
    problem.state_from_fields(fields).unwrap()
}

/// Off-equilibrium state: shifted bi-Maxwellians with distinct temperatures.
fn disturbed(kind: ModelKind, seed: u64) -> (Problem, SystemState) {
    let mut conds = vec![InitialCondition::BiMaxwellian {
        components: vec![
            MaxwellianParams::new(0.6, vec![0.4, 0.0, 0.1], vec![0.1, 0.05], 1.0, 0.8),
            MaxwellianParams::new(0.4, vec![-0.3, 0.2, 0.0], vec![-0.2, 0.05], 0.7, 1.1),
        ],
    }];
    if kind == ModelKind::AlppOneSpecies {
        conds[0] = InitialCondition::BiMaxwellian {
            components: vec![
                MaxwellianParams::new(0.6, vec![0.4, 0.0, 0.1], vec![], 1.0, 0.8),
                MaxwellianParams::new(0.4, vec![-0.3, 0.2, 0.0], vec![], 0.7, 1.1),
            ],
        };
    } else if kind.is_mixture() {
        conds.push(InitialCondition::Perturbed {
            base: MaxwellianParams::new(0.7, vec![-0.2, 0.1, 0.3], vec![0.1], 1.3, 0.9),
            amplitude: 0.3,
        });
    }
    let p = problem(kind, &conds);
    let theta0: Vec<Option<f64>> = (0..conds.len()).map(|k| Some(0.85 + 0.2 * k as f64)).collect();
    let s = initial_state(&p, &conds, &theta0, seed).unwrap();
    (p, s)
}

/// Nested-loop moments of an arbitrary signed field:
/// `(∫g, ∫m x g, ∫ m|x|²/2 g)` where `x` runs over every axis.
fn signed_moments(grid: &PhaseGrid, values: &[f64], m: f64) -> (f64, Vec<f64>, f64) {
    let vol = grid.cell_volume();
    let mut mass = 0.0;
    let mut mom = vec![0.0; grid.n_axes()];
    let mut energy = 0.0;
    for (i, g) in values.iter().enumerate() {
        let x = grid.point(i);
        mass += g * vol;
        for (a, xa) in x.iter().enumerate() {
            mom[a] += m * xa * g * vol;
        }
        energy += 0.5 * m * x.iter().map(|v| v * v).sum::<f64>() * g * vol;
    }
    (mass, mom, energy)
}

#[test]
fn equilibrium_is_a_fixed_point() {
    for kind in ModelKind::ALL {
        let conds: Vec<_> =
            (0..kind.species_count()).map(|_| maxwellian(1.0, vec![0.2, 0.0, -0.1], vec![], 1.2, 1.2)).collect();
        let p = problem(kind, &conds);
        let s = equilibrium(&p, &[0.2, 0.0, -0.1], 1.2);
        let rhs = p.rhs(&s).unwrap();
        for (r, sp) in rhs.iter().zip(&s.species) {
            let df = r.evaluate(&sp.f, Exec::Sequential);
            let scale = sp.f.values().iter().copied().fold(0.0, f64::max);
            let worst = df.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(worst < 1e-10 * scale, "{kind}: {worst}");
            assert!(r.dtheta.abs() < 1e-10, "{kind}: {}", r.dtheta);
        }
    }
}

#[test]
fn alpp_theta_one_targets_equilibrium() {
    let conds = [maxwellian(1.0, vec![], vec![], 1.4, 0.6)];
    let sp = vec![SpeciesSpec::new(1.0, 2, 1.0, 0.0).with_theta(1.0)];
    let grids = auto_grids(ModelKind::AlppOneSpecies, &sp, &conds, 3, &OPTS).unwrap();
    let p = Problem::new(ModelKind::AlppOneSpecies, sp, None, grids).unwrap();
    let s = initial_state(&p, &conds, &[], 0).unwrap();
    let snap = p.snapshot(&s).unwrap();
    let g = p.species_maxwellian(&snap, 0).unwrap();
    let e = p.equilibrium_maxwellian(&snap, 0).unwrap();
    assert_eq!(g, e);
}

#[test]
fn mixture_rhs_conserves_totals() {
    for kind in [ModelKind::KppMixture, ModelKind::NewMixture] {
        for seed in 0..3 {
            let (p, s) = disturbed(kind, seed);
            let rhs = p.rhs(&s).unwrap();
            let mut mom_u = [0.0; 3];
            let mut energy = 0.0;
            let mut e_scale = 0.0;
            for k in 0..2 {
                let g = s.species[k].f.grid();
                let m = p.species()[k].mass;
                let df = rhs[k].evaluate(&s.species[k].f, Exec::Sequential);
                let (dn, dmom, de) = signed_moments(g, &df, m);
                let (n, _, e) = signed_moments(g, s.species[k].f.values(), m);
                assert!(dn.abs() < 1e-10 * n, "{kind}: dn {dn}");
                for a in 0..3 {
                    mom_u[a] += dmom[a];
                }
                energy += de;
                e_scale += e;
            }
            assert!(mom_u.iter().all(|v| v.abs() < 1e-10), "{kind}: {mom_u:?}");
            assert!(energy.abs() < 1e-10 * e_scale, "{kind}: {energy}");
        }
    }
}

#[test]
fn new_mixture_auxiliary_equation_is_consistent() {
    let (p, s) = disturbed(ModelKind::NewMixture, 4);
    let snap = p.snapshot(&s).unwrap();
    let rhs = p.rhs_from_snapshot(&snap).unwrap();
    let d = p.d();
    for k in 0..2 {
        let g = &p.grids()[k];
        let spec = &p.species()[k];
        let (sr, c) = snap.rates[k];
        let w_eq = sr / spec.collision_number(d) * (d + spec.internal_dof) as f64 / d as f64;
        let mk = p.species_maxwellian(&snap, k).unwrap().materialize(g, Exec::Sequential);
        let mt = p.equilibrium_maxwellian(&snap, k).unwrap().materialize(g, Exec::Sequential);
        let mtkj = p.interspecies_equilibrium_maxwellian(&snap, k).unwrap().unwrap().materialize(g, Exec::Sequential);
        let dm: Vec<f64> = (0..g.len())
            .map(|i| w_eq * (mt.values()[i] - mk.values()[i]) + c * (mtkj.values()[i] - mk.values()[i]))
            .collect();
        let df = rhs[k].evaluate(&s.species[k].f, Exec::Sequential);
        let (_, mom_m, e_m) = signed_moments(g, &dm, spec.mass);
        let (_, mom_f, e_f) = signed_moments(g, &df, spec.mass);
        for a in 0..d {
            assert!((mom_m[a] - mom_f[a]).abs() < 1e-10, "{k} {a}: {} {}", mom_m[a], mom_f[a]);
        }
        assert!((e_m - e_f).abs() < 1e-10 * e_f.abs().max(1.0), "{k}: {e_m} {e_f}");
    }
}

#[test]
fn kpp_and_bip_differ_only_in_theta_rate() {
    let (pb, s) = disturbed(ModelKind::KppOneSpecies, 0);
    let pc = Problem::new(ModelKind::BipOneSpecies, pb.species().to_vec(), None, pb.grids().to_vec()).unwrap();
    let b = rhs_kpp_one_species(&pb, &s).unwrap();
    let c = rhs_bip_one_species(&pc, &s).unwrap();
    assert_eq!(b.df, c.df);
    let snap = pb.snapshot(&s).unwrap();
    let m = snap.macros[0].as_ref().unwrap();
    let extra = snap.rates[0].0 * (m.theta.unwrap() - m.t_r.unwrap());
    assert!((b.dtheta - c.dtheta - extra).abs() < 1e-14);
    assert!(extra.abs() > 1e-3);
}

#[test]
fn bip_theta_rate_vanishes_when_lambda_equals_theta() {
    let (p, mut s) = disturbed(ModelKind::BipOneSpecies, 0);
    let snap = p.snapshot(&s).unwrap();
    let m = snap.macros[0].as_ref().unwrap();
    // Λ = Θ  ⇔  Θ = (d T^t + l T^r)/(d + l)
    let (d, l) = (3.0, 2.0);
    s.species[0].theta = Some((d * m.t_t + l * m.t_r.unwrap()) / (d + l));
    let r = rhs_bip_one_species(&p, &s).unwrap();
    assert!(r.dtheta.abs() < 1e-14);
    assert!(r.df.iter().any(|v| v.abs() > 1e-6));
}

#[test]
fn mixture_with_vacuum_partner_reduces_to_one_species() {
    let conds = [maxwellian(1.0, vec![0.1, 0.0, 0.0], vec![0.0, 0.0], 1.0, 1.0), maxwellian(1.0, vec![], vec![], 1.0, 1.0)];
    let sp = vec![SpeciesSpec::new(1.0, 2, 1.0, 0.6).with_z(2.0), SpeciesSpec::new(1.0, 2, 0.8, 1.2)];
    let grids = auto_grids(ModelKind::KppMixture, &sp, &conds, 3, &OPTS).unwrap();
    let mix = Problem::new(ModelKind::KppMixture, sp.clone(), None, grids.clone()).unwrap();
    let one = Problem::new(ModelKind::KppOneSpecies, vec![sp[0].clone()], None, vec![grids[0].clone()]).unwrap();
    let f1 = InitialCondition::BiMaxwellian {
        components: vec![
            MaxwellianParams::new(0.5, vec![0.3, 0.0, 0.0], vec![0.1, 0.0], 1.1, 0.9),
            MaxwellianParams::new(0.5, vec![-0.2, 0.0, 0.1], vec![0.0, 0.1], 0.8, 1.2),
        ],
    }
    .build(ModelKind::KppMixture, &sp[0], &grids[0], 0, 0)
    .unwrap();
    let s_one = SystemState { time: 0.0, species: vec![SpeciesState { f: f1.clone(), theta: Some(1.05) }] };
    let s_mix = SystemState {
        time: 0.0,
        species: vec![
            SpeciesState { f: f1, theta: Some(1.05) },
            SpeciesState { f: DistributionField::zeros(grids[1].clone()), theta: Some(1.0) },
        ],
    };
    let a = rhs_kpp_one_species(&one, &s_one).unwrap();
    let b = rhs_kpp_mixture(&mix, &s_mix).unwrap();
    assert_eq!(a.dtheta, b[0].dtheta);
    assert!(a.df.iter().zip(&b[0].df).all(|(x, y)| (x - y).abs() <= 1e-15 * x.abs().max(1e-300) + 1e-300));
    assert!(b[1].df.iter().all(|v| *v == 0.0));
    assert_eq!(b[1].dtheta, 0.0);
}

#[test]
fn rhs_moments_match_oracle() {
    for kind in ModelKind::ALL {
        let (p, s) = disturbed(kind, 1);
        let snap = p.snapshot(&s).unwrap();
        let rhs = p.rhs_from_snapshot(&snap).unwrap();
        let sys = MomentSystem::from_problem(&p);
        let expect = sys.macro_rhs(&snap.macros).unwrap();
        let mut got = Vec::new();
        for k in 0..s.species.len() {
            let g = s.species[k].f.grid();
            let m = p.species()[k].mass;
            let df = rhs[k].evaluate(&s.species[k].f, Exec::Sequential);
            let (dn, dmom, _) = signed_moments(g, &df, m);
            got.push(dn);
            let d = g.d();
            if kind == ModelKind::AlppOneSpecies {
                got.extend(dmom[..d].iter().map(|v| v / m));
                let eps = alpp::internal_energy_nodes(g, p.species()[k].internal_dof as f64);
                let (mut et, mut ei) = (0.0, 0.0);
                for (i, v) in df.iter().enumerate() {
                    let x = g.point(i);
                    et += m * x[..d].iter().map(|v| v * v).sum::<f64>() * v;
                    ei += eps[g.multi_index(i)[d]] * v;
                }
                got.push(et * g.cell_volume());
                got.push(ei * g.cell_volume());
                continue;
            }
            got.extend(dmom.iter().map(|v| v / m));
            let (mut et, mut er) = (0.0, 0.0);
            for (i, v) in df.iter().enumerate() {
                let x = g.point(i);
                et += m * x[..d].iter().map(|v| v * v).sum::<f64>() * v;
                er += m * x[d..].iter().map(|v| v * v).sum::<f64>() * v;
            }
            got.push(et * g.cell_volume());
            got.push(er * g.cell_volume());
            got.push(rhs[k].dtheta);
        }
        assert_eq!(got.len(), expect.len());
        for (i, (a, b)) in got.iter().zip(&expect).enumerate() {
            assert!((a - b).abs() < 1e-6, "{kind} [{i}]: kinetic {a}, oracle {b}");
        }
    }
}

#[test]
fn exec_modes_agree_bitwise() {
    let (p, s) = disturbed(ModelKind::NewMixture, 2);
    let seq = p.clone().with_exec(Exec::Sequential);
    let par = p.with_exec(Exec::Parallel);
    let a = seq.rhs(&s).unwrap();
    let b = par.rhs(&s).unwrap();
    for k in 0..2 {
        assert_eq!(a[k].dtheta, b[k].dtheta);
        assert_eq!(a[k].evaluate(&s.species[k].f, Exec::Sequential), b[k].evaluate(&s.species[k].f, Exec::Parallel));
    }
}

#[test]
fn wrappers_reject_other_models() {
    let (p, s) = disturbed(ModelKind::NewMixture, 0);
    assert!(matches!(rhs_kpp_mixture(&p, &s), Err(Error::ModelMismatch(_))));
    assert!(rhs_new_mixture(&p, &s).is_ok());
}

#[test]
fn model_names_round_trip() {
    for kind in ModelKind::ALL {
        assert_eq!(kind.name().parse::<ModelKind>().unwrap(), kind);
    }
    assert!("KPP".parse::<ModelKind>().is_err());
}

#[test]
fn theta_grid_mismatch_is_rejected() {
    let g = Arc::new(PhaseGrid::new(vec![Axis::centered(0.0, 4.0, 4).unwrap(); 3], vec![]).unwrap());
    let r = Problem::new(ModelKind::KppOneSpecies, vec![SpeciesSpec::new(1.0, 2, 1.0, 0.0)], None, vec![g]);
    assert!(matches!(r, Err(Error::ModelMismatch(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn kpp_theta_rate_vanishes_at_joint_balance(t in 0.6..1.6f64, u in -0.3..0.3f64) {
        let conds = [maxwellian(1.0, vec![u, 0.0, 0.0], vec![0.0, 0.0], t, t)];
        let p = problem(ModelKind::KppOneSpecies, &conds);
        let s = initial_state(&p, &conds, &[], 0).unwrap();
        // Θ = T^r and, because the sampled field has T^t ≈ T^r, Λ ≈ Θ
        let r = rhs_kpp_one_species(&p, &s).unwrap();
        let snap = p.snapshot(&s).unwrap();
        let m = snap.macros[0].as_ref().unwrap();
        let expect = snap.rates[0].0 / p.species()[0].collision_number(3) * (m.lambda - m.theta.unwrap());
        prop_assert!((r.dtheta - expect).abs() < 1e-14);
    }
}
