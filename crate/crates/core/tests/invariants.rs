//! End-to-end properties of single steps on random mixture states.

use polybgk::diagnostics::{evaluate, totals};
use polybgk::initial::{GridOptions, InitialCondition, MaxwellianParams};
use polybgk::scenarios::{Experiment, Variant};
use polybgk::{step, Exec, ModelKind, Problem, Scheme, SpeciesSpec, SystemState};
use proptest::prelude::*;

fn build(model: ModelKind, z: f64, u: f64, temps: [f64; 4]) -> (Problem, SystemState) {
    let mp = |n: f64, u: f64, l: f64, t: f64| {
        InitialCondition::Maxwellian(MaxwellianParams::new(n, vec![u, 0.0], vec![0.0], l, t))
    };
    let mut e = Experiment::new(
        "prop",
        model,
        vec![SpeciesSpec::new(1.0, 1, 1.0, 0.5).with_z(z), SpeciesSpec::new(1.5, 1, 0.8, 0.4).with_z(z)],
        vec![mp(1.0, u, temps[0], temps[1]), mp(0.7, -u, temps[2], temps[3])],
    );
    e.d = 2;
    e.grid = GridOptions { velocity_points: 20, internal_points: 16, energy_points: 24, safety: 1.2 };
    e.build(&Variant::default()).unwrap()
}

fn mixture() -> impl Strategy<Value = (ModelKind, f64, f64, [f64; 4])> {
    (
        prop_oneof![Just(ModelKind::KppMixture), Just(ModelKind::NewMixture)],
        prop_oneof![Just(0.1), Just(1.0), Just(10.0)],
        -0.4..0.4f64,
        prop::array::uniform4(0.6..1.4f64),
    )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn steps_conserve_and_dissipate((model, z, u, temps) in mixture()) {
        let (p, s) = build(model, z, u, temps);
        let before = evaluate(&p, &s).unwrap();
        let next = step(&p, &s, 0.05, Scheme::Rk4).unwrap();
        let after = evaluate(&p, &next).unwrap();
        let (t0, t1) = (totals(&p, &before.snapshot), totals(&p, &after.snapshot));
        for (a, b) in t0.numbers.iter().zip(&t1.numbers) {
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }
        for (a, b) in t0.momentum.iter().zip(&t1.momentum) {
            prop_assert!((a - b).abs() <= 1e-12 * t0.momentum_scale);
        }
        prop_assert!((t0.energy - t1.energy).abs() <= 1e-12 * t0.energy);
        prop_assert!(after.lyapunov <= before.lyapunov + 1e-12 * before.lyapunov.abs());
        prop_assert!(before.total_production() >= -1e-10);
    }

    #[test]
    fn sequential_and_parallel_steps_agree((model, z, u, temps) in mixture()) {
        let (p, s) = build(model, z, u, temps);
        let a = step(&p.clone().with_exec(Exec::Sequential), &s, 0.05, Scheme::Rk4).unwrap();
        let b = step(&p.with_exec(Exec::Parallel), &s, 0.05, Scheme::Rk4).unwrap();
        for (x, y) in a.species.iter().zip(&b.species) {
            prop_assert_eq!(x.f.values(), y.f.values());
            prop_assert_eq!(x.theta, y.theta);
        }
    }
}
