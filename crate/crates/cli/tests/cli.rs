use std::path::{Path, PathBuf};
use std::process::Command;

use polybgk::scenarios::{RunSpec, Task};
use polybgk::species::CollisionModel;
use polybgk::initial::InitialCondition;
use polybgk::{Closure, ModelKind, Scheme};
use polybgk_cli::config::{config_hash, load_config, parse_config, to_toml, ConfigError};
use polybgk_cli::output::{column_names, GLOBAL_COLUMNS};
use polybgk_cli::report::Series;
use tempfile::TempDir;

const MINIMAL: &str = r#"
model = "NEW_mixture"

[[species]]
mass = 1.0
internal_dof = 2
collision_self = 1.0
collision_cross = 0.5

[[species]]
mass = 2.0
internal_dof = 1
collision_self = 1.0
collision_cross = 0.5
"#;

const EQUILIBRIUM: &str = r#"
name = "rest"
model = "NEW_mixture"
d = 2
grid = { velocity_points = 20, internal_points = 20 }
run = { t_end = 0.5, dt = 0.05, stride = 2 }
checks = { conservation = 1e-12, lyapunov_monotone = 1e-12 }

[[species]]
mass = 1.0
internal_dof = 1
collision_self = 2.0
collision_cross = 1.0

[[species]]
mass = 1.5
internal_dof = 1
collision_self = 2.0
collision_cross = 1.0

[[initial]]
kind = "maxwellian"
n = 1.0
u = [0.1, 0.0]
lambda = 1.0
theta = 1.0

[[initial]]
kind = "maxwellian"
n = 0.8
u = [0.1, 0.0]
lambda = 1.0
theta = 1.0
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn polybgk(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_polybgk")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn run_into(config: &Path, out: &Path) -> i32 {
    polybgk(&["run", config.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]).0
}

#[test]
fn minimal_config_gets_documented_defaults() {
    let dir = TempDir::new().unwrap();
    let e = load_config(&write(dir.path(), "minimal.toml", MINIMAL)).unwrap();
    assert_eq!(e.name, "minimal");
    assert_eq!(e.task, Task::Kinetic);
    assert_eq!(e.model, ModelKind::NewMixture);
    assert_eq!(e.d, 3);
    assert_eq!(e.run, RunSpec { t_end: 10.0, dt: None, scheme: Scheme::Rk4, stride: 1 });
    assert_eq!(e.grid, Default::default());
    assert_eq!(e.collision, CollisionModel::default());
    assert_eq!(e.closure, Closure::Conservative);
    assert_eq!(e.seed, 0);
    assert!(e.mixture.is_none() && e.variants.is_empty() && e.theta0.is_empty());
    assert_eq!((e.species[0].z, e.species[0].theta), (1.0, 1.0));
    assert_eq!(e.species[0].global_dof_slots, vec![0, 1]);
    assert_eq!(e.species[1].global_dof_slots, vec![0]);
    assert_eq!(e.initial.len(), 2);
    match &e.initial[0] {
        InitialCondition::Maxwellian(m) => {
            assert_eq!((m.n, m.lambda, m.theta), (1.0, 1.0, 1.0));
            assert_eq!(m.u, vec![0.0; 3]);
            assert_eq!(m.eta_bar, vec![0.0; 2]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn delta_outside_its_range_is_named() {
    let text = format!("{MINIMAL}\n[mixture]\ndelta = 1.5\n");
    match parse_config(&text, "x") {
        Err(ConfigError::ConstraintViolated(v)) => assert!(v.iter().any(|s| s == "delta"), "{v:?}"),
        other => panic!("{other:?}"),
    }
    let dir = TempDir::new().unwrap();
    let (code, _, err) = polybgk(&["validate", write(dir.path(), "bad.toml", &text).to_str().unwrap()]);
    assert_eq!(code, 3);
    assert!(err.contains("delta"), "{err}");
}

#[test]
fn resolved_config_round_trips() {
    let first = parse_config(MINIMAL, "m").unwrap();
    let text = to_toml(&first);
    let second = parse_config(&text, "other").unwrap();
    assert_eq!(first, second);
    assert_eq!(to_toml(&second), text);
    assert_eq!(config_hash(&first), config_hash(&second));

    let dir = TempDir::new().unwrap();
    let (code, out, _) = polybgk(&["validate", write(dir.path(), "m.toml", MINIMAL).to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(out, text);
}

#[test]
fn equilibrium_rows_do_not_change() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "rest.toml", EQUILIBRIUM);
    assert_eq!(run_into(&cfg, dir.path()), 0);
    let s = Series::parse(&std::fs::read_to_string(dir.path().join("rest.csv")).unwrap()).unwrap();
    assert_eq!(s.columns, column_names(2));
    assert_eq!(s.rows.len(), 6);
    let skip = ["variant", "time", "envelope", "proof_envelope"];
    let first = &s.rows[0];
    for row in &s.rows[1..] {
        for (c, name) in s.columns.iter().enumerate() {
            if skip.contains(&name.as_str()) || first[c].is_empty() {
                continue;
            }
            let (a, b): (f64, f64) = (first[c].parse().unwrap(), row[c].parse().unwrap());
            assert!((a - b).abs() <= 1e-12, "{name}: {a} vs {b}");
        }
    }
    let summary = std::fs::read_to_string(dir.path().join("rest.summary.toml")).unwrap();
    assert!(summary.contains("status = \"passed\""), "{summary}");
    let reloaded = load_config(&dir.path().join("rest.toml")).unwrap();
    assert_eq!(reloaded, parse_config(EQUILIBRIUM, "rest").unwrap());
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let text = EQUILIBRIUM.replace(
        "kind = \"maxwellian\"\nn = 0.8\nu = [0.1, 0.0]\nlambda = 1.0\ntheta = 1.0\n",
        "kind = \"perturbed\"\namplitude = 0.3\nbase = { n = 0.8, u = [0.1, 0.0], lambda = 1.0, theta = 1.0 }\n",
    );
    assert_ne!(text, EQUILIBRIUM);
    let cfg = write(dir.path(), "noisy.toml", &format!("seed = 9\n{text}"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_into(&cfg, &a);
    run_into(&cfg, &b);
    let csv_a = std::fs::read(a.join("rest.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("rest.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("rest.summary.toml")).unwrap(), std::fs::read(b.join("rest.summary.toml")).unwrap());

    let c = dir.path().join("c");
    polybgk(&["run", cfg.to_str().unwrap(), "--out-dir", c.to_str().unwrap(), "--seed", "10"]);
    assert_ne!(csv_a, std::fs::read(c.join("rest.csv")).unwrap());

    let header = String::from_utf8(csv_a).unwrap();
    for (name, unit, _) in GLOBAL_COLUMNS {
        assert!(header.contains(&format!("#   {name} [{unit}]")), "{name}");
    }
    assert!(header.contains("# config_sha256: "));
}

#[test]
fn exit_codes_follow_the_outcome() {
    let dir = TempDir::new().unwrap();
    let failing = EQUILIBRIUM.replace("checks = {", "closure = \"sampled\"\nchecks = { oracle = 1e-14,");
    assert_eq!(run_into(&write(dir.path(), "fail.toml", &failing), dir.path()), 1);

    let aborting = EQUILIBRIUM
        .replace("run = { t_end = 0.5, dt = 0.05, stride = 2 }", "run = { t_end = 1e6, dt = 1e6, scheme = \"euler\" }")
        .replace("u = [0.1, 0.0]\nlambda = 1.0\ntheta = 1.0\n\n[[initial]]", "u = [1.5, 0.0]\nlambda = 0.6\ntheta = 1.0\n\n[[initial]]");
    assert_eq!(run_into(&write(dir.path(), "abort.toml", &aborting), dir.path()), 2);

    let unknown = format!("{EQUILIBRIUM}\nspeed = 1\n");
    let (code, _, err) = polybgk(&["run", write(dir.path(), "u.toml", &unknown).to_str().unwrap()]);
    assert_eq!(code, 3);
    assert!(err.contains("speed"), "{err}");
    assert_eq!(polybgk(&["run", "no_such_scenario"]).0, 3);
    assert_eq!(polybgk(&["run", "equilibrium", "--stride", "0"]).0, 3);
}

#[test]
fn builtin_scenarios_run_by_name_and_report() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stdout, _) = polybgk(&["run", "oracle_kpp", "--out-dir", out, "--t-end", "0.4"]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("binding"), "{stdout}");
    let (code, stdout, _) = polybgk(&["run", "exchange", "--out-dir", out]);
    assert_eq!(code, 0, "{stdout}");
    let csv = [dir.path().join("oracle_kpp.csv"), dir.path().join("exchange.csv")];
    let (code, stdout, _) = polybgk(&["report", csv[0].to_str().unwrap(), csv[1].to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.contains("oracle_kpp (KPP_one_species)") && stdout.contains("sweep:"), "{stdout}");
    let summary = std::fs::read_to_string(dir.path().join("oracle_kpp.summary.toml")).unwrap();
    assert!(summary.contains("binding_branch = ") && summary.contains("[[checks]]"), "{summary}");
    let (code, stdout, _) = polybgk(&["list"]);
    assert_eq!(code, 0);
    assert_eq!(stdout.lines().count(), polybgk::scenarios::library().len());
}
