//! CSV series and TOML summaries.
//!
//! Series files start with a `#` block holding the experiment name, model,
//! configuration hash and one line per column with its unit. Numbers are
//! written in scientific notation with 17 significant digits; absent values
//! are empty fields. Nothing time- or host-dependent is written, so equal
//! configurations give byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use polybgk::diagnostics::{DiagnosticRecord, SpeciesDiagnostics, TheoremConstants};
use polybgk::scenarios::{CheckResult, Experiment, NamedFit, Outcome, Status, SweepRow};
use serde::Serialize;

use crate::config::{config_hash, to_toml};

/// Process exit code of an outcome: 0 pass, 1 invariant failure, 2 numerical
/// abort. Configuration errors exit with 3 before anything runs.
pub fn exit_code(status: Status) -> u8 {
    match status {
        Status::Passed => 0,
        Status::Failed => 1,
        Status::Aborted => 2,
    }
}

pub const CONFIG_ERROR: u8 = 3;

/// Columns shared by all species: name, unit, meaning.
pub const GLOBAL_COLUMNS: &[(&str, &str, &str)] = &[
    ("variant", "label", "run variant"),
    ("time", "1/nu", "simulation time"),
    ("lyapunov", "nat*n", "Lyapunov functional"),
    ("composite", "nat*n", "sum of the controlled relative entropies"),
    ("production", "nat*n*nu", "total entropy production"),
    ("envelope", "nat*n", "rate-theorem bound on the controlled relative entropy"),
    ("proof_envelope", "nat*n", "alternative bound of the mixture models; empty otherwise"),
    ("l1_bound", "n", "bound on ||f - M~||_1 of the ALPP model; empty otherwise"),
    ("momentum_residual", "1", "relative drift of the total momentum"),
    ("energy_residual", "1", "relative drift of the total energy"),
    ("csiszar_kullback", "0/1", "1 when ||f - g||_1 <= 4 H(f|g)^(1/2) holds for every species"),
];

/// Per-species columns, suffixed `_1`, `_2` in the header.
pub const SPECIES_COLUMNS: &[(&str, &str, &str)] = &[
    ("number_residual", "1", "relative drift of the particle number"),
    ("n", "n", "number density"),
    ("t_t", "energy", "translational temperature"),
    ("t_r", "energy", "internal temperature; empty for the ALPP model"),
    ("lambda", "energy", "translational Maxwellian temperature Lambda"),
    ("theta", "energy", "internal relaxation temperature Theta; empty without one"),
    ("t_total", "energy", "total equilibrium temperature"),
    ("entropy_f", "nat*n", "int f ln f"),
    ("rel_f_m", "nat*n", "H(f|M)"),
    ("rel_f_mt", "nat*n", "H(f|M~)"),
    ("rel_m_mt", "nat*n", "H(M|M~)"),
    ("production", "nat*n*nu", "entropy production D_k"),
    ("l1_f_m", "n", "||f - M||_1"),
    ("l1_f_mt", "n", "||f - M~||_1"),
    ("clamped_cells", "count", "cells raised to the positivity floor"),
];

pub const SWEEP_COLUMNS: &[(&str, &str, &str)] = &[
    ("draw", "count", "draw index"),
    ("name", "label", "checked quantity"),
    ("species", "index", "species (1-based); empty for system quantities"),
    ("value", "1", "residual or slack of the draw"),
    ("hypotheses_met", "0/1", "1 when the draw satisfies the hypotheses of the check"),
];

fn num(out: &mut String, x: f64) {
    let _ = write!(out, ",{x:.16e}");
}

fn opt(out: &mut String, x: Option<f64>) {
    match x {
        Some(x) => num(out, x),
        None => out.push(','),
    }
}

pub fn column_names(species: usize) -> Vec<String> {
    let mut names: Vec<String> = GLOBAL_COLUMNS.iter().map(|c| c.0.to_string()).collect();
    for k in 1..=species {
        names.extend(SPECIES_COLUMNS.iter().map(|c| format!("{}_{k}", c.0)));
    }
    names
}

fn header(out: &mut String, exp: &Experiment, hash: &str, columns: &[(String, &str, &str)]) {
    let _ = writeln!(out, "# polybgk {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "# experiment: {}", exp.name);
    let _ = writeln!(out, "# model: {}", exp.model.name());
    let _ = writeln!(out, "# seed: {}", exp.seed);
    let _ = writeln!(out, "# config_sha256: {hash}");
    let _ = writeln!(out, "# columns:");
    for (name, unit, doc) in columns {
        let _ = writeln!(out, "#   {name} [{unit}] {doc}");
    }
    let names: Vec<&str> = columns.iter().map(|c| c.0.as_str()).collect();
    let _ = writeln!(out, "{}", names.join(","));
}

fn species_fields(out: &mut String, residual: f64, s: &SpeciesDiagnostics) {
    num(out, residual);
    let m = s.state.as_ref();
    opt(out, m.map(|m| m.n));
    opt(out, m.map(|m| m.t_t));
    opt(out, m.and_then(|m| m.t_r));
    opt(out, m.map(|m| m.lambda));
    opt(out, m.and_then(|m| m.theta));
    opt(out, m.map(|m| m.t_total));
    for x in [s.entropy_f, s.rel_f_m, s.rel_f_mt, s.rel_m_mt, s.production, s.l1_f_m, s.l1_f_mt] {
        num(out, x);
    }
    let _ = write!(out, ",{}", s.clamped_cells);
}

fn record_row(out: &mut String, label: &str, r: &DiagnosticRecord) {
    out.push_str(label);
    for x in [r.time, r.lyapunov, r.composite, r.production, r.envelope] {
        num(out, x);
    }
    opt(out, r.proof_envelope);
    opt(out, r.l1_bound);
    num(out, r.momentum_residual);
    num(out, r.energy_residual);
    let _ = write!(out, ",{}", u8::from(r.ck_holds));
    for (s, res) in r.species.iter().zip(&r.number_residuals) {
        species_fields(out, *res, s);
    }
    out.push('\n');
}

/// Diagnostic series of a kinetic experiment, one row per record.
pub fn series_csv(exp: &Experiment, outcome: &Outcome) -> String {
    let species = exp.species.len();
    let mut columns: Vec<(String, &str, &str)> =
        GLOBAL_COLUMNS.iter().map(|&(n, u, d)| (n.to_string(), u, d)).collect();
    for k in 1..=species {
        columns.extend(SPECIES_COLUMNS.iter().map(|&(n, u, d)| (format!("{n}_{k}"), u, d)));
    }
    let mut out = String::new();
    header(&mut out, exp, &config_hash(exp), &columns);
    for run in &outcome.runs {
        for r in &run.records {
            record_row(&mut out, &run.label, r);
        }
    }
    out
}

/// Sample table of a sweep experiment.
pub fn sweep_csv(exp: &Experiment, rows: &[SweepRow]) -> String {
    let columns: Vec<(String, &str, &str)> = SWEEP_COLUMNS.iter().map(|&(n, u, d)| (n.to_string(), u, d)).collect();
    let mut out = String::new();
    header(&mut out, exp, &config_hash(exp), &columns);
    for r in rows {
        let species = r.species.map(|k| (k + 1).to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{species},{:.16e},{}", r.draw, r.name, r.value, u8::from(r.hypotheses_met));
    }
    out
}

#[derive(Serialize)]
struct FitSummary<'a> {
    name: &'a str,
    rate: f64,
    r_squared: f64,
    samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    relative_error: Option<f64>,
}

impl<'a> From<&'a NamedFit> for FitSummary<'a> {
    fn from(f: &'a NamedFit) -> Self {
        FitSummary {
            name: &f.name,
            rate: f.fit.rate,
            r_squared: f.fit.r_squared,
            samples: f.fit.samples,
            reference: f.reference,
            relative_error: f.reference.map(|r| (f.fit.rate - r).abs() / r.abs()),
        }
    }
}

#[derive(Serialize)]
struct RunSummary<'a> {
    label: &'a str,
    steps: usize,
    dt: f64,
    records: usize,
    fallbacks: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    aborted: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    binding_branch: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    spectrum: &'a [f64],
    fits: Vec<FitSummary<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    constants: Option<ConstantsSummary<'a>>,
}

#[derive(Serialize)]
struct ConstantsSummary<'a> {
    branches: Vec<(&'a str, f64)>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    proof_branches: Vec<(&'a str, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    proof_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    margin: Option<f64>,
    lyapunov_weights: &'a [f64],
    conditional_on_bounds: bool,
    unmet: &'a [String],
}

impl<'a> From<&'a TheoremConstants> for ConstantsSummary<'a> {
    fn from(c: &'a TheoremConstants) -> Self {
        let pairs = |b: &'a [polybgk::diagnostics::Branch]| b.iter().map(|b| (b.label.as_str(), b.value)).collect();
        ConstantsSummary {
            branches: pairs(&c.branches),
            proof_branches: pairs(&c.proof_branches),
            proof_rate: c.proof_rate,
            margin: c.margin,
            lyapunov_weights: &c.lyapunov_weights,
            conditional_on_bounds: c.conditional_on_bounds,
            unmet: &c.unmet,
        }
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    experiment: &'a str,
    model: &'a str,
    config_sha256: String,
    status: &'static str,
    exit_code: u8,
    runs: Vec<RunSummary<'a>>,
    checks: &'a [CheckResult],
}

pub fn status_name(s: Status) -> &'static str {
    match s {
        Status::Passed => "passed",
        Status::Failed => "failed",
        Status::Aborted => "aborted",
    }
}

/// Fitted rates, theorem constants, binding branches and check verdicts.
pub fn summary_toml(exp: &Experiment, outcome: &Outcome) -> String {
    let runs = outcome
        .runs
        .iter()
        .map(|r| RunSummary {
            label: &r.label,
            steps: r.steps,
            dt: r.dt,
            records: r.records.len(),
            fallbacks: r.fallbacks,
            aborted: r.aborted.as_deref(),
            binding_branch: r.constants.as_ref().map(|c| c.binding_label()),
            rate: r.constants.as_ref().map(|c| c.rate),
            spectrum: &r.spectrum,
            fits: r.fits.iter().map(FitSummary::from).collect(),
            constants: r.constants.as_ref().map(ConstantsSummary::from),
        })
        .collect();
    let summary = Summary {
        experiment: &outcome.experiment,
        model: exp.model.name(),
        config_sha256: config_hash(exp),
        status: status_name(outcome.status()),
        exit_code: exit_code(outcome.status()),
        runs,
        checks: &outcome.checks,
    };
    toml::to_string(&summary).expect("summaries serialise to TOML")
}

/// Writes `<name>.toml` (the resolved configuration), `<name>.csv` and
/// `<name>.summary.toml` into `dir`.
pub fn write_outputs(dir: &Path, exp: &Experiment, outcome: &Outcome) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let csv = if outcome.runs.is_empty() { sweep_csv(exp, &outcome.sweep) } else { series_csv(exp, outcome) };
    let files = [
        (format!("{}.toml", exp.name), to_toml(exp)),
        (format!("{}.csv", exp.name), csv),
        (format!("{}.summary.toml", exp.name), summary_toml(exp, outcome)),
    ];
    let mut paths = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text)?;
        log::info!("wrote {}", path.display());
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_names_follow_the_documented_order() {
        let c = column_names(2);
        assert_eq!(c.len(), GLOBAL_COLUMNS.len() + 2 * SPECIES_COLUMNS.len());
        assert_eq!(&c[..2], ["variant", "time"]);
        assert_eq!(c[GLOBAL_COLUMNS.len()], "number_residual_1");
        assert_eq!(c.last().unwrap(), "clamped_cells_2");
    }

    #[test]
    fn numbers_have_seventeen_significant_digits() {
        let mut s = String::new();
        num(&mut s, 1.0 / 3.0);
        opt(&mut s, None);
        assert_eq!(s, ",3.3333333333333331e-1,");
        assert_eq!(s[1..22].parse::<f64>().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(Status::Passed), 0);
        assert_eq!(exit_code(Status::Failed), 1);
        assert_eq!(exit_code(Status::Aborted), 2);
    }
}
