//! Space-homogeneous BGK relaxation models for polyatomic gases and
//! polyatomic gas mixtures, with diagnostics for conservation, entropy
//! decay and convergence rates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod diagnostics;
pub mod exec;
pub mod grid;
pub mod initial;
pub mod integrator;
pub mod maxwellians;
pub mod models;
pub mod moments;
pub mod oracle;
pub mod scenarios;
pub mod species;

pub use error::{Error, Result};
pub use exec::Exec;
pub use grid::{Axis, DistributionField, PhaseGrid, SeparableField};
pub use maxwellians::{Closure, ExchangeCoefficients, GaussianTarget};
pub use moments::{MacroState, Moments};
pub use species::{CollisionModel, MixtureParams, SpeciesSpec};
pub use models::{ModelKind, Problem, Snapshot, SpeciesRhs, SpeciesState, SystemState};
pub use integrator::{run, step, RunOutcome, RunSettings, Scheme};
