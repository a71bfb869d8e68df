//! Firm-network economy laboratory.
//!
//! The crate is organised bottom-up:
//!
//! - [`economy`], [`network`], [`production`], [`spectral`]: the static economy
//!   (input-output links, technology, household preferences) and the network
//!   matrix `diag(z) - J`.
//! - [`equilibrium`]: competitive-equilibrium prices and productions for the
//!   Leontief, CES and Cobb-Douglas branches.
//! - [`naive`]: the continuous-time tatonnement model, its stability matrix,
//!   relaxation-time predictors and the shock-driven linear system.
//! - [`abm`]: the causal agent-based model with inventories, rationing and a
//!   work-elastic household.
//! - [`phase`]: trajectory classification and parameter sweeps.
//! - [`config`], [`seeds`], [`output`]: run configuration, seeding and
//!   artifact emission shared by the CLI and the HTTP service.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abm;
pub mod config;
pub mod economy;
pub mod equilibrium;
pub mod error;
pub mod naive;
pub mod network;
pub mod output;
pub mod phase;
pub mod production;
pub mod seeds;
pub mod spectral;

pub use abm::{Abm, AbmState, RecordSpec, RunStatus, StepSummary, Trajectory};
pub use config::{parse_config, RunConfig, Scenario};
pub use economy::{DynParams, Economy, Elasticity, Household};
pub use equilibrium::Equilibrium;
pub use error::{Error, Result};
pub use phase::{Classification, OscillationKind, PhaseDiagram, PhaseLabel, SimulationReport, Thresholds};
pub use seeds::{Seeds, Stream};

pub use spectral::NetworkMatrix;

pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;
