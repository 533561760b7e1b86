//! Metamodel-based sequential design optimization.
//!
//! The pipeline iterates *sample → evaluate → fit → optimize → check
//! termination → reduce domain*:
//!
//! - [`space`]: design variables, regions, dependent-variable rules and the
//!   sampling-stage feasibility checks, including the TDR design-space presets.
//! - [`sampling`]: greedy maximin space filling from a feasible candidate pool.
//! - [`surrogate`]: Hardy multiquadric RBF interpolants.
//! - [`problem`]: weighted-displacement and curve-MSE objectives, scaled
//!   constraints, DOE weight calibration.
//! - [`optimizer`]: real-coded GA followed by projected-gradient refinement.
//! - [`srsm`]: the outer sequential loop with domain reduction.
//! - [`evaluators`]: the evaluation contract and its implementations.
//! - [`sensitivity`]: Sobol indices on the fitted metamodels.
//! - [`config`], [`persist`], [`report`]: run configuration, run-state
//!   persistence and reporting used by the `srsm-opt` binary.

pub mod config;
pub mod error;
pub mod evaluators;
pub mod geometry;
pub mod optimizer;
pub mod persist;
pub mod problem;
pub mod report;
pub mod rng;
pub mod sampling;
pub mod sensitivity;
pub mod space;
pub mod srsm;
pub mod surrogate;

pub use error::{Error, Result};
