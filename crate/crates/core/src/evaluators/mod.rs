//! The evaluation contract and its implementations.
//!
//! An [`Evaluator`] maps a resolved design to a [`ResponseSet`]. Evaluation
//! never fails with an error: problems are reported through
//! [`Status::Failed`] and the design is treated as infeasible downstream.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::Curve;
use crate::space::{DesignPoint, DesignSpace};

pub mod benchmark;
pub mod bone;
pub mod external;
pub mod spine;

pub use benchmark::{Benchmark, BenchmarkEvaluator};
pub use bone::{BoneConstants, BoneSurrogate};
pub use external::{ExternalProcess, ExternalProcessConfig};
pub use spine::{LoadCase, Motion, SegmentParams, SpineSurrogate};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseSet {
    #[serde(default)]
    pub scalars: BTreeMap<String, f64>,
    #[serde(default)]
    pub curves: BTreeMap<String, Curve>,
    /// End of the settling phase in seconds; curve samples before it are
    /// ignored by curve objectives.
    #[serde(default)]
    pub settling_end: f64,
    pub status: Status,
}

impl ResponseSet {
    pub fn ok(scalars: BTreeMap<String, f64>) -> Self {
        Self {
            scalars,
            curves: BTreeMap::new(),
            settling_end: 0.0,
            status: Status::Ok,
        }
    }

    pub fn failed(reason: impl Into<String>) -> Self {
        Self {
            scalars: BTreeMap::new(),
            curves: BTreeMap::new(),
            settling_end: 0.0,
            status: Status::Failed(reason.into()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    pub fn failure(&self) -> Option<&str> {
        match &self.status {
            Status::Ok => None,
            Status::Failed(r) => Some(r),
        }
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        self.scalars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingResponse(name.to_owned()))
    }

    pub fn curve(&self, name: &str) -> Result<&Curve> {
        self.curves
            .get(name)
            .ok_or_else(|| Error::MissingResponse(name.to_owned()))
    }

    /// Downgrades an `ok` set holding a non-finite value to `failed`.
    pub fn checked(self) -> Self {
        if !self.is_ok() {
            return self;
        }
        if let Some((k, _)) = self.scalars.iter().find(|(_, v)| !v.is_finite()) {
            return ResponseSet::failed(format!("non_finite:{k}"));
        }
        if let Some((k, _)) = self
            .curves
            .iter()
            .find(|(_, c)| c.values.iter().any(|v| !v.is_finite()))
        {
            return ResponseSet::failed(format!("non_finite:{k}"));
        }
        self
    }
}

/// A (possibly expensive) simulation of one design.
pub trait Evaluator: Send + Sync {
    fn name(&self) -> &str;

    /// Deterministic in `point`; failures are data, never panics.
    fn evaluate(&self, point: &DesignPoint) -> ResponseSet;
}

/// `Some(failed("out_of_bounds"))` when the sampled values leave the space.
pub fn out_of_bounds(space: &DesignSpace, point: &DesignPoint) -> Option<ResponseSet> {
    (point.values.len() != space.dim() || !space.contains(&point.values)).then(|| ResponseSet::failed("out_of_bounds"))
}
