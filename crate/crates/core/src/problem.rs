//! Objectives, constraints and DOE weight calibration.
//!
//! Two objective styles are supported and may be mixed in one [`Problem`]:
//! weighted (absolute) scalar responses, and weighted normalized MSEs between
//! response curves and target curves. Every term and constraint reduces a
//! [`ResponseSet`] to one scalar, and those scalars are what the metamodels
//! approximate, so predicted and true objectives are combined identically.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluators::{Evaluator, ResponseSet};
use crate::sampling::{maximin_fill, SamplingOptions};
use crate::space::{DesignPoint, DesignSpace, Region};

pub const D_SUBSIDENCE: &str = "d_subsidence";
pub const D_EXPULSION: &str = "d_expulsion";

/// Floor of the MSE normalization.
pub const MSE_EPS: f64 = 1e-12;

/// A uniformly sampled time series starting at t = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub quantity: String,
    pub units: String,
    /// Sample spacing in seconds.
    pub dt: f64,
    pub values: Vec<f64>,
}

impl Curve {
    pub fn new(quantity: &str, units: &str, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Parse(format!(
                "curve `{quantity}`: dt must be positive, got {dt}"
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("curve `{quantity}`: non-finite value {v}")));
        }
        Ok(Self {
            quantity: quantity.to_owned(),
            units: units.to_owned(),
            dt,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|i| i as f64 * self.dt)
    }

    /// Linear interpolation, held constant beyond either end.
    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.values.len();
        if n == 1 || t <= 0.0 {
            return self.values[0];
        }
        let s = t / self.dt;
        let i = s.floor() as usize;
        if i + 1 >= n {
            return self.values[n - 1];
        }
        let frac = s - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    /// The samples at or after `t0`, re-based to start at zero.
    pub fn after(&self, t0: f64) -> Curve {
        let skip = if t0 > 0.0 {
            ((t0 / self.dt) - 1e-9).ceil().max(0.0) as usize
        } else {
            0
        };
        Curve {
            values: self.values.iter().skip(skip).copied().collect(),
            ..self.clone()
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }
}

/// `mean((c − t)²) / max(mean(t²), ε)` with `c` resampled onto the target's
/// time grid when the grids differ.
pub fn curve_mse(candidate: &Curve, target: &Curve) -> Result<f64> {
    curve_mse_with(candidate, target, None)
}

/// Like [`curve_mse`] but with an explicit normalization in place of the
/// target mean square.
pub fn curve_mse_with(candidate: &Curve, target: &Curve, normalization: Option<f64>) -> Result<f64> {
    if candidate.is_empty() {
        return Err(Error::EmptyCurve(candidate.quantity.clone()));
    }
    if target.is_empty() {
        return Err(Error::EmptyCurve(target.quantity.clone()));
    }
    if candidate.quantity != target.quantity {
        return Err(Error::CurveMismatch(format!(
            "candidate `{}` vs target `{}`",
            candidate.quantity, target.quantity
        )));
    }
    let same_grid = candidate.len() == target.len() && candidate.dt == target.dt;
    let sq: f64 = target
        .values
        .iter()
        .zip(target.times())
        .enumerate()
        .map(|(i, (t, time))| {
            let c = if same_grid {
                candidate.values[i]
            } else {
                candidate.value_at(time)
            };
            (c - t).powi(2)
        })
        .sum();
    let n = target.len() as f64;
    let norm = match normalization {
        Some(v) => v,
        None => (target.values.iter().map(|t| t * t).sum::<f64>() / n).max(MSE_EPS),
    };
    Ok(sq / n / norm)
}

/// `w1·|d_subsidence| + w2·|d_expulsion|`.
pub fn weighted_displacement_objective(responses: &BTreeMap<String, f64>, w1: f64, w2: f64) -> Result<f64> {
    let get = |k: &str| {
        responses
            .get(k)
            .copied()
            .ok_or_else(|| Error::MissingResponse(k.to_owned()))
    };
    Ok(w1 * get(D_SUBSIDENCE)?.abs() + w2 * get(D_EXPULSION)?.abs())
}

/// `Σ wᵢ·MSEᵢ`.
pub fn curve_sum_objective(mse: &[f64], weights: &[f64]) -> Result<f64> {
    if mse.len() != weights.len() {
        return Err(Error::ObjectiveCount {
            expected: weights.len(),
            got: mse.len(),
        });
    }
    Ok(mse.iter().zip(weights).map(|(m, w)| m * w).sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub response: String,
    pub bound: f64,
    pub direction: Direction,
    /// Defaults to `|bound|`, or 1 when the bound is zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

impl ConstraintSpec {
    pub fn new(response: &str, direction: Direction, bound: f64) -> Self {
        Self {
            response: response.to_owned(),
            bound,
            direction,
            scale: None,
        }
    }

    pub fn effective_scale(&self) -> f64 {
        match self.scale {
            Some(s) => s,
            None if self.bound == 0.0 => 1.0,
            None => self.bound.abs(),
        }
    }

    pub fn violation(&self, value: f64) -> f64 {
        let excess = match self.direction {
            Direction::Le => value - self.bound,
            Direction::Ge => self.bound - value,
        };
        (excess / self.effective_scale()).max(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.bound.is_finite() {
            return Err(Error::Config(format!(
                "constraint `{}`: bound must be finite",
                self.response
            )));
        }
        if let Some(s) = self.scale {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Config(format!(
                    "constraint `{}`: scale must be positive",
                    self.response
                )));
            }
        }
        Ok(())
    }
}

/// Scaled violations, one per constraint, in order.
pub fn evaluate_constraints(values: &BTreeMap<String, f64>, specs: &[ConstraintSpec]) -> Result<Vec<f64>> {
    specs
        .iter()
        .map(|c| {
            values
                .get(&c.response)
                .map(|v| c.violation(*v))
                .ok_or_else(|| Error::MissingResponse(c.response.clone()))
        })
        .collect()
}

fn default_true() -> bool {
    true
}

fn default_weight() -> f64 {
    1.0
}

/// One additive objective term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    WeightedScalar {
        response: String,
        #[serde(default = "default_weight")]
        weight: f64,
        #[serde(default = "default_true")]
        absolute: bool,
    },
    CurveMse {
        response: String,
        #[serde(default = "default_weight")]
        weight: f64,
        target: Curve,
        /// Fixed normalization; the target mean square when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        normalization: Option<f64>,
    },
}

impl ObjectiveSpec {
    pub fn response(&self) -> &str {
        match self {
            ObjectiveSpec::WeightedScalar { response, .. } | ObjectiveSpec::CurveMse { response, .. } => response,
        }
    }

    pub fn weight(&self) -> f64 {
        match self {
            ObjectiveSpec::WeightedScalar { weight, .. } | ObjectiveSpec::CurveMse { weight, .. } => *weight,
        }
    }

    fn set_weight(&mut self, w: f64) {
        match self {
            ObjectiveSpec::WeightedScalar { weight, .. } | ObjectiveSpec::CurveMse { weight, .. } => *weight = w,
        }
    }

    /// Name of the scalar this term contributes (and the metamodel fitted for it).
    pub fn key(&self) -> String {
        match self {
            ObjectiveSpec::WeightedScalar { response, .. } => response.clone(),
            ObjectiveSpec::CurveMse { response, .. } => format!("mse:{response}"),
        }
    }

    fn extract(&self, rs: &ResponseSet) -> Result<f64> {
        match self {
            ObjectiveSpec::WeightedScalar { response, .. } => rs.scalar(response),
            ObjectiveSpec::CurveMse {
                response,
                target,
                normalization,
                ..
            } => {
                let settle = rs.settling_end;
                curve_mse_with(
                    &rs.curve(response)?.after(settle),
                    &target.after(settle),
                    *normalization,
                )
            }
        }
    }

    /// Weighted term; a (predicted) MSE below zero counts as zero.
    fn contribution(&self, value: f64) -> f64 {
        match self {
            ObjectiveSpec::WeightedScalar { weight, absolute, .. } => {
                weight * if *absolute { value.abs() } else { value }
            }
            ObjectiveSpec::CurveMse { weight, .. } => weight * value.max(0.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let w = self.weight();
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::Config(format!(
                "objective `{}`: weight must be finite and ≥ 0",
                self.response()
            )));
        }
        if let ObjectiveSpec::CurveMse {
            target, normalization, ..
        } = self
        {
            if target.is_empty() {
                return Err(Error::EmptyCurve(target.quantity.clone()));
            }
            if let Some(n) = normalization {
                if !(n.is_finite() && *n > 0.0) {
                    return Err(Error::Config(format!(
                        "objective `{}`: normalization must be positive",
                        self.response()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Objective terms plus constraints.
///
/// The scalars a problem needs from a design are its *keys*: one per
/// objective term followed by one per constraint response, without
/// duplicates. Values in key order feed [`Problem::combine`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub objectives: Vec<ObjectiveSpec>,
    pub constraints: Vec<ConstraintSpec>,
    #[serde(skip)]
    keys: Vec<String>,
    #[serde(skip)]
    objective_idx: Vec<usize>,
    #[serde(skip)]
    constraint_idx: Vec<usize>,
}

/// A problem evaluated at one design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub objective: f64,
    pub violations: Vec<f64>,
    pub feasible: bool,
}

impl Problem {
    pub fn new(objectives: Vec<ObjectiveSpec>, constraints: Vec<ConstraintSpec>) -> Result<Self> {
        if objectives.is_empty() {
            return Err(Error::Config("at least one objective term is required".into()));
        }
        for o in &objectives {
            o.validate()?;
        }
        for c in &constraints {
            c.validate()?;
        }
        let mut keys: Vec<String> = Vec::new();
        let index_of = |k: String, keys: &mut Vec<String>| match keys.iter().position(|x| *x == k) {
            Some(i) => i,
            None => {
                keys.push(k);
                keys.len() - 1
            }
        };
        let objective_idx = objectives.iter().map(|o| index_of(o.key(), &mut keys)).collect();
        let constraint_idx = constraints
            .iter()
            .map(|c| index_of(c.response.clone(), &mut keys))
            .collect();
        Ok(Self {
            objectives,
            constraints,
            keys,
            objective_idx,
            constraint_idx,
        })
    }

    /// Rebuilds the key index after deserialization.
    pub fn reindexed(self) -> Result<Self> {
        Problem::new(self.objectives, self.constraints)
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn weights(&self) -> Vec<f64> {
        self.objectives.iter().map(ObjectiveSpec::weight).collect()
    }

    pub fn with_weights(mut self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.objectives.len() {
            return Err(Error::ObjectiveCount {
                expected: self.objectives.len(),
                got: weights.len(),
            });
        }
        for (o, w) in self.objectives.iter_mut().zip(weights) {
            o.set_weight(*w);
        }
        Problem::new(self.objectives, self.constraints)
    }

    /// Scalars for every key from a successful response set.
    pub fn extract(&self, rs: &ResponseSet) -> Result<Vec<f64>> {
        let mut out = vec![f64::NAN; self.keys.len()];
        for (o, &i) in self.objectives.iter().zip(&self.objective_idx) {
            out[i] = o.extract(rs)?;
        }
        for (c, &i) in self.constraints.iter().zip(&self.constraint_idx) {
            out[i] = rs.scalar(&c.response)?;
        }
        Ok(out)
    }

    pub fn objective_of(&self, values: &[f64]) -> f64 {
        self.contributions(values).iter().sum()
    }

    /// Weighted value of each objective term.
    pub fn contributions(&self, values: &[f64]) -> Vec<f64> {
        self.objectives
            .iter()
            .zip(&self.objective_idx)
            .map(|(o, &i)| o.contribution(values[i]))
            .collect()
    }

    pub fn violations_of(&self, values: &[f64]) -> Vec<f64> {
        self.constraints
            .iter()
            .zip(&self.constraint_idx)
            .map(|(c, &i)| c.violation(values[i]))
            .collect()
    }

    /// Objective and scaled violations from key-ordered scalars.
    pub fn combine(&self, values: &[f64]) -> Assessment {
        let violations = self.violations_of(values);
        Assessment {
            objective: self.objective_of(values),
            feasible: violations.iter().all(|v| *v <= 0.0),
            violations,
        }
    }

    pub fn assess(&self, rs: &ResponseSet) -> Result<Assessment> {
        Ok(self.combine(&self.extract(rs)?))
    }
}

/// Outcome of the DOE pre-study for the displacement objective weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub w1: f64,
    pub w2: f64,
    pub n_requested: usize,
    pub n_used: usize,
    pub mean_abs_subsidence: f64,
    pub mean_abs_expulsion: f64,
    pub points: Vec<DesignPoint>,
}

/// Maximin DOE of `n` feasible designs over the whole space; `w1 = 1` and
/// `w2 = mean|d_subsidence| / mean|d_expulsion|` over the successful
/// evaluations.
pub fn calibrate_weights_doe(
    evaluator: &dyn Evaluator,
    space: &DesignSpace,
    n: usize,
    seed: u64,
    options: &SamplingOptions,
) -> Result<Calibration> {
    let region = Region::full(space);
    let plan = maximin_fill(
        space,
        &region,
        n,
        &[],
        &|p: &DesignPoint| space.check(p),
        seed,
        options,
        0,
        0,
    )?;
    let responses: Vec<ResponseSet> = plan.points.par_iter().map(|p| evaluator.evaluate(p)).collect();
    let mut sub = 0.0;
    let mut exp = 0.0;
    let mut used = 0usize;
    for rs in responses.iter().filter(|r| r.is_ok()) {
        sub += rs.scalar(D_SUBSIDENCE)?.abs();
        exp += rs.scalar(D_EXPULSION)?.abs();
        used += 1;
    }
    if used == 0 {
        return Err(Error::CalibrationDegenerate(format!("all {n} DOE evaluations failed")));
    }
    let (mean_sub, mean_exp) = (sub / used as f64, exp / used as f64);
    if mean_exp == 0.0 {
        return Err(Error::CalibrationDegenerate("mean |d_expulsion| is zero".into()));
    }
    Ok(Calibration {
        w1: 1.0,
        w2: mean_sub / mean_exp,
        n_requested: n,
        n_used: used,
        mean_abs_subsidence: mean_sub,
        mean_abs_expulsion: mean_exp,
        points: plan.points,
    })
}
