//! Analytic test functions with known optima.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{out_of_bounds, Evaluator, ResponseSet};
use crate::space::{DesignPoint, DesignSpace};

/// Name of the scalar every benchmark reports.
pub const OBJECTIVE: &str = "f";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "function", rename_all = "snake_case", deny_unknown_fields)]
pub enum Benchmark {
    /// `offset + Σ (xᵢ − cᵢ)²`
    Sphere {
        center: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// `Σ sᵢ·(xᵢ − cᵢ)²`
    Quadratic {
        center: Vec<f64>,
        scales: Vec<f64>,
    },
    /// Branin–Hoo on its usual box `[−5, 10] × [0, 15]`; three global minima
    /// of value `5/(4π)`.
    Branin,
    Constant {
        value: f64,
    },
    /// `offset + Σ aᵢ·xᵢ`
    Linear {
        coefficients: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
}

pub const BRANIN_MIN: f64 = 5.0 / (4.0 * std::f64::consts::PI);

impl Benchmark {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Benchmark::Sphere { center, offset } => {
                offset + x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>()
            }
            Benchmark::Quadratic { center, scales } => x
                .iter()
                .zip(center)
                .zip(scales)
                .map(|((a, c), s)| s * (a - c).powi(2))
                .sum(),
            Benchmark::Branin => branin(x[0], x[1]),
            Benchmark::Constant { value } => *value,
            Benchmark::Linear { coefficients, offset } => {
                offset + x.iter().zip(coefficients).map(|(a, c)| a * c).sum::<f64>()
            }
        }
    }

    /// Dimension the function requires, if fixed.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Benchmark::Sphere { center, .. } | Benchmark::Quadratic { center, .. } => Some(center.len()),
            Benchmark::Branin => Some(2),
            Benchmark::Constant { .. } => None,
            Benchmark::Linear { coefficients, .. } => Some(coefficients.len()),
        }
    }
}

pub fn branin(x: f64, y: f64) -> f64 {
    use std::f64::consts::PI;
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (y - b * x * x + c * x - 6.0).powi(2) + 10.0 * (1.0 - t) * x.cos() + 10.0
}

/// Evaluates a [`Benchmark`] on the sampled values of a space.
#[derive(Clone, Debug)]
pub struct BenchmarkEvaluator {
    pub space: DesignSpace,
    pub function: Benchmark,
}

impl BenchmarkEvaluator {
    pub fn new(space: DesignSpace, function: Benchmark) -> crate::Result<Self> {
        if let Some(d) = function.dim() {
            if d != space.dim() {
                return Err(crate::Error::DimensionMismatch {
                    expected: space.dim(),
                    got: d,
                });
            }
        }
        Ok(Self { space, function })
    }
}

impl Evaluator for BenchmarkEvaluator {
    fn name(&self) -> &str {
        "benchmark"
    }

    fn evaluate(&self, point: &DesignPoint) -> ResponseSet {
        if let Some(r) = out_of_bounds(&self.space, point) {
            return r;
        }
        let mut s = BTreeMap::new();
        s.insert(OBJECTIVE.to_owned(), self.function.value(&point.values));
        ResponseSet::ok(s).checked()
    }
}
