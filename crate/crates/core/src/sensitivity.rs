//! Variance-based (Sobol) sensitivity indices by pick-freeze Monte Carlo.
//!
//! With independent sample matrices `A`, `B` and `ABᵢ` (`A` with column `i`
//! taken from `B`):
//!
//! ```text
//! Sᵢ  = mean(f(B)·(f(ABᵢ) − f(A))) / V
//! S_Tᵢ = mean((f(A) − f(ABᵢ))²) / (2V)
//! ```
//!
//! Each input column is drawn from its own random substream keyed by the
//! variable name, so reordering the variables reorders the indices exactly.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::rng;
use crate::space::{denormalize, normalize, DesignSpace, Region};
use crate::surrogate::MetamodelSet;

pub const MIN_BASE_SAMPLES: usize = 64;
pub const DEFAULT_BASE_SAMPLES: usize = 8192;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolResult {
    pub objective: String,
    pub variables: Vec<String>,
    pub first_order: Vec<f64>,
    pub total: Vec<f64>,
    pub n_samples: usize,
    /// Pooled output variance of `f(A)` and `f(B)`.
    pub variance: f64,
    pub constant_function: bool,
}

impl SobolResult {
    /// Variables with a negative estimate (Monte Carlo noise).
    pub fn negative_flags(&self) -> Vec<&str> {
        self.variables
            .iter()
            .zip(self.first_order.iter().zip(&self.total))
            .filter(|(_, (s, t))| **s < 0.0 || **t < 0.0)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    pub fn index_of(&self, variable: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == variable)
    }
}

fn column(seed: u64, matrix: &str, name: &str, n: usize) -> Vec<f64> {
    let mut r = rng::substream(seed, &format!("sobol:{matrix}:{name}"), 0);
    (0..n).map(|_| r.random::<f64>()).collect()
}

/// Indices of `f` over the unit cube `[0, 1]^d`, one input per name.
pub fn sobol<F>(f: F, variables: &[String], objective: &str, n_base: usize, seed: u64) -> Result<SobolResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if n_base < MIN_BASE_SAMPLES {
        return Err(Error::Config(format!(
            "sobol needs n_base ≥ {MIN_BASE_SAMPLES}, got {n_base}"
        )));
    }
    let d = variables.len();
    let a_cols: Vec<Vec<f64>> = variables.iter().map(|v| column(seed, "A", v, n_base)).collect();
    let b_cols: Vec<Vec<f64>> = variables.iter().map(|v| column(seed, "B", v, n_base)).collect();
    let row = |cols: &[Vec<f64>], r: usize| -> Vec<f64> { cols.iter().map(|c| c[r]).collect() };
    let eval = |swap: Option<usize>| -> Vec<f64> {
        (0..n_base)
            .into_par_iter()
            .map(|r| {
                let mut x = match swap {
                    Some(usize::MAX) => row(&b_cols, r),
                    _ => row(&a_cols, r),
                };
                if let Some(i) = swap.filter(|i| *i < d) {
                    x[i] = b_cols[i][r];
                }
                f(&x)
            })
            .collect()
    };
    let fa = eval(None);
    let fb = eval(Some(usize::MAX));
    let all = fa.iter().chain(&fb);
    let m = 2.0 * n_base as f64;
    let mean = all.clone().sum::<f64>() / m;
    let variance = all.map(|v| (v - mean).powi(2)).sum::<f64>() / m;
    let n = n_base as f64;
    let constant = !(variance > 1e-300) || !variance.is_finite();
    let (mut first, mut total) = (vec![0.0; d], vec![0.0; d]);
    if !constant {
        for i in 0..d {
            let fab = eval(Some(i));
            first[i] = fb
                .iter()
                .zip(&fab)
                .zip(&fa)
                .map(|((b, ab), a)| b * (ab - a))
                .sum::<f64>()
                / n
                / variance;
            total[i] = fa.iter().zip(&fab).map(|(a, ab)| (a - ab).powi(2)).sum::<f64>() / n / (2.0 * variance);
        }
    }
    Ok(SobolResult {
        objective: objective.to_owned(),
        variables: variables.to_vec(),
        first_order: first,
        total,
        n_samples: n_base * (d + 2),
        variance: if constant { 0.0 } else { variance },
        constant_function: constant,
    })
}

/// How per-objective total indices combine into one score per variable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Aggregation {
    /// `Σⱼ wⱼ·Vⱼ·S_Tᵢⱼ / Σⱼ wⱼ·Vⱼ`: each objective counts by its weighted variance.
    #[default]
    VarianceWeighted,
    /// `Σⱼ wⱼ·S_Tᵢⱼ / Σⱼ wⱼ`: each objective counts by its weight alone.
    Weighted,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variance_weighted" => Ok(Self::VarianceWeighted),
            "weighted" => Ok(Self::Weighted),
            other => Err(Error::Config(format!(
                "unknown aggregation `{other}` (expected `variance_weighted` or `weighted`)"
            ))),
        }
    }
}

/// Variables ranked by aggregate score, descending; ties by name.
pub fn aggregate_ranking(results: &[SobolResult], weights: &[f64], rule: Aggregation) -> Result<Vec<(String, f64)>> {
    let first = results.first().ok_or(Error::NotEnoughPoints { needed: 1, got: 0 })?;
    if weights.len() != results.len() {
        return Err(Error::ObjectiveCount {
            expected: results.len(),
            got: weights.len(),
        });
    }
    let scale = |r: &SobolResult, w: f64| match rule {
        Aggregation::VarianceWeighted => w * r.variance,
        Aggregation::Weighted => w,
    };
    let denom: f64 = results.iter().zip(weights).map(|(r, w)| scale(r, *w)).sum();
    let mut ranking: Vec<(String, f64)> = first
        .variables
        .iter()
        .map(|name| {
            let num: f64 = results
                .iter()
                .zip(weights)
                .map(|(r, w)| r.index_of(name).map_or(0.0, |i| scale(r, *w) * r.total[i]))
                .sum();
            (name.clone(), if denom > 0.0 { num / denom } else { 0.0 })
        })
        .collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranking)
}

/// Indices of every objective term's metamodel over `region`, in problem
/// objective order, with the objective weights for aggregation.
pub fn sobol_on_models(
    space: &DesignSpace,
    region: &Region,
    models: &MetamodelSet,
    problem: &Problem,
    n_base: usize,
    seed: u64,
) -> Result<(Vec<SobolResult>, Vec<f64>)> {
    let names = space.sampled_names();
    let mut results = Vec::new();
    for o in &problem.objectives {
        let key = o.key();
        if !models.names().any(|n| n == key) {
            return Err(Error::MissingResponse(key));
        }
        let f = |u: &[f64]| {
            let x = normalize(&denormalize(u, region, space), region);
            models.predict(&key, &x).unwrap_or(f64::NAN)
        };
        results.push(sobol(f, &names, &key, n_base, seed)?);
    }
    Ok((results, problem.weights()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(d: usize) -> Vec<String> {
        (1..=d).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn single_variable_dependence() {
        let r = sobol(|x: &[f64]| x[0], &names(2), "f", 4096, 1).unwrap();
        assert!((r.first_order[0] - 1.0).abs() <= 0.05);
        assert!(r.first_order[1].abs() <= 0.05);
    }

    #[test]
    fn linear_function_matches_variance_ratio() {
        let (a, b) = (1.0, 2.0);
        let r = sobol(|x: &[f64]| a * x[0] + b * x[1], &names(2), "f", 4096, 2).unwrap();
        let s1 = a * a / (a * a + b * b);
        assert!((r.first_order[0] - s1).abs() <= 0.05, "{:?}", r.first_order);
        assert!((r.first_order[1] - (1.0 - s1)).abs() <= 0.05);
        let sum: f64 = r.first_order.iter().sum();
        assert!((0.9..=1.1).contains(&sum));
    }

    #[test]
    fn pure_interaction() {
        let f = |x: &[f64]| (2.0 * x[0] - 1.0) * (2.0 * x[1] - 1.0);
        let r = sobol(f, &names(2), "f", 4096, 3).unwrap();
        for i in 0..2 {
            assert!(r.first_order[i].abs() <= 0.1, "{:?}", r.first_order);
            assert!((r.total[i] - 1.0).abs() <= 0.1, "{:?}", r.total);
        }
    }

    #[test]
    fn constant_function_flagged() {
        let r = sobol(|_: &[f64]| 5.0, &names(3), "f", 64, 0).unwrap();
        assert!(r.constant_function);
        assert!(r.first_order.iter().chain(&r.total).all(|v| *v == 0.0));
        assert!(sobol(|_: &[f64]| 5.0, &names(3), "f", 63, 0).is_err());
    }

    #[test]
    fn more_samples_reduce_error() {
        let s1 = 0.2;
        let err = |n| {
            let r = sobol(|x: &[f64]| x[0] + 2.0 * x[1], &names(2), "f", n, 9).unwrap();
            (r.first_order[0] - s1).abs()
        };
        assert!(err(16384) < err(1024));
    }

    #[test]
    fn ranking_rules() {
        let a = sobol(|x: &[f64]| x[0] + 0.1 * x[1], &names(2), "a", 1024, 4).unwrap();
        let single = aggregate_ranking(&[a.clone()], &[1.0], Aggregation::default()).unwrap();
        assert_eq!(single[0].0, "x1");
        let twice = aggregate_ranking(&[a.clone(), a.clone()], &[1.0, 1.0], Aggregation::default()).unwrap();
        assert_eq!(
            single.iter().map(|r| &r.0).collect::<Vec<_>>(),
            twice.iter().map(|r| &r.0).collect::<Vec<_>>()
        );
        let b = sobol(|x: &[f64]| 1e-3 * x[1], &names(2), "b", 1024, 5).unwrap();
        let mixed = aggregate_ranking(&[a.clone(), b.clone()], &[1.0, 1.0], Aggregation::default()).unwrap();
        assert_eq!(mixed[0].0, "x1");
        let flat = aggregate_ranking(&[a, b], &[1.0, 1.0], Aggregation::Weighted).unwrap();
        assert_eq!(flat[0].0, "x2");
        assert_eq!("weighted".parse::<Aggregation>().unwrap(), Aggregation::Weighted);
        assert!("max".parse::<Aggregation>().is_err());
    }
}
