//! Radial basis function metamodels with Hardy's multiquadric basis
//! `φ(r) = sqrt(r² + c²)` plus a low-order polynomial tail.
//!
//! The interpolation system is the usual augmented one,
//! `[Φ P; Pᵀ 0]·[w; a] = [y; 0]`. `P` holds the linear monomials `[1, x]`
//! when there are at least `d + 2` centers and only the constant otherwise,
//! so affine responses are reproduced exactly, also under leave-one-out.
//!
//! Each scalar response gets its own weight vector. Responses fitted on the
//! same centers share one factorization ([`MetamodelSet`]), which also makes
//! weighted sums of models exact linear combinations of their weights.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Condition-number estimate above which the ridge fallback kicks in.
pub const RIDGE_CONDITION_LIMIT: f64 = 1e12;
/// Above this many centers `fit_rbf` skips the leave-one-out diagnostic.
pub const LOO_MAX_CENTERS: usize = 2500;

/// How the multiquadric shape parameter `c` is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapePolicy {
    /// Mean nearest-neighbor distance among the centers.
    #[default]
    MeanNearestNeighbor,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub max_training_residual: f64,
    /// Leave-one-out RMS error; `None` when skipped.
    pub loo_rms: Option<f64>,
    /// Diagonal shift applied by the ridge fallback, if it triggered.
    pub ridge: Option<f64>,
    pub condition_estimate: f64,
}

/// A fitted interpolant for one response over normalized coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbfModel {
    pub response_name: String,
    pub centers: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Polynomial tail coefficients: `[a₀]` or `[a₀, a₁, …, a_d]`.
    pub tail: Vec<f64>,
    pub shape_c: f64,
    pub fit_stats: FitStats,
}

#[inline]
fn multiquadric(x: &[f64], center: &[f64], c2: f64) -> f64 {
    let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
    (r2 + c2).sqrt()
}

fn tail_value(tail: &[f64], x: &[f64]) -> f64 {
    tail[0] + tail[1..].iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
}

fn predict_with(centers: &[Vec<f64>], weights: &[f64], tail: &[f64], shape_c: f64, x: &[f64]) -> f64 {
    let c2 = shape_c * shape_c;
    tail_value(tail, x)
        + centers
            .iter()
            .zip(weights)
            .map(|(ctr, w)| w * multiquadric(x, ctr, c2))
            .sum::<f64>()
}

impl RbfModel {
    /// `p(x) + Σᵢ wᵢ·sqrt(‖x − xᵢ‖² + c²)`; defined everywhere, including outside the unit cube.
    pub fn predict(&self, x: &[f64]) -> f64 {
        predict_with(&self.centers, &self.weights, &self.tail, self.shape_c, x)
    }

    /// True when `x` lies outside the unit cube the model was fitted on.
    pub fn is_extrapolating(&self, x: &[f64]) -> bool {
        x.iter().any(|v| !(0.0..=1.0).contains(v))
    }
}

/// Factorized interpolation system for one set of centers.
struct RbfSystem {
    centers: Vec<Vec<f64>>,
    shape_c: f64,
    tail_len: usize,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    ridge: Option<f64>,
    condition_estimate: f64,
    inverse_diagonal: Option<Vec<f64>>,
}

fn mean_nearest_neighbor(points: &[Vec<f64>]) -> f64 {
    if points.len() < 2 {
        return 1.0;
    }
    let total: f64 = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    total / points.len() as f64
}

fn check_duplicates(points: &[Vec<f64>]) -> Result<()> {
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if points[i] == points[j] {
                return Err(Error::DuplicateCenters(i, j));
            }
        }
    }
    Ok(())
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Hager's estimate of ‖A⁻¹‖₁ for symmetric `A` from its LU factors.
fn inverse_norm1_estimate(lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>, n: usize) -> Option<f64> {
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut estimate = 0.0;
    for _ in 0..5 {
        let y = lu.solve(&x)?;
        estimate = y.iter().map(|v| v.abs()).sum::<f64>();
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let z = lu.solve(&xi)?;
        let (jmax, zmax) = z
            .iter()
            .enumerate()
            .map(|(j, v)| (j, v.abs()))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        if zmax <= z.dot(&x) {
            break;
        }
        x = DVector::zeros(n);
        x[jmax] = 1.0;
    }
    Some(estimate)
}

impl RbfSystem {
    fn new(points: &[Vec<f64>], policy: ShapePolicy, loo_limit: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::NotEnoughPoints { needed: 1, got: 0 });
        }
        check_duplicates(points)?;
        let shape_c = match policy {
            ShapePolicy::MeanNearestNeighbor => mean_nearest_neighbor(points),
            ShapePolicy::Fixed(c) => c,
        };
        if !(shape_c.is_finite() && shape_c > 0.0) {
            return Err(Error::Config(format!(
                "RBF shape parameter must be positive, got {shape_c}"
            )));
        }
        let n = points.len();
        let d = points[0].len();
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: points.iter().map(Vec::len).find(|&l| l != d).unwrap_or(d),
            });
        }
        let c2 = shape_c * shape_c;
        let monomial = |p: &[f64], k: usize| if k == 0 { 1.0 } else { p[k - 1] };
        let build = |tail_len: usize| {
            let m = n + tail_len;
            DMatrix::from_fn(m, m, |i, j| match (i < n, j < n) {
                (true, true) => multiquadric(&points[i], &points[j], c2),
                (true, false) => monomial(&points[i], j - n),
                (false, true) => monomial(&points[j], i - n),
                (false, false) => 0.0,
            })
        };
        let mut tail_len = if n >= d + 2 { d + 1 } else { 1 };
        let mut phi = build(tail_len);
        let mut lu = phi.clone().lu();
        if tail_len > 1 && !lu.is_invertible() {
            // Centers on a lower-dimensional affine subspace.
            tail_len = 1;
            phi = build(1);
            lu = phi.clone().lu();
        }
        let m = n + tail_len;
        let anorm = norm1(&phi);
        let mut ridge = None;
        let condition_estimate = inverse_norm1_estimate(&lu, m)
            .filter(|v| v.is_finite())
            .map(|inv| (anorm * inv).min(f64::MAX))
            .unwrap_or(f64::MAX);
        if condition_estimate > RIDGE_CONDITION_LIMIT {
            let lambda = 1e-10 * phi.trace() / n as f64;
            // Only the Φ block is shifted; the polynomial constraints stay exact.
            for i in 0..n {
                phi[(i, i)] += lambda;
            }
            lu = phi.clone().lu();
            ridge = Some(lambda);
        }
        if !lu.is_invertible() {
            return Err(Error::SingularSystem);
        }
        let inverse_diagonal = if n >= 2 && n <= loo_limit {
            lu.try_inverse()
                .map(|inv| inv.diagonal().iter().take(n).copied().collect())
        } else {
            None
        };
        Ok(Self {
            centers: points.to_vec(),
            shape_c,
            tail_len,
            lu,
            ridge,
            condition_estimate,
            inverse_diagonal,
        })
    }

    fn solve(&self, ys: &[f64]) -> Result<(Vec<f64>, Vec<f64>, FitStats)> {
        let n = self.centers.len();
        if ys.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: ys.len(),
            });
        }
        let rhs = DVector::from_iterator(
            n + self.tail_len,
            ys.iter().copied().chain(std::iter::repeat_n(0.0, self.tail_len)),
        );
        let w = self.lu.solve(&rhs).ok_or(Error::SingularSystem)?;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem);
        }
        let weights: Vec<f64> = w.iter().take(n).copied().collect();
        let tail: Vec<f64> = w.iter().skip(n).copied().collect();
        let max_training_residual = self
            .centers
            .iter()
            .zip(ys)
            .map(|(x, y)| (predict_with(&self.centers, &weights, &tail, self.shape_c, x) - y).abs())
            .fold(0.0, f64::max);
        // Rippa's closed form: the LOO residual at i is wᵢ / (A⁻¹)ᵢᵢ.
        let loo_rms = match &self.inverse_diagonal {
            Some(diag) => {
                let ss: f64 = weights.iter().zip(diag).map(|(w, d)| (w / d).powi(2)).sum();
                Some((ss / n as f64).sqrt())
            }
            None => None,
        };
        Ok((
            weights,
            tail,
            FitStats {
                max_training_residual,
                loo_rms,
                ridge: self.ridge,
                condition_estimate: self.condition_estimate,
            },
        ))
    }
}

/// Fits one response. `points` are normalized coordinates without duplicates.
pub fn fit_rbf(points: &[Vec<f64>], responses: &[f64], policy: ShapePolicy, name: &str) -> Result<RbfModel> {
    let system = RbfSystem::new(points, policy, LOO_MAX_CENTERS)?;
    let (weights, tail, fit_stats) = system.solve(responses)?;
    Ok(RbfModel {
        response_name: name.to_owned(),
        centers: system.centers,
        weights,
        tail,
        shape_c: system.shape_c,
        fit_stats,
    })
}

/// Leave-one-out RMS error of the interpolant (closed form, no refitting).
pub fn loo_error(points: &[Vec<f64>], responses: &[f64], policy: ShapePolicy) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::NotEnoughPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let system = RbfSystem::new(points, policy, usize::MAX)?;
    let (_, _, stats) = system.solve(responses)?;
    stats.loo_rms.ok_or(Error::SingularSystem)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseModel {
    pub name: String,
    pub weights: Vec<f64>,
    pub tail: Vec<f64>,
    pub fit_stats: FitStats,
}

/// Several responses fitted on shared centers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetamodelSet {
    pub centers: Vec<Vec<f64>>,
    pub shape_c: f64,
    pub models: Vec<ResponseModel>,
}

impl MetamodelSet {
    pub fn fit(points: &[Vec<f64>], responses: &[(String, Vec<f64>)], policy: ShapePolicy) -> Result<Self> {
        let system = RbfSystem::new(points, policy, LOO_MAX_CENTERS)?;
        let models = responses
            .iter()
            .map(|(name, ys)| {
                let (weights, tail, fit_stats) = system.solve(ys)?;
                Ok(ResponseModel {
                    name: name.clone(),
                    weights,
                    tail,
                    fit_stats,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            centers: system.centers,
            shape_c: system.shape_c,
            models,
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.models.iter().map(|m| m.name.as_str())
    }

    fn find(&self, name: &str) -> Result<&ResponseModel> {
        self.models
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::MissingResponse(name.to_owned()))
    }

    pub fn model(&self, name: &str) -> Result<RbfModel> {
        let m = self.find(name)?;
        Ok(RbfModel {
            response_name: m.name.clone(),
            centers: self.centers.clone(),
            weights: m.weights.clone(),
            tail: m.tail.clone(),
            shape_c: self.shape_c,
            fit_stats: m.fit_stats.clone(),
        })
    }

    pub fn predict(&self, name: &str, x: &[f64]) -> Result<f64> {
        let m = self.find(name)?;
        Ok(predict_with(&self.centers, &m.weights, &m.tail, self.shape_c, x))
    }

    /// `Σ coef·model(name)` as a single model (exact: weights combine linearly).
    pub fn linear_combination(&self, name: &str, terms: &[(String, f64)]) -> Result<RbfModel> {
        let mut weights = vec![0.0; self.centers.len()];
        let mut residual_bound = 0.0;
        let mut tail = vec![0.0; self.models.first().map_or(1, |m| m.tail.len())];
        for (term, coef) in terms {
            let m = self.find(term)?;
            for (w, wi) in weights.iter_mut().zip(&m.weights) {
                *w += coef * wi;
            }
            for (t, ti) in tail.iter_mut().zip(&m.tail) {
                *t += coef * ti;
            }
            residual_bound += coef.abs() * m.fit_stats.max_training_residual;
        }
        Ok(RbfModel {
            response_name: name.to_owned(),
            centers: self.centers.clone(),
            weights,
            tail,
            shape_c: self.shape_c,
            fit_stats: FitStats {
                // Upper bound from the term residuals.
                max_training_residual: residual_bound,
                loo_rms: None,
                ridge: self.models.first().and_then(|m| m.fit_stats.ridge),
                condition_estimate: self.models.first().map_or(0.0, |m| m.fit_stats.condition_estimate),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
    }

    /// Leave-one-out by explicit refitting; independent of the closed form.
    fn loo_by_refit(points: &[Vec<f64>], ys: &[f64], c: f64) -> f64 {
        let mut ss = 0.0;
        for i in 0..points.len() {
            let p: Vec<Vec<f64>> = points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, x)| x.clone())
                .collect();
            let y: Vec<f64> = ys
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| *v)
                .collect();
            let m = fit_rbf(&p, &y, ShapePolicy::Fixed(c), "r").unwrap();
            ss += (m.predict(&points[i]) - ys[i]).powi(2);
        }
        (ss / points.len() as f64).sqrt()
    }

    #[test]
    fn single_point_model() {
        let m = fit_rbf(&[vec![0.3, 0.7]], &[5.0], ShapePolicy::default(), "y").unwrap();
        assert!((m.predict(&[0.3, 0.7]) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn constant_response_is_reproduced() {
        let pts = random_points(10, 3, 1);
        let m = fit_rbf(&pts, &[3.0; 10], ShapePolicy::default(), "y").unwrap();
        for p in &pts {
            assert!((m.predict(p) - 3.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn quadratic_at_three_centers() {
        let pts = vec![vec![0.0], vec![0.5], vec![1.0]];
        let ys = [0.0, 0.25, 1.0];
        let m = fit_rbf(&pts, &ys, ShapePolicy::default(), "y").unwrap();
        for (p, y) in pts.iter().zip(ys) {
            assert!((m.predict(p) - y).abs() <= 1e-8);
        }
    }

    #[test]
    fn symmetric_data_gives_symmetric_predictions() {
        let pts = vec![vec![0.0], vec![0.2], vec![0.5], vec![0.8], vec![1.0]];
        let f = |x: f64| (x - 0.5).powi(2) + 1.0;
        let ys: Vec<f64> = pts.iter().map(|p| f(p[0])).collect();
        let m = fit_rbf(&pts, &ys, ShapePolicy::default(), "y").unwrap();
        for delta in [0.05, 0.13, 0.3, 0.45] {
            assert!((m.predict(&[0.5 - delta]) - m.predict(&[0.5 + delta])).abs() <= 1e-9);
        }
    }

    #[test]
    fn linear_two_centers_small_shape() {
        // Hand solution of the 2×2 system for c → 0: w ≈ (2, 0), midpoint ≈ 1.
        let m = fit_rbf(&[vec![0.0], vec![1.0]], &[0.0, 2.0], ShapePolicy::Fixed(1e-3), "y").unwrap();
        assert!((m.predict(&[0.5]) - 1.0).abs() <= 0.05);
    }

    #[test]
    fn duplicate_centers_rejected() {
        let r = fit_rbf(&[vec![0.1], vec![0.1]], &[1.0, 2.0], ShapePolicy::default(), "y");
        assert!(matches!(r, Err(Error::DuplicateCenters(0, 1))));
    }

    #[test]
    fn loo_linear_small() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 / 4.0]).collect();
        let ys: Vec<f64> = pts.iter().map(|p| 3.0 * p[0] - 1.0).collect();
        let loo = loo_error(&pts, &ys, ShapePolicy::default()).unwrap();
        assert!(loo < 0.05 * 3.0, "loo {loo}");
    }

    #[test]
    fn loo_constant_is_zero() {
        let pts = random_points(12, 2, 4);
        let loo = loo_error(&pts, &[7.5; 12], ShapePolicy::default()).unwrap();
        assert!(loo <= 1e-8, "loo {loo}");
    }

    #[test]
    fn loo_closed_form_matches_refitting() {
        let pts = random_points(15, 2, 9);
        let ys: Vec<f64> = pts.iter().map(|p| (3.0 * p[0]).sin() + p[1] * p[1]).collect();
        let c = mean_nearest_neighbor(&pts);
        let closed = loo_error(&pts, &ys, ShapePolicy::Fixed(c)).unwrap();
        let refit = loo_by_refit(&pts, &ys, c);
        assert!((closed - refit).abs() <= 1e-6 * (1.0 + refit), "{closed} vs {refit}");
    }

    #[test]
    fn loo_pure_noise_near_standard_deviation() {
        // Monte Carlo mean of LOO/sd over fixed seeds.
        for d in [3, 5] {
            let mut ratio = 0.0;
            for seed in 0..20 {
                let pts = random_points(40, d, 100 + seed);
                let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
                let ys: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
                let mean = ys.iter().sum::<f64>() / 40.0;
                let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / 40.0).sqrt();
                ratio += loo_error(&pts, &ys, ShapePolicy::default()).unwrap() / sd / 20.0;
            }
            assert!((0.5..=2.0).contains(&ratio), "d={d}: mean LOO/sd {ratio}");
        }
    }

    #[test]
    fn metamodel_set_combination_is_exact() {
        let pts = random_points(20, 3, 5);
        let y1: Vec<f64> = pts.iter().map(|p| p[0] + p[1]).collect();
        let y2: Vec<f64> = pts.iter().map(|p| p[2] * p[2]).collect();
        let set = MetamodelSet::fit(&pts, &[("a".into(), y1), ("b".into(), y2)], ShapePolicy::default()).unwrap();
        let combo = set
            .linear_combination("s", &[("a".into(), 2.0), ("b".into(), -0.5)])
            .unwrap();
        for x in random_points(10, 3, 6) {
            let direct = 2.0 * set.predict("a", &x).unwrap() - 0.5 * set.predict("b", &x).unwrap();
            assert!((combo.predict(&x) - direct).abs() < 1e-9);
        }
        assert!(set.model("missing").is_err());
    }

    #[test]
    fn ridge_fallback_on_nearly_coincident_points() {
        let pts = vec![vec![0.0], vec![1e-9], vec![1.0]];
        let m = fit_rbf(&pts, &[0.0, 0.0, 1.0], ShapePolicy::Fixed(1.0), "y").unwrap();
        assert!(m.fit_stats.ridge.is_some());
        assert!(m.predict(&[1.0]).is_finite());
    }
}
