//! Maximin space filling.
//!
//! A pool of `pool_factor · n` feasible candidates is drawn uniformly from
//! the region by rejection sampling; points are then picked greedily, each
//! maximizing its minimum distance to the prior points and the points picked
//! so far. Distances are Euclidean in region-normalized coordinates.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::space::{normalize, DesignPoint, DesignSpace, FeasibilityReport, Region};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingOptions {
    pub pool_factor: usize,
    /// Consecutive rejected draws tolerated before giving up.
    pub max_rejects: usize,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            pool_factor: 100,
            max_rejects: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub points: Vec<DesignPoint>,
    /// Ids of prior points that acted as occupied sites.
    pub prior_points_used: Vec<u64>,
    pub seed: u64,
    /// Minimum normalized distance of each pick at the time it was made.
    pub selection_distances: Vec<f64>,
}

/// Result of the greedy maximin pass over a fixed pool.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy maximin choice of up to `n` pool members given fixed `sites`.
///
/// With no sites, the first pick is the candidate farthest from the unit-cube
/// center. Ties go to the lowest pool index. Picking stops early if every
/// remaining candidate coincides with an occupied site.
pub fn greedy_maximin_select(pool: &[Vec<f64>], sites: &[Vec<f64>], n: usize) -> Selection {
    let mut min_d2: Vec<f64> = pool
        .iter()
        .map(|c| sites.iter().map(|s| dist2(c, s)).fold(f64::INFINITY, f64::min))
        .collect();
    let mut taken = vec![false; pool.len()];
    let mut sel = Selection {
        indices: Vec::with_capacity(n),
        distances: Vec::with_capacity(n),
    };
    while sel.indices.len() < n.min(pool.len()) {
        let no_sites = sel.indices.is_empty() && sites.is_empty();
        let score = |i: usize| {
            if no_sites {
                let center = vec![0.5; pool[i].len()];
                dist2(&pool[i], &center)
            } else {
                min_d2[i]
            }
        };
        let mut best: Option<(usize, f64)> = None;
        for i in 0..pool.len() {
            if taken[i] {
                continue;
            }
            let s = score(i);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        let Some((pick, _)) = best else { break };
        if !no_sites && min_d2[pick] <= 0.0 {
            break;
        }
        taken[pick] = true;
        sel.indices.push(pick);
        sel.distances.push(min_d2[pick].sqrt());
        for i in 0..pool.len() {
            if !taken[i] {
                min_d2[i] = min_d2[i].min(dist2(&pool[i], &pool[pick]));
            }
        }
    }
    sel
}

/// Uniform draw inside `region`; discrete variables pick among the levels
/// the region covers.
pub fn draw_uniform<R: Rng>(rng: &mut R, space: &DesignSpace, region: &Region) -> Vec<f64> {
    let (lower, upper) = (region.lower(), region.upper());
    (0..space.dim())
        .map(|i| {
            let spec = space.sampled_spec(i);
            match spec.levels() {
                Some(levels) => {
                    let inside: Vec<f64> = levels
                        .iter()
                        .copied()
                        .filter(|l| *l >= lower[i] - 1e-12 && *l <= upper[i] + 1e-12)
                        .collect();
                    let choices = if inside.is_empty() { levels.to_vec() } else { inside };
                    *choices.choose(rng).unwrap()
                }
                None => rng.random_range(lower[i]..=upper[i]),
            }
        })
        .collect()
}

/// Draws `count` feasible candidates by rejection sampling.
pub fn feasible_pool<R, F>(
    rng: &mut R,
    space: &DesignSpace,
    region: &Region,
    count: usize,
    max_rejects: usize,
    feasible: &F,
) -> Result<Vec<DesignPoint>>
where
    R: Rng,
    F: Fn(&DesignPoint) -> FeasibilityReport,
{
    let mut pool = Vec::with_capacity(count);
    let mut rejects = 0usize;
    let mut draws = 0usize;
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    while pool.len() < count {
        draws += 1;
        let values = draw_uniform(rng, space, region);
        let verdict = match space.point(values, 0, 0) {
            Ok(p) => {
                let report = feasible(&p);
                if report.feasible {
                    Ok(p)
                } else {
                    Err(report.violations.into_iter().map(|v| v.constraint).collect::<Vec<_>>())
                }
            }
            Err(e) => Err(vec![format!("unresolvable: {e}")]),
        };
        match verdict {
            Ok(p) => {
                pool.push(p);
                rejects = 0;
            }
            Err(names) => {
                for n in names {
                    *tally.entry(n).or_default() += 1;
                }
                rejects += 1;
                if rejects >= max_rejects {
                    let dominant = tally
                        .iter()
                        .max_by_key(|(_, c)| **c)
                        .map(|(n, _)| n.clone())
                        .unwrap_or_default();
                    return Err(Error::InfeasibleSpace { draws, dominant });
                }
            }
        }
    }
    Ok(pool)
}

/// Space-filling selection of `n` new points inside `region`.
///
/// Prior points inside the region are fixed occupied sites. New points get
/// ids `next_id, next_id + 1, …` and the given iteration index.
#[allow(clippy::too_many_arguments)]
pub fn maximin_fill<F>(
    space: &DesignSpace,
    region: &Region,
    n: usize,
    prior: &[DesignPoint],
    feasible: &F,
    seed: u64,
    options: &SamplingOptions,
    next_id: u64,
    iteration: u32,
) -> Result<SamplePlan>
where
    F: Fn(&DesignPoint) -> FeasibilityReport,
{
    if n == 0 {
        return Err(Error::NotEnoughPoints { needed: 1, got: 0 });
    }
    let mut rng = rng::substream(seed, "sampling", u64::from(iteration));
    let pool_size = (options.pool_factor.max(1)) * n;
    let pool = feasible_pool(&mut rng, space, region, pool_size, options.max_rejects, feasible)?;
    let pool_norm: Vec<Vec<f64>> = pool.iter().map(|p| normalize(&p.values, region)).collect();
    let inside: Vec<&DesignPoint> = prior.iter().filter(|p| region.contains(&p.values, 1e-12)).collect();
    let sites: Vec<Vec<f64>> = inside.iter().map(|p| normalize(&p.values, region)).collect();
    let sel = greedy_maximin_select(&pool_norm, &sites, n);
    let points = sel
        .indices
        .iter()
        .enumerate()
        .map(|(k, &i)| DesignPoint {
            id: next_id + k as u64,
            iteration,
            ..pool[i].clone()
        })
        .collect();
    Ok(SamplePlan {
        points,
        prior_points_used: inside.iter().map(|p| p.id).collect(),
        seed,
        selection_distances: sel.distances,
    })
}
