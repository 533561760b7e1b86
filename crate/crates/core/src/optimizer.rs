//! Hybrid constrained minimization: a real-coded genetic algorithm finds an
//! approximate global minimum, projected gradient descent refines it.
//!
//! Both stages work in normalized coordinates `[0, 1]^d` of the current
//! region and minimize the penalized objective `f + ρ·Σ v²`, where `v` are
//! scaled constraint violations. Discrete variables are categorical genes in
//! the GA and frozen during refinement.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::rng;
use crate::sampling::greedy_maximin_select;
use crate::space::{denormalize, normalize, DesignPoint, DesignSpace, Region};
use crate::surrogate::MetamodelSet;

/// Scaled violations at or below this count as satisfied.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Generations after which an infeasible best doubles the penalty factor.
pub const PENALTY_MILESTONES: [usize; 4] = [50, 100, 150, 200];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability; `None` means `1/d`.
    pub mutation_rate: Option<f64>,
    /// Gaussian mutation standard deviation, as a fraction of the range.
    pub mutation_sigma: f64,
    pub blend_alpha: f64,
    pub tournament_size: usize,
    pub penalty_factor: f64,
    pub refine_steps: usize,
    pub refine_tol: f64,
    /// Central-difference step in normalized coordinates.
    pub fd_step: f64,
    pub armijo_c: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 250,
            crossover_rate: 0.9,
            mutation_rate: None,
            mutation_sigma: 0.1,
            blend_alpha: 0.5,
            tournament_size: 2,
            penalty_factor: 1e3,
            refine_steps: 200,
            refine_tol: 1e-6,
            fd_step: 1e-4,
            armijo_c: 1e-4,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("optimizer: {m}")));
        if self.population < 4 {
            return bad("population must be at least 4");
        }
        if self.generations < 1 {
            return bad("generations must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return bad("crossover_rate must lie in [0, 1]");
        }
        if let Some(r) = self.mutation_rate {
            if !(0.0..=1.0).contains(&r) {
                return bad("mutation_rate must lie in [0, 1]");
            }
        }
        if !(self.mutation_sigma >= 0.0 && self.blend_alpha >= 0.0) {
            return bad("mutation_sigma and blend_alpha must be non-negative");
        }
        if self.tournament_size < 1 {
            return bad("tournament_size must be at least 1");
        }
        if !(self.penalty_factor > 0.0 && self.fd_step > 0.0 && self.refine_tol >= 0.0) {
            return bad("penalty_factor and fd_step must be positive, refine_tol non-negative");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0, 1)");
        }
        Ok(())
    }
}

/// A constrained function over the unit cube.
pub trait Landscape: Sync {
    fn dim(&self) -> usize;

    /// Normalized levels of a discrete coordinate, `None` if continuous.
    fn levels(&self, _i: usize) -> Option<&[f64]> {
        None
    }

    /// Objective and scaled violations (`≥ 0`) at `x`.
    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>);
}

/// `f + ρ·Σ v²`.
pub fn penalized(f: f64, violations: &[f64], penalty_factor: f64) -> f64 {
    f + penalty_factor * violations.iter().map(|v| v * v).sum::<f64>()
}

/// Unconstrained closure over the unit cube.
pub struct FnLandscape<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Landscape for FnLandscape<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
        ((self.f)(x), Vec::new())
    }
}

/// Closure returning objective and violations.
pub struct ConstrainedFn<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync> Landscape for ConstrainedFn<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.f)(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub x: Vec<f64>,
    pub objective: f64,
    pub violations: Vec<f64>,
}

impl Candidate {
    fn new<L: Landscape + ?Sized>(land: &L, x: Vec<f64>) -> Self {
        let (objective, violations) = land.evaluate(&x);
        Self {
            x,
            objective,
            violations,
        }
    }

    pub fn penalized(&self, penalty_factor: f64) -> f64 {
        let p = penalized(self.objective, &self.violations, penalty_factor);
        if p.is_nan() {
            f64::INFINITY
        } else {
            p
        }
    }

    pub fn feasible(&self) -> bool {
        self.violations.iter().all(|v| *v <= FEASIBILITY_TOL)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaResult {
    pub best: Candidate,
    /// Penalty factor in force at the end.
    pub penalty_factor: f64,
    /// Best penalized value after each generation (initial population first).
    pub history: Vec<f64>,
    /// Generations at which the penalty factor was doubled.
    pub penalty_doublings: Vec<usize>,
}

fn evaluate_all<L: Landscape + ?Sized>(land: &L, xs: Vec<Vec<f64>>) -> Vec<Candidate> {
    xs.into_par_iter().map(|x| Candidate::new(land, x)).collect()
}

fn snap(x: f64, levels: &[f64]) -> f64 {
    let mut best = levels[0];
    for &l in levels {
        if (l - x).abs() < (best - x).abs() {
            best = l;
        }
    }
    best
}

fn best_index(pop: &[Candidate], penalty_factor: f64) -> usize {
    let mut best = 0;
    for (i, c) in pop.iter().enumerate() {
        if c.penalized(penalty_factor) < pop[best].penalized(penalty_factor) {
            best = i;
        }
    }
    best
}

fn initial_population<L: Landscape + ?Sized, R: Rng>(land: &L, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let d = land.dim();
    let pool: Vec<Vec<f64>> = (0..10 * n)
        .map(|_| {
            (0..d)
                .map(|i| match land.levels(i) {
                    Some(levels) => *levels.choose(rng).unwrap(),
                    None => rng.random::<f64>(),
                })
                .collect()
        })
        .collect();
    let sel = greedy_maximin_select(&pool, &[], n);
    let mut xs: Vec<Vec<f64>> = sel.indices.iter().map(|&i| pool[i].clone()).collect();
    // Coincident candidates (only with all-discrete spaces) stop the greedy pick early.
    while xs.len() < n {
        xs.push(pool[xs.len() % pool.len()].clone());
    }
    xs
}

/// Real-coded GA over the unit cube: size-k tournaments, BLX-α crossover,
/// Gaussian mutation, elitism of one.
pub fn ga_minimize<L: Landscape + ?Sized>(land: &L, config: &OptimizerConfig) -> Result<GaResult> {
    config.validate()?;
    let d = land.dim();
    let mut rng = rng::substream(config.seed, "ga", 0);
    let rate = config.mutation_rate.unwrap_or(1.0 / d.max(1) as f64);
    let normal = Normal::new(0.0, config.mutation_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut penalty = config.penalty_factor;
    let mut pop = evaluate_all(land, initial_population(land, config.population, &mut rng));
    let mut best = best_index(&pop, penalty);
    let mut history = vec![pop[best].penalized(penalty)];
    let mut doublings = Vec::new();
    for gen in 1..=config.generations {
        let tournament = |rng: &mut rand_chacha::ChaCha8Rng, pop: &[Candidate]| {
            let mut w = rng.random_range(0..pop.len());
            for _ in 1..config.tournament_size {
                let c = rng.random_range(0..pop.len());
                let (pc, pw) = (pop[c].penalized(penalty), pop[w].penalized(penalty));
                if pc < pw || (pc == pw && c < w) {
                    w = c;
                }
            }
            w
        };
        let mut children = Vec::with_capacity(config.population - 1);
        while children.len() + 1 < config.population {
            let a = &pop[tournament(&mut rng, &pop)].x;
            let b = &pop[tournament(&mut rng, &pop)].x;
            let cross = rng.random::<f64>() < config.crossover_rate;
            let mut child: Vec<f64> = (0..d)
                .map(|i| {
                    if !cross {
                        return a[i];
                    }
                    if land.levels(i).is_some() {
                        return if rng.random::<bool>() { a[i] } else { b[i] };
                    }
                    let (lo, hi) = (a[i].min(b[i]), a[i].max(b[i]));
                    let span = config.blend_alpha * (hi - lo);
                    if hi - lo > 0.0 || span > 0.0 {
                        rng.random_range(lo - span..=hi + span)
                    } else {
                        lo
                    }
                })
                .collect();
            for (i, g) in child.iter_mut().enumerate() {
                if rng.random::<f64>() < rate {
                    match land.levels(i) {
                        Some(levels) => *g = *levels.choose(&mut rng).unwrap(),
                        None => *g += normal.sample(&mut rng),
                    }
                }
                *g = match land.levels(i) {
                    Some(levels) => snap(*g, levels),
                    None => g.clamp(0.0, 1.0),
                };
            }
            children.push(child);
        }
        let elite = pop[best].clone();
        pop = std::iter::once(elite).chain(evaluate_all(land, children)).collect();
        if PENALTY_MILESTONES.contains(&gen) && !pop[best_index(&pop, penalty)].feasible() {
            penalty *= 2.0;
            doublings.push(gen);
        }
        best = best_index(&pop, penalty);
        history.push(pop[best].penalized(penalty));
    }
    Ok(GaResult {
        best: pop[best].clone(),
        penalty_factor: penalty,
        history,
        penalty_doublings: doublings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineResult {
    pub best: Candidate,
    pub start_penalized: f64,
    pub end_penalized: f64,
    pub steps: usize,
}

/// Central-difference gradient; coordinates in `frozen` get zero.
fn gradient<L: Landscape + ?Sized>(land: &L, x: &[f64], penalty: f64, h: f64, frozen: &[bool]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            if frozen[i] {
                return 0.0;
            }
            let (mut lo, mut hi) = (x.to_vec(), x.to_vec());
            hi[i] = (x[i] + h).min(1.0);
            lo[i] = (x[i] - h).max(0.0);
            let span = hi[i] - lo[i];
            if span <= 0.0 {
                return 0.0;
            }
            let fh = Candidate::new(land, hi).penalized(penalty);
            let fl = Candidate::new(land, lo).penalized(penalty);
            (fh - fl) / span
        })
        .collect()
}

fn project(x: &[f64], g: &[f64], t: f64) -> Vec<f64> {
    x.iter().zip(g).map(|(xi, gi)| (xi - t * gi).clamp(0.0, 1.0)).collect()
}

/// Projected gradient descent with Armijo backtracking on the penalized
/// objective. Never returns a worse point than `start`.
pub fn gradient_refine<L: Landscape + ?Sized>(
    land: &L,
    start: &[f64],
    penalty_factor: f64,
    config: &OptimizerConfig,
) -> RefineResult {
    let frozen: Vec<bool> = (0..land.dim()).map(|i| land.levels(i).is_some()).collect();
    let mut cur = Candidate::new(land, start.iter().map(|v| v.clamp(0.0, 1.0)).collect());
    let start_penalized = cur.penalized(penalty_factor);
    let mut f = start_penalized;
    let mut t: f64 = 1.0;
    let mut steps = 0;
    while steps < config.refine_steps && f.is_finite() {
        let g = gradient(land, &cur.x, penalty_factor, config.fd_step, &frozen);
        let pg = project(&cur.x, &g, 1.0);
        let pg_norm = pg.iter().zip(&cur.x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if pg_norm < config.refine_tol {
            break;
        }
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // Cap the first trial step at the cube width.
        t = t.min(1.0 / gmax);
        let mut accepted = None;
        while t > 1e-16 {
            let x = project(&cur.x, &g, t);
            let decrease: f64 = g
                .iter()
                .zip(x.iter().zip(&cur.x))
                .map(|(gi, (a, b))| gi * (a - b))
                .sum();
            let cand = Candidate::new(land, x);
            let fc = cand.penalized(penalty_factor);
            if fc < f && fc <= f + config.armijo_c * decrease {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, fc)) => {
                cur = cand;
                f = fc;
                t *= 2.0;
                steps += 1;
            }
            None => break,
        }
    }
    assert!(
        f <= start_penalized || start_penalized.is_nan(),
        "refinement increased the objective"
    );
    RefineResult {
        best: cur,
        start_penalized,
        end_penalized: f,
        steps,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    /// Normalized coordinates of the refined optimum.
    pub x: Vec<f64>,
    pub objective: f64,
    pub violations: Vec<f64>,
    pub feasible: bool,
    pub ga_best: f64,
    pub refined_gain: f64,
    pub penalty_factor: f64,
    pub ga_history: Vec<f64>,
}

/// GA followed by gradient refinement.
pub fn hybrid_optimize<L: Landscape + ?Sized>(land: &L, config: &OptimizerConfig) -> Result<Optimum> {
    let ga = ga_minimize(land, config)?;
    let refined = gradient_refine(land, &ga.best.x, ga.penalty_factor, config);
    let ga_best = ga.best.penalized(ga.penalty_factor);
    Ok(Optimum {
        feasible: refined.best.feasible(),
        x: refined.best.x,
        objective: refined.best.objective,
        violations: refined.best.violations,
        ga_best,
        refined_gain: ga_best - refined.end_penalized,
        penalty_factor: ga.penalty_factor,
        ga_history: ga.history,
    })
}

/// Problem objective and constraints predicted by metamodels, plus the
/// sampling-rule penalty of the resolved design as one extra violation.
pub struct MetamodelLandscape<'a> {
    pub space: &'a DesignSpace,
    pub region: &'a Region,
    pub models: &'a MetamodelSet,
    pub problem: &'a Problem,
    levels: Vec<Option<Vec<f64>>>,
}

impl<'a> MetamodelLandscape<'a> {
    pub fn new(
        space: &'a DesignSpace,
        region: &'a Region,
        models: &'a MetamodelSet,
        problem: &'a Problem,
    ) -> Result<Self> {
        for k in problem.keys() {
            if !models.names().any(|n| n == k) {
                return Err(Error::MissingResponse(k.clone()));
            }
        }
        let levels = (0..space.dim())
            .map(|i| {
                space.sampled_spec(i).levels().map(|ls| {
                    let (c, h) = (region.center[i], region.half_range[i]);
                    ls.iter().map(|l| (l - (c - h)) / (2.0 * h)).collect()
                })
            })
            .collect();
        Ok(Self {
            space,
            region,
            models,
            problem,
            levels,
        })
    }

    /// Design values of normalized `x`.
    pub fn design(&self, x: &[f64]) -> Vec<f64> {
        denormalize(x, self.region, self.space)
    }

    /// Model input: the design normalized against the region the models were fitted on.
    fn model_input(&self, values: &[f64]) -> Vec<f64> {
        normalize(values, self.region)
    }
}

impl Landscape for MetamodelLandscape<'_> {
    fn dim(&self) -> usize {
        self.space.dim()
    }

    fn levels(&self, i: usize) -> Option<&[f64]> {
        self.levels[i].as_deref()
    }

    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let values = self.design(x);
        let input = self.model_input(&values);
        let keys: Vec<f64> = self
            .problem
            .keys()
            .iter()
            .map(|k| self.models.predict(k, &input).unwrap_or(f64::NAN))
            .collect();
        let a = self.problem.combine(&keys);
        let rule = match self.space.point(values, 0, 0) {
            Ok(p) => self.space.check(&p).penalty().sqrt(),
            Err(_) => 1.0,
        };
        let mut violations = a.violations;
        violations.push(rule);
        (a.objective, violations)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimumReport {
    pub point: DesignPoint,
    pub predicted_objective: f64,
    /// Problem constraints followed by the sampling-rule violation.
    pub scaled_violations: Vec<f64>,
    pub feasible: bool,
    pub ga_best: f64,
    pub refined_gain: f64,
}

/// Hybrid optimization of `problem` over metamodels fitted in the normalized
/// coordinates of `region`.
pub fn optimize_models(
    space: &DesignSpace,
    region: &Region,
    models: &MetamodelSet,
    problem: &Problem,
    config: &OptimizerConfig,
    id: u64,
    iteration: u32,
) -> Result<OptimumReport> {
    let land = MetamodelLandscape::new(space, region, models, problem)?;
    let opt = hybrid_optimize(&land, config)?;
    Ok(OptimumReport {
        point: space.point(land.design(&opt.x), id, iteration)?,
        predicted_objective: opt.objective,
        scaled_violations: opt.violations,
        feasible: opt.feasible,
        ga_best: opt.ga_best,
        refined_gain: opt.refined_gain,
    })
}
