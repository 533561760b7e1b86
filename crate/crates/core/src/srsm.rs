//! The sequential response surface loop.
//!
//! Each iteration samples the current region, evaluates the samples, fits
//! one RBF per problem key on every successful evaluation near the region,
//! optimizes the fitted problem, verifies the predicted optimum with one
//! true evaluation, checks termination and shrinks or pans the region.
//!
//! Randomness comes from named substreams of the master seed indexed by the
//! iteration, so a run stopped after any iteration and resumed from its
//! persisted state reproduces the uninterrupted run exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluators::{Evaluator, ResponseSet};
use crate::optimizer::{optimize_models, OptimizerConfig, OptimumReport, FEASIBILITY_TOL};
use crate::problem::{Assessment, Problem};
use crate::rng;
use crate::sampling::{maximin_fill, SamplingOptions};
use crate::space::{normalize, DesignPoint, DesignSpace, Region};
use crate::surrogate::{FitStats, MetamodelSet, ShapePolicy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerminationConfig {
    pub tol_p: f64,
    pub tol_f: f64,
    pub max_iterations: u32,
}

impl Default for TerminationConfig {
    fn default() -> Self {
        Self {
            tol_p: 0.01,
            tol_f: 0.01,
            max_iterations: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainReduction {
    pub gamma_osc: f64,
    pub gamma_pan: f64,
    pub gamma_shrink: f64,
    /// `|d|` at or above which the optimum counts as on the boundary.
    pub pan_threshold: f64,
    /// Minimum half range as a fraction of the initial range.
    pub resolution_floor: f64,
}

impl Default for DomainReduction {
    fn default() -> Self {
        Self {
            gamma_osc: 0.6,
            gamma_pan: 1.0,
            gamma_shrink: 0.75,
            pan_threshold: 0.95,
            resolution_floor: 0.005,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrsmConfig {
    /// Samples per iteration; `None` picks the preset default.
    pub samples_per_iteration: Option<usize>,
    pub termination: TerminationConfig,
    pub domain_reduction: DomainReduction,
    pub optimizer: OptimizerConfig,
    pub sampling: SamplingOptions,
    pub shape: ShapePolicy,
    /// Prior points within this multiple of the region join the fit.
    pub reuse_factor: f64,
    pub seed: u64,
    /// Concurrent evaluations; 0 uses all cores.
    pub parallelism: usize,
}

impl Default for SrsmConfig {
    fn default() -> Self {
        Self {
            samples_per_iteration: None,
            termination: TerminationConfig::default(),
            domain_reduction: DomainReduction::default(),
            optimizer: OptimizerConfig::default(),
            sampling: SamplingOptions::default(),
            shape: ShapePolicy::default(),
            reuse_factor: 1.2,
            seed: 0,
            parallelism: 0,
        }
    }
}

/// Default batch size of a design space.
pub fn default_samples(space: &DesignSpace) -> usize {
    let n = match space.name() {
        "bone_inferior" | "bone_superior" => 125,
        "single_articulation" => 30,
        "dual_articulation" => 100,
        _ => 20,
    };
    n.max(space.dim() + 1)
}

impl SrsmConfig {
    pub fn samples_for(&self, space: &DesignSpace) -> usize {
        self.samples_per_iteration.unwrap_or_else(|| default_samples(space))
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.termination;
        if !(t.tol_p >= 0.0 && t.tol_f >= 0.0) || t.max_iterations < 1 {
            return Err(Error::Config(
                "termination: tolerances ≥ 0 and max_iterations ≥ 1".into(),
            ));
        }
        let d = &self.domain_reduction;
        for (name, g) in [
            ("gamma_osc", d.gamma_osc),
            ("gamma_pan", d.gamma_pan),
            ("gamma_shrink", d.gamma_shrink),
        ] {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::Config(format!("domain_reduction.{name} must lie in (0, 1]")));
            }
        }
        if !(d.resolution_floor > 0.0 && d.resolution_floor <= 0.5) {
            return Err(Error::Config(
                "domain_reduction.resolution_floor must lie in (0, 0.5]".into(),
            ));
        }
        if !(self.reuse_factor >= 1.0) {
            return Err(Error::Config("reuse_factor must be at least 1".into()));
        }
        if self.samples_per_iteration == Some(0) {
            return Err(Error::Config("samples_per_iteration must be positive".into()));
        }
        self.optimizer.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    DesignChange,
    ObjectiveChange,
    MaxIterations,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::DesignChange => "design_change",
            StopReason::ObjectiveChange => "objective_change",
            StopReason::MaxIterations => "max_iterations",
        }
    }
}

/// One iteration's contribution to the termination test.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub design: Vec<f64>,
    /// Verified objective; `None` if the verification run failed.
    pub objective: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminationCheck {
    /// `‖p⁽ᵏ⁾ − p⁽ᵏ⁻¹⁾‖ / ‖Ω‖`.
    pub design_change: Option<f64>,
    /// `|f⁽ᵏ⁾ − f⁽ᵏ⁻¹⁾| / |f⁽ᵏ⁻¹⁾|`, absolute when `f⁽ᵏ⁻¹⁾ = 0`.
    pub objective_change: Option<f64>,
    pub stop: Option<StopReason>,
}

pub fn design_change(p: &[f64], prev: &[f64], range_norm: f64) -> f64 {
    p.iter().zip(prev).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / range_norm
}

pub fn objective_change(f: f64, prev: f64) -> f64 {
    if prev == 0.0 {
        (f - prev).abs()
    } else {
        (f - prev).abs() / prev.abs()
    }
}

/// Tolerance tests on the last two steps; `k = steps.len()`.
pub fn check_termination(steps: &[Step], range_norm: f64, cfg: &TerminationConfig) -> TerminationCheck {
    let k = steps.len();
    let (mut dc, mut oc) = (None, None);
    if k >= 2 {
        let (cur, prev) = (&steps[k - 1], &steps[k - 2]);
        dc = Some(design_change(&cur.design, &prev.design, range_norm));
        if let (Some(f), Some(fp)) = (cur.objective, prev.objective) {
            oc = Some(objective_change(f, fp));
        }
    }
    let stop = if dc.is_some_and(|v| cfg.tol_p > v) {
        Some(StopReason::DesignChange)
    } else if oc.is_some_and(|v| cfg.tol_f > v) {
        Some(StopReason::ObjectiveChange)
    } else if k >= cfg.max_iterations as usize {
        Some(StopReason::MaxIterations)
    } else {
        None
    };
    TerminationCheck {
        design_change: dc,
        objective_change: oc,
        stop,
    }
}

/// Next region around `optimum`. `prev_d` is the previous iteration's
/// relative position vector (`None` in the first iteration). Returns the new
/// region and this iteration's `d`.
pub fn reduce_domain(
    region: &Region,
    optimum: &[f64],
    prev_d: Option<&[f64]>,
    omega: &Region,
    discrete: &[bool],
    params: &DomainReduction,
) -> (Region, Vec<f64>) {
    let n = region.dim();
    let mut center = region.center.clone();
    let mut half = region.half_range.clone();
    let mut d = vec![0.0; n];
    for i in 0..n {
        if discrete[i] {
            continue;
        }
        d[i] = ((optimum[i] - region.center[i]) / region.half_range[i]).clamp(-1.0, 1.0);
        let oscillating = prev_d.is_some_and(|p| d[i] * p[i] < 0.0);
        let gamma = if oscillating {
            params.gamma_osc
        } else if d[i].abs() >= params.pan_threshold {
            params.gamma_pan
        } else {
            params.gamma_shrink
        };
        let floor = params.resolution_floor * 2.0 * omega.half_range[i];
        half[i] = (region.half_range[i] * gamma).max(floor).min(omega.half_range[i]);
        let (lo, hi) = (
            omega.center[i] - omega.half_range[i],
            omega.center[i] + omega.half_range[i],
        );
        center[i] = optimum[i].clamp(lo + half[i], hi - half[i]);
    }
    (
        Region {
            center,
            half_range: half,
        },
        d,
    )
}

/// One true evaluation and its assessment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub point: DesignPoint,
    pub responses: ResponseSet,
    /// Problem key values; `None` if the evaluation failed.
    pub keys: Option<Vec<f64>>,
    pub assessment: Option<Assessment>,
    /// Sampling rules satisfied by the design.
    pub buildable: bool,
}

impl Evaluation {
    pub fn objective(&self) -> Option<f64> {
        self.assessment.as_ref().map(|a| a.objective)
    }

    /// Successful, within all constraints and buildable.
    pub fn feasible(&self) -> bool {
        self.buildable
            && self
                .assessment
                .as_ref()
                .is_some_and(|a| a.violations.iter().all(|v| *v <= FEASIBILITY_TOL))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub response: String,
    pub stats: FitStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: u32,
    pub region: Region,
    pub sampling_seed: u64,
    pub prior_points_used: Vec<u64>,
    pub samples: Vec<Evaluation>,
    pub n_fit_points: usize,
    pub fits: Vec<ModelFit>,
    pub shape_c: f64,
    pub optimum: OptimumReport,
    pub verified: Evaluation,
    /// Lowest feasible objective over the baseline and every evaluation so far.
    pub best_objective: Option<f64>,
    pub best_id: Option<u64>,
    pub termination: TerminationCheck,
    pub next_region: Region,
    /// Relative position of the optimum in `region`.
    pub d: Vec<f64>,
}

impl IterationRecord {
    pub fn failed_ids(&self) -> Vec<u64> {
        self.samples
            .iter()
            .filter(|e| !e.responses.is_ok())
            .map(|e| e.point.id)
            .collect()
    }
}

/// Everything needed to continue a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub baseline: Evaluation,
    pub history: Vec<IterationRecord>,
}

impl RunState {
    pub fn stop_reason(&self) -> Option<StopReason> {
        self.history.last().and_then(|r| r.termination.stop)
    }

    pub fn is_finished(&self) -> bool {
        self.stop_reason().is_some()
    }

    fn next_id(&self) -> u64 {
        let last = self
            .history
            .last()
            .map_or(self.baseline.point.id, |r| r.verified.point.id);
        last + 1
    }

    fn evaluations(&self) -> impl Iterator<Item = &Evaluation> {
        std::iter::once(&self.baseline).chain(
            self.history
                .iter()
                .flat_map(|r| r.samples.iter().chain(std::iter::once(&r.verified))),
        )
    }

    pub fn best(&self) -> Option<&Evaluation> {
        let mut best: Option<&Evaluation> = None;
        for e in self.evaluations().filter(|e| e.feasible()) {
            if best.is_none_or(|b| e.objective().unwrap() < b.objective().unwrap()) {
                best = Some(e);
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub baseline_objective: Option<f64>,
    pub best: Option<Evaluation>,
    pub best_objective: Option<f64>,
    pub termination: Option<StopReason>,
    pub iterations: u32,
    /// `(f_baseline − f_best)/|f_baseline|·100`.
    pub improvement_percent: Option<f64>,
}

pub fn improvement_percent(baseline: f64, best: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        (baseline - best) / baseline.abs() * 100.0
    }
}

impl RunResult {
    pub fn from_state(state: &RunState) -> Self {
        let best = state.best().cloned();
        let baseline_objective = state.baseline.feasible().then(|| state.baseline.objective()).flatten();
        let best_objective = best.as_ref().and_then(Evaluation::objective);
        Self {
            improvement_percent: baseline_objective
                .zip(best_objective)
                .map(|(b, f)| improvement_percent(b, f)),
            baseline_objective,
            best,
            best_objective,
            termination: state.stop_reason(),
            iterations: state.history.len() as u32,
        }
    }
}

/// A space, an evaluator and a problem under one configuration.
pub struct Srsm<'a> {
    pub space: &'a DesignSpace,
    pub evaluator: &'a dyn Evaluator,
    pub problem: &'a Problem,
    pub config: SrsmConfig,
    pool: rayon::ThreadPool,
}

impl<'a> Srsm<'a> {
    pub fn new(
        space: &'a DesignSpace,
        evaluator: &'a dyn Evaluator,
        problem: &'a Problem,
        config: SrsmConfig,
    ) -> Result<Self> {
        config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(Self {
            space,
            evaluator,
            problem,
            config,
            pool,
        })
    }

    pub fn evaluate(&self, point: DesignPoint) -> Evaluation {
        let responses = self.evaluator.evaluate(&point);
        let keys = if responses.is_ok() {
            self.problem.extract(&responses).ok()
        } else {
            None
        };
        let assessment = keys.as_ref().map(|k| self.problem.combine(k));
        let buildable = self.space.check(&point).feasible;
        Evaluation {
            point,
            responses,
            keys,
            assessment,
            buildable,
        }
    }

    pub fn evaluate_all(&self, points: Vec<DesignPoint>) -> Vec<Evaluation> {
        use rayon::prelude::*;
        self.pool
            .install(|| points.into_par_iter().map(|p| self.evaluate(p)).collect())
    }

    pub fn start(&self, baseline: Vec<f64>) -> Result<RunState> {
        let point = self.space.point(baseline, 0, 0)?;
        Ok(RunState {
            baseline: self.evaluate(point),
            history: Vec::new(),
        })
    }

    /// One model per problem key over the successful evaluations inside the
    /// reuse box around `region`, in `region`'s normalized coordinates.
    pub fn fit_models<'e>(
        &self,
        evaluations: impl Iterator<Item = &'e Evaluation>,
        region: &Region,
    ) -> Result<(MetamodelSet, usize)> {
        let reuse = region.scaled(self.config.reuse_factor);
        let mut xs: Vec<Vec<f64>> = Vec::new();
        let mut ys: Vec<Vec<f64>> = Vec::new();
        for e in evaluations {
            let Some(keys) = &e.keys else { continue };
            if !reuse.contains(&e.point.values, 1e-12) {
                continue;
            }
            let x = normalize(&e.point.values, region);
            if xs.contains(&x) {
                continue;
            }
            xs.push(x);
            ys.push(keys.clone());
        }
        let responses: Vec<(String, Vec<f64>)> = self
            .problem
            .keys()
            .iter()
            .enumerate()
            .map(|(j, name)| (name.clone(), ys.iter().map(|y| y[j]).collect()))
            .collect();
        Ok((MetamodelSet::fit(&xs, &responses, self.config.shape)?, xs.len()))
    }

    /// The metamodels of the last completed iteration, refitted from `state`.
    pub fn final_models(&self, state: &RunState) -> Result<Option<(MetamodelSet, Region)>> {
        let Some((last, earlier)) = state.history.split_last() else {
            return Ok(None);
        };
        let evaluations = std::iter::once(&state.baseline)
            .chain(
                earlier
                    .iter()
                    .flat_map(|r| r.samples.iter().chain(std::iter::once(&r.verified))),
            )
            .chain(last.samples.iter());
        let (models, _) = self.fit_models(evaluations, &last.region)?;
        Ok(Some((models, last.region.clone())))
    }

    /// Runs one iteration on `state` and appends its record.
    pub fn iterate(&self, state: &mut RunState) -> Result<()> {
        let omega = Region::full(self.space);
        let k = state.history.len() as u32 + 1;
        let region = state
            .history
            .last()
            .map_or_else(|| omega.clone(), |r| r.next_region.clone());
        let n = self.config.samples_for(self.space);
        let prior: Vec<DesignPoint> = state.evaluations().map(|e| e.point.clone()).collect();
        let feasible = |p: &DesignPoint| self.space.check(p);
        let plan = maximin_fill(
            self.space,
            &region,
            n,
            &prior,
            &feasible,
            self.config.seed,
            &self.config.sampling,
            state.next_id(),
            k,
        )?;
        let samples = self.evaluate_all(plan.points.clone());
        let ok = samples.iter().filter(|e| e.keys.is_some()).count();
        if ok == 0 {
            let reason = samples
                .first()
                .and_then(|e| e.responses.failure())
                .unwrap_or("no samples")
                .to_owned();
            return Err(Error::AllEvaluationsFailed(samples.len(), reason));
        }

        let (models, n_fit_points) = self.fit_models(state.evaluations().chain(samples.iter()), &region)?;

        let opt_config = OptimizerConfig {
            seed: rng::substream_seed(self.config.seed, "ga", u64::from(k)),
            ..self.config.optimizer.clone()
        };
        let next_id = plan.points.last().map_or(state.next_id(), |p| p.id + 1);
        let optimum = optimize_models(self.space, &region, &models, self.problem, &opt_config, next_id, k)?;
        let verified = self.evaluate(optimum.point.clone());

        let steps: Vec<Step> = state
            .history
            .iter()
            .map(|r| (r.optimum.point.values.clone(), r.verified.objective()))
            .chain(std::iter::once((optimum.point.values.clone(), verified.objective())))
            .map(|(design, objective)| Step { design, objective })
            .collect();
        let termination = check_termination(&steps, omega_norm(&omega), &self.config.termination);
        let discrete: Vec<bool> = (0..self.space.dim())
            .map(|i| self.space.sampled_spec(i).is_discrete())
            .collect();
        let (next_region, d) = reduce_domain(
            &region,
            &optimum.point.values,
            state.history.last().map(|r| r.d.as_slice()),
            &omega,
            &discrete,
            &self.config.domain_reduction,
        );
        let fits = models
            .models
            .iter()
            .map(|m| ModelFit {
                response: m.name.clone(),
                stats: m.fit_stats.clone(),
            })
            .collect();
        state.history.push(IterationRecord {
            k,
            region,
            sampling_seed: plan.seed,
            prior_points_used: plan.prior_points_used,
            samples,
            n_fit_points,
            fits,
            shape_c: models.shape_c,
            optimum,
            verified,
            best_objective: None,
            best_id: None,
            termination,
            next_region,
            d,
        });
        let best = state.best().map(|e| (e.objective().unwrap(), e.point.id));
        let last = state.history.last_mut().unwrap();
        last.best_objective = best.map(|b| b.0);
        last.best_id = best.map(|b| b.1);
        Ok(())
    }

    /// Iterates until termination, calling `persist` after every iteration.
    /// `stop_after` ends the call early (the state stays resumable).
    pub fn run<P>(&self, state: &mut RunState, stop_after: Option<u32>, mut persist: P) -> Result<RunResult>
    where
        P: FnMut(&RunState) -> Result<()>,
    {
        let mut done = 0;
        while !state.is_finished() && stop_after.is_none_or(|s| done < s) {
            self.iterate(state)?;
            persist(state)?;
            done += 1;
        }
        Ok(RunResult::from_state(state))
    }
}

/// `‖Ω‖`: Euclidean norm of the full range vector.
pub fn omega_norm(omega: &Region) -> f64 {
    omega.half_range.iter().map(|h| (2.0 * h).powi(2)).sum::<f64>().sqrt()
}

/// Two independent runs (e.g. the two bone interfaces) and one combined
/// re-evaluation of both best designs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinedResult {
    pub parts: Vec<RunResult>,
    pub final_evaluations: Vec<Evaluation>,
    /// Sum of the re-evaluated objectives; `None` if any part has no feasible best.
    pub combined_objective: Option<f64>,
    pub combined_baseline: Option<f64>,
}

pub fn split_then_combine(runs: &[(&Srsm<'_>, Vec<f64>)]) -> Result<CombinedResult> {
    let mut parts = Vec::new();
    let mut finals = Vec::new();
    let mut baseline_sum = Some(0.0);
    for (srsm, baseline) in runs {
        let mut state = srsm.start(baseline.clone())?;
        let result = srsm.run(&mut state, None, |_| Ok(()))?;
        baseline_sum = baseline_sum.zip(result.baseline_objective).map(|(a, b)| a + b);
        if let Some(best) = &result.best {
            finals.push(srsm.evaluate(best.point.clone()));
        }
        parts.push(result);
    }
    let combined = (finals.len() == runs.len())
        .then(|| finals.iter().map(Evaluation::objective).sum::<Option<f64>>())
        .flatten();
    Ok(CombinedResult {
        parts,
        final_evaluations: finals,
        combined_objective: combined,
        combined_baseline: baseline_sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluators::benchmark::{Benchmark, BenchmarkEvaluator, OBJECTIVE};
    use crate::problem::ObjectiveSpec;
    use crate::space::{SamplingRules, VariableSpec};
    use std::collections::BTreeMap;

    fn step(design: &[f64], f: f64) -> Step {
        Step {
            design: design.to_vec(),
            objective: Some(f),
        }
    }

    #[test]
    fn objective_tolerance_hand_case() {
        let cfg = TerminationConfig::default();
        let t = check_termination(&[step(&[0.0], 2.0), step(&[1.0], 1.985)], 1.0, &cfg);
        assert!((t.objective_change.unwrap() - 0.0075).abs() < 1e-12);
        assert_eq!(t.stop, Some(StopReason::ObjectiveChange));
    }

    #[test]
    fn identical_design_stops() {
        let t = check_termination(
            &[step(&[0.3, 0.4], 5.0), step(&[0.3, 0.4], 1.0)],
            2.0,
            &TerminationConfig::default(),
        );
        assert_eq!(t.design_change, Some(0.0));
        assert_eq!(t.stop, Some(StopReason::DesignChange));
    }

    #[test]
    fn first_iteration_never_stops_on_tolerance() {
        let t = check_termination(&[step(&[0.3], 1.0)], 1.0, &TerminationConfig::default());
        assert_eq!(t.stop, None);
        let cfg = TerminationConfig {
            max_iterations: 1,
            ..Default::default()
        };
        assert_eq!(
            check_termination(&[step(&[0.3], 1.0)], 1.0, &cfg).stop,
            Some(StopReason::MaxIterations)
        );
    }

    #[test]
    fn max_iterations_and_zero_previous_objective() {
        let steps: Vec<Step> = (0..50).map(|i| step(&[i as f64], 10.0 * i as f64)).collect();
        let t = check_termination(&steps, 1.0, &TerminationConfig::default());
        assert_eq!(t.stop, Some(StopReason::MaxIterations));
        let t = check_termination(
            &[step(&[0.0], 0.0), step(&[1.0], 0.005)],
            1.0,
            &TerminationConfig::default(),
        );
        assert_eq!(t.objective_change, Some(0.005));
        assert_eq!(t.stop, Some(StopReason::ObjectiveChange));
    }

    fn unit(n: usize) -> (Region, Vec<bool>) {
        (Region::new(vec![0.5; n], vec![0.5; n]).unwrap(), vec![false; n])
    }

    #[test]
    fn shrink_at_center() {
        let (omega, disc) = unit(1);
        let (r, d) = reduce_domain(&omega, &[0.5], Some(&[0.0]), &omega, &disc, &DomainReduction::default());
        assert_eq!(d, vec![0.0]);
        assert_eq!(r.half_range, vec![0.375]);
        assert_eq!(r.center, vec![0.5]);
    }

    #[test]
    fn pan_on_boundary() {
        let (omega, disc) = unit(1);
        let region = Region::new(vec![0.4], vec![0.2]).unwrap();
        let (r, d) = reduce_domain(&region, &[0.6], None, &omega, &disc, &DomainReduction::default());
        assert!((d[0] - 1.0).abs() < 1e-12);
        assert_eq!(r.half_range, vec![0.2]);
        assert!((r.center[0] - 0.6).abs() < 1e-15);
        let (r, _) = reduce_domain(&r, &[0.8], None, &omega, &disc, &DomainReduction::default());
        assert!((r.center[0] - 0.8).abs() < 1e-15);
        let (r, _) = reduce_domain(&r, &[1.0], None, &omega, &disc, &DomainReduction::default());
        assert!((r.center[0] - 0.8).abs() < 1e-15, "clipped by Ω: {:?}", r.center);
    }

    #[test]
    fn oscillation_shrinks_faster() {
        let (omega, disc) = unit(1);
        let region = Region::new(vec![0.5], vec![0.4]).unwrap();
        let (r, d) = reduce_domain(
            &region,
            &[0.7],
            Some(&[-0.5]),
            &omega,
            &disc,
            &DomainReduction::default(),
        );
        assert!((d[0] - 0.5).abs() < 1e-12);
        assert!((r.half_range[0] - 0.24).abs() < 1e-15);
    }

    #[test]
    fn resolution_floor_and_discrete() {
        let (omega, _) = unit(2);
        let tiny = Region::new(vec![0.5, 0.5], vec![0.004, 0.5]).unwrap();
        let (r, _) = reduce_domain(
            &tiny,
            &[0.5, 0.0],
            None,
            &omega,
            &[false, true],
            &DomainReduction::default(),
        );
        assert_eq!(r.half_range[0], 0.005);
        assert_eq!((r.center[1], r.half_range[1]), (0.5, 0.5));
    }

    fn bench_space(d: usize) -> DesignSpace {
        let vars = (0..d)
            .map(|i| VariableSpec::continuous(&format!("x{i}"), -2.0, 2.0))
            .collect();
        DesignSpace::new("bench", vars, BTreeMap::new(), SamplingRules::None).unwrap()
    }

    fn objective() -> Problem {
        Problem::new(
            vec![ObjectiveSpec::WeightedScalar {
                response: OBJECTIVE.into(),
                weight: 1.0,
                absolute: false,
            }],
            vec![],
        )
        .unwrap()
    }

    fn fast(samples: usize) -> SrsmConfig {
        SrsmConfig {
            samples_per_iteration: Some(samples),
            optimizer: OptimizerConfig {
                population: 40,
                generations: 60,
                ..Default::default()
            },
            sampling: SamplingOptions {
                pool_factor: 20,
                ..Default::default()
            },
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn sphere_converges_before_limit() {
        let space = bench_space(3);
        let ev = BenchmarkEvaluator::new(
            space.clone(),
            Benchmark::Sphere {
                center: vec![0.7, -0.4, 1.1],
                offset: 1.0,
            },
        )
        .unwrap();
        let problem = objective();
        let srsm = Srsm::new(&space, &ev, &problem, fast(20)).unwrap();
        let mut state = srsm.start(vec![-1.5, 1.5, -1.5]).unwrap();
        let r = srsm.run(&mut state, None, |_| Ok(())).unwrap();
        assert!(r.iterations < 50);
        assert_ne!(r.termination, Some(StopReason::MaxIterations));
        assert!(r.best_objective.unwrap() <= 1.01, "{:?}", r.best_objective);
        let best: Vec<f64> = state.history.iter().map(|h| h.best_objective.unwrap()).collect();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
        assert!(state
            .history
            .iter()
            .all(|h| h.region.is_inside(&Region::full(&space), 1e-12)));
    }

    #[test]
    fn first_iteration_beats_samples_on_quadratic() {
        let space = bench_space(2);
        let ev = BenchmarkEvaluator::new(
            space.clone(),
            Benchmark::Quadratic {
                center: vec![0.3, -0.6],
                scales: vec![1.0, 2.0],
            },
        )
        .unwrap();
        let problem = objective();
        let srsm = Srsm::new(&space, &ev, &problem, fast(15)).unwrap();
        let mut state = srsm.start(vec![0.0, 0.0]).unwrap();
        srsm.iterate(&mut state).unwrap();
        let rec = &state.history[0];
        let fs: Vec<f64> = rec.samples.iter().map(|e| e.objective().unwrap()).collect();
        let (lo, hi) = fs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(rec.verified.objective().unwrap() <= lo + 0.05 * (hi - lo));
    }

    struct HalfFailing(BenchmarkEvaluator);

    impl Evaluator for HalfFailing {
        fn name(&self) -> &str {
            "half_failing"
        }

        fn evaluate(&self, p: &DesignPoint) -> ResponseSet {
            if p.id % 2 == 0 {
                ResponseSet::failed("synthetic")
            } else {
                self.0.evaluate(p)
            }
        }
    }

    #[test]
    fn failures_are_recorded_not_fitted() {
        let space = bench_space(2);
        let inner = BenchmarkEvaluator::new(space.clone(), Benchmark::Constant { value: 2.0 }).unwrap();
        let ev = HalfFailing(inner);
        let problem = objective();
        let srsm = Srsm::new(&space, &ev, &problem, fast(10)).unwrap();
        let mut state = srsm.start(vec![0.0, 0.0]).unwrap();
        srsm.iterate(&mut state).unwrap();
        let rec = &state.history[0];
        let expected: Vec<u64> = rec
            .samples
            .iter()
            .map(|e| e.point.id)
            .filter(|id| id % 2 == 0)
            .collect();
        assert_eq!(rec.failed_ids(), expected);
        assert_eq!(rec.n_fit_points, 5);
    }

    #[test]
    fn all_failures_is_an_error() {
        struct Broken;
        impl Evaluator for Broken {
            fn name(&self) -> &str {
                "broken"
            }
            fn evaluate(&self, _: &DesignPoint) -> ResponseSet {
                ResponseSet::failed("boom")
            }
        }
        let space = bench_space(2);
        let problem = objective();
        let srsm = Srsm::new(&space, &Broken, &problem, fast(5)).unwrap();
        let mut state = srsm.start(vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            srsm.iterate(&mut state),
            Err(Error::AllEvaluationsFailed(5, _))
        ));
    }

    #[test]
    fn single_variable_smoke() {
        let space = bench_space(1);
        let ev = BenchmarkEvaluator::new(
            space.clone(),
            Benchmark::Sphere {
                center: vec![0.5],
                offset: 0.0,
            },
        )
        .unwrap();
        let problem = objective();
        let srsm = Srsm::new(&space, &ev, &problem, fast(5)).unwrap();
        let mut state = srsm.start(vec![-1.0]).unwrap();
        srsm.iterate(&mut state).unwrap();
        let x = state.history[0].optimum.point.values[0];
        assert!((-2.0..=2.0).contains(&x));
    }

    #[test]
    fn constant_function_stops_at_two_with_zero_improvement() {
        let space = bench_space(2);
        let ev = BenchmarkEvaluator::new(space.clone(), Benchmark::Constant { value: 3.0 }).unwrap();
        let problem = objective();
        let srsm = Srsm::new(&space, &ev, &problem, fast(8)).unwrap();
        let mut state = srsm.start(vec![0.0, 0.0]).unwrap();
        let r = srsm.run(&mut state, None, |_| Ok(())).unwrap();
        assert_eq!(r.iterations, 2);
        assert_eq!(r.termination, Some(StopReason::ObjectiveChange));
        assert_eq!(r.improvement_percent, Some(0.0));
    }

    #[test]
    fn zero_tolerances_run_to_the_limit() {
        let space = bench_space(2);
        let ev = BenchmarkEvaluator::new(space.clone(), Benchmark::Constant { value: 3.0 }).unwrap();
        let problem = objective();
        let mut cfg = fast(5);
        cfg.termination = TerminationConfig {
            tol_p: 0.0,
            tol_f: 0.0,
            max_iterations: 4,
        };
        let srsm = Srsm::new(&space, &ev, &problem, cfg).unwrap();
        let mut state = srsm.start(vec![0.0, 0.0]).unwrap();
        let r = srsm.run(&mut state, None, |_| Ok(())).unwrap();
        assert_eq!(r.iterations, 4);
        assert_eq!(r.termination, Some(StopReason::MaxIterations));
    }

    #[test]
    fn stop_and_resume_matches_uninterrupted() {
        let space = bench_space(2);
        let ev = BenchmarkEvaluator::new(space.clone(), Benchmark::Branin).unwrap();
        let problem = objective();
        let mut cfg = fast(8);
        cfg.termination.max_iterations = 5;
        cfg.termination.tol_p = 0.0;
        cfg.termination.tol_f = 0.0;
        let srsm = Srsm::new(&space, &ev, &problem, cfg.clone()).unwrap();
        let mut full = srsm.start(vec![0.0, 0.0]).unwrap();
        srsm.run(&mut full, None, |_| Ok(())).unwrap();

        let mut partial = srsm.start(vec![0.0, 0.0]).unwrap();
        srsm.run(&mut partial, Some(2), |_| Ok(())).unwrap();
        let json = serde_json::to_string(&partial).unwrap();
        let mut resumed: RunState = serde_json::from_str(&json).unwrap();
        let other = Srsm::new(&space, &ev, &problem, SrsmConfig { parallelism: 1, ..cfg }).unwrap();
        other.run(&mut resumed, None, |_| Ok(())).unwrap();
        assert_eq!(resumed, full);
    }
    #[test]
    fn final_models_reproduce_the_last_fit() {
        let space = bench_space(2);
        let ev = BenchmarkEvaluator::new(space.clone(), Benchmark::Branin).unwrap();
        let problem = objective();
        let mut cfg = fast(8);
        cfg.termination.max_iterations = 3;
        let srsm = Srsm::new(&space, &ev, &problem, cfg).unwrap();
        let mut state = srsm.start(vec![0.0, 0.0]).unwrap();
        assert!(srsm.final_models(&state).unwrap().is_none());
        srsm.run(&mut state, None, |_| Ok(())).unwrap();
        let last = state.history.last().unwrap();
        let (models, region) = srsm.final_models(&state).unwrap().unwrap();
        assert_eq!(region, last.region);
        assert_eq!(models.shape_c, last.shape_c);
        assert_eq!(models.centers.len(), last.n_fit_points);
        for (m, fit) in models.models.iter().zip(&last.fits) {
            assert_eq!((&m.name, &m.fit_stats), (&fit.response, &fit.stats));
        }
        let u = normalize(&last.optimum.point.values, &region);
        let f = models.predict(OBJECTIVE, &u).unwrap();
        assert!((f - last.optimum.predicted_objective).abs() <= 1e-9 * f.abs().max(1.0));
    }
}
