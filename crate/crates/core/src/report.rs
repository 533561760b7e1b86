//! Run summaries derived from a run directory, with integrity checks.
//!
//! The termination metrics of every persisted iteration are recomputed from
//! the stored designs and verified objectives and must match the stored
//! values bit for bit; `history.csv` must equal the table regenerated from
//! the state.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::persist::{history_rows, parse_history_csv, parse_ranking_csv, RunDir, HISTORY_FILE, RANKING_FILE};
use crate::problem::Problem;
use crate::space::Region;
use crate::srsm::{check_termination, improvement_percent, omega_norm, RunResult, RunState, Step, TerminationConfig};

/// `improvement 14.6%`.
pub fn format_improvement(percent: f64) -> String {
    format!("improvement {:.1}%", percent)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermImprovement {
    pub objective: String,
    pub baseline: f64,
    pub best: f64,
    pub improvement_percent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub result: RunResult,
    pub per_objective: Vec<TermImprovement>,
    /// Top aggregate Sobol scores, if the sensitivity analysis ran.
    pub sobol_top: Vec<(String, f64)>,
}

/// Recomputes every iteration's termination check from the stored steps.
pub fn verify_termination(state: &RunState, omega: &Region, cfg: &TerminationConfig) -> Result<()> {
    let norm = omega_norm(omega);
    let mut steps: Vec<Step> = Vec::new();
    for r in &state.history {
        steps.push(Step {
            design: r.optimum.point.values.clone(),
            objective: r.verified.objective(),
        });
        let again = check_termination(&steps, norm, cfg);
        let same = |a: Option<f64>, b: Option<f64>| a.map(f64::to_bits) == b.map(f64::to_bits);
        if !same(again.design_change, r.termination.design_change)
            || !same(again.objective_change, r.termination.objective_change)
            || again.stop != r.termination.stop
        {
            return Err(Error::Integrity(format!(
                "iteration {}: stored termination {:?} but recomputed {:?}",
                r.k, r.termination, again
            )));
        }
    }
    let mut best: Option<f64> = state.baseline.feasible().then(|| state.baseline.objective()).flatten();
    for r in &state.history {
        for e in r
            .samples
            .iter()
            .chain(std::iter::once(&r.verified))
            .filter(|e| e.feasible())
        {
            let f = e.objective().unwrap_or(f64::INFINITY);
            best = Some(best.map_or(f, |b| b.min(f)));
        }
        if best.map(f64::to_bits) != r.best_objective.map(f64::to_bits) {
            return Err(Error::Integrity(format!(
                "iteration {}: stored best {:?} but recomputed {:?}",
                r.k, r.best_objective, best
            )));
        }
    }
    Ok(())
}

/// `history.csv` against the rows regenerated from `state`.
pub fn verify_history(text: &str, state: &RunState, omega: &Region) -> Result<()> {
    let stored = parse_history_csv(text).map_err(|e| Error::Integrity(e.to_string()))?;
    let expected = history_rows(state, omega);
    if stored.len() != expected.len() {
        return Err(Error::Integrity(format!(
            "{HISTORY_FILE} has {} rows but the state has {} iterations",
            stored.len(),
            expected.len()
        )));
    }
    for (s, e) in stored.iter().zip(&expected) {
        if s != e {
            return Err(Error::Integrity(format!(
                "{HISTORY_FILE} row {} differs from the persisted state",
                e.iteration
            )));
        }
    }
    Ok(())
}

pub fn term_improvements(problem: &Problem, state: &RunState) -> Vec<TermImprovement> {
    let result = RunResult::from_state(state);
    let (Some(base), Some(best)) = (
        state.baseline.keys.as_ref(),
        result.best.as_ref().and_then(|b| b.keys.as_ref()),
    ) else {
        return Vec::new();
    };
    let (cb, cf) = (problem.contributions(base), problem.contributions(best));
    problem
        .objectives
        .iter()
        .zip(cb.iter().zip(&cf))
        .map(|(o, (b, f))| TermImprovement {
            objective: o.key(),
            baseline: *b,
            best: *f,
            improvement_percent: improvement_percent(*b, *f),
        })
        .collect()
}

impl Report {
    /// Loads and checks a run directory.
    pub fn from_dir(dir: &RunDir) -> Result<Self> {
        let config = RunConfig::parse(&dir.config_text()?)?;
        let setup = config.build()?;
        let state = dir
            .load_state()?
            .ok_or_else(|| Error::Integrity(format!("{} holds no run state", dir.root.display())))?;
        let omega = Region::full(&setup.space);
        verify_termination(&state, &omega, &setup.srsm.termination)?;
        let history = dir.results(HISTORY_FILE);
        let text =
            std::fs::read_to_string(&history).map_err(|e| Error::Integrity(format!("{}: {e}", history.display())))?;
        verify_history(&text, &state, &omega)?;
        let ranking = dir.results(RANKING_FILE);
        let sobol_top = match std::fs::read_to_string(&ranking) {
            Ok(t) => parse_ranking_csv(&t)
                .map_err(|e| Error::Integrity(e.to_string()))?
                .into_iter()
                .take(5)
                .collect(),
            Err(_) => Vec::new(),
        };
        Ok(Self {
            name: config.run_name().to_owned(),
            per_objective: term_improvements(&setup.problem, &state),
            result: RunResult::from_state(&state),
            sobol_top,
        })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.6}"))
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.result;
        writeln!(f, "run: {}", self.name)?;
        writeln!(f, "iterations: {}", r.iterations)?;
        writeln!(
            f,
            "termination: {}",
            r.termination.map_or("not finished", |s| s.as_str())
        )?;
        writeln!(f, "baseline objective: {}", opt(r.baseline_objective))?;
        writeln!(f, "best objective: {}", opt(r.best_objective))?;
        match r.improvement_percent {
            Some(p) => writeln!(f, "combined: {}", format_improvement(p))?,
            None => writeln!(f, "combined: improvement n/a (no feasible baseline or best design)")?,
        }
        if let Some(best) = &r.best {
            writeln!(
                f,
                "best design: id {} (iteration {})",
                best.point.id, best.point.iteration
            )?;
        }
        if !self.per_objective.is_empty() {
            writeln!(f, "per objective:")?;
            for t in &self.per_objective {
                writeln!(
                    f,
                    "  {:<32} {:>12.6} -> {:>12.6}  {}",
                    t.objective,
                    t.baseline,
                    t.best,
                    format_improvement(t.improvement_percent)
                )?;
            }
        }
        if !self.sobol_top.is_empty() {
            writeln!(f, "sobol top {}:", self.sobol_top.len())?;
            for (i, (v, s)) in self.sobol_top.iter().enumerate() {
                writeln!(f, "  {}. {v} {s:.4}", i + 1)?;
            }
        }
        Ok(())
    }
}
