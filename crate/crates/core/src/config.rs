//! Run configuration: one JSON document naming the design space, the
//! evaluator, the problem and the loop settings.
//!
//! Unknown keys are rejected. Parse errors carry the line and column of the
//! offending token; semantic errors carry the line of the top-level section
//! they belong to.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluators::bone::{D_MICRO, SIGMA_MAX as BONE_SIGMA};
use crate::evaluators::spine::{curve_objectives, generate_targets, SIGMA_MAX as SPINE_SIGMA};
use crate::evaluators::{
    Benchmark, BenchmarkEvaluator, BoneConstants, BoneSurrogate, Evaluator, ExternalProcess, ExternalProcessConfig,
    SegmentParams, SpineSurrogate,
};
use crate::problem::{ConstraintSpec, Direction, ObjectiveSpec, Problem, D_EXPULSION, D_SUBSIDENCE};
use crate::space::{denormalize, preset, preset_names, DesignSpace, Region, SamplingRules, VariableSpec};
use crate::srsm::SrsmConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceConfig {
    Preset {
        name: String,
        /// Overrides of the preset's geometry constants.
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        constants: BTreeMap<String, f64>,
    },
    /// Free-form space without sampling rules.
    Custom {
        name: String,
        variables: Vec<VariableSpec>,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        constants: BTreeMap<String, f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvaluatorConfig {
    Benchmark {
        benchmark: Benchmark,
    },
    BoneSurrogate {
        #[serde(default)]
        constants: BoneConstants,
    },
    SpineSurrogate {
        #[serde(default)]
        params: SegmentParams,
    },
    External {
        external: ExternalProcessConfig,
    },
}

/// Curve-matching terms against the simulated intact segment, one per
/// tracked curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpineTargets {
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Free text; ignored by the tool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub space: SpaceConfig,
    /// Sampled values of the reference design; defaults to the preset
    /// baseline, or the center of a custom space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BTreeMap<String, f64>>,
    pub evaluator: EvaluatorConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objectives: Vec<ObjectiveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spine_targets: Option<SpineTargets>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<ConstraintSpec>,
    #[serde(default)]
    pub srsm: SrsmConfig,
    /// Run directory; defaults to `$SRSM_OPT_DIR/<config name>` or
    /// `runs/<config name>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Everything a run needs, built from a [`RunConfig`].
pub struct Setup {
    pub space: DesignSpace,
    pub baseline: Vec<f64>,
    pub evaluator: Box<dyn Evaluator>,
    pub problem: Problem,
    pub srsm: SrsmConfig,
}

impl std::fmt::Debug for Setup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Setup")
            .field("space", &self.space.name())
            .field("evaluator", &self.evaluator.name())
            .field("keys", &self.problem.keys())
            .finish()
    }
}

/// 1-based line of the first `"key":` in `text`.
fn locate(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

fn at_line(text: &str, section: &str, e: Error) -> Error {
    match locate(text, section) {
        Some(line) => Error::Config(format!("line {line} (`{section}`): {e}")),
        None => Error::Config(format!("`{section}`: {e}")),
    }
}

impl RunConfig {
    /// Parses without semantic checks.
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let msg = msg.rsplit_once(" at line ").map_or(msg.as_str(), |(m, _)| m);
            Error::Config(format!("line {}, column {}: {msg}", e.line(), e.column()))
        })
    }

    /// Parses and validates by building the run.
    pub fn from_json(text: &str) -> Result<(Self, Setup)> {
        let config = Self::parse(text)?;
        let setup = config.build_with_source(text)?;
        Ok((config, setup))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn build(&self) -> Result<Setup> {
        self.build_with_source("")
    }

    fn build_with_source(&self, text: &str) -> Result<Setup> {
        let space = self.space().map_err(|e| at_line(text, "space", e))?;
        let baseline = self.baseline_values(&space).map_err(|e| at_line(text, "baseline", e))?;
        self.srsm.validate().map_err(|e| at_line(text, "srsm", e))?;
        let evaluator = self.evaluator(&space).map_err(|e| at_line(text, "evaluator", e))?;
        let problem = match &self.spine_targets {
            Some(t) => self
                .spine_problem(t.weight)
                .map_err(|e| at_line(text, "spine_targets", e))?,
            None => Problem::new(self.objectives.clone(), self.constraints.clone())
                .map_err(|e| at_line(text, "objectives", e))?,
        };
        Ok(Setup {
            space,
            baseline,
            evaluator,
            problem,
            srsm: self.srsm.clone(),
        })
    }

    /// Explicit terms followed by the generated curve terms at `weight`.
    fn spine_problem(&self, weight: f64) -> Result<Problem> {
        let EvaluatorConfig::SpineSurrogate { params } = &self.evaluator else {
            return Err(Error::Config("needs the spine_surrogate evaluator".into()));
        };
        let generated = curve_objectives(&generate_targets(params)?);
        let weights: Vec<f64> = self
            .objectives
            .iter()
            .map(ObjectiveSpec::weight)
            .chain(std::iter::repeat_n(weight, generated.len()))
            .collect();
        let objectives = self.objectives.iter().cloned().chain(generated).collect();
        Problem::new(objectives, self.constraints.clone())?.with_weights(&weights)
    }

    pub fn space(&self) -> Result<DesignSpace> {
        match &self.space {
            SpaceConfig::Preset { name, constants } => {
                let p = preset(name)?;
                for k in constants.keys() {
                    if p.space.constant(k).is_none() {
                        return Err(Error::Config(format!("preset `{name}` has no constant `{k}`")));
                    }
                }
                Ok(p.space.with_constants(constants))
            }
            SpaceConfig::Custom {
                name,
                variables,
                constants,
            } => DesignSpace::new(name, variables.clone(), constants.clone(), SamplingRules::None),
        }
    }

    fn baseline_values(&self, space: &DesignSpace) -> Result<Vec<f64>> {
        let values = match (&self.baseline, &self.space) {
            (Some(map), _) => space.values_from_map(map)?,
            (None, SpaceConfig::Preset { name, .. }) => preset(name)?.baseline_values(),
            (None, SpaceConfig::Custom { .. }) => denormalize(&vec![0.5; space.dim()], &Region::full(space), space),
        };
        if !space.contains(&values) {
            return Err(Error::Config("baseline design lies outside the variable bounds".into()));
        }
        Ok(values)
    }

    fn evaluator(&self, space: &DesignSpace) -> Result<Box<dyn Evaluator>> {
        Ok(match &self.evaluator {
            EvaluatorConfig::Benchmark { benchmark } => {
                Box::new(BenchmarkEvaluator::new(space.clone(), benchmark.clone())?)
            }
            EvaluatorConfig::BoneSurrogate { constants } => {
                Box::new(BoneSurrogate::new(space.clone(), constants.clone())?)
            }
            EvaluatorConfig::SpineSurrogate { params } => Box::new(SpineSurrogate::new(space.clone(), params.clone())?),
            EvaluatorConfig::External { external } => Box::new(ExternalProcess::new(space.clone(), external.clone())?),
        })
    }

    /// Name used for the default run directory.
    pub fn run_name(&self) -> &str {
        match &self.space {
            SpaceConfig::Preset { name, .. } | SpaceConfig::Custom { name, .. } => name,
        }
    }

    /// Copy with new objective weights (in objective order).
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.objectives.len() {
            return Err(Error::ObjectiveCount {
                expected: self.objectives.len(),
                got: weights.len(),
            });
        }
        let problem = Problem::new(self.objectives.clone(), self.constraints.clone())?.with_weights(weights)?;
        Ok(Self {
            objectives: problem.objectives,
            ..self.clone()
        })
    }
}

/// Ready-to-run configurations for the four preset problems.
pub fn template(name: &str) -> Result<RunConfig> {
    let space = SpaceConfig::Preset {
        name: name.to_owned(),
        constants: BTreeMap::new(),
    };
    let srsm = |n: usize| SrsmConfig {
        samples_per_iteration: Some(n),
        ..SrsmConfig::default()
    };
    match name {
        "bone_inferior" | "bone_superior" => Ok(RunConfig {
            description: Some(format!(
                "{name}: minimize w1·|d_subsidence| + w2·|d_expulsion| subject to sigma_max ≤ 0.3 GPa and \
                 d_micro ≤ 0.150 mm; 125 designs per iteration. Run `srsm-opt doe` first to calibrate w2."
            )),
            space,
            baseline: None,
            evaluator: EvaluatorConfig::BoneSurrogate {
                constants: BoneConstants::default(),
            },
            objectives: vec![
                ObjectiveSpec::WeightedScalar {
                    response: D_SUBSIDENCE.into(),
                    weight: 1.0,
                    absolute: true,
                },
                ObjectiveSpec::WeightedScalar {
                    response: D_EXPULSION.into(),
                    weight: 1.0,
                    absolute: true,
                },
            ],
            spine_targets: None,
            constraints: vec![
                ConstraintSpec::new(BONE_SIGMA, Direction::Le, 0.3),
                ConstraintSpec::new(D_MICRO, Direction::Le, 0.150),
            ],
            srsm: srsm(125),
            output_dir: None,
        }),
        "single_articulation" | "dual_articulation" => Ok(RunConfig {
            description: Some(format!(
                "{name}: minimize the sum of the 16 normalized curve MSEs against the intact segment \
                 subject to sigma_max ≤ 0.3 GPa; {} designs per iteration.",
                if name == "single_articulation" { 30 } else { 100 }
            )),
            space,
            baseline: None,
            evaluator: EvaluatorConfig::SpineSurrogate {
                params: SegmentParams::default(),
            },
            objectives: Vec::new(),
            spine_targets: Some(SpineTargets { weight: 1.0 }),
            constraints: vec![ConstraintSpec::new(SPINE_SIGMA, Direction::Le, 0.3)],
            srsm: srsm(if name == "single_articulation" { 30 } else { 100 }),
            output_dir: None,
        }),
        other => Err(Error::UnknownPreset(other.to_owned())),
    }
}

pub fn templates() -> Vec<RunConfig> {
    preset_names().iter().map(|n| template(n).unwrap()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_validate_and_carry_batch_sizes() {
        for t in templates() {
            let text = t.to_json().unwrap();
            let (back, setup) = RunConfig::from_json(&text).unwrap();
            assert_eq!(back, t);
            let n = setup.srsm.samples_per_iteration.unwrap();
            match t.run_name() {
                "bone_inferior" | "bone_superior" => assert_eq!(n, 125),
                "single_articulation" => assert_eq!(n, 30),
                _ => assert_eq!(n, 100),
            }
        }
        let spine = template("single_articulation").unwrap().build().unwrap();
        assert_eq!(spine.problem.objectives.len(), 16);
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "{\n  \"space\": {\"preset\": {\"name\": \"bone_inferior\"}},\n  \"evaluator\": {\"kind\": \"bone_surrogate\"},\n  \"bogus\": 1\n}";
        let err = RunConfig::parse(text).unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn semantic_error_reports_section_line() {
        let mut t = template("bone_inferior").unwrap();
        t.srsm.termination.max_iterations = 0;
        let text = t.to_json().unwrap();
        let err = RunConfig::from_json(&text).unwrap_err().to_string();
        let line = locate(&text, "srsm").unwrap();
        assert!(err.contains(&format!("line {line}")), "{err}");
    }

    #[test]
    fn custom_space_with_benchmark() {
        let text = r#"{
            "space": {"custom": {"name": "sphere", "variables": [
                {"name": "x", "kind": {"continuous": {"lower": -1, "upper": 1}}},
                {"name": "y", "kind": {"continuous": {"lower": -1, "upper": 1}}}]}},
            "evaluator": {"kind": "benchmark", "benchmark": {"function": "sphere", "center": [0.2, 0.1]}},
            "objectives": [{"kind": "weighted_scalar", "response": "f", "absolute": false}]
        }"#;
        let (_, setup) = RunConfig::from_json(text).unwrap();
        assert_eq!(setup.baseline, vec![0.0, 0.0]);
        assert_eq!(setup.problem.keys(), ["f"]);
    }

    #[test]
    fn spine_targets_need_spine_evaluator() {
        let mut t = template("bone_inferior").unwrap();
        t.spine_targets = Some(SpineTargets { weight: 1.0 });
        assert!(t.build().is_err());
    }

    #[test]
    fn reweighting_keeps_everything_else() {
        let t = template("bone_superior").unwrap();
        let w = t.with_weights(&[1.0, 3.5]).unwrap();
        assert_eq!(w.objectives[1].weight(), 3.5);
        assert_eq!(w.constraints, t.constraints);
        assert!(t.with_weights(&[1.0]).is_err());
    }
}
