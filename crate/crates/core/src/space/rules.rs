//! Sampling-stage feasibility rules.
//!
//! These are checked before a design is ever evaluated; designs violating
//! them are never selected by the sampler.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoneSide, EndplateShape, SpikeGrid, EDGE_NAMES};

use super::DesignPoint;

/// Constants read by the bone-interface rules.
pub const FOOTPRINT_X: &str = "footprint_x";
pub const FOOTPRINT_Y: &str = "footprint_y";
pub const PERIPHERAL_MARGIN: &str = "peripheral_margin";
pub const OTHER_SPIKE_HEIGHT: &str = "other_spike_height";
pub const MAX_TIP_AREA: &str = "max_tip_area";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// measured ≤ bound
    Le,
    /// measured ≥ bound
    Ge,
    /// measured > bound
    Gt,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Gt => ">",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub measured: f64,
    pub bound: f64,
    pub relation: Relation,
}

impl Violation {
    /// Violation magnitude normalized by `max(|bound|, 1)`, never zero for a
    /// recorded violation (strict inequalities violated at equality).
    pub fn scaled_excess(&self) -> f64 {
        let raw = match self.relation {
            Relation::Le => self.measured - self.bound,
            Relation::Ge | Relation::Gt => self.bound - self.measured,
        };
        (raw.max(0.0) / self.bound.abs().max(1.0)).max(1e-6)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        Self {
            feasible: violations.is_empty(),
            violations,
        }
    }

    /// Sum of squared scaled excesses; zero when feasible.
    pub fn penalty(&self) -> f64 {
        self.violations.iter().map(|v| v.scaled_excess().powi(2)).sum()
    }
}

struct Checker(Vec<Violation>);

impl Checker {
    fn check(&mut self, name: impl Into<String>, measured: f64, relation: Relation, bound: f64) {
        let ok = match relation {
            Relation::Le => measured <= bound,
            Relation::Ge => measured >= bound,
            Relation::Gt => measured > bound,
        };
        if !ok {
            self.0.push(Violation {
                constraint: name.into(),
                measured,
                bound,
                relation,
            });
        }
    }
}

/// Per-preset sampling constraint set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SamplingRules {
    None,
    BoneInterface(BoneSide),
    SingleArticulation,
    DualArticulation,
}

impl SamplingRules {
    pub fn from_preset(name: &str) -> Result<Self> {
        Ok(match name {
            "bone_inferior" => SamplingRules::BoneInterface(BoneSide::Inferior),
            "bone_superior" => SamplingRules::BoneInterface(BoneSide::Superior),
            "single_articulation" => SamplingRules::SingleArticulation,
            "dual_articulation" => SamplingRules::DualArticulation,
            "custom" => SamplingRules::None,
            other => return Err(Error::UnknownPreset(other.to_owned())),
        })
    }

    /// Evaluates every rule; missing variables or constants count as violations
    /// of a rule named after the missing key rather than panicking.
    pub fn check(&self, resolved: &BTreeMap<String, f64>, constants: &BTreeMap<String, f64>) -> FeasibilityReport {
        let mut c = Checker(Vec::new());
        let outcome = match self {
            SamplingRules::None => Ok(()),
            SamplingRules::BoneInterface(side) => bone_rules(&mut c, *side, resolved, constants),
            SamplingRules::SingleArticulation => single_rules(&mut c, resolved),
            SamplingRules::DualArticulation => dual_rules(&mut c, resolved),
        };
        if let Err(e) = outcome {
            c.0.push(Violation {
                constraint: format!("unresolved: {e}"),
                measured: f64::NAN,
                bound: f64::NAN,
                relation: Relation::Le,
            });
        }
        FeasibilityReport::from_violations(c.0)
    }
}

/// Checks a resolved point against the rules of the named preset.
pub fn check_sampling_constraints(
    point: &DesignPoint,
    preset: &str,
    constants: &BTreeMap<String, f64>,
) -> Result<FeasibilityReport> {
    Ok(SamplingRules::from_preset(preset)?.check(&point.resolved, constants))
}

fn constant(constants: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    constants
        .get(key)
        .copied()
        .ok_or_else(|| Error::InvalidSpace(format!("missing constant `{key}`")))
}

fn get(map: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    map.get(key)
        .copied()
        .ok_or_else(|| Error::UnknownVariable(key.to_owned()))
}

fn bone_rules(
    c: &mut Checker,
    side: BoneSide,
    resolved: &BTreeMap<String, f64>,
    constants: &BTreeMap<String, f64>,
) -> Result<()> {
    let grid = SpikeGrid::from_resolved(resolved, side.spike_prefix())?;
    let shape = EndplateShape::from_resolved(resolved, side.endplate_prefix())?;
    let fx = constant(constants, FOOTPRINT_X)?;
    let fy = constant(constants, FOOTPRINT_Y)?;
    let margin = constant(constants, PERIPHERAL_MARGIN)?;
    let other_height = constant(constants, OTHER_SPIKE_HEIGHT)?;
    let max_tip = constant(constants, MAX_TIP_AREA)?;

    c.check("tip_area", grid.tip_area(), Relation::Le, max_tip);
    c.check("spike_height_min", grid.height, Relation::Ge, 0.5);
    c.check("spike_height_max", grid.height, Relation::Le, 2.0);
    c.check("distraction", grid.height + other_height, Relation::Le, 4.0);
    c.check("tip_edge_x", grid.tip_x(), Relation::Ge, 0.25);
    c.check("tip_edge_y", grid.tip_y(), Relation::Ge, 0.25);
    for (i, edge) in EDGE_NAMES.iter().enumerate() {
        c.check(
            format!("major>minor_{edge}"),
            shape.major_radius[i],
            Relation::Gt,
            shape.minor_radius[i],
        );
    }
    c.check("base_extent_x", grid.base_extent_x(), Relation::Le, fx);
    c.check("base_extent_y", grid.base_extent_y(), Relation::Le, fy);
    c.check("peripheral_x", grid.tip_extent_x(), Relation::Le, fx - 2.0 * margin);
    c.check("peripheral_y", grid.tip_extent_y(), Relation::Le, fy - 2.0 * margin);
    Ok(())
}

fn single_rules(c: &mut Checker, resolved: &BTreeMap<String, f64>) -> Result<()> {
    c.check("trough_depth", get(resolved, "trough_depth")?, Relation::Ge, 0.0);
    Ok(())
}

fn dual_rules(c: &mut Checker, resolved: &BTreeMap<String, f64>) -> Result<()> {
    let width = 2.0 * get(resolved, "cylinder_r")?;
    let cyl_h = get(resolved, "cylinder_h")?;
    let height = cyl_h + get(resolved, "top_sphere_h")? + get(resolved, "bottom_sphere_h")?;
    c.check("insert_width>height", width, Relation::Gt, height);
    c.check("insert_cylinder_h", cyl_h, Relation::Ge, 0.0);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_excess_is_normalized_and_positive() {
        let v = Violation {
            constraint: "a".into(),
            measured: 3.0,
            bound: 2.5,
            relation: Relation::Le,
        };
        assert!((v.scaled_excess() - 0.2).abs() < 1e-12);
        let strict = Violation {
            constraint: "b".into(),
            measured: 1.0,
            bound: 1.0,
            relation: Relation::Gt,
        };
        assert!(strict.scaled_excess() > 0.0);
    }

    #[test]
    fn unknown_preset_rejected() {
        assert!(matches!(
            SamplingRules::from_preset("nope"),
            Err(Error::UnknownPreset(_))
        ));
    }

    #[test]
    fn missing_variables_reported_as_violation() {
        let r = SamplingRules::DualArticulation.check(&BTreeMap::new(), &BTreeMap::new());
        assert!(!r.feasible);
        assert!(r.violations[0].constraint.starts_with("unresolved"));
    }
}
