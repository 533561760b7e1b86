//! Design variables, regions and design points.
//!
//! A [`DesignSpace`] is an ordered list of variables. Continuous and discrete
//! variables are *sampled*; dependent variables are computed from the sampled
//! ones (and the space constants) by [`DesignSpace::resolve_dependents`].
//! All vector-valued quantities ([`Region`], [`DesignPoint::values`]) are
//! indexed by sampled-variable order.

pub mod presets;
pub mod rules;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use presets::{preset, preset_names, tdr_presets, Preset, TableRow};
pub use rules::{check_sampling_constraints, FeasibilityReport, Relation, SamplingRules, Violation};

/// Constant holding the radial clearance between spherical parts and troughs.
pub const RADIAL_CLEARANCE: &str = "radial_clearance";
/// Constant holding the gap subtracted from the cap protrusion to get the trough depth.
pub const ARTICULATION_GAP: &str = "articulation_gap";
/// Constant holding the assembled insert height reference.
pub const INSERT_HEIGHT_H0: &str = "insert_height_h0";

/// Rule computing a dependent variable from other resolved values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum DependentRule {
    /// `source + radial_clearance`.
    RadialClearance { source: String },
    /// Radius of a spherical cap with base radius `r` and height `h`: `(r² + h²) / 2h`.
    CapRadius { base_radius: String, cap_height: String },
    /// `sphere_radius - center_shift - articulation_gap`.
    TroughDepth {
        sphere_radius: String,
        center_shift: String,
    },
    /// `h0 + trough_sup + trough_inf - cap_sup - cap_inf`.
    InsertCylinderHeight {
        trough_sup: String,
        trough_inf: String,
        cap_sup: String,
        cap_inf: String,
    },
}

impl DependentRule {
    fn inputs(&self) -> Vec<&str> {
        match self {
            DependentRule::RadialClearance { source } => vec![source],
            DependentRule::CapRadius {
                base_radius,
                cap_height,
            } => vec![base_radius, cap_height],
            DependentRule::TroughDepth {
                sphere_radius,
                center_shift,
            } => vec![sphere_radius, center_shift],
            DependentRule::InsertCylinderHeight {
                trough_sup,
                trough_inf,
                cap_sup,
                cap_inf,
            } => vec![trough_sup, trough_inf, cap_sup, cap_inf],
        }
    }

    fn evaluate(&self, name: &str, resolved: &BTreeMap<String, f64>, constants: &BTreeMap<String, f64>) -> Result<f64> {
        let get = |k: &str| resolved[k];
        let constant = |k: &str| {
            constants
                .get(k)
                .copied()
                .ok_or_else(|| Error::InvalidSpace(format!("rule for `{name}` needs constant `{k}`")))
        };
        Ok(match self {
            DependentRule::RadialClearance { source } => get(source) + constant(RADIAL_CLEARANCE)?,
            DependentRule::CapRadius {
                base_radius,
                cap_height,
            } => {
                let r = get(base_radius);
                let h = get(cap_height);
                if h == 0.0 {
                    return Err(Error::DegenerateGeometry(format!(
                        "`{name}`: cap height `{cap_height}` is zero"
                    )));
                }
                (r * r + h * h) / (2.0 * h)
            }
            DependentRule::TroughDepth {
                sphere_radius,
                center_shift,
            } => get(sphere_radius) - get(center_shift) - constant(ARTICULATION_GAP)?,
            DependentRule::InsertCylinderHeight {
                trough_sup,
                trough_inf,
                cap_sup,
                cap_inf,
            } => constant(INSERT_HEIGHT_H0)? + get(trough_sup) + get(trough_inf) - get(cap_sup) - get(cap_inf),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Continuous {
        lower: f64,
        upper: f64,
    },
    /// Ordered numeric level set.
    Discrete {
        levels: Vec<f64>,
    },
    /// Computed, never sampled.
    Dependent(DependentRule),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
}

impl VariableSpec {
    pub fn continuous(name: &str, lower: f64, upper: f64) -> Self {
        Self {
            name: name.to_owned(),
            kind: VariableKind::Continuous { lower, upper },
        }
    }

    pub fn discrete(name: &str, levels: &[f64]) -> Self {
        Self {
            name: name.to_owned(),
            kind: VariableKind::Discrete {
                levels: levels.to_vec(),
            },
        }
    }

    pub fn dependent(name: &str, rule: DependentRule) -> Self {
        Self {
            name: name.to_owned(),
            kind: VariableKind::Dependent(rule),
        }
    }

    pub fn is_sampled(&self) -> bool {
        !matches!(self.kind, VariableKind::Dependent(_))
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, VariableKind::Discrete { .. })
    }

    /// Bounds of a sampled variable; `None` for dependents.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match &self.kind {
            VariableKind::Continuous { lower, upper } => Some((*lower, *upper)),
            VariableKind::Discrete { levels } => Some((levels[0], levels[levels.len() - 1])),
            VariableKind::Dependent(_) => None,
        }
    }

    pub fn levels(&self) -> Option<&[f64]> {
        match &self.kind {
            VariableKind::Discrete { levels } => Some(levels),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match &self.kind {
            VariableKind::Continuous { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return Err(Error::InvalidSpace(format!(
                        "`{}`: need finite lower < upper, got [{lower}, {upper}]",
                        self.name
                    )));
                }
            }
            VariableKind::Discrete { levels } => {
                if levels.is_empty() {
                    return Err(Error::InvalidSpace(format!("`{}`: empty level set", self.name)));
                }
                if levels.iter().any(|v| !v.is_finite()) || levels.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidSpace(format!(
                        "`{}`: levels must be finite and strictly increasing",
                        self.name
                    )));
                }
            }
            VariableKind::Dependent(_) => {}
        }
        Ok(())
    }
}

/// Variable bounds Ω plus the fixed geometry constants of a problem.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignSpace {
    name: String,
    variables: Vec<VariableSpec>,
    constants: BTreeMap<String, f64>,
    rules: SamplingRules,
    sampled: Vec<usize>,
}

impl DesignSpace {
    pub fn new(
        name: &str,
        variables: Vec<VariableSpec>,
        constants: BTreeMap<String, f64>,
        rules: SamplingRules,
    ) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for v in &variables {
            if !seen.insert(v.name.as_str()) {
                return Err(Error::InvalidSpace(format!("duplicate variable `{}`", v.name)));
            }
            v.validate()?;
        }
        for v in &variables {
            if let VariableKind::Dependent(rule) = &v.kind {
                for input in rule.inputs() {
                    if !seen.contains(input) {
                        return Err(Error::InvalidSpace(format!(
                            "`{}` depends on unknown variable `{input}`",
                            v.name
                        )));
                    }
                }
            }
        }
        let sampled: Vec<usize> = variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_sampled())
            .map(|(i, _)| i)
            .collect();
        if sampled.is_empty() {
            return Err(Error::InvalidSpace("no sampled variables".into()));
        }
        Ok(Self {
            name: name.to_owned(),
            variables,
            constants,
            rules,
            sampled,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn constants(&self) -> &BTreeMap<String, f64> {
        &self.constants
    }

    pub fn constant(&self, key: &str) -> Option<f64> {
        self.constants.get(key).copied()
    }

    pub fn rules(&self) -> &SamplingRules {
        &self.rules
    }

    /// Replaces or adds constants (used by config overrides).
    pub fn with_constants(mut self, overrides: &BTreeMap<String, f64>) -> Self {
        for (k, v) in overrides {
            self.constants.insert(k.clone(), *v);
        }
        self
    }

    /// Number of sampled (non-dependent) variables.
    pub fn dim(&self) -> usize {
        self.sampled.len()
    }

    pub fn sampled_variables(&self) -> impl Iterator<Item = &VariableSpec> {
        self.sampled.iter().map(move |&i| &self.variables[i])
    }

    pub fn sampled_names(&self) -> Vec<String> {
        self.sampled_variables().map(|v| v.name.clone()).collect()
    }

    pub fn sampled_spec(&self, i: usize) -> &VariableSpec {
        &self.variables[self.sampled[i]]
    }

    pub fn lower_bounds(&self) -> Vec<f64> {
        self.sampled_variables().map(|v| v.bounds().unwrap().0).collect()
    }

    pub fn upper_bounds(&self) -> Vec<f64> {
        self.sampled_variables().map(|v| v.bounds().unwrap().1).collect()
    }

    /// Range vector `upper - lower` of the sampled variables.
    pub fn ranges(&self) -> Vec<f64> {
        self.sampled_variables()
            .map(|v| {
                let (lo, hi) = v.bounds().unwrap();
                hi - lo
            })
            .collect()
    }

    /// Euclidean norm of the initial range vector, ‖Ω‖.
    pub fn range_norm(&self) -> f64 {
        self.ranges().iter().map(|r| r * r).sum::<f64>().sqrt()
    }

    /// True when every sampled value lies within Ω (and discrete values on a level).
    pub fn contains(&self, values: &[f64]) -> bool {
        values.len() == self.dim()
            && self.sampled_variables().zip(values).all(|(v, &x)| match &v.kind {
                VariableKind::Continuous { lower, upper } => x >= *lower && x <= *upper,
                VariableKind::Discrete { levels } => levels.contains(&x),
                VariableKind::Dependent(_) => true,
            })
    }

    /// Snaps discrete coordinates to their nearest level, in place.
    pub fn snap_discrete(&self, values: &mut [f64]) {
        for (v, x) in self.sampled_variables().zip(values.iter_mut()) {
            if let Some(levels) = v.levels() {
                *x = nearest_level(levels, *x);
            }
        }
    }

    /// Computes every dependent variable; returns the full name→value map.
    pub fn resolve_dependents(&self, values: &[f64]) -> Result<BTreeMap<String, f64>> {
        if values.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: values.len(),
            });
        }
        let mut resolved: BTreeMap<String, f64> = self
            .sampled_variables()
            .zip(values)
            .map(|(v, &x)| (v.name.clone(), x))
            .collect();
        let mut pending: Vec<(&str, &DependentRule)> = self
            .variables
            .iter()
            .filter_map(|v| match &v.kind {
                VariableKind::Dependent(rule) => Some((v.name.as_str(), rule)),
                _ => None,
            })
            .collect();
        // Dependents may reference other dependents, in any declaration order.
        while !pending.is_empty() {
            let before = pending.len();
            let mut rest = Vec::with_capacity(pending.len());
            for (name, rule) in pending {
                if rule.inputs().iter().all(|k| resolved.contains_key(*k)) {
                    let value = rule.evaluate(name, &resolved, &self.constants)?;
                    resolved.insert(name.to_owned(), value);
                } else {
                    rest.push((name, rule));
                }
            }
            if rest.len() == before {
                return Err(Error::InvalidSpace(format!(
                    "cyclic dependent variables: {:?}",
                    rest.iter().map(|(n, _)| *n).collect::<Vec<_>>()
                )));
            }
            pending = rest;
        }
        Ok(resolved)
    }

    /// Builds a fully resolved [`DesignPoint`].
    pub fn point(&self, values: Vec<f64>, id: u64, iteration: u32) -> Result<DesignPoint> {
        let resolved = self.resolve_dependents(&values)?;
        Ok(DesignPoint {
            id,
            iteration,
            values,
            resolved,
        })
    }

    /// Sampled values from a name→value map (e.g. a preset baseline).
    pub fn values_from_map(&self, map: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        self.sampled_variables()
            .map(|v| {
                map.get(&v.name)
                    .copied()
                    .ok_or_else(|| Error::UnknownVariable(v.name.clone()))
            })
            .collect()
    }

    /// Feasibility of a resolved point under this space's sampling rules.
    pub fn check(&self, point: &DesignPoint) -> FeasibilityReport {
        self.rules.check(&point.resolved, &self.constants)
    }
}

pub(crate) fn nearest_level(levels: &[f64], x: f64) -> f64 {
    let mut best = levels[0];
    for &l in levels {
        if (l - x).abs() < (best - x).abs() {
            best = l;
        }
    }
    best
}

/// One design: sampled values plus the resolved map including dependents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub id: u64,
    pub iteration: u32,
    pub values: Vec<f64>,
    pub resolved: BTreeMap<String, f64>,
}

impl DesignPoint {
    pub fn get(&self, name: &str) -> Result<f64> {
        self.resolved
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownVariable(name.to_owned()))
    }
}

/// Axis-aligned sub-box of Ω in sampled-variable coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center: Vec<f64>,
    pub half_range: Vec<f64>,
}

impl Region {
    pub fn new(center: Vec<f64>, half_range: Vec<f64>) -> Result<Self> {
        if center.len() != half_range.len() {
            return Err(Error::InvalidRegion("center and half_range lengths differ".into()));
        }
        if center.iter().any(|c| !c.is_finite()) || half_range.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::InvalidRegion(
                "center must be finite and half ranges positive".into(),
            ));
        }
        Ok(Self { center, half_range })
    }

    /// The whole design space Ω.
    pub fn full(space: &DesignSpace) -> Self {
        let (center, half_range) = space
            .sampled_variables()
            .map(|v| {
                let (lo, hi) = v.bounds().unwrap();
                // A single-level discrete variable still needs a positive extent.
                let half = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };
                (0.5 * (lo + hi), half)
            })
            .unzip();
        Self { center, half_range }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.center.iter().zip(&self.half_range).map(|(c, h)| c - h).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.center.iter().zip(&self.half_range).map(|(c, h)| c + h).collect()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.center.iter().zip(&self.half_range))
                .all(|(xi, (c, h))| (xi - c).abs() <= h + tol)
    }

    /// True when `self` lies inside `outer` (up to `tol` absolute).
    pub fn is_inside(&self, outer: &Region, tol: f64) -> bool {
        self.lower()
            .iter()
            .zip(self.upper())
            .zip(outer.lower().iter().zip(outer.upper()))
            .all(|((lo, hi), (olo, ohi))| *lo >= olo - tol && hi <= ohi + tol)
    }

    pub fn intersect(&self, other: &Region) -> Option<Region> {
        let lo: Vec<f64> = self.lower().iter().zip(other.lower()).map(|(a, b)| a.max(b)).collect();
        let hi: Vec<f64> = self.upper().iter().zip(other.upper()).map(|(a, b)| a.min(b)).collect();
        if lo.iter().zip(&hi).any(|(l, h)| l >= h) {
            return None;
        }
        Some(Region {
            center: lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect(),
            half_range: lo.iter().zip(&hi).map(|(l, h)| 0.5 * (h - l)).collect(),
        })
    }

    /// Same center, half ranges multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Region {
        Region {
            center: self.center.clone(),
            half_range: self.half_range.iter().map(|h| h * factor).collect(),
        }
    }

    /// Volume of this region relative to `outer`.
    pub fn relative_volume(&self, outer: &Region) -> f64 {
        self.half_range
            .iter()
            .zip(&outer.half_range)
            .map(|(h, o)| h / o)
            .product()
    }
}

/// Affine map of `values` onto the unit cube spanned by `region`.
pub fn normalize(values: &[f64], region: &Region) -> Vec<f64> {
    values
        .iter()
        .zip(region.center.iter().zip(&region.half_range))
        .map(|(x, (c, h))| (x - (c - h)) / (2.0 * h))
        .collect()
}

/// Inverse of [`normalize`]; discrete coordinates snap to the nearest level.
pub fn denormalize(u: &[f64], region: &Region, space: &DesignSpace) -> Vec<f64> {
    let mut x: Vec<f64> = u
        .iter()
        .zip(region.center.iter().zip(&region.half_range))
        .map(|(ui, (c, h))| (c - h) + ui * 2.0 * h)
        .collect();
    space.snap_discrete(&mut x);
    x
}
