//! The four TDR design spaces with their baseline and optimized designs.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::rules::{FOOTPRINT_X, FOOTPRINT_Y, MAX_TIP_AREA, OTHER_SPIKE_HEIGHT, PERIPHERAL_MARGIN};
use super::{
    DependentRule, DesignSpace, SamplingRules, VariableSpec, ARTICULATION_GAP, INSERT_HEIGHT_H0, RADIAL_CLEARANCE,
};

/// Reference values of one variable (sampled or dependent).
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub name: String,
    pub baseline: f64,
    pub optimized: f64,
}

#[derive(Clone, Debug)]
pub struct Preset {
    pub space: DesignSpace,
    pub rows: Vec<TableRow>,
}

impl Preset {
    pub fn name(&self) -> &str {
        self.space.name()
    }

    pub fn baseline_map(&self) -> BTreeMap<String, f64> {
        self.rows.iter().map(|r| (r.name.clone(), r.baseline)).collect()
    }

    pub fn optimized_map(&self) -> BTreeMap<String, f64> {
        self.rows.iter().map(|r| (r.name.clone(), r.optimized)).collect()
    }

    /// Sampled values of the baseline design.
    pub fn baseline_values(&self) -> Vec<f64> {
        self.space
            .values_from_map(&self.baseline_map())
            .expect("preset rows cover the space")
    }

    pub fn optimized_values(&self) -> Vec<f64> {
        self.space
            .values_from_map(&self.optimized_map())
            .expect("preset rows cover the space")
    }
}

pub fn preset_names() -> [&'static str; 4] {
    [
        "bone_inferior",
        "bone_superior",
        "single_articulation",
        "dual_articulation",
    ]
}

pub fn preset(name: &str) -> Result<Preset> {
    match name {
        "bone_inferior" => Ok(bone(false)),
        "bone_superior" => Ok(bone(true)),
        "single_articulation" => Ok(single_articulation()),
        "dual_articulation" => Ok(dual_articulation()),
        other => Err(Error::UnknownPreset(other.to_owned())),
    }
}

/// All four presets in [`preset_names`] order.
pub fn tdr_presets() -> Vec<Preset> {
    preset_names().iter().map(|n| preset(n).unwrap()).collect()
}

enum Row {
    C(&'static str, f64, f64, f64, f64),
    D(&'static str, &'static [f64], f64, f64),
    Dep(&'static str, DependentRule, f64, f64),
}

fn build(name: &str, rows: Vec<Row>, constants: &[(&str, f64)]) -> Preset {
    let mut vars = Vec::new();
    let mut table = Vec::new();
    for row in rows {
        let (spec, n, b, o) = match row {
            Row::C(n, lo, hi, b, o) => (VariableSpec::continuous(n, lo, hi), n, b, o),
            Row::D(n, levels, b, o) => (VariableSpec::discrete(n, levels), n, b, o),
            Row::Dep(n, rule, b, o) => (VariableSpec::dependent(n, rule), n, b, o),
        };
        vars.push(spec);
        table.push(TableRow {
            name: n.to_owned(),
            baseline: b,
            optimized: o,
        });
    }
    let constants = constants.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect();
    let rules = SamplingRules::from_preset(name).unwrap();
    Preset {
        space: DesignSpace::new(name, vars, constants, rules).expect("preset tables are valid"),
        rows: table,
    }
}

const SPIKE_COUNT: &[f64] = &[2.0, 3.0];

// 6.28 below is a table value, not 2π.
#[allow(clippy::approx_constant)]
fn bone(superior: bool) -> Preset {
    use Row::*;
    let rows = if superior {
        vec![
            C("top_base_radius", 0.25, 3.0, 3.0, 1.30),
            C("top_major_radius_anterior", 0.25, 5.0, 5.0, 1.97),
            C("top_major_radius_lateral", 0.25, 5.0, 5.0, 1.80),
            C("top_major_radius_posterior", 0.25, 5.0, 5.0, 3.53),
            C("top_minor_radius_anterior", 0.25, 1.0, 1.0, 0.41),
            C("top_minor_radius_lateral", 0.25, 1.0, 1.0, 0.51),
            C("top_minor_radius_posterior", 0.25, 1.0, 1.0, 1.00),
            D("fix_1_number_x", SPIKE_COUNT, 2.0, 3.0),
            D("fix_1_number_y", SPIKE_COUNT, 2.0, 3.0),
            C("fix_1_height", 0.5, 2.0, 1.25, 0.89),
            C("fix_1_bottom_x_len", 1.0, 3.0, 3.0, 1.89),
            C("fix_1_bottom_y_len", 1.0, 3.0, 3.0, 1.13),
            C("fix_1_gap_x", 0.0, 3.0, 1.5, 0.83),
            C("fix_1_gap_y", 0.0, 5.0, 2.0, 1.81),
            C("fix_1_top_x_shift_ant", 0.0, 2.5, 0.5, 1.17),
            C("fix_1_top_y_shift_lat", 0.0, 1.5, 1.35, 0.39),
            C("fix_1_top_x_shift_pos", 0.0, 2.5, 2.0, 0.29),
        ]
    } else {
        vec![
            C("bottom_base_radius", 0.25, 5.0, 3.0, 4.09),
            C("bottom_major_radius_anterior", 0.25, 7.0, 7.0, 3.78),
            C("bottom_major_radius_lateral", 0.25, 7.0, 7.0, 6.28),
            C("bottom_major_radius_posterior", 0.25, 7.0, 7.0, 2.67),
            C("bottom_minor_radius_anterior", 0.25, 2.0, 1.5, 1.92),
            C("bottom_minor_radius_lateral", 0.25, 2.0, 1.5, 1.66),
            C("bottom_minor_radius_posterior", 0.25, 2.0, 1.5, 0.34),
            D("fix_2_number_x", SPIKE_COUNT, 2.0, 3.0),
            D("fix_2_number_y", SPIKE_COUNT, 2.0, 2.0),
            C("fix_2_height", 0.5, 2.0, 1.25, 0.77),
            C("fix_2_bottom_x_len", 1.0, 3.0, 3.0, 2.65),
            C("fix_2_bottom_y_len", 1.0, 3.0, 3.0, 2.58),
            C("fix_2_gap_x", 0.0, 5.0, 2.0, 3.42),
            C("fix_2_gap_y", 0.0, 5.0, 2.0, 4.96),
            C("fix_2_top_x_shift_ant", 0.0, 2.5, 0.5, 1.48),
            C("fix_2_top_y_shift_lat", 0.0, 1.5, 1.35, 0.72),
            C("fix_2_top_x_shift_pos", 0.0, 2.5, 2.0, 0.85),
        ]
    };
    let (name, fx) = if superior {
        ("bone_superior", 12.0)
    } else {
        ("bone_inferior", 15.0)
    };
    build(
        name,
        rows,
        &[
            (FOOTPRINT_X, fx),
            (FOOTPRINT_Y, 17.0),
            (PERIPHERAL_MARGIN, 1.0),
            // The opposite interface's spike height, held at its baseline.
            (OTHER_SPIKE_HEIGHT, 1.25),
            (MAX_TIP_AREA, 2.5),
            ("core_height", 6.0),
        ],
    )
}

fn single_articulation() -> Preset {
    use Row::*;
    let rows = vec![
        C("sphere_origin_xshift", -7.5, 7.5, 0.0, -0.17),
        C("sphere_origin_zshift", 0.0, 5.85, 1.16, 2.39),
        C("sphere_radius", 3.0, 7.35, 4.60, 4.96),
        Dep(
            "cylinder_radius",
            DependentRule::RadialClearance {
                source: "sphere_radius".into(),
            },
            4.67,
            5.03,
        ),
        C("cylinder_height", 0.0, 5.0, 1.84, 2.16),
        C("cylinder_offset", -2.5, 2.5, -0.24, 0.99),
        Dep(
            "trough_depth",
            DependentRule::TroughDepth {
                sphere_radius: "sphere_radius".into(),
                center_shift: "sphere_origin_zshift".into(),
            },
            1.45,
            0.58,
        ),
        C("torus1_radius1", 0.0, 7.0, 2.31, 1.94),
        C("torus2_radius1", 0.0, 7.0, 1.82, 0.02),
    ];
    build(
        "single_articulation",
        rows,
        &[
            (RADIAL_CLEARANCE, 0.07),
            // Calibrated so the baseline trough depth is 1.45 mm.
            (ARTICULATION_GAP, 1.99),
            (FOOTPRINT_X, 15.0),
            (FOOTPRINT_Y, 17.0),
            ("core_height", 6.0),
        ],
    )
}

fn dual_articulation() -> Preset {
    use Row::*;
    let clearance = |s: &str| DependentRule::RadialClearance { source: s.into() };
    let cap = |h: &str| DependentRule::CapRadius {
        base_radius: "cylinder_r".into(),
        cap_height: h.into(),
    };
    let rows = vec![
        C("midline_xshift", -3.95, 3.95, 0.0, 0.21),
        Dep("cylinder_radius_sup", clearance("top_sphere_R"), 4.67, 3.09),
        C("cylinder_height_sup", 0.0, 5.0, 1.0, 0.58),
        C("cylinder_offset_sup", -2.5, 2.5, 0.0, -0.27),
        C("trough_depth_sup", 0.5, 1.0, 0.75, 0.84),
        C("torus1_radius1_sup", 0.0, 7.0, 0.5, 0.12),
        C("torus2_radius1_sup", 0.0, 7.0, 0.5, 2.04),
        Dep("cylinder_radius_inf", clearance("bottom_sphere_R"), 4.67, 3.10),
        C("cylinder_height_inf", 0.0, 5.0, 1.84, 2.10),
        C("cylinder_offset_inf", -2.5, 2.5, -0.24, 1.01),
        C("trough_depth_inf", 0.5, 2.0, 1.46, 0.92),
        C("torus1_radius1_inf", 0.0, 7.0, 2.31, 6.73),
        C("torus2_radius1_inf", 0.0, 7.0, 1.82, 5.41),
        Dep(
            "cylinder_h",
            DependentRule::InsertCylinderHeight {
                trough_sup: "trough_depth_sup".into(),
                trough_inf: "trough_depth_inf".into(),
                cap_sup: "top_sphere_h".into(),
                cap_inf: "bottom_sphere_h".into(),
            },
            1.98,
            1.93,
        ),
        C("cylinder_r", 1.0, 4.95, 3.0, 2.17),
        Dep("top_sphere_R", cap("top_sphere_h"), 4.60, 3.02),
        C("top_sphere_h", 0.5, 2.5, 1.1, 0.92),
        Dep("bottom_sphere_R", cap("bottom_sphere_h"), 4.60, 3.03),
        C("bottom_sphere_h", 0.5, 2.5, 1.1, 0.92),
    ];
    build(
        "dual_articulation",
        rows,
        &[
            (RADIAL_CLEARANCE, 0.07),
            // Calibrated so the baseline insert cylinder height is 1.98 mm.
            (INSERT_HEIGHT_H0, 1.97),
            (FOOTPRINT_X, 15.0),
            (FOOTPRINT_Y, 17.0),
            ("core_height", 6.0),
        ],
    )
}
