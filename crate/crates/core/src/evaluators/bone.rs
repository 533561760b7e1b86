//! Closed-form stand-in for the subsidence and expulsion simulations of a
//! bone-implant interface.
//!
//! Bearing area, spike tip area and spike frontal area are combined with
//! lumped bone stiffnesses:
//!
//! ```text
//! d_subsidence = F_sub / (k_cort·A_b·(1 − β·h) + k_trab·A_tip)
//! d_expulsion  = F_exp / (k_lock·A_front + k_fric·μ·F_sub)
//! d_micro      = F_service / (k_lock·A_front + k_fric·μ·F_sub)
//! sigma_max    = F_sub / (n·a_tip) / 1000          [GPa]
//! ```
//!
//! where `h = n·a_base / A_b` is the fraction of the bearing area cut out for
//! the spikes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{out_of_bounds, Evaluator, ResponseSet};
use crate::error::{Error, Result};
use crate::geometry::{BoneSide, EndplateShape, SpikeGrid};
use crate::problem::{D_EXPULSION, D_SUBSIDENCE};
use crate::space::rules::{FOOTPRINT_X, FOOTPRINT_Y};
use crate::space::{DesignPoint, DesignSpace, SamplingRules};

pub const D_MICRO: &str = "d_micro";
pub const SIGMA_MAX: &str = "sigma_max";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoneConstants {
    /// Subsidence load, N.
    pub f_sub: f64,
    /// Cortical bearing stiffness, N/mm per mm².
    pub k_cort: f64,
    /// Trabecular tip stiffness, N/mm per mm².
    pub k_trab: f64,
    /// Weakening per unit cut-out fraction.
    pub beta: f64,
    /// Expulsion load, N.
    pub f_exp: f64,
    /// Interlock stiffness, N/mm per mm² of frontal area.
    pub k_lock: f64,
    /// Friction stiffness per newton of friction force, 1/mm.
    pub k_fric: f64,
    /// Bone-implant friction coefficient.
    pub mu: f64,
    /// Service load for micromotion, N.
    pub f_service: f64,
}

impl Default for BoneConstants {
    fn default() -> Self {
        Self {
            f_sub: 150.0,
            k_cort: 12.0,
            k_trab: 3.0,
            beta: 0.5,
            f_exp: 40.0,
            k_lock: 25.0,
            k_fric: 1.0,
            mu: 0.3,
            f_service: 10.0,
        }
    }
}

/// Lumped responses of one interface.
#[derive(Clone, Debug, PartialEq)]
pub struct BoneResponses {
    pub bearing_area: f64,
    pub tip_area: f64,
    pub frontal_area: f64,
    pub d_subsidence: f64,
    pub d_expulsion: f64,
    pub d_micro: f64,
    pub sigma_max: f64,
}

impl BoneConstants {
    pub fn responses(&self, grid: &SpikeGrid, shape: &EndplateShape, fx: f64, fy: f64) -> Result<BoneResponses> {
        let a_b = shape.bearing_area(fx, fy);
        let n = grid.count();
        let hole_fraction = n * grid.base_area_per_spike() / a_b;
        let a_tip = grid.tip_area();
        let a_front = grid.frontal_area();
        let sub_den = self.k_cort * a_b * (1.0 - self.beta * hole_fraction) + self.k_trab * a_tip;
        let exp_den = self.k_lock * a_front + self.k_fric * self.mu * self.f_sub;
        let tip_total = n * grid.tip_area_per_spike();
        if a_b <= 0.0 || sub_den <= 0.0 || exp_den <= 0.0 || tip_total <= 0.0 {
            return Err(Error::DegenerateGeometry(format!(
                "bearing area {a_b}, subsidence stiffness {sub_den}, expulsion stiffness {exp_den}, tip area {tip_total}"
            )));
        }
        Ok(BoneResponses {
            bearing_area: a_b,
            tip_area: a_tip,
            frontal_area: a_front,
            d_subsidence: self.f_sub / sub_den,
            d_expulsion: self.f_exp / exp_den,
            d_micro: self.f_service / exp_den,
            sigma_max: self.f_sub / tip_total / 1000.0,
        })
    }
}

/// Bone-interface evaluator for one side (the space's rule set decides which).
#[derive(Clone, Debug)]
pub struct BoneSurrogate {
    pub space: DesignSpace,
    pub side: BoneSide,
    pub constants: BoneConstants,
}

impl BoneSurrogate {
    pub fn new(space: DesignSpace, constants: BoneConstants) -> Result<Self> {
        let side = match space.rules() {
            SamplingRules::BoneInterface(side) => *side,
            _ => {
                return Err(Error::Config(format!(
                    "bone surrogate needs a bone-interface space, got `{}`",
                    space.name()
                )))
            }
        };
        for key in [FOOTPRINT_X, FOOTPRINT_Y] {
            if space.constant(key).is_none() {
                return Err(Error::InvalidSpace(format!("missing constant `{key}`")));
            }
        }
        Ok(Self { space, side, constants })
    }

    pub fn responses(&self, resolved: &BTreeMap<String, f64>) -> Result<BoneResponses> {
        let grid = SpikeGrid::from_resolved(resolved, self.side.spike_prefix())?;
        let shape = EndplateShape::from_resolved(resolved, self.side.endplate_prefix())?;
        let fx = self.space.constant(FOOTPRINT_X).unwrap_or_default();
        let fy = self.space.constant(FOOTPRINT_Y).unwrap_or_default();
        self.constants.responses(&grid, &shape, fx, fy)
    }
}

impl Evaluator for BoneSurrogate {
    fn name(&self) -> &str {
        "bone_surrogate"
    }

    fn evaluate(&self, point: &DesignPoint) -> ResponseSet {
        if let Some(r) = out_of_bounds(&self.space, point) {
            return r;
        }
        match self.responses(&point.resolved) {
            Ok(r) => {
                let s: BTreeMap<String, f64> = [
                    (D_SUBSIDENCE, r.d_subsidence),
                    (D_EXPULSION, r.d_expulsion),
                    (D_MICRO, r.d_micro),
                    (SIGMA_MAX, r.sigma_max),
                    ("bearing_area", r.bearing_area),
                    ("tip_area", r.tip_area),
                    ("frontal_area", r.frontal_area),
                ]
                .into_iter()
                .map(|(k, v)| (k.to_owned(), v))
                .collect();
                ResponseSet::ok(s).checked()
            }
            Err(Error::DegenerateGeometry(_)) => ResponseSet::failed("degenerate_geometry"),
            Err(e) => ResponseSet::failed(format!("invalid_design: {e}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::presets::preset;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inferior() -> (BoneSurrogate, crate::space::presets::Preset) {
        let p = preset("bone_inferior").unwrap();
        (
            BoneSurrogate::new(p.space.clone(), BoneConstants::default()).unwrap(),
            p,
        )
    }

    #[test]
    fn baseline_inferior_by_hand() {
        let (ev, p) = inferior();
        let point = ev.space.point(p.baseline_values(), 0, 0).unwrap();
        let r = ev.evaluate(&point);
        // Footprint 15 × 17, base radius 3, minor radii 1.5; 2 × 2 spikes of
        // 3 × 3 base, tip 0.5 × 0.3, height 1.25.
        let pi = std::f64::consts::PI;
        let a_b = 15.0 * 17.0 - (4.0 - pi) * 9.0 - (17.0 * 1.5 + 2.0 * 15.0 * 1.5 + 17.0 * 1.5) * (1.0 - pi / 4.0);
        let hole = 4.0 * 9.0 / a_b;
        let a_tip = 4.0 * 0.5 * 0.3;
        let d_sub = 150.0 / (12.0 * a_b * (1.0 - 0.5 * hole) + 3.0 * a_tip);
        assert!((r.scalar(D_SUBSIDENCE).unwrap() - d_sub).abs() <= 1e-12);
        let a_front = 4.0 * 0.5 * 1.25 * (3.0 + 0.3);
        let d_exp = 40.0 / (25.0 * a_front + 1.0 * 0.3 * 150.0);
        assert!((r.scalar(D_EXPULSION).unwrap() - d_exp).abs() <= 1e-12);
        assert!((r.scalar(D_MICRO).unwrap() - 10.0 / (25.0 * a_front + 45.0)).abs() <= 1e-12);
        assert!((r.scalar(SIGMA_MAX).unwrap() - 0.25).abs() <= 1e-12);
    }

    #[test]
    fn taller_spikes_reduce_expulsion() {
        let (ev, p) = inferior();
        let mut m = p.baseline_map();
        m.insert("fix_2_height".into(), 0.9);
        let base = ev.responses(&m).unwrap();
        m.insert("fix_2_height".into(), 1.8);
        let doubled = ev.responses(&m).unwrap();
        assert!((doubled.frontal_area - 2.0 * base.frontal_area).abs() < 1e-12);
        assert!(doubled.d_expulsion < base.d_expulsion);
    }

    #[test]
    fn tiny_tips_violate_stress_limit() {
        let (ev, p) = inferior();
        let mut m = p.baseline_map();
        m.insert("fix_2_top_y_shift_lat".into(), 1.499);
        let r = ev.responses(&m).unwrap();
        assert!(r.sigma_max > 0.3 * 10.0);
        m.insert("fix_2_top_y_shift_lat".into(), 1.5);
        assert!(matches!(ev.responses(&m), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn continuity_probe() {
        let (ev, p) = inferior();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let names = ev.space.sampled_names();
        for _ in 0..20 {
            let mut m = p.baseline_map();
            for (i, name) in names.iter().enumerate() {
                let spec = ev.space.sampled_spec(i);
                if let Some((lo, hi)) = spec.bounds() {
                    if !spec.is_discrete() {
                        m.insert(name.clone(), lo + (hi - lo) * rng.random::<f64>());
                    }
                }
            }
            // Keep the tip face non-degenerate so every response exists.
            m.insert("fix_2_top_y_shift_lat".into(), 0.2);
            m.insert("fix_2_top_x_shift_ant".into(), 0.1);
            m.insert("fix_2_top_x_shift_pos".into(), 0.1);
            let r0 = ev.responses(&m).unwrap();
            for name in names.iter().filter(|n| !n.contains("number")) {
                let mut diffs = Vec::new();
                for h in [1e-3, 1e-5, 1e-7] {
                    let mut mh = m.clone();
                    *mh.get_mut(name).unwrap() += h;
                    let r1 = ev.responses(&mh).unwrap();
                    diffs.push(
                        (r1.d_subsidence - r0.d_subsidence).abs()
                            + (r1.d_expulsion - r0.d_expulsion).abs()
                            + (r1.sigma_max - r0.sigma_max).abs(),
                    );
                }
                assert!(diffs[2] <= diffs[0] + 1e-15 && diffs[2] < 1e-4, "{name}: {diffs:?}");
            }
        }
    }

    #[test]
    fn requires_bone_space() {
        let p = preset("single_articulation").unwrap();
        assert!(BoneSurrogate::new(p.space, BoneConstants::default()).is_err());
    }
}
