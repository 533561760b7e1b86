//! Quasi-static lumped model of a cervical motion segment, intact or with a
//! disc replacement, under the four main motions.
//!
//! Each motion is a single rotational degree of freedom `u` (degrees,
//! positive in the loading direction). After a settling phase the applied
//! moment ramps linearly to its peak; at every 10 ms step the equilibrium
//!
//! ```text
//! m(t) = J(u) + Σ_lig r·F_lig(u) + r_f·F_facet(u)
//! ```
//!
//! is solved for `u` by bisection. `J` is either the intact joint
//! `k·(u + u³/u_c²)` or a disc-replacement joint built from the design:
//! ball friction, a soft-tissue spring, the preload acting on the AP offset
//! of the center of rotation, and a wall spring once the demanded
//! translation `x_c·(1 − cos θ) + R_eff·sin θ` exceeds the trough travel.
//!
//! Ligaments are tension-only springs on `ε = max(0, (r·u + a·τ)/l₀ − slack)`
//! and the facets are a unilateral spring engaging at a motion-specific
//! angle. The intact parameters are calibrated in closed form so the peak
//! state reproduces reference rotations, translations, facet forces and the
//! interspinous peak strain.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{out_of_bounds, Evaluator, ResponseSet};
use crate::error::{Error, Result};
use crate::problem::{Curve, ObjectiveSpec};
use crate::space::{DesignPoint, DesignSpace, SamplingRules};

pub const SIGMA_MAX: &str = "sigma_max";
pub const IMPINGEMENT: &str = "impingement";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Flexion,
    Extension,
    LateralBending,
    AxialRotation,
}

impl Motion {
    pub const ALL: [Motion; 4] = [
        Motion::Flexion,
        Motion::Extension,
        Motion::LateralBending,
        Motion::AxialRotation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Motion::Flexion => "flexion",
            Motion::Extension => "extension",
            Motion::LateralBending => "lateral_bending",
            Motion::AxialRotation => "axial_rotation",
        }
    }

    /// Sign of the reported rotation and AP translation.
    pub fn sign(self) -> f64 {
        if self == Motion::Extension {
            -1.0
        } else {
            1.0
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn sagittal(self) -> bool {
        matches!(self, Motion::Flexion | Motion::Extension)
    }
}

/// Per-motion values in [`Motion::ALL`] order.
pub type PerMotion = [f64; 4];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadCase {
    pub motion: Motion,
    /// Compressive follower preload, N.
    pub preload: f64,
    /// Peak moment magnitude, N·m.
    pub moment: f64,
    pub ramp_duration: f64,
    pub settling: f64,
    pub dt: f64,
}

impl LoadCase {
    pub fn steps(&self) -> usize {
        ((self.settling + self.ramp_duration) / self.dt).round() as usize + 1
    }

    pub fn moment_at(&self, t: f64) -> f64 {
        self.moment * ((t - self.settling) / self.ramp_duration).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ligament {
    pub name: String,
    /// Rest length, mm.
    pub rest_length: f64,
    /// Moment arm about the rotation axis, mm.
    pub lever: PerMotion,
    /// Elongation per mm of coupled translation.
    pub coupling: PerMotion,
    pub slack: f64,
    /// Force per unit strain, N.
    pub stiffness: f64,
}

impl Ligament {
    pub fn strain(&self, motion: Motion, u_deg: f64, tau: f64) -> f64 {
        let i = motion.index();
        let stretch = self.lever[i] * u_deg.to_radians() + self.coupling[i] * tau;
        (stretch / self.rest_length - self.slack).max(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Facet {
    /// Moment arm of the resultant contact force, mm.
    pub lever: PerMotion,
    /// Rotation at which the cartilage surfaces engage, deg.
    pub engagement: PerMotion,
    /// Contact stiffness, N/deg.
    pub stiffness: f64,
    /// AP distance from the intact rotation center to the facets, mm.
    pub distance: f64,
}

impl Facet {
    fn force(&self, motion: Motion, u_facet: f64) -> f64 {
        self.stiffness * (u_facet - self.engagement[motion.index()]).max(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntactJoint {
    /// Linear rotational stiffness, N·m/deg.
    pub stiffness: PerMotion,
    /// Stiffening angle of the cubic term, deg.
    pub theta_c: PerMotion,
    /// Coupled AP translation per degree, mm/deg.
    pub kappa: PerMotion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TdrConstants {
    /// Ceramic-on-ceramic friction coefficient.
    pub mu: f64,
    /// Rotation over which friction develops (tanh scale), deg.
    pub friction_angle: f64,
    /// Remaining soft-tissue rotational stiffness, N·m/deg.
    pub soft_stiffness: PerMotion,
    /// Wall stiffness per mm of trough depth, N·m per mm².
    pub wall_stiffness: f64,
    /// Height of the vertebral reference point above the sphere, mm.
    pub reference_height: f64,
    /// Travel added per mm of trough-edge fillet radius.
    pub torus_factor: f64,
    /// Lateral roll-out travel per mm of the smaller trough fillet.
    pub lateral_torus_factor: f64,
    /// Radial bearing clearance, mm.
    pub clearance: f64,
    /// Extra contact force per mm of blocked translation, N/mm.
    pub contact_stiffness: f64,
    /// Hertz-like stress estimate `σ = c_h·F/(π·R·clearance·κ_h)`.
    pub hertz_c: f64,
    pub hertz_kappa: f64,
}

impl Default for TdrConstants {
    fn default() -> Self {
        Self {
            mu: 0.16,
            friction_angle: 0.5,
            soft_stiffness: [0.06, 0.06, 0.08, 0.1],
            wall_stiffness: 0.6,
            reference_height: 6.0,
            torus_factor: 0.25,
            lateral_torus_factor: 0.1,
            clearance: 0.07,
            contact_stiffness: 200.0,
            hertz_c: 1.0,
            hertz_kappa: 4.0,
        }
    }
}

/// Reference state of the intact segment at peak load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationTargets {
    /// Peak rotation magnitudes, deg.
    pub rotation: PerMotion,
    /// Peak AP translation magnitudes, mm.
    pub translation: PerMotion,
    /// Peak summed facet force, N.
    pub facet_force: PerMotion,
    /// Peak interspinous strain in flexion.
    pub isl_peak_flexion: f64,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self {
            rotation: [5.48, 6.16, 3.20, 2.49],
            translation: [1.03, 1.19, 0.0, 0.0],
            // Flexion facet contact is small but kept nonzero.
            facet_force: [15.0, 53.77, 8.04, 47.41],
            isl_peak_flexion: 0.638,
        }
    }
}

/// Ligament index of the interspinous ligament.
pub const ISL: usize = 1;
pub const LIGAMENT_NAMES: [&str; 3] = ["cap", "isl", "flav"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentParams {
    /// Capsular, interspinous and flavum ligaments, in that order.
    pub ligaments: Vec<Ligament>,
    pub facet: Facet,
    pub intact: IntactJoint,
    pub tdr: TdrConstants,
    /// Implant scale factor.
    pub scale: f64,
    pub preload: f64,
    pub moment: PerMotion,
    pub ramp_duration: f64,
    pub settling: f64,
    pub dt: f64,
    /// Bisection bracket, deg.
    pub max_angle: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self::uncalibrated()
            .calibrated(&CalibrationTargets::default())
            .expect("default constants calibrate")
    }
}

impl SegmentParams {
    /// Geometry and stiffness constants before intact calibration.
    pub fn uncalibrated() -> Self {
        let lig = |name: &str, l0, lever, coupling, slack, stiffness| Ligament {
            name: name.to_owned(),
            rest_length: l0,
            lever,
            coupling,
            slack,
            stiffness,
        };
        Self {
            ligaments: vec![
                lig("cap", 6.0, [12.0, 8.0, 15.0, 18.0], [0.5, 0.5, 0.3, 0.0], 0.02, 30.0),
                lig("isl", 6.0, [35.0, 5.0, 10.0, 12.0], [1.0, 0.3, 0.2, 0.0], 0.05, 10.0),
                lig("flav", 12.0, [20.0, 4.0, 12.0, 10.0], [0.8, 0.3, 0.2, 0.0], 0.01, 25.0),
            ],
            facet: Facet {
                lever: [15.0, 15.0, 20.0, 20.0],
                engagement: [0.0; 4],
                stiffness: 20.0,
                distance: 14.0,
            },
            intact: IntactJoint {
                stiffness: [0.1; 4],
                theta_c: [8.0; 4],
                kappa: [0.0; 4],
            },
            tdr: TdrConstants::default(),
            scale: 0.75,
            preload: 73.6,
            moment: [1.8, 1.0, 1.8, 1.8],
            ramp_duration: 1.0,
            settling: 0.1,
            dt: 0.010,
            max_angle: 45.0,
        }
    }

    pub fn load_case(&self, motion: Motion) -> LoadCase {
        LoadCase {
            motion,
            preload: self.preload,
            moment: self.moment[motion.index()],
            ramp_duration: self.ramp_duration,
            settling: self.settling,
            dt: self.dt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ligaments.len() != 3 {
            return Err(Error::Config(
                "exactly three ligaments (cap, isl, flav) are required".into(),
            ));
        }
        let bad = |what: &str| Err(Error::Config(format!("segment parameters: {what}")));
        for l in &self.ligaments {
            if !(l.rest_length > 0.0) || l.stiffness < 0.0 || l.slack < 0.0 {
                return bad(&format!("ligament `{}` needs l0 > 0, stiffness ≥ 0, slack ≥ 0", l.name));
            }
        }
        if self.facet.stiffness < 0.0 || !(self.facet.distance > 0.0) {
            return bad("facet stiffness ≥ 0 and distance > 0");
        }
        if !(self.dt > 0.0 && self.ramp_duration > 0.0 && self.settling >= 0.0 && self.max_angle > 0.0) {
            return bad("dt, ramp_duration, max_angle > 0 and settling ≥ 0");
        }
        if !(self.scale > 0.0) {
            return bad("scale > 0");
        }
        Ok(())
    }

    /// Closed-form calibration of the intact joint, translation coupling,
    /// facet engagement angles and interspinous rest length so that the
    /// peak-load equilibrium matches `targets`.
    pub fn calibrated(mut self, targets: &CalibrationTargets) -> Result<Self> {
        self.validate()?;
        for m in Motion::ALL {
            let i = m.index();
            let u = targets.rotation[i];
            if !(u > 0.0) {
                return Err(Error::Config(format!(
                    "calibration rotation for {} must be positive",
                    m.name()
                )));
            }
            self.intact.kappa[i] = targets.translation[i] / u;
            let engage = u - targets.facet_force[i] / self.facet.stiffness;
            if engage < 0.0 {
                return Err(Error::Config(format!(
                    "facet stiffness too low to reach {} N in {}",
                    targets.facet_force[i],
                    m.name()
                )));
            }
            self.facet.engagement[i] = engage;
        }
        let flex = Motion::Flexion.index();
        let isl = &mut self.ligaments[ISL];
        let stretch =
            isl.lever[flex] * targets.rotation[flex].to_radians() + isl.coupling[flex] * targets.translation[flex];
        isl.rest_length = stretch / (targets.isl_peak_flexion + isl.slack);
        for m in Motion::ALL {
            let i = m.index();
            let u = targets.rotation[i];
            let tau = self.intact.kappa[i] * u;
            let passive = self.passive_moment(m, u, u, tau);
            let remaining = self.moment[i] - passive;
            if remaining <= 0.0 {
                return Err(Error::Config(format!(
                    "ligaments and facets alone exceed the {} moment; cannot calibrate",
                    m.name()
                )));
            }
            self.intact.stiffness[i] = remaining / (u + u.powi(3) / self.intact.theta_c[i].powi(2));
        }
        Ok(self)
    }

    /// Ligament plus facet moment (N·m).
    fn passive_moment(&self, m: Motion, u: f64, u_facet: f64, tau: f64) -> f64 {
        let i = m.index();
        let lig: f64 = self
            .ligaments
            .iter()
            .map(|l| l.lever[i] * l.stiffness * l.strain(m, u, tau))
            .sum();
        (lig + self.facet.lever[i] * self.facet.force(m, u_facet)) / 1000.0
    }
}

/// Disc-replacement kinematic parameters derived from a design (mm).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdrKinematics {
    /// Bearing radius used for friction and contact stress.
    pub friction_radius: f64,
    /// Distance from the rotation center to the vertebral reference point.
    pub effective_radius: f64,
    /// AP offset of the rotation center (anterior positive).
    pub center_offset: f64,
    pub travel_anterior: f64,
    pub travel_posterior: f64,
    pub travel_lateral: f64,
    pub trough_depth: f64,
}

fn get(map: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    map.get(key)
        .copied()
        .ok_or_else(|| Error::UnknownVariable(key.to_owned()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Articulation {
    Single,
    Dual,
}

impl TdrKinematics {
    pub fn from_design(kind: Articulation, v: &BTreeMap<String, f64>, p: &SegmentParams) -> Result<Self> {
        let s = p.scale;
        let c = &p.tdr;
        let travel = |cyl_h: f64, offset: f64, torus: f64, dir: f64| {
            c.clearance + s * ((0.5 * cyl_h + dir * offset).max(0.0) + c.torus_factor * torus)
        };
        Ok(match kind {
            Articulation::Single => {
                let r = get(v, "sphere_radius")?;
                let cyl_h = get(v, "cylinder_height")?;
                let off = get(v, "cylinder_offset")?;
                let t1 = get(v, "torus1_radius1")?;
                let t2 = get(v, "torus2_radius1")?;
                TdrKinematics {
                    friction_radius: s * r,
                    effective_radius: s * (r + get(v, "sphere_origin_zshift")?) + c.reference_height,
                    center_offset: s * get(v, "sphere_origin_xshift")?,
                    travel_anterior: travel(cyl_h, off, t1, 1.0),
                    travel_posterior: travel(cyl_h, off, t2, -1.0),
                    travel_lateral: c.clearance + s * c.lateral_torus_factor * t1.min(t2),
                    trough_depth: s * get(v, "trough_depth")?.max(0.0),
                }
            }
            Articulation::Dual => {
                let r_top = get(v, "top_sphere_R")?;
                let r_bot = get(v, "bottom_sphere_R")?;
                let mut k = TdrKinematics {
                    friction_radius: s * r_top.min(r_bot),
                    effective_radius: s * 0.5 * (r_top + r_bot) + c.reference_height,
                    center_offset: s * get(v, "midline_xshift")?,
                    travel_anterior: 0.0,
                    travel_posterior: 0.0,
                    travel_lateral: 0.0,
                    trough_depth: 0.0,
                };
                for side in ["sup", "inf"] {
                    let g = |name: &str| get(v, &format!("{name}_{side}"));
                    let (cyl_h, off, t1, t2) = (
                        g("cylinder_height")?,
                        g("cylinder_offset")?,
                        g("torus1_radius1")?,
                        g("torus2_radius1")?,
                    );
                    k.travel_anterior += travel(cyl_h, off, t1, 1.0);
                    k.travel_posterior += travel(cyl_h, off, t2, -1.0);
                    k.travel_lateral += c.clearance + s * c.lateral_torus_factor * t1.min(t2);
                    k.trough_depth += 0.5 * s * g("trough_depth")?.max(0.0);
                }
                k
            }
        })
    }
}

/// The rotational joint between the vertebrae.
#[derive(Clone, Debug, PartialEq)]
pub enum Joint {
    Intact(IntactJoint),
    Tdr(TdrKinematics),
}

/// One step of the sweep.
struct State {
    tau: f64,
    u_facet: f64,
    joint_moment: f64,
    excess: f64,
}

impl Joint {
    fn state(&self, p: &SegmentParams, m: Motion, u: f64) -> State {
        let i = m.index();
        match self {
            Joint::Intact(j) => State {
                tau: j.kappa[i] * u,
                u_facet: u,
                joint_moment: j.stiffness[i] * (u + u.powi(3) / j.theta_c[i].powi(2)),
                excess: 0.0,
            },
            Joint::Tdr(k) => {
                let c = &p.tdr;
                let sign = m.sign();
                let theta = (sign * u).to_radians();
                let (tau, excess) = match m {
                    Motion::Flexion | Motion::Extension => {
                        let demand = k.center_offset * (1.0 - theta.cos()) + k.effective_radius * theta.sin();
                        let t = demand.clamp(-k.travel_posterior, k.travel_anterior);
                        (sign * t, sign * (demand - t))
                    }
                    Motion::LateralBending => {
                        let demand = k.effective_radius * theta.sin();
                        let t = demand.clamp(-k.travel_lateral, k.travel_lateral);
                        (t, demand - t)
                    }
                    Motion::AxialRotation => (0.0, 0.0),
                };
                let friction = c.mu * p.preload * k.friction_radius / 1000.0 * (u / c.friction_angle).tanh();
                let bias = if m.sagittal() {
                    sign * p.preload * k.center_offset * theta.cos() / 1000.0
                } else {
                    0.0
                };
                let wall = c.wall_stiffness * k.trough_depth * excess;
                let ratio = if m == Motion::LateralBending {
                    1.0
                } else {
                    ((p.facet.distance + k.center_offset) / p.facet.distance).max(0.1)
                };
                State {
                    tau,
                    u_facet: ratio * u,
                    joint_moment: friction + c.soft_stiffness[i] * u + bias + wall,
                    excess,
                }
            }
        }
    }

    fn resisting(&self, p: &SegmentParams, m: Motion, u: f64) -> (f64, State) {
        let s = self.state(p, m, u);
        (s.joint_moment + p.passive_moment(m, u, s.u_facet, s.tau), s)
    }
}

/// Time histories of one motion.
#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub motion: Motion,
    /// Signed rotation, deg.
    pub rotation: Vec<f64>,
    /// Signed AP (or lateral) translation, mm.
    pub translation: Vec<f64>,
    /// Strains in [`LIGAMENT_NAMES`] order.
    pub strains: [Vec<f64>; 3],
    pub facet_force: Vec<f64>,
    pub max_residual: f64,
    pub max_excess: f64,
}

const BISECTION_ITERS: usize = 200;
pub const RESIDUAL_TOL: f64 = 1e-6;

/// Runs the quasi-static sweep; `Err` when equilibrium cannot be bracketed.
pub fn simulate(p: &SegmentParams, joint: &Joint, case: &LoadCase) -> std::result::Result<Sweep, &'static str> {
    let m = case.motion;
    let n = case.steps();
    let mut out = Sweep {
        motion: m,
        rotation: Vec::with_capacity(n),
        translation: Vec::with_capacity(n),
        strains: [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)],
        facet_force: Vec::with_capacity(n),
        max_residual: 0.0,
        max_excess: 0.0,
    };
    let f = |u: f64, target: f64| joint.resisting(p, m, u).0 - target;
    for k in 0..n {
        let target = case.moment_at(k as f64 * case.dt);
        let (mut lo, mut hi) = (-p.max_angle, p.max_angle);
        if !(f(lo, target) < 0.0 && f(hi, target) > 0.0) {
            return Err("no_equilibrium");
        }
        let mut u = 0.5 * (lo + hi);
        for _ in 0..BISECTION_ITERS {
            u = 0.5 * (lo + hi);
            let r = f(u, target);
            if r == 0.0 || hi - lo <= f64::EPSILON * p.max_angle {
                break;
            }
            if r < 0.0 {
                lo = u;
            } else {
                hi = u;
            }
        }
        let (resist, s) = joint.resisting(p, m, u);
        let residual = (resist - target).abs();
        if !residual.is_finite() || residual > RESIDUAL_TOL {
            return Err("no_equilibrium");
        }
        out.max_residual = out.max_residual.max(residual);
        out.max_excess = out.max_excess.max(s.excess.abs());
        out.rotation.push(m.sign() * u);
        out.translation.push(m.sign() * s.tau);
        for (j, l) in p.ligaments.iter().enumerate() {
            out.strains[j].push(l.strain(m, u, s.tau));
        }
        out.facet_force.push(p.facet.force(m, s.u_facet));
    }
    Ok(out)
}

pub fn strain_curve_name(ligament: &str, m: Motion) -> String {
    format!("strain_{ligament}_{}", m.name())
}

pub fn facet_curve_name(m: Motion) -> String {
    format!("force_facet_{}", m.name())
}

/// The sixteen tracked curve names (three strains and the facet force per motion).
pub fn curve_names() -> Vec<String> {
    let mut v = Vec::with_capacity(16);
    for m in Motion::ALL {
        for l in LIGAMENT_NAMES {
            v.push(strain_curve_name(l, m));
        }
        v.push(facet_curve_name(m));
    }
    v
}

/// All four motions for one joint, collected as a response set.
pub fn respond(p: &SegmentParams, joint: &Joint) -> ResponseSet {
    let mut rs = ResponseSet::ok(BTreeMap::new());
    rs.settling_end = p.settling;
    let mut max_excess: f64 = 0.0;
    let mut residual: f64 = 0.0;
    for m in Motion::ALL {
        let sweep = match simulate(p, joint, &p.load_case(m)) {
            Ok(s) => s,
            Err(reason) => return ResponseSet::failed(reason),
        };
        for (j, l) in p.ligaments.iter().enumerate() {
            let name = strain_curve_name(&l.name, m);
            rs.curves.insert(
                name.clone(),
                Curve {
                    quantity: name,
                    units: "strain".into(),
                    dt: p.dt,
                    values: sweep.strains[j].clone(),
                },
            );
        }
        let name = facet_curve_name(m);
        rs.curves.insert(
            name.clone(),
            Curve {
                quantity: name,
                units: "N".into(),
                dt: p.dt,
                values: sweep.facet_force.clone(),
            },
        );
        let last = sweep.rotation.len() - 1;
        rs.scalars
            .insert(format!("rotation_{}", m.name()), sweep.rotation[last]);
        rs.scalars
            .insert(format!("translation_{}", m.name()), sweep.translation[last]);
        rs.scalars.insert(
            format!("peak_facet_{}", m.name()),
            sweep.facet_force.iter().copied().fold(0.0, f64::max),
        );
        rs.scalars.insert(
            format!("peak_strain_isl_{}", m.name()),
            sweep.strains[ISL].iter().copied().fold(0.0, f64::max),
        );
        max_excess = max_excess.max(sweep.max_excess);
        residual = residual.max(sweep.max_residual);
    }
    rs.scalars.insert("equilibrium_residual".into(), residual);
    let c = &p.tdr;
    let (sigma, impingement) = match joint {
        Joint::Intact(_) => (0.0, 0.0),
        Joint::Tdr(k) => {
            let force = p.preload + c.contact_stiffness * max_excess;
            let sigma = c.hertz_c * force / (PI * k.friction_radius * c.clearance * c.hertz_kappa) / 1000.0;
            (sigma, max_excess - (c.clearance + 0.5 * k.trough_depth))
        }
    };
    rs.scalars.insert(SIGMA_MAX.into(), sigma);
    rs.scalars.insert(IMPINGEMENT.into(), impingement);
    rs.checked()
}

/// Intact-segment curves used as curve-matching targets.
pub fn generate_targets(p: &SegmentParams) -> Result<BTreeMap<String, Curve>> {
    let rs = respond(p, &Joint::Intact(p.intact.clone()));
    if let Some(reason) = rs.failure() {
        return Err(Error::Config(format!("intact segment failed to solve: {reason}")));
    }
    Ok(rs.curves)
}

/// One equally weighted curve-MSE objective per target curve.
pub fn curve_objectives(targets: &BTreeMap<String, Curve>) -> Vec<ObjectiveSpec> {
    curve_names()
        .into_iter()
        .filter_map(|name| {
            targets.get(&name).map(|t| ObjectiveSpec::CurveMse {
                response: name.clone(),
                weight: 1.0,
                target: t.clone(),
                normalization: None,
            })
        })
        .collect()
}

/// Spinal-segment evaluator for the articulation design spaces.
#[derive(Clone, Debug)]
pub struct SpineSurrogate {
    pub space: DesignSpace,
    pub params: SegmentParams,
    pub articulation: Articulation,
    /// Replaces the design-derived joint (used to inject reference joints).
    pub joint_override: Option<Joint>,
}

impl SpineSurrogate {
    pub fn new(space: DesignSpace, params: SegmentParams) -> Result<Self> {
        params.validate()?;
        let articulation = match space.rules() {
            SamplingRules::SingleArticulation => Articulation::Single,
            SamplingRules::DualArticulation => Articulation::Dual,
            _ => {
                return Err(Error::Config(format!(
                    "spine surrogate needs an articulation space, got `{}`",
                    space.name()
                )))
            }
        };
        Ok(Self {
            space,
            params,
            articulation,
            joint_override: None,
        })
    }

    /// A surrogate whose joint replicates the intact segment exactly.
    pub fn intact_replica(&self) -> Self {
        Self {
            joint_override: Some(Joint::Intact(self.params.intact.clone())),
            ..self.clone()
        }
    }

    pub fn joint(&self, resolved: &BTreeMap<String, f64>) -> Result<Joint> {
        match &self.joint_override {
            Some(j) => Ok(j.clone()),
            None => Ok(Joint::Tdr(TdrKinematics::from_design(
                self.articulation,
                resolved,
                &self.params,
            )?)),
        }
    }
}

impl Evaluator for SpineSurrogate {
    fn name(&self) -> &str {
        "spine_surrogate"
    }

    fn evaluate(&self, point: &DesignPoint) -> ResponseSet {
        if let Some(r) = out_of_bounds(&self.space, point) {
            return r;
        }
        match self.joint(&point.resolved) {
            Ok(j) => respond(&self.params, &j),
            Err(e) => ResponseSet::failed(format!("invalid_design: {e}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Problem;
    use crate::space::presets::preset;

    fn within(actual: f64, expected: f64, rel: f64) -> bool {
        (actual - expected).abs() <= rel * expected.abs()
    }

    #[test]
    fn intact_calibration_hits_targets() {
        let p = SegmentParams::default();
        let rs = respond(&p, &Joint::Intact(p.intact.clone()));
        assert!(rs.is_ok(), "{:?}", rs.status);
        let s = |k: &str| rs.scalar(k).unwrap();
        assert!(within(s("rotation_flexion"), 5.48, 1e-6));
        assert!(within(s("translation_flexion"), 1.03, 1e-6));
        assert!(within(s("rotation_extension"), -6.16, 1e-6));
        assert!(within(s("translation_extension"), -1.19, 1e-6));
        assert!(within(s("rotation_lateral_bending"), 3.20, 1e-6));
        assert!(within(s("rotation_axial_rotation"), 2.49, 1e-6));
        assert!(within(s("peak_facet_extension"), 53.77, 1e-5));
        assert!(within(s("peak_facet_axial_rotation"), 47.41, 1e-5));
        assert!(within(s("peak_facet_lateral_bending"), 8.04, 1e-5));
        assert!(within(s("peak_strain_isl_flexion"), 0.638, 1e-6));
        assert!(s("equilibrium_residual") <= RESIDUAL_TOL);
    }

    #[test]
    fn targets_are_sixteen_nonzero_curves() {
        let p = SegmentParams::default();
        let t = generate_targets(&p).unwrap();
        assert_eq!(t.len(), 16);
        for (name, c) in &t {
            assert_eq!(c.len(), 111);
            assert!(c.max() > 0.0, "{name} is identically zero");
            assert!(c.values.iter().all(|v| *v >= 0.0));
        }
        assert_eq!(t, generate_targets(&p).unwrap());
        let ext = &t["force_facet_extension"];
        let first = ext.values.iter().position(|v| *v > 0.0).unwrap();
        assert!(ext.values[first..].windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn intact_replica_has_zero_objective() {
        let pre = preset("single_articulation").unwrap();
        let ev = SpineSurrogate::new(pre.space.clone(), SegmentParams::default()).unwrap();
        let targets = generate_targets(&ev.params).unwrap();
        let problem = Problem::new(curve_objectives(&targets), vec![]).unwrap();
        let point = pre.space.point(pre.baseline_values(), 0, 0).unwrap();
        let replica = ev.intact_replica().evaluate(&point);
        assert_eq!(problem.assess(&replica).unwrap().objective, 0.0);
        let tdr = ev.evaluate(&point);
        assert!(tdr.is_ok(), "{:?}", tdr.status);
        assert!(problem.assess(&tdr).unwrap().objective > 0.0);
    }

    #[test]
    fn tdr_designs_solve_with_small_residual() {
        for name in ["single_articulation", "dual_articulation"] {
            let pre = preset(name).unwrap();
            let ev = SpineSurrogate::new(pre.space.clone(), SegmentParams::default()).unwrap();
            for values in [pre.baseline_values(), pre.optimized_values()] {
                let rs = ev.evaluate(&pre.space.point(values, 0, 0).unwrap());
                assert!(rs.is_ok(), "{name}: {:?}", rs.status);
                assert!(rs.scalar("equilibrium_residual").unwrap() <= RESIDUAL_TOL);
                assert!(rs.curves.values().all(|c| c.values.iter().all(|v| *v >= 0.0)));
                assert!(rs.scalar(SIGMA_MAX).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn unbracketed_equilibrium_fails() {
        let mut p = SegmentParams::default();
        p.max_angle = 0.5;
        let rs = respond(&p, &Joint::Intact(p.intact.clone()));
        assert_eq!(rs.failure(), Some("no_equilibrium"));
    }

    #[test]
    fn requires_articulation_space() {
        let pre = preset("bone_inferior").unwrap();
        assert!(SpineSurrogate::new(pre.space, SegmentParams::default()).is_err());
    }
}
