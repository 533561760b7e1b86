//! Closed-form geometry of the bone-implant interface: endplate fillets and
//! the rectangular grid of tapered spikes.
//!
//! x is anteroposterior, y is mediolateral. Lengths in mm, areas in mm².

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which bone-implant interface a 17-variable sub-problem describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoneSide {
    /// Caudal interface: `bottom_*` endplate with the `fix_2_*` spikes.
    Inferior,
    /// Cranial interface: `top_*` endplate with the `fix_1_*` spikes.
    Superior,
}

impl BoneSide {
    pub fn endplate_prefix(self) -> &'static str {
        match self {
            BoneSide::Inferior => "bottom_",
            BoneSide::Superior => "top_",
        }
    }

    pub fn spike_prefix(self) -> &'static str {
        match self {
            BoneSide::Inferior => "fix_2_",
            BoneSide::Superior => "fix_1_",
        }
    }

    pub fn other(self) -> BoneSide {
        match self {
            BoneSide::Inferior => BoneSide::Superior,
            BoneSide::Superior => BoneSide::Inferior,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BoneSide::Inferior => "inferior",
            BoneSide::Superior => "superior",
        }
    }
}

fn lookup(map: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    map.get(key)
        .copied()
        .ok_or_else(|| Error::UnknownVariable(key.to_owned()))
}

/// Spike grid parameters as named in the interface design space.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeGrid {
    pub number_x: f64,
    pub number_y: f64,
    pub height: f64,
    pub bottom_x_len: f64,
    pub bottom_y_len: f64,
    pub gap_x: f64,
    pub gap_y: f64,
    pub top_x_shift_ant: f64,
    pub top_y_shift_lat: f64,
    pub top_x_shift_pos: f64,
}

impl SpikeGrid {
    pub fn from_resolved(map: &BTreeMap<String, f64>, prefix: &str) -> Result<Self> {
        let g = |k: &str| lookup(map, &format!("{prefix}{k}"));
        Ok(Self {
            number_x: g("number_x")?,
            number_y: g("number_y")?,
            height: g("height")?,
            bottom_x_len: g("bottom_x_len")?,
            bottom_y_len: g("bottom_y_len")?,
            gap_x: g("gap_x")?,
            gap_y: g("gap_y")?,
            top_x_shift_ant: g("top_x_shift_ant")?,
            top_y_shift_lat: g("top_y_shift_lat")?,
            top_x_shift_pos: g("top_x_shift_pos")?,
        })
    }

    pub fn count(&self) -> f64 {
        self.number_x * self.number_y
    }

    /// Unclamped AP length of the distal (tip) face.
    pub fn tip_x(&self) -> f64 {
        self.bottom_x_len - self.top_x_shift_ant - self.top_x_shift_pos
    }

    /// Unclamped ML length of the distal (tip) face.
    pub fn tip_y(&self) -> f64 {
        self.bottom_y_len - 2.0 * self.top_y_shift_lat
    }

    pub fn tip_area_per_spike(&self) -> f64 {
        self.tip_x().max(0.0) * self.tip_y().max(0.0)
    }

    /// Summed tip area of all spikes of the interface.
    pub fn tip_area(&self) -> f64 {
        self.count() * self.tip_area_per_spike()
    }

    pub fn base_area_per_spike(&self) -> f64 {
        self.bottom_x_len * self.bottom_y_len
    }

    /// Trapezoidal face of one spike projected on the frontal (y-z) plane.
    pub fn frontal_area_per_spike(&self) -> f64 {
        0.5 * self.height * (self.bottom_y_len + self.tip_y().max(0.0))
    }

    pub fn frontal_area(&self) -> f64 {
        self.count() * self.frontal_area_per_spike()
    }

    pub fn base_extent_x(&self) -> f64 {
        self.number_x * self.bottom_x_len + (self.number_x - 1.0) * self.gap_x
    }

    pub fn base_extent_y(&self) -> f64 {
        self.number_y * self.bottom_y_len + (self.number_y - 1.0) * self.gap_y
    }

    /// AP distance between the outermost tip edges of the grid.
    pub fn tip_extent_x(&self) -> f64 {
        self.base_extent_x() - self.top_x_shift_ant - self.top_x_shift_pos
    }

    pub fn tip_extent_y(&self) -> f64 {
        self.base_extent_y() - 2.0 * self.top_y_shift_lat
    }
}

/// Endplate corner and edge fillet radii.
#[derive(Clone, Debug, PartialEq)]
pub struct EndplateShape {
    pub base_radius: f64,
    pub major_radius: [f64; 3],
    pub minor_radius: [f64; 3],
}

/// Order of the `[anterior, lateral, posterior]` arrays.
pub const EDGE_NAMES: [&str; 3] = ["anterior", "lateral", "posterior"];

impl EndplateShape {
    pub fn from_resolved(map: &BTreeMap<String, f64>, prefix: &str) -> Result<Self> {
        let g = |k: &str| lookup(map, &format!("{prefix}{k}"));
        let mut major = [0.0; 3];
        let mut minor = [0.0; 3];
        for (i, edge) in EDGE_NAMES.iter().enumerate() {
            major[i] = g(&format!("major_radius_{edge}"))?;
            minor[i] = g(&format!("minor_radius_{edge}"))?;
        }
        Ok(Self {
            base_radius: g("base_radius")?,
            major_radius: major,
            minor_radius: minor,
        })
    }

    /// Flat bearing area: footprint minus the four rounded corners minus the
    /// edge-fillet bands (two lateral sides, one anterior, one posterior).
    pub fn bearing_area(&self, footprint_x: f64, footprint_y: f64) -> f64 {
        let corner_loss = (4.0 - PI) * self.base_radius * self.base_radius;
        let [ant, lat, pos] = self.minor_radius;
        let edge_loss = (footprint_y * ant + 2.0 * footprint_x * lat + footprint_y * pos) * (1.0 - PI / 4.0);
        footprint_x * footprint_y - corner_loss - edge_loss
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(bx: f64, by: f64, ant: f64, pos: f64, lat: f64, n: f64) -> SpikeGrid {
        SpikeGrid {
            number_x: n,
            number_y: n,
            height: 1.0,
            bottom_x_len: bx,
            bottom_y_len: by,
            gap_x: 1.0,
            gap_y: 1.0,
            top_x_shift_ant: ant,
            top_y_shift_lat: lat,
            top_x_shift_pos: pos,
        }
    }

    #[test]
    fn tip_area_clamps_each_edge() {
        // Both edges negative would give a positive product without clamping.
        let g = grid(1.0, 1.0, 1.0, 1.0, 1.0, 2.0);
        assert_eq!(g.tip_area_per_spike(), 0.0);
        let g = grid(3.0, 3.0, 0.5, 2.0, 1.35, 2.0);
        assert!((g.tip_area() - 4.0 * 0.5 * 0.3).abs() < 1e-12);
    }

    #[test]
    fn frontal_area_is_trapezoid() {
        let g = grid(2.0, 3.0, 0.0, 0.0, 1.0, 1.0);
        assert!((g.frontal_area_per_spike() - 0.5 * (3.0 + 1.0)).abs() < 1e-15);
    }
}
