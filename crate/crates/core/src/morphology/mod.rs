//! Binary-mask geometry on anisotropic voxel grids.
//!
//! All distances are Euclidean between voxel centers, in millimetres.

mod components;
mod distance;
mod shape;

use serde::{Deserialize, Serialize};

use crate::volume::{DType, Grid, LabelMap, VolumeHeader};

pub use components::{connected_components, ComponentSet};
pub use distance::{
    dilate, erode, peripheral_shell, squared_distance_to, StructuringElement, HILAR_PROXY_RADIUS_MM,
};
pub use shape::{max_axial_diameter, roundedness};

pub type BinaryMask = Grid<bool>;

/// Build a mask from a label map.
pub fn mask_where(map: &LabelMap, pred: impl Fn(u8) -> bool) -> BinaryMask {
    map.grid.map(|&v| pred(v), DType::Uint8)
}

pub fn empty_mask(header: &VolumeHeader) -> BinaryMask {
    Grid::filled(header.with_dtype(DType::Uint8), false).expect("header already validated")
}

pub fn count_true(mask: &BinaryMask) -> usize {
    mask.voxels().iter().filter(|&&b| b).count()
}

/// Voxel adjacency used by component labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Face6,
    Full26,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            6 => Ok(Connectivity::Face6),
            26 => Ok(Connectivity::Full26),
            other => Err(format!("connectivity must be 6 or 26, got {other}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Face6 => 6,
            Connectivity::Full26 => 26,
        }
    }
}

/// `r²` with a tiny relative slack so voxels lying exactly on the sphere are
/// included regardless of summation order.
#[inline]
pub(crate) fn radius_sq(radius_mm: f64) -> f64 {
    radius_mm * radius_mm * (1.0 + 1e-9)
}
