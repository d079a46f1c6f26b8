use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Direction an array axis increases toward, in patient coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AxisDir {
    R,
    L,
    A,
    P,
    I,
    S,
}

impl AxisDir {
    fn from_char(c: char) -> Option<Self> {
        Some(match c.to_ascii_uppercase() {
            'R' => AxisDir::R,
            'L' => AxisDir::L,
            'A' => AxisDir::A,
            'P' => AxisDir::P,
            'I' => AxisDir::I,
            'S' => AxisDir::S,
            _ => return None,
        })
    }

    fn as_char(self) -> char {
        match self {
            AxisDir::R => 'R',
            AxisDir::L => 'L',
            AxisDir::A => 'A',
            AxisDir::P => 'P',
            AxisDir::I => 'I',
            AxisDir::S => 'S',
        }
    }

    /// 0 for the left/right pair, 1 for anterior/posterior, 2 for inferior/superior.
    pub fn pair(self) -> usize {
        match self {
            AxisDir::R | AxisDir::L => 0,
            AxisDir::A | AxisDir::P => 1,
            AxisDir::I | AxisDir::S => 2,
        }
    }
}

/// Three-letter axis code such as `RAI` or `LPS`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Orientation(pub [AxisDir; 3]);

impl Orientation {
    /// Canonical orientation every bundle is resampled into at load.
    pub const RAI: Orientation = Orientation([AxisDir::R, AxisDir::A, AxisDir::I]);
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidOrientationCode(s.to_string());
        // "RAI+" is accepted as a spelling of "RAI".
        let code = s.trim().trim_end_matches('+');
        let letters: Vec<char> = code.chars().collect();
        if letters.len() != 3 {
            return Err(bad());
        }
        let mut axes = [AxisDir::R; 3];
        let mut seen = [false; 3];
        for (slot, c) in axes.iter_mut().zip(letters) {
            let dir = AxisDir::from_char(c).ok_or_else(bad)?;
            if seen[dir.pair()] {
                return Err(bad());
            }
            seen[dir.pair()] = true;
            *slot = dir;
        }
        Ok(Orientation(axes))
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in self.0 {
            write!(f, "{}", a.as_char())?;
        }
        Ok(())
    }
}

impl Serialize for Orientation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Orientation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Int16,
    Uint8,
    Float32,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::Int16 => 2,
            DType::Uint8 => 1,
            DType::Float32 => 4,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DType::Int16 => "int16",
            DType::Uint8 => "uint8",
            DType::Float32 => "float32",
        })
    }
}

/// Sidecar header describing a raw voxel grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub orientation: Orientation,
    pub dtype: DType,
}

impl VolumeHeader {
    pub fn new(dims: [usize; 3], spacing_mm: [f64; 3], orientation: Orientation, dtype: DType) -> Result<Self> {
        let header = VolumeHeader {
            dims,
            spacing_mm,
            orientation,
            dtype,
        };
        header.check()?;
        Ok(header)
    }

    pub fn check(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::InvalidHeader(format!("dims must be positive, got {:?}", self.dims)));
        }
        if self.spacing_mm.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidHeader(format!(
                "spacing must be positive, got {:?}",
                self.spacing_mm
            )));
        }
        Ok(())
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Physical volume of one voxel in mm³.
    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing_mm[0] * self.spacing_mm[1] * self.spacing_mm[2]
    }

    /// Physical volume of one voxel in cm³.
    pub fn voxel_volume_cm3(&self) -> f64 {
        self.voxel_volume_mm3() / 1000.0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let rest = index / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    /// Same geometry (dims, spacing, orientation), ignoring dtype.
    pub fn same_geometry(&self, other: &VolumeHeader) -> bool {
        self.dims == other.dims && self.spacing_mm == other.spacing_mm && self.orientation == other.orientation
    }

    pub fn with_dtype(&self, dtype: DType) -> VolumeHeader {
        VolumeHeader {
            dtype,
            ..self.clone()
        }
    }
}
