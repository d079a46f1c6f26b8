use crate::error::{Error, Result};

use super::header::{DType, Orientation, VolumeHeader};

/// Scalar types that can be stored in a raw voxel file.
pub trait Voxel: Copy + PartialEq + Send + Sync + 'static {
    const DTYPE: DType;

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Voxel for i16 {
    const DTYPE: DType = DType::Int16;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        i16::from_le_bytes([bytes[0], bytes[1]])
    }
}

impl Voxel for u8 {
    const DTYPE: DType = DType::Uint8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.push(self);
    }

    fn read_le(bytes: &[u8]) -> Self {
        bytes[0]
    }
}

impl Voxel for f32 {
    const DTYPE: DType = DType::Float32;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
}

/// Dense 3-D grid, X fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    header: VolumeHeader,
    voxels: Vec<T>,
}

/// CT volume in Hounsfield units.
pub type Volume = Grid<i16>;
/// Clipped and rescaled CT intensities in [0, 1].
pub type NormalizedVolume = Grid<f32>;
/// Non-negative CNN activation intensities.
pub type ActivationMap = Grid<f32>;

impl<T> Grid<T> {
    pub fn from_parts(header: VolumeHeader, voxels: Vec<T>) -> Result<Self> {
        header.check()?;
        if voxels.len() != header.voxel_count() {
            return Err(Error::InvalidHeader(format!(
                "{} voxels supplied for dims {:?}",
                voxels.len(),
                header.dims
            )));
        }
        Ok(Grid { header, voxels })
    }

    pub fn header(&self) -> &VolumeHeader {
        &self.header
    }

    pub fn dims(&self) -> [usize; 3] {
        self.header.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.header.spacing_mm
    }

    pub fn voxels(&self) -> &[T] {
        &self.voxels
    }

    pub fn voxels_mut(&mut self) -> &mut [T] {
        &mut self.voxels
    }

    pub fn into_voxels(self) -> Vec<T> {
        self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U, dtype: DType) -> Grid<U> {
        Grid {
            header: self.header.with_dtype(dtype),
            voxels: self.voxels.iter().map(f).collect(),
        }
    }

    /// Replace spacing, keeping voxels.
    pub fn with_spacing(mut self, spacing_mm: [f64; 3]) -> Result<Self> {
        self.header.spacing_mm = spacing_mm;
        self.header.check()?;
        Ok(self)
    }
}

impl<T: Copy> Grid<T> {
    pub fn filled(header: VolumeHeader, value: T) -> Result<Self> {
        header.check()?;
        let n = header.voxel_count();
        Ok(Grid {
            header,
            voxels: vec![value; n],
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.voxels[self.header.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: T) {
        let i = self.header.index(x, y, z);
        self.voxels[i] = value;
    }

    /// Permute and flip axes so the result is stored in `target` orientation.
    pub fn reorient(&self, target: Orientation) -> Grid<T> {
        let src = &self.header;
        // For each target axis: the source axis carrying the same anatomical pair,
        // and whether it runs the opposite way.
        let mut source_axis = [0usize; 3];
        let mut flip = [false; 3];
        for (t, dir) in target.0.iter().enumerate() {
            let j = src
                .orientation
                .0
                .iter()
                .position(|d| d.pair() == dir.pair())
                .expect("orientation codes are validated at construction");
            source_axis[t] = j;
            flip[t] = src.orientation.0[j] != *dir;
        }
        if source_axis == [0, 1, 2] && flip == [false; 3] {
            return self.clone();
        }
        let dims = [src.dims[source_axis[0]], src.dims[source_axis[1]], src.dims[source_axis[2]]];
        let spacing_mm = [
            src.spacing_mm[source_axis[0]],
            src.spacing_mm[source_axis[1]],
            src.spacing_mm[source_axis[2]],
        ];
        let header = VolumeHeader {
            dims,
            spacing_mm,
            orientation: target,
            dtype: src.dtype,
        };
        let mut voxels = Vec::with_capacity(self.voxels.len());
        let mut sc = [0usize; 3];
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    for (t, &i) in [x, y, z].iter().enumerate() {
                        sc[source_axis[t]] = if flip[t] { dims[t] - 1 - i } else { i };
                    }
                    voxels.push(self.voxels[src.index(sc[0], sc[1], sc[2])]);
                }
            }
        }
        Grid { header, voxels }
    }
}

/// Clamp HU to [-1000, 0] and rescale linearly onto [0, 1].
pub fn clip_normalize(volume: &Volume) -> NormalizedVolume {
    volume.map(
        |&hu| (f32::from(hu).clamp(-1000.0, 0.0) + 1000.0) / 1000.0,
        DType::Float32,
    )
}
