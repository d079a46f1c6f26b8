use crate::error::{Error, Result};
use crate::volume::{Grid, VolumeHeader};

use super::{radius_sq, BinaryMask};

/// Radius of the vertical cylinder through the lungs centroid that stands in
/// for the bronchial tree when no bronchial mask is supplied.
pub const HILAR_PROXY_RADIUS_MM: f64 = 25.0;

/// Squared distance (mm²) from every voxel center to the nearest voxel whose
/// value equals `target`. `f64::INFINITY` when no such voxel exists.
///
/// Exact separable transform (lower envelope of parabolas, one pass per axis).
pub fn squared_distance_to(mask: &BinaryMask, target: bool) -> Vec<f64> {
    let h = mask.header();
    let [nx, ny, nz] = h.dims;
    let mut d: Vec<f64> = mask
        .voxels()
        .iter()
        .map(|&b| if b == target { 0.0 } else { f64::INFINITY })
        .collect();

    let longest = nx.max(ny).max(nz);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut sites = vec![0usize; longest];
    let mut bounds = vec![0.0; longest + 1];

    for (axis, &len) in h.dims.iter().enumerate() {
        let s2 = h.spacing_mm[axis] * h.spacing_mm[axis];
        let stride = match axis {
            0 => 1,
            1 => nx,
            _ => nx * ny,
        };
        let starts: Vec<usize> = match axis {
            0 => (0..ny * nz).map(|i| i * nx).collect(),
            1 => (0..nz).flat_map(|z| (0..nx).map(move |x| x + nx * ny * z)).collect(),
            _ => (0..nx * ny).collect(),
        };
        for start in starts {
            for i in 0..len {
                line[i] = d[start + i * stride];
            }
            lower_envelope(&line[..len], s2, &mut out[..len], &mut sites, &mut bounds);
            for i in 0..len {
                d[start + i * stride] = out[i];
            }
        }
    }
    d
}

fn lower_envelope(f: &[f64], s2: f64, out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        out.fill(f64::INFINITY);
        return;
    };
    let key = |q: usize| f[q] + s2 * (q * q) as f64;
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in (first + 1)..n {
        if !f[q].is_finite() {
            continue;
        }
        let mut s;
        loop {
            let p = v[k];
            s = (key(q) - key(p)) / (2.0 * s2 * (q - p) as f64);
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q.abs_diff(v[k]) as f64;
        *o = s2 * dq * dq + f[v[k]];
    }
}

fn check_radius(radius_mm: f64) -> Result<()> {
    if radius_mm < 0.0 || radius_mm.is_nan() {
        return Err(Error::NegativeRadius(radius_mm));
    }
    Ok(())
}

/// True wherever some input-true voxel lies within `radius_mm`.
pub fn dilate(mask: &BinaryMask, radius_mm: f64) -> Result<BinaryMask> {
    check_radius(radius_mm)?;
    if radius_mm == 0.0 {
        return Ok(mask.clone());
    }
    let limit = radius_sq(radius_mm);
    let d = squared_distance_to(mask, true);
    let bits = d.into_iter().map(|v| v <= limit).collect();
    Ok(Grid::from_parts(mask.header().clone(), bits).expect("same geometry"))
}

/// True wherever every voxel within `radius_mm` is input-true. Voxels beyond
/// the grid count as false.
pub fn erode(mask: &BinaryMask, radius_mm: f64) -> Result<BinaryMask> {
    check_radius(radius_mm)?;
    if radius_mm == 0.0 {
        return Ok(mask.clone());
    }
    let h = mask.header();
    let limit = radius_sq(radius_mm);
    let d = squared_distance_to(mask, false);
    let bits = (0..mask.len())
        .map(|i| mask.voxels()[i] && d[i] > limit && boundary_sq(h, i) > limit)
        .collect();
    Ok(Grid::from_parts(h.clone(), bits).expect("same geometry"))
}

/// Squared distance to the nearest voxel center just outside the grid.
fn boundary_sq(h: &VolumeHeader, index: usize) -> f64 {
    let c = h.coords(index);
    (0..3)
        .map(|a| {
            let steps = (c[a] + 1).min(h.dims[a] - c[a]) as f64;
            let d = steps * h.spacing_mm[a];
            d * d
        })
        .fold(f64::INFINITY, f64::min)
}

/// Subpleural shell of the lungs: lung voxels within `depth_mm` of the lung
/// boundary, minus the area around the bronchial tree.
///
/// With a bronchial mask the excluded area is that mask dilated by
/// `bronchial_margin_mm`; without one it is a vertical cylinder of radius
/// [`HILAR_PROXY_RADIUS_MM`] through the in-plane lungs centroid.
pub fn peripheral_shell(
    lungs: &BinaryMask,
    depth_mm: f64,
    bronchial: Option<&BinaryMask>,
    bronchial_margin_mm: f64,
) -> Result<BinaryMask> {
    if !(depth_mm > 0.0) {
        return Err(Error::InvalidParameter(format!("shell depth must be > 0, got {depth_mm}")));
    }
    check_radius(bronchial_margin_mm)?;
    if !lungs.voxels().iter().any(|&b| b) {
        return Err(Error::EmptyLungs);
    }
    let h = lungs.header();
    let mut shell = erode(lungs, depth_mm)?;
    for (s, &l) in shell.voxels_mut().iter_mut().zip(lungs.voxels()) {
        *s = l && !*s;
    }
    match bronchial {
        Some(b) => {
            if !b.header().same_geometry(h) {
                return Err(Error::InvalidParameter("bronchial mask geometry differs from lungs".into()));
            }
            let excluded = dilate(b, bronchial_margin_mm)?;
            for (s, &e) in shell.voxels_mut().iter_mut().zip(excluded.voxels()) {
                *s &= !e;
            }
        }
        None => {
            let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
            for (i, &l) in lungs.voxels().iter().enumerate() {
                if l {
                    let [x, y, _] = h.coords(i);
                    sx += x as f64;
                    sy += y as f64;
                    n += 1;
                }
            }
            let cx = sx / n as f64 * h.spacing_mm[0];
            let cy = sy / n as f64 * h.spacing_mm[1];
            let limit = radius_sq(HILAR_PROXY_RADIUS_MM);
            for (i, s) in shell.voxels_mut().iter_mut().enumerate() {
                if *s {
                    let [x, y, _] = h.coords(i);
                    let dx = x as f64 * h.spacing_mm[0] - cx;
                    let dy = y as f64 * h.spacing_mm[1] - cy;
                    if dx * dx + dy * dy <= limit {
                        *s = false;
                    }
                }
            }
        }
    }
    Ok(shell)
}

/// Integer offsets `o` with `‖o ∘ spacing‖ ≤ radius_mm`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuringElement {
    pub radius_mm: f64,
    pub offsets: Vec<[isize; 3]>,
}

impl StructuringElement {
    pub fn ball(radius_mm: f64, spacing_mm: [f64; 3]) -> Result<Self> {
        check_radius(radius_mm)?;
        let reach: Vec<isize> = spacing_mm.iter().map(|s| (radius_mm / s).floor() as isize).collect();
        let limit = radius_sq(radius_mm);
        let mut offsets = Vec::new();
        for dz in -reach[2]..=reach[2] {
            for dy in -reach[1]..=reach[1] {
                for dx in -reach[0]..=reach[0] {
                    let p = [dx as f64 * spacing_mm[0], dy as f64 * spacing_mm[1], dz as f64 * spacing_mm[2]];
                    if p.iter().map(|v| v * v).sum::<f64>() <= limit {
                        offsets.push([dx, dy, dz]);
                    }
                }
            }
        }
        Ok(StructuringElement { radius_mm, offsets })
    }

    /// Direct scan dilation. Quadratic in the radius; [`dilate`] is the fast path.
    pub fn dilate(&self, mask: &BinaryMask) -> BinaryMask {
        self.scan(mask, false)
    }

    /// Direct scan erosion. Out-of-grid neighbors count as false.
    pub fn erode(&self, mask: &BinaryMask) -> BinaryMask {
        self.scan(mask, true)
    }

    fn scan(&self, mask: &BinaryMask, all: bool) -> BinaryMask {
        let h = mask.header();
        let dims = h.dims.map(|d| d as isize);
        let bits = (0..mask.len())
            .map(|i| {
                let c = h.coords(i);
                let mut hits = self.offsets.iter().map(|o| {
                    let q = [c[0] as isize + o[0], c[1] as isize + o[1], c[2] as isize + o[2]];
                    let inside = (0..3).all(|a| q[a] >= 0 && q[a] < dims[a]);
                    inside && mask.voxels()[h.index(q[0] as usize, q[1] as usize, q[2] as usize)]
                });
                if all {
                    hits.all(|b| b)
                } else {
                    hits.any(|b| b)
                }
            })
            .collect();
        Grid::from_parts(h.clone(), bits).expect("same geometry")
    }
}
