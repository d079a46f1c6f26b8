use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::volume::VolumeHeader;

/// Largest in-plane extent over the axial (constant Z) slices of a component, in mm.
///
/// Pairwise center distance plus one in-plane voxel diagonal, so a lone voxel
/// still has a nonzero diameter.
pub fn max_axial_diameter(component: &[usize], header: &VolumeHeader) -> Result<f64> {
    if component.is_empty() {
        return Err(Error::EmptyComponent);
    }
    let [sx, sy, _] = header.spacing_mm;
    let mut slices: BTreeMap<usize, Vec<(i64, i64)>> = BTreeMap::new();
    for &i in component {
        let [x, y, z] = header.coords(i);
        slices.entry(z).or_default().push((x as i64, y as i64));
    }
    let mut best_sq = 0.0f64;
    for points in slices.values_mut() {
        // Scaling axes is linear, so the farthest pair lies on the index-space hull.
        let hull = convex_hull(points);
        for (a, pa) in hull.iter().enumerate() {
            for pb in &hull[a + 1..] {
                let dx = (pa.0 - pb.0) as f64 * sx;
                let dy = (pa.1 - pb.1) as f64 * sy;
                best_sq = best_sq.max(dx * dx + dy * dy);
            }
        }
    }
    Ok(best_sq.sqrt() + (sx * sx + sy * sy).sqrt())
}

fn convex_hull(points: &mut [(i64, i64)]) -> Vec<(i64, i64)> {
    points.sort_unstable();
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    if points.len() < 3 {
        return points.to_vec();
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in points.iter() {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in points.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Smallest over largest principal semi-axis of the component's voxel-center
/// covariance. Each semi-axis is floored at half a voxel extent along its
/// direction. 1 for isotropic blobs, near 0 for filaments.
pub fn roundedness(component: &[usize], header: &VolumeHeader) -> Result<f64> {
    if component.is_empty() {
        return Err(Error::EmptyComponent);
    }
    let s = header.spacing_mm;
    let n = component.len() as f64;
    let pos = |i: usize| {
        let c = header.coords(i);
        Vector3::new(c[0] as f64 * s[0], c[1] as f64 * s[1], c[2] as f64 * s[2])
    };
    let mean = component.iter().fold(Vector3::zeros(), |acc, &i| acc + pos(i)) / n;
    let cov = component.iter().fold(Matrix3::zeros(), |acc, &i| {
        let d = pos(i) - mean;
        acc + d * d.transpose()
    }) / n;
    let eig = cov.symmetric_eigen();
    let spacing = Vector3::new(s[0], s[1], s[2]);
    let axes: Vec<f64> = (0..3)
        .map(|k| {
            let dir = eig.eigenvectors.column(k);
            let half_voxel = 0.5 * dir.component_mul(&spacing).norm();
            // a solid ellipsoid with semi-axis a has variance a²/5 along it
            (5.0 * eig.eigenvalues[k].max(0.0)).sqrt().max(half_voxel)
        })
        .collect();
    let min = axes.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = axes.iter().cloned().fold(0.0, f64::max);
    Ok((min / max).clamp(0.0, 1.0))
}
