use std::collections::{BTreeMap, VecDeque};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{ExtractConfig, FeatureSchema, FeatureVector};
use crate::morphology::Connectivity;
use crate::volume::{CaseBundle, ClassLabel, VolumeHeader};

/// Expected feature values of a generated case with per-feature tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub case_id: String,
    pub label: Option<ClassLabel>,
    /// Canonical schema order.
    pub values: Vec<f64>,
    pub tolerance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub feature_id: String,
    pub expected: f64,
    pub actual: f64,
    pub tolerance: f64,
}

/// Absolute tolerance allowed for `id`: 0 for counting features and flags,
/// voxelization slack for the shell share, rounding slack for activation sums.
pub fn tolerance_for(id: &str, expected: f64) -> f64 {
    match id {
        "peripheral_ratio" => 2.0,
        "activation_sum" | "activation_volume_weighted" => 1e-9 * expected.abs().max(1.0),
        _ => 0.0,
    }
}

impl GroundTruth {
    pub fn of(bundle: &CaseBundle, cfg: &ExtractConfig) -> Result<GroundTruth> {
        let map = oracle_features(bundle, cfg)?;
        let schema = FeatureSchema::canonical();
        let mut values = Vec::with_capacity(schema.len());
        let mut tolerance = Vec::with_capacity(schema.len());
        for id in schema.ids() {
            let v = *map
                .get(id)
                .ok_or_else(|| Error::SchemaMismatch(format!("oracle has no value for {id}")))?;
            values.push(v);
            tolerance.push(tolerance_for(id, v));
        }
        Ok(GroundTruth {
            case_id: bundle.case_id.clone(),
            label: bundle.label,
            values,
            tolerance,
        })
    }

    pub fn vector(&self) -> Result<FeatureVector> {
        FeatureVector::new(
            FeatureSchema::canonical(),
            self.case_id.clone(),
            self.label,
            self.values.clone(),
        )
    }

    /// Features of `v` outside their tolerance.
    pub fn compare(&self, v: &FeatureVector) -> Vec<Mismatch> {
        let schema = FeatureSchema::canonical();
        schema
            .ids()
            .enumerate()
            .filter_map(|(j, id)| {
                let (e, a, t) = (self.values[j], *v.values.get(j)?, self.tolerance[j]);
                ((e - a).abs() > t || a.is_nan()).then(|| Mismatch {
                    feature_id: id.to_string(),
                    expected: e,
                    actual: a,
                    tolerance: t,
                })
            })
            .collect()
    }
}

fn structures(side: u8, lobe: u8) -> Vec<String> {
    let mut out = vec!["total".to_string()];
    match side {
        1 => out.push("left".into()),
        2 => out.push("right".into()),
        _ => {}
    }
    if (1..=5).contains(&lobe) {
        out.push(format!("lobe{lobe}"));
    }
    out
}

const STRUCTURES: [&str; 8] = ["total", "left", "right", "lobe1", "lobe2", "lobe3", "lobe4", "lobe5"];

fn window(hu: i16) -> Option<&'static str> {
    if (-1000..=-950).contains(&hu) {
        Some("low")
    } else if (-949..=-600).contains(&hu) {
        Some("functional")
    } else if (-599..=-250).contains(&hu) {
        Some("high")
    } else {
        None
    }
}

fn share(count: u64, of: u64) -> f64 {
    if of == 0 {
        0.0
    } else {
        100.0 * count as f64 / of as f64
    }
}

/// Per-voxel brute-force evaluation of every canonical feature, keyed by id.
pub fn oracle_features(bundle: &CaseBundle, cfg: &ExtractConfig) -> Result<BTreeMap<String, f64>> {
    let h = bundle.volume.header();
    let vox_cm3 = h.voxel_volume_cm3();
    let lungs = bundle.lungs.voxels();
    let lobes = bundle.lobes.voxels();
    let abnormality = bundle.abnormality.voxels();
    let texture = bundle.texture.voxels();
    let hu = bundle.volume.voxels();
    let act = bundle.activation.voxels();

    let mut count: BTreeMap<String, u64> = BTreeMap::new();
    let mut bump = |key: String| *count.entry(key).or_insert(0) += 1;
    let mut lung_z = vec![false; h.dims[2]];
    let mut abnormal_z = vec![false; h.dims[2]];
    let mut weighted_activation = 0.0;
    for i in 0..h.voxel_count() {
        if lungs[i] == 0 {
            continue;
        }
        let z = h.coords(i)[2];
        lung_z[z] = true;
        let abnormal = abnormality[i] != 0;
        if abnormal {
            abnormal_z[z] = true;
            weighted_activation += f64::from(act[i]);
        }
        for s in structures(lungs[i], lobes[i]) {
            bump(s.to_string());
            if let Some(w) = window(hu[i]) {
                bump(format!("{s}/{w}"));
            }
            if abnormal {
                bump(format!("abnormal/{s}"));
            }
            match texture[i] {
                1 => bump(format!("GGO/{s}")),
                2 => bump(format!("consolidation/{s}")),
                _ => {}
            }
        }
    }
    let c = |k: String| count.get(&k).copied().unwrap_or(0);

    let mut out = BTreeMap::new();
    for s in STRUCTURES {
        out.insert(format!("{s}_volume"), c(s.to_string()) as f64 * vox_cm3);
    }
    for s in STRUCTURES {
        for w in ["low", "functional", "high"] {
            let n = c(format!("{s}/{w}"));
            out.insert(format!("{s}_{w}_hu_volume"), n as f64 * vox_cm3);
            out.insert(format!("{s}_{w}_hu_ratio"), share(n, c(s.to_string())));
        }
        let a = c(format!("abnormal/{s}"));
        out.insert(format!("abnormal_{s}_volume"), a as f64 * vox_cm3);
        out.insert(format!("abnormal_{s}_ratio"), share(a, c(s.to_string())));
        for t in ["GGO", "consolidation"] {
            let n = c(format!("{t}/{s}"));
            out.insert(format!("{t}_{s}_volume"), n as f64 * vox_cm3);
            out.insert(format!("{t}_{s}_ratio"), share(n, c(s.to_string())));
        }
    }
    let lz = lung_z.iter().filter(|&&b| b).count();
    let az = abnormal_z.iter().filter(|&&b| b).count();
    out.insert("pos_ratio".into(), if lz == 0 { 0.0 } else { az as f64 / lz as f64 });
    out.insert("activation_sum".into(), act.iter().map(|&a| f64::from(a)).sum());
    out.insert("activation_volume_weighted".into(), weighted_activation * vox_cm3);
    let abnormal_total = c("abnormal/total".into());
    for t in ["GGO", "consolidation"] {
        let n = c(format!("{t}/total"));
        out.insert(
            format!("{t}_dominance"),
            if abnormal_total == 0 {
                0.0
            } else {
                n as f64 / abnormal_total as f64
            },
        );
    }

    let ggo: Vec<bool> = (0..lungs.len()).map(|i| lungs[i] != 0 && texture[i] == 1).collect();
    let focal = components(&ggo, h, cfg.connectivity)
        .iter()
        .any(|comp| pairwise_axial_diameter(comp, h) < crate::features::FOCAL_MAX_DIAMETER_MM
            && moment_roundedness(comp, h) >= cfg.roundedness_min);
    out.insert("focal_ggo".into(), flag(focal));

    let left = c("abnormal/left".into()) as f64 * vox_cm3 > cfg.laterality_min_cm3;
    let right = c("abnormal/right".into()) as f64 * vox_cm3 > cfg.laterality_min_cm3;
    out.insert("laterality_unilateral_left".into(), flag(left && !right));
    out.insert("laterality_unilateral_right".into(), flag(right && !left));
    out.insert("laterality_bilateral".into(), flag(left && right));

    out.insert("peripheral_ratio".into(), peripheral_share(bundle, cfg)?);
    Ok(out)
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn neighbours(conn: Connectivity) -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let manhattan = dx.abs() + dy.abs() + dz.abs();
                let keep = match conn {
                    Connectivity::Face6 => manhattan == 1,
                    Connectivity::Full26 => manhattan > 0,
                };
                if keep {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

fn shifted(h: &VolumeHeader, i: usize, o: [i64; 3]) -> Option<usize> {
    let c = h.coords(i);
    let mut p = [0usize; 3];
    for a in 0..3 {
        let v = c[a] as i64 + o[a];
        if v < 0 || v >= h.dims[a] as i64 {
            return None;
        }
        p[a] = v as usize;
    }
    Some(h.index(p[0], p[1], p[2]))
}

fn components(mask: &[bool], h: &VolumeHeader, conn: Connectivity) -> Vec<Vec<usize>> {
    let offsets = neighbours(conn);
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut comp = Vec::new();
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            for &o in &offsets {
                if let Some(j) = shifted(h, i, o) {
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Largest in-slice distance between voxel centres over all pairs, plus one in-plane voxel diagonal.
fn pairwise_axial_diameter(comp: &[usize], h: &VolumeHeader) -> f64 {
    let [sx, sy, _] = h.spacing_mm;
    let mut best = 0.0f64;
    for (k, &a) in comp.iter().enumerate() {
        let pa = h.coords(a);
        for &b in &comp[k + 1..] {
            let pb = h.coords(b);
            if pa[2] == pb[2] {
                let dx = (pa[0] as f64 - pb[0] as f64) * sx;
                let dy = (pa[1] as f64 - pb[1] as f64) * sy;
                best = best.max(dx.hypot(dy));
            }
        }
    }
    best + sx.hypot(sy)
}

/// Ratio of the smallest to the largest ellipsoid semi-axis fitted by second moments.
fn moment_roundedness(comp: &[usize], h: &VolumeHeader) -> f64 {
    let s = h.spacing_mm;
    let pts: Vec<Vector3<f64>> = comp
        .iter()
        .map(|&i| {
            let c = h.coords(i);
            Vector3::new(c[0] as f64 * s[0], c[1] as f64 * s[1], c[2] as f64 * s[2])
        })
        .collect();
    let n = pts.len() as f64;
    let mean: Vector3<f64> = pts.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in &pts {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = cov.symmetric_eigen();
    let axes: Vec<f64> = (0..3)
        .map(|k| {
            let v = eig.eigenvectors.column(k);
            let half = 0.5 * (0..3).map(|a| (v[a] * s[a]).powi(2)).sum::<f64>().sqrt();
            (5.0 * eig.eigenvalues[k].max(0.0)).sqrt().max(half)
        })
        .collect();
    let lo = axes.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = axes.iter().cloned().fold(0.0, f64::max);
    lo / hi
}

/// Offsets within `radius_mm` (with the shared relative slack).
fn ball(h: &VolumeHeader, radius_mm: f64) -> Vec<[i64; 3]> {
    let limit = radius_mm * radius_mm * (1.0 + 1e-9);
    let reach: [i64; 3] = std::array::from_fn(|a| (radius_mm / h.spacing_mm[a]).floor() as i64);
    let mut out = Vec::new();
    for dz in -reach[2]..=reach[2] {
        for dy in -reach[1]..=reach[1] {
            for dx in -reach[0]..=reach[0] {
                let d2 = (dx as f64 * h.spacing_mm[0]).powi(2)
                    + (dy as f64 * h.spacing_mm[1]).powi(2)
                    + (dz as f64 * h.spacing_mm[2]).powi(2);
                if d2 <= limit {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

/// Share (%) of abnormal lung voxels that have a non-lung position (or the
/// grid edge) within the shell depth, excluding the bronchial neighbourhood.
fn peripheral_share(bundle: &CaseBundle, cfg: &ExtractConfig) -> Result<f64> {
    let h = bundle.volume.header();
    let lungs = bundle.lungs.voxels();
    if lungs.iter().all(|&l| l == 0) {
        return Err(Error::EmptyLungs);
    }
    let shell_ball = ball(h, cfg.shell_depth_mm);
    let margin_ball = ball(h, cfg.bronchial_margin_mm);

    let (mut cx, mut cy, mut n) = (0.0, 0.0, 0.0);
    for (i, &l) in lungs.iter().enumerate() {
        if l != 0 {
            let c = h.coords(i);
            cx += c[0] as f64;
            cy += c[1] as f64;
            n += 1.0;
        }
    }
    let (cx, cy) = (cx / n * h.spacing_mm[0], cy / n * h.spacing_mm[1]);
    let hilar_sq = crate::morphology::HILAR_PROXY_RADIUS_MM.powi(2) * (1.0 + 1e-9);

    let (mut abnormal, mut peripheral) = (0u64, 0u64);
    for i in 0..lungs.len() {
        if lungs[i] == 0 || bundle.abnormality.voxels()[i] == 0 {
            continue;
        }
        abnormal += 1;
        let near_edge = shell_ball
            .iter()
            .any(|&o| shifted(h, i, o).is_none_or(|j| lungs[j] == 0));
        if !near_edge {
            continue;
        }
        let excluded = match &bundle.bronchial {
            Some(b) => margin_ball
                .iter()
                .any(|&o| shifted(h, i, o).is_some_and(|j| b.voxels()[j] != 0)),
            None => {
                let c = h.coords(i);
                let dx = c[0] as f64 * h.spacing_mm[0] - cx;
                let dy = c[1] as f64 * h.spacing_mm[1] - cy;
                dx * dx + dy * dy <= hilar_sq
            }
        };
        if !excluded {
            peripheral += 1;
        }
    }
    Ok(share(peripheral, abnormal))
}
