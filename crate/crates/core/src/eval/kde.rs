use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::volume::ClassLabel;

use super::cv::finish;

pub const MIN_BANDWIDTH: f64 = 1e-3;
/// Grid extends this many bandwidths beyond [0, 1] on each side.
pub const KDE_TAIL: f64 = 4.0;

/// Gaussian KDE sampled on a uniform grid over [−4h, 1 + 4h].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub feature_id: String,
    pub class: Option<ClassLabel>,
    pub bandwidth: f64,
    pub x: Vec<f64>,
    pub density: Vec<f64>,
}

impl KdeCurve {
    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        self.x
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, d)| (x[1] - x[0]) * (d[0] + d[1]) / 2.0)
            .sum()
    }

    /// Grid position of the highest density (first on ties).
    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for (i, &d) in self.density.iter().enumerate() {
            if d > self.density[best] {
                best = i;
            }
        }
        self.x[best]
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Silverman's rule 0.9·min(σ, IQR/1.34)·n^(−1/5), floored at [`MIN_BANDWIDTH`].
/// A zero IQR falls back to σ alone.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return MIN_BANDWIDTH;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sigma = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sigma.min(iqr / 1.34) } else { sigma };
    (0.9 * spread * (n as f64).powf(-0.2)).max(MIN_BANDWIDTH)
}

/// Density of `values` (expected in [0, 1]). `grid_points` is a minimum: the
/// grid is refined until its spacing is at most h/2, and kept odd so x = 0.5 is sampled.
pub fn kde(values: &[f64], grid_points: usize, bandwidth: Option<f64>) -> Result<KdeCurve> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("KDE input must be finite".into()));
    }
    let h = match bandwidth {
        Some(h) if h.is_finite() && h > 0.0 => h.max(MIN_BANDWIDTH),
        Some(h) => return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {h}"))),
        None => silverman_bandwidth(values),
    };
    let (lo, hi) = (-KDE_TAIL * h, 1.0 + KDE_TAIL * h);
    let needed = ((hi - lo) / (h / 2.0)).ceil() as usize + 1;
    let mut n = grid_points.max(needed).max(3);
    if n.is_multiple_of(2) {
        n += 1;
    }
    let step = (hi - lo) / (n - 1) as f64;
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * PI).sqrt());
    let x: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    let density = x
        .iter()
        .map(|&xi| norm * values.iter().map(|v| (-0.5 * ((xi - v) / h).powi(2)).exp()).sum::<f64>())
        .collect();
    Ok(KdeCurve {
        feature_id: String::new(),
        class: None,
        bandwidth: h,
        x,
        density,
    })
}

/// Min-max scaling to [0, 1]; a constant input maps to all zeros.
pub fn normalize_pooled(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

/// Per-class curves for each named feature, normalized over both classes pooled.
pub fn class_kdes(table: &FeatureTable, feature_ids: &[String], grid_points: usize) -> Result<Vec<KdeCurve>> {
    let labels = table.labels()?;
    let mut out = Vec::new();
    for id in feature_ids {
        let j = table
            .schema
            .index_of(id)
            .ok_or_else(|| Error::SchemaMismatch(format!("unknown feature {id}")))?;
        let scaled = normalize_pooled(&table.column(j));
        for class in [ClassLabel::Covid, ClassLabel::Other] {
            let vals: Vec<f64> = scaled
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == class)
                .map(|(v, _)| *v)
                .collect();
            if vals.is_empty() {
                continue;
            }
            let mut curve = kde(&vals, grid_points, None)?;
            curve.feature_id = id.clone();
            curve.class = Some(class);
            out.push(curve);
        }
    }
    Ok(out)
}

/// Long-format CSV: `x,density,class,feature_id`.
pub fn curves_to_csv(curves: &[KdeCurve]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "density", "class", "feature_id"])?;
    for c in curves {
        let class = c.class.map(|l| l.as_str()).unwrap_or("");
        for (x, d) in c.x.iter().zip(&c.density) {
            w.write_record([x.to_string(), d.to_string(), class.to_string(), c.feature_id.clone()])?;
        }
    }
    finish(w)
}
