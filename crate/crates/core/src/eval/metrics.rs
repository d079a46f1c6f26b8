use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts and the Table-2 metrics derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    /// 0 when no case was called covid; see `precision_defined`.
    pub precision: f64,
    pub precision_defined: bool,
    pub f1: f64,
    pub accuracy: f64,
    pub auc: f64,
}

pub const METRIC_NAMES: [&str; 6] = ["sensitivity", "specificity", "precision", "f1", "accuracy", "auc"];

impl Metrics {
    /// Values in [`METRIC_NAMES`] order.
    pub fn values(&self) -> [f64; 6] {
        [
            self.sensitivity,
            self.specificity,
            self.precision,
            self.f1,
            self.accuracy,
            self.auc,
        ]
    }
}

fn check_classes(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClassData);
    }
    Ok((pos, neg))
}

/// Mann–Whitney AUC with midranks for ties.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_classes(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&o| labels[o]).count() as f64 * midrank;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Confusion counts at `score >= threshold` plus threshold-free AUC.
pub fn compute_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Metrics> {
    check_classes(scores, labels)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(metrics_from_counts(tp, fp, tn, fn_, roc_auc(scores, labels)?))
}

pub fn metrics_from_counts(tp: usize, fp: usize, tn: usize, fn_: usize, auc: f64) -> Metrics {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let sensitivity = ratio(tp, tp + fn_);
    let specificity = ratio(tn, tn + fp);
    let precision_defined = tp + fp > 0;
    let precision = ratio(tp, tp + fp);
    let f1 = if precision + sensitivity > 0.0 {
        2.0 * precision * sensitivity / (precision + sensitivity)
    } else {
        0.0
    };
    Metrics {
        tp,
        fp,
        tn,
        fn_,
        sensitivity,
        specificity,
        precision,
        precision_defined,
        f1,
        accuracy: ratio(tp + tn, tp + fp + tn + fn_),
        auc,
    }
}

/// Mean and sample standard deviation (n − 1) of one metric across folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len() as f64;
        if values.is_empty() {
            return MeanStd { mean: 0.0, std: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std }
    }
}

/// Formats as `0.908±0.017`.
impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}±{:.3}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub sensitivity: MeanStd,
    pub specificity: MeanStd,
    pub precision: MeanStd,
    pub f1: MeanStd,
    pub accuracy: MeanStd,
    pub auc: MeanStd,
}

impl MetricSummary {
    pub fn of(folds: &[Metrics]) -> MetricSummary {
        let col = |k: usize| MeanStd::of(&folds.iter().map(|m| m.values()[k]).collect::<Vec<_>>());
        MetricSummary {
            sensitivity: col(0),
            specificity: col(1),
            precision: col(2),
            f1: col(3),
            accuracy: col(4),
            auc: col(5),
        }
    }

    /// Entries in [`METRIC_NAMES`] order.
    pub fn entries(&self) -> [MeanStd; 6] {
        [
            self.sensitivity,
            self.specificity,
            self.precision,
            self.f1,
            self.accuracy,
            self.auc,
        ]
    }
}
