use crate::error::{Error, Result};
use crate::features::{FeatureGroup, FeatureTable};
use crate::volume::ClassLabel;

/// Weighted binary training data. `y[i]` is true for covid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSet {
    rows: Vec<Vec<f64>>,
    y: Vec<bool>,
    weights: Vec<f64>,
    /// Features the learner may split on; false entries are masked out.
    active: Vec<bool>,
    pub schema_version: String,
    pub masked_groups: Vec<FeatureGroup>,
}

impl TrainSet {
    /// Uniform weights, every feature active.
    pub fn new(rows: Vec<Vec<f64>>, y: Vec<bool>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::DegenerateData("no rows".into()));
        }
        if y.len() != n {
            return Err(Error::InvalidParameter(format!("{n} rows but {} labels", y.len())));
        }
        let d = rows[0].len();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::SchemaMismatch(format!("row {r} has {} values, expected {d}", row.len())));
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteFeature { row: r, column: c });
            }
        }
        Ok(TrainSet {
            rows,
            y,
            weights: vec![1.0 / n as f64; n],
            active: vec![true; d],
            schema_version: String::new(),
            masked_groups: Vec::new(),
        })
    }

    /// Labeled rows of a feature table, with `masked` groups excluded from fitting.
    pub fn from_table(table: &FeatureTable, masked: &[FeatureGroup]) -> Result<Self> {
        let labels = table.labels()?;
        let rows = table.rows.iter().map(|r| r.values.clone()).collect();
        let mut set = TrainSet::new(rows, labels.iter().map(|l| l.is_covid()).collect())?;
        set.active = table.schema.active_mask(masked);
        set.schema_version = table.schema.version.clone();
        set.masked_groups = masked.to_vec();
        set.masked_groups.sort();
        set.masked_groups.dedup();
        Ok(set)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.rows.len() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter("weights must be n finite non-negative values".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("weights sum to zero".into()));
        }
        self.weights = weights.into_iter().map(|w| w / total).collect();
        Ok(self)
    }

    pub fn with_active(mut self, active: Vec<bool>) -> Result<Self> {
        if active.len() != self.n_features() {
            return Err(Error::SchemaMismatch("active mask length differs from feature count".into()));
        }
        self.active = active;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn labels(&self) -> &[bool] {
        &self.y
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn has_both_classes(&self) -> bool {
        self.y.iter().any(|&c| c) && self.y.iter().any(|&c| !c)
    }

    /// Copy of the given rows (repeats allowed) with uniform weights.
    pub fn resample(&self, indices: &[usize]) -> TrainSet {
        let n = indices.len();
        TrainSet {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            weights: vec![1.0 / n as f64; n],
            active: self.active.clone(),
            schema_version: self.schema_version.clone(),
            masked_groups: self.masked_groups.clone(),
        }
    }
}

pub(crate) fn class_of(covid: bool) -> ClassLabel {
    if covid {
        ClassLabel::Covid
    } else {
        ClassLabel::Other
    }
}
