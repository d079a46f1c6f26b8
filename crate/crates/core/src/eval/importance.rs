use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureGroup, FeatureSchema};
use crate::learn::Ensemble;

use super::cv::finish;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature_id: String,
    pub group: FeatureGroup,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub schema_version: String,
    /// Normalized vector per model, schema order; all zeros for a model without splits.
    pub per_model: Vec<Vec<f64>>,
    /// Mean across models, sorted by decreasing importance.
    pub entries: Vec<ImportanceEntry>,
    /// True when no model contains a single split.
    pub no_splits: bool,
}

impl ImportanceReport {
    pub fn top(&self, n: usize) -> &[ImportanceEntry] {
        &self.entries[..n.min(self.entries.len())]
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["rank", "feature_id", "group", "importance"])?;
        for (i, e) in self.entries.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                e.feature_id.clone(),
                e.group.slug().to_string(),
                e.importance.to_string(),
            ])?;
        }
        finish(w)
    }
}

/// Member-weighted impurity importance of one ensemble, normalized to sum 1.
/// `None` when no member has a split.
pub fn ensemble_importance(model: &Ensemble) -> Option<Vec<f64>> {
    let mut acc = vec![0.0; model.n_features];
    for m in &model.members {
        for (a, v) in acc.iter_mut().zip(m.tree.impurity_importance()) {
            *a += m.weight * v;
        }
    }
    let total: f64 = acc.iter().sum();
    if total > 0.0 {
        Some(acc.into_iter().map(|v| v / total).collect())
    } else {
        None
    }
}

/// Mean of the per-model normalized importances (one model per fold).
pub fn gini_importance(models: &[Ensemble], schema: &FeatureSchema) -> Result<ImportanceReport> {
    if models.is_empty() {
        return Err(Error::EmptyInput);
    }
    for m in models {
        if m.n_features != schema.len() || (!m.schema_version.is_empty() && m.schema_version != schema.version) {
            return Err(Error::SchemaMismatch(format!(
                "model ({} features, schema {:?}) does not match schema {} with {} features",
                m.n_features,
                m.schema_version,
                schema.version,
                schema.len()
            )));
        }
    }
    let per_model: Vec<Vec<f64>> = models
        .iter()
        .map(|m| ensemble_importance(m).unwrap_or_else(|| vec![0.0; schema.len()]))
        .collect();
    let no_splits = models.iter().all(|m| ensemble_importance(m).is_none());
    let n = models.len() as f64;
    let mut entries: Vec<ImportanceEntry> = schema
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| ImportanceEntry {
            feature_id: f.id.clone(),
            group: f.group,
            importance: per_model.iter().map(|v| v[j]).sum::<f64>() / n,
        })
        .collect();
    entries.sort_by(|a, b| b.importance.total_cmp(&a.importance));
    Ok(ImportanceReport {
        schema_version: schema.version.clone(),
        per_model,
        entries,
        no_splits,
    })
}
