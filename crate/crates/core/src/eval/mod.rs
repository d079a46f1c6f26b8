//! Cross-validation, metrics, grid search, ablation, importance and KDE.

mod cv;
mod folds;
mod importance;
mod kde;
mod metrics;

pub use cv::{
    ablation, cross_validate, cross_validate_models, cross_validate_split, grid_search, refine_grid, AblationReport,
    AblationRow, EvalReport, FoldResult, GridCell, GridReport, GridSpec, Refinement,
};
pub use folds::{stratified_kfold, FoldSplit};
pub use importance::{ensemble_importance, gini_importance, ImportanceEntry, ImportanceReport};
pub use kde::{class_kdes, curves_to_csv, kde, normalize_pooled, silverman_bandwidth, KdeCurve, KDE_TAIL, MIN_BANDWIDTH};
pub use metrics::{compute_metrics, metrics_from_counts, roc_auc, MeanStd, MetricSummary, Metrics, METRIC_NAMES};

#[cfg(test)]
mod tests;
