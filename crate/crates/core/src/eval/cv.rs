use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureGroup, FeatureTable};
use crate::learn::{choose_threshold, Ensemble, ModelParams, TrainSet};

use super::folds::{stratified_kfold, FoldSplit};
use super::metrics::{compute_metrics, MetricSummary, Metrics, METRIC_NAMES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Operating threshold, chosen on this fold's training scores.
    pub threshold: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: String,
    pub params: ModelParams,
    pub masked_groups: Vec<FeatureGroup>,
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    pub summary: MetricSummary,
}

impl EvalReport {
    /// One row per fold, then `mean` and `std` rows.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["fold".to_string(), "threshold".into(), "tp".into(), "fp".into(), "tn".into(), "fn".into()];
        header.extend(METRIC_NAMES.iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for f in &self.folds {
            let m = &f.metrics;
            let mut rec = vec![
                f.fold.to_string(),
                f.threshold.to_string(),
                m.tp.to_string(),
                m.fp.to_string(),
                m.tn.to_string(),
                m.fn_.to_string(),
            ];
            rec.extend(m.values().iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        for (name, pick) in [("mean", 0), ("std", 1)] {
            let mut rec = vec![name.to_string(), String::new(), String::new(), String::new(), String::new(), String::new()];
            rec.extend(
                self.summary
                    .entries()
                    .iter()
                    .map(|e| if pick == 0 { e.mean } else { e.std }.to_string()),
            );
            w.write_record(&rec)?;
        }
        finish(w)
    }
}

pub(crate) fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner()
        .map_err(|e| Error::InvalidParameter(format!("csv buffer: {e}")))
}

/// One fitted fold: the model (threshold set from train scores) and its test metrics.
#[derive(Debug, Clone)]
pub struct FittedFold {
    pub model: Ensemble,
    pub result: FoldResult,
}

fn labels_of(table: &FeatureTable) -> Result<Vec<bool>> {
    Ok(table.labels()?.iter().map(|l| l.is_covid()).collect())
}

fn run_fold(
    table: &FeatureTable,
    params: &ModelParams,
    masked: &[FeatureGroup],
    split: &FoldSplit,
    fold: usize,
) -> Result<FittedFold> {
    let train = table.subset(&split.train_indices(fold));
    let test = table.subset(&split.test_indices(fold));
    let data = TrainSet::from_table(&train, masked)?;
    let mut model = params.fit(&data)?;
    let train_scores = score_rows(&model, &train)?;
    model.threshold = choose_threshold(&train_scores, data.labels())?;
    let test_scores = score_rows(&model, &test)?;
    let metrics = compute_metrics(&test_scores, &labels_of(&test)?, model.threshold)?;
    Ok(FittedFold {
        result: FoldResult {
            fold,
            n_train: train.len(),
            n_test: test.len(),
            threshold: model.threshold,
            metrics,
        },
        model,
    })
}

fn score_rows(model: &Ensemble, table: &FeatureTable) -> Result<Vec<f64>> {
    table.rows.iter().map(|r| model.proba_vector(r)).collect()
}

/// Cross-validation over a caller-provided split; also returns each fold's model.
pub fn cross_validate_split(
    table: &FeatureTable,
    params: &ModelParams,
    masked: &[FeatureGroup],
    split: &FoldSplit,
    seed: u64,
) -> Result<(EvalReport, Vec<Ensemble>)> {
    if split.len() != table.len() {
        return Err(Error::InvalidParameter(format!(
            "split covers {} cases, table has {}",
            split.len(),
            table.len()
        )));
    }
    let fitted: Vec<FittedFold> = (0..split.k)
        .into_par_iter()
        .map(|f| run_fold(table, params, masked, split, f))
        .collect::<Result<_>>()?;
    let (results, models): (Vec<FoldResult>, Vec<Ensemble>) = fitted.into_iter().map(|f| (f.result, f.model)).unzip();
    let metrics: Vec<Metrics> = results.iter().map(|r| r.metrics).collect();
    let mut masked_groups = masked.to_vec();
    masked_groups.sort();
    masked_groups.dedup();
    Ok((
        EvalReport {
            schema_version: table.schema.version.clone(),
            params: *params,
            masked_groups,
            k: split.k,
            seed,
            folds: results,
            summary: MetricSummary::of(&metrics),
        },
        models,
    ))
}

/// Stratified k-fold cross-validation returning the report and per-fold models.
pub fn cross_validate_models(
    table: &FeatureTable,
    params: &ModelParams,
    masked: &[FeatureGroup],
    k: usize,
    seed: u64,
) -> Result<(EvalReport, Vec<Ensemble>)> {
    let split = stratified_kfold(&labels_of(table)?, k, seed)?;
    cross_validate_split(table, params, masked, &split, seed)
}

pub fn cross_validate(
    table: &FeatureTable,
    params: &ModelParams,
    masked: &[FeatureGroup],
    k: usize,
    seed: u64,
) -> Result<EvalReport> {
    cross_validate_models(table, params, masked, k, seed).map(|(r, _)| r)
}

/// Value lists for the searched hyper-parameters; other fields come from a base config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_estimators: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub max_depth: Vec<usize>,
    pub min_samples_split: Vec<usize>,
}

impl GridSpec {
    pub fn single(p: &ModelParams) -> GridSpec {
        GridSpec {
            n_estimators: vec![p.n_estimators],
            learning_rate: vec![p.learning_rate],
            max_depth: vec![p.max_depth],
            min_samples_split: vec![p.min_samples_split],
        }
    }

    /// Cartesian product in declaration order.
    pub fn cells(&self, base: &ModelParams) -> Vec<ModelParams> {
        let mut out = Vec::new();
        for &n_estimators in &self.n_estimators {
            for &learning_rate in &self.learning_rate {
                for &max_depth in &self.max_depth {
                    for &min_samples_split in &self.min_samples_split {
                        out.push(ModelParams {
                            n_estimators,
                            learning_rate,
                            max_depth,
                            min_samples_split,
                            ..*base
                        });
                    }
                }
            }
        }
        out
    }
}

/// Neighbourhood of a grid winner for the fine pass: multiplicative factors
/// for n_estimators and learning_rate, additive steps for the tree limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Refinement {
    pub factors: Vec<f64>,
    pub steps: Vec<i64>,
}

impl Default for Refinement {
    fn default() -> Self {
        Refinement {
            factors: vec![0.5, 1.0, 2.0],
            steps: vec![-1, 0, 1],
        }
    }
}

pub fn refine_grid(winner: &ModelParams, r: &Refinement) -> GridSpec {
    fn uniq<T: PartialOrd + Copy>(mut v: Vec<T>) -> Vec<T> {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        v.dedup_by(|a, b| a == b);
        v
    }
    let step = |v: usize, min: i64| -> Vec<usize> {
        uniq(r.steps.iter().map(|s| (v as i64 + s).max(min) as usize).collect())
    };
    GridSpec {
        n_estimators: uniq(
            r.factors
                .iter()
                .filter(|f| f.is_finite() && **f > 0.0)
                .map(|f| ((winner.n_estimators as f64 * f).round() as usize).max(1))
                .collect(),
        ),
        learning_rate: uniq(
            r.factors
                .iter()
                .filter(|f| f.is_finite() && **f > 0.0)
                .map(|f| winner.learning_rate * f)
                .collect(),
        ),
        max_depth: step(winner.max_depth, 1),
        min_samples_split: step(winner.min_samples_split, 2),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub rank: usize,
    pub params: ModelParams,
    /// mean AUC + mean sensitivity.
    pub selection_score: f64,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub k: usize,
    pub seed: u64,
    pub cells: Vec<GridCell>,
}

impl GridReport {
    pub fn best(&self) -> &GridCell {
        &self.cells[0]
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = [
            "rank",
            "model",
            "n_estimators",
            "learning_rate",
            "max_depth",
            "min_samples_split",
            "selection_score",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for m in METRIC_NAMES {
            header.push(format!("{m}_mean"));
            header.push(format!("{m}_std"));
        }
        w.write_record(&header)?;
        for c in &self.cells {
            let p = &c.params;
            let mut rec = vec![
                c.rank.to_string(),
                serde_json::to_value(p.model)?.as_str().unwrap_or_default().to_string(),
                p.n_estimators.to_string(),
                p.learning_rate.to_string(),
                p.max_depth.to_string(),
                p.min_samples_split.to_string(),
                c.selection_score.to_string(),
            ];
            for e in c.report.summary.entries() {
                rec.push(e.mean.to_string());
                rec.push(e.std.to_string());
            }
            w.write_record(&rec)?;
        }
        finish(w)
    }
}

/// Evaluates every grid cell with the same folds and ranks by mean AUC +
/// mean sensitivity, then mean AUC, then grid order.
pub fn grid_search(
    table: &FeatureTable,
    base: &ModelParams,
    grid: &GridSpec,
    masked: &[FeatureGroup],
    k: usize,
    seed: u64,
) -> Result<GridReport> {
    let cells = grid.cells(base);
    if cells.is_empty() {
        return Err(Error::InvalidParameter("grid has no cells".into()));
    }
    let split = stratified_kfold(&labels_of(table)?, k, seed)?;
    let reports: Vec<EvalReport> = cells
        .par_iter()
        .map(|p| cross_validate_split(table, p, masked, &split, seed).map(|(r, _)| r))
        .collect::<Result<_>>()?;
    let mut ranked: Vec<GridCell> = cells
        .into_iter()
        .zip(reports)
        .map(|(params, report)| GridCell {
            rank: 0,
            params,
            selection_score: report.summary.auc.mean + report.summary.sensitivity.mean,
            report,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.selection_score
            .total_cmp(&a.selection_score)
            .then(b.report.summary.auc.mean.total_cmp(&a.report.summary.auc.mean))
    });
    for (i, c) in ranked.iter_mut().enumerate() {
        c.rank = i + 1;
    }
    Ok(GridReport { k, seed, cells: ranked })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub title: String,
    pub masked: Option<FeatureGroup>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn full(&self) -> &AblationRow {
        &self.rows[0]
    }

    pub fn without(&self, group: FeatureGroup) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.masked == Some(group))
    }

    /// Table-style rows: title followed by `mean±std` per metric.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["classifier".to_string()];
        header.extend(METRIC_NAMES.iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.title.clone()];
            rec.extend(row.report.summary.entries().iter().map(|e| e.to_string()));
            w.write_record(&rec)?;
        }
        finish(w)
    }
}

/// Full schema plus one run per masked group, all on the same folds.
pub fn ablation(table: &FeatureTable, params: &ModelParams, k: usize, seed: u64) -> Result<AblationReport> {
    for g in FeatureGroup::ALL {
        if table.schema.group_indices(g).is_empty() {
            return Err(Error::SchemaMismatch(format!("schema has no {} features", g.title())));
        }
    }
    let split = stratified_kfold(&labels_of(table)?, k, seed)?;
    let variants: Vec<Option<FeatureGroup>> = std::iter::once(None).chain(FeatureGroup::ALL.map(Some)).collect();
    let rows = variants
        .par_iter()
        .map(|&g| {
            let masked: Vec<FeatureGroup> = g.into_iter().collect();
            let (report, _) = cross_validate_split(table, params, &masked, &split, seed)?;
            let title = match g {
                None => params.model.title().to_string(),
                Some(g) => format!("W/O {}", g.title()),
            };
            Ok(AblationRow {
                title,
                masked: g,
                report,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AblationReport { rows })
}
