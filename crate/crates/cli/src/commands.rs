use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use triage_core::eval::{
    ablation, class_kdes, cross_validate_models, curves_to_csv, gini_importance, grid_search, refine_grid,
    EvalReport, GridReport, GridSpec, ImportanceReport,
};
use triage_core::features::{extract_features, FeatureSchema, FeatureTable, FeatureVector, SCHEMA_VERSION};
use triage_core::fsutil::{write_atomic, write_json};
use triage_core::learn::{choose_threshold, Ensemble, ModelParams, TrainSet};
use triage_core::phantom::{generate_corpus, write_corpus, CorpusOptions};
use triage_core::volume::{load_case, read_manifest, validate_case, ValidationReport};
use triage_core::Error;

use crate::config::{default_grid, RunConfig, Settings};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Attach a stage name to core errors.
trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> Stage<T> for triage_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| CliError::data(stage, e))
    }
}

#[derive(Serialize)]
struct Provenance<'a, T: Serialize> {
    schema_version: &'a str,
    config: &'a Settings,
    result: &'a T,
}

pub struct Ctx {
    pub cfg: RunConfig,
}

impl Ctx {
    fn settings(&self) -> &Settings {
        &self.cfg.settings
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self
            .cfg
            .out
            .clone()
            .ok_or_else(|| CliError::Usage("--out DIR is required".into()))?;
        fs::create_dir_all(&dir).map_err(|e| {
            CliError::data("output", Error::Io { path: dir.clone(), source: e })
        })?;
        Ok(dir)
    }

    fn manifest(&self) -> Result<&Path> {
        self.cfg
            .manifest
            .as_deref()
            .ok_or_else(|| CliError::Usage("--manifest PATH is required".into()))
    }

    fn load_table(&self, stage: &'static str) -> Result<FeatureTable> {
        let path = self
            .cfg
            .features
            .as_deref()
            .ok_or_else(|| CliError::Usage("--features PATH is required".into()))?;
        FeatureTable::read_csv(path, FeatureSchema::canonical()).stage(stage)
    }

    fn report<T: Serialize>(&self, path: &Path, result: &T, stage: &'static str) -> Result<()> {
        let doc = Provenance {
            schema_version: SCHEMA_VERSION,
            config: self.settings(),
            result,
        };
        write_json(path, &doc).stage(stage)
    }

    fn write_run_config(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("run_config.json"), &self.cfg).stage("output")
    }
}

pub fn phantom(ctx: &Ctx) -> Result<()> {
    let out = ctx.out_dir()?;
    let s = ctx.settings();
    let options = CorpusOptions {
        n: s.phantom.n,
        covid_fraction: s.phantom.covid_fraction,
        seed: s.seed,
        profile: s.phantom.profile,
        ranges: s.phantom.ranges.clone(),
    };
    let corpus = generate_corpus(&options).stage("phantom")?;
    let manifest = write_corpus(&corpus, &out).stage("phantom")?;
    ctx.write_run_config(&out)?;
    info!("wrote {} phantom cases", corpus.specs.len());
    println!("{}", manifest.display());
    Ok(())
}

pub fn validate(ctx: &Ctx) -> Result<()> {
    let (cases, base) = read_manifest(ctx.manifest()?).stage("validate")?;
    let reports: Vec<ValidationReport> = cases
        .par_iter()
        .map(|c| load_case(c, &base).map(|b| validate_case(&b)))
        .collect::<triage_core::Result<_>>()
        .stage("validate")?;
    match &ctx.cfg.out {
        Some(_) => {
            let out = ctx.out_dir()?;
            ctx.report(&out.join("validation.json"), &reports, "validate")?;
        }
        None => {
            let text = serde_json::to_string_pretty(&reports).map_err(|e| CliError::data("validate", e.into()))?;
            println!("{text}");
        }
    }
    let bad = reports.iter().filter(|r| !r.is_ok()).count();
    info!("{} cases checked, {bad} with violations", reports.len());
    match reports.into_iter().find(|r| !r.is_ok()) {
        Some(r) => Err(CliError::data("validate", Error::ExtractionRejected(r))),
        None => Ok(()),
    }
}

fn extract_table(ctx: &Ctx, manifest: &Path) -> Result<FeatureTable> {
    let (cases, base) = read_manifest(manifest).stage("extract")?;
    let cfg = &ctx.settings().extract;
    let rows: Vec<FeatureVector> = cases
        .par_iter()
        .map(|c| extract_features(&load_case(c, &base)?, cfg))
        .collect::<triage_core::Result<_>>()
        .stage("extract")?;
    FeatureTable::new(FeatureSchema::canonical().clone(), rows).stage("extract")
}

#[derive(Serialize)]
struct ExtractionSummary {
    n_cases: usize,
    n_features: usize,
    case_ids: Vec<String>,
}

fn write_features(ctx: &Ctx, table: &FeatureTable, out: &Path) -> Result<()> {
    table.write_csv(&out.join("features.csv")).stage("extract")?;
    let summary = ExtractionSummary {
        n_cases: table.len(),
        n_features: table.schema.len(),
        case_ids: table.rows.iter().map(|r| r.case_id.clone()).collect(),
    };
    ctx.report(&out.join("extraction.json"), &summary, "extract")
}

pub fn extract(ctx: &Ctx) -> Result<()> {
    let manifest = ctx.manifest()?;
    let table = extract_table(ctx, manifest)?;
    let out = ctx.out_dir()?;
    write_features(ctx, &table, &out)?;
    ctx.write_run_config(&out)?;
    println!("{}", out.join("features.csv").display());
    Ok(())
}

pub fn train(ctx: &Ctx) -> Result<()> {
    let table = ctx.load_table("train")?;
    let out = ctx.out_dir()?;
    let s = ctx.settings();
    let data = TrainSet::from_table(&table, &s.mask_groups).stage("train")?;
    let mut model = s.model.fit(&data).stage("train")?;
    let scores = table
        .rows
        .iter()
        .map(|r| model.proba_vector(r))
        .collect::<triage_core::Result<Vec<f64>>>()
        .stage("train")?;
    model.threshold = choose_threshold(&scores, data.labels()).stage("train")?;
    model.save(&out.join("model.json")).stage("train")?;
    ctx.write_run_config(&out)?;
    println!("{} members, threshold {:.6}", model.members.len(), model.threshold);
    Ok(())
}

fn summary_line(title: &str, r: &EvalReport) -> String {
    let s = &r.summary;
    format!(
        "{title}: sensitivity {} specificity {} auc {}",
        s.sensitivity, s.specificity, s.auc
    )
}

fn run_evaluate(ctx: &Ctx, table: &FeatureTable, params: &ModelParams, out: &Path) -> Result<Vec<Ensemble>> {
    let s = ctx.settings();
    let (report, models) =
        cross_validate_models(table, params, &s.mask_groups, s.folds, s.seed).stage("evaluate")?;
    ctx.report(&out.join("eval_report.json"), &report, "evaluate")?;
    write_atomic(&out.join("eval_report.csv"), &report.to_csv().stage("evaluate")?).stage("evaluate")?;
    println!("{}", summary_line(params.model.title(), &report));
    Ok(models)
}

pub fn evaluate(ctx: &Ctx) -> Result<()> {
    let table = ctx.load_table("evaluate")?;
    let out = ctx.out_dir()?;
    run_evaluate(ctx, &table, &ctx.settings().model, &out)?;
    ctx.write_run_config(&out)
}

#[derive(Serialize)]
struct GridResult<'a> {
    best: &'a ModelParams,
    coarse_grid: &'a GridSpec,
    fine_grid: &'a GridSpec,
    coarse: &'a GridReport,
    fine: &'a GridReport,
}

/// Coarse grid then a refined grid around its winner; returns the fine winner.
fn run_grid(ctx: &Ctx, table: &FeatureTable, out: &Path) -> Result<ModelParams> {
    let s = ctx.settings();
    let coarse_grid = s.grid.clone().unwrap_or_else(default_grid);
    let coarse = grid_search(table, &s.model, &coarse_grid, &s.mask_groups, s.folds, s.seed).stage("grid")?;
    let fine_grid = refine_grid(&coarse.best().params, &s.refine);
    let fine = grid_search(table, &s.model, &fine_grid, &s.mask_groups, s.folds, s.seed).stage("grid")?;
    let best = fine.best().params;
    let result = GridResult {
        best: &best,
        coarse_grid: &coarse_grid,
        fine_grid: &fine_grid,
        coarse: &coarse,
        fine: &fine,
    };
    ctx.report(&out.join("grid_report.json"), &result, "grid")?;
    write_atomic(&out.join("grid_coarse.csv"), &coarse.to_csv().stage("grid")?).stage("grid")?;
    write_atomic(&out.join("grid_fine.csv"), &fine.to_csv().stage("grid")?).stage("grid")?;
    println!(
        "best: n_estimators {} learning_rate {} max_depth {} min_samples_split {}",
        best.n_estimators, best.learning_rate, best.max_depth, best.min_samples_split
    );
    Ok(best)
}

pub fn grid(ctx: &Ctx) -> Result<()> {
    let table = ctx.load_table("grid")?;
    let out = ctx.out_dir()?;
    run_grid(ctx, &table, &out)?;
    ctx.write_run_config(&out)
}

fn run_ablation(ctx: &Ctx, table: &FeatureTable, params: &ModelParams, out: &Path) -> Result<()> {
    let s = ctx.settings();
    let report = ablation(table, params, s.folds, s.seed).stage("ablate")?;
    ctx.report(&out.join("ablation.json"), &report, "ablate")?;
    write_atomic(&out.join("ablation.csv"), &report.to_csv().stage("ablate")?).stage("ablate")?;
    for row in &report.rows {
        println!("{}", summary_line(&row.title, &row.report));
    }
    Ok(())
}

pub fn ablate(ctx: &Ctx) -> Result<()> {
    let table = ctx.load_table("ablate")?;
    let out = ctx.out_dir()?;
    run_ablation(ctx, &table, &ctx.settings().model, &out)?;
    ctx.write_run_config(&out)
}

fn cv_models(ctx: &Ctx, table: &FeatureTable, stage: &'static str) -> Result<Vec<Ensemble>> {
    let s = ctx.settings();
    cross_validate_models(table, &s.model, &s.mask_groups, s.folds, s.seed)
        .map(|(_, m)| m)
        .stage(stage)
}

fn run_importance(ctx: &Ctx, models: &[Ensemble], schema: &FeatureSchema, out: &Path) -> Result<ImportanceReport> {
    let report = gini_importance(models, schema).stage("importance")?;
    ctx.report(&out.join("importance.json"), &report, "importance")?;
    write_atomic(&out.join("importance.csv"), &report.to_csv().stage("importance")?).stage("importance")?;
    for e in report.top(10) {
        println!("{:<40} {:.4}", e.feature_id, e.importance);
    }
    Ok(report)
}

pub fn importance(ctx: &Ctx) -> Result<()> {
    let table = ctx.load_table("importance")?;
    let out = ctx.out_dir()?;
    let models = cv_models(ctx, &table, "importance")?;
    run_importance(ctx, &models, &table.schema, &out)?;
    ctx.write_run_config(&out)
}

#[derive(Serialize)]
struct CurveSummary<'a> {
    feature_id: &'a str,
    class: &'a str,
    bandwidth: f64,
    integral: f64,
    mode: f64,
}

fn run_kde(ctx: &Ctx, table: &FeatureTable, ranking: Option<&ImportanceReport>, out: &Path) -> Result<()> {
    let s = &ctx.settings().kde;
    let ids: Vec<String> = if !s.features.is_empty() {
        s.features.clone()
    } else {
        let ranking = ranking.ok_or_else(|| CliError::Usage("kde needs a feature list or a ranking".into()))?;
        ranking.top(s.top).iter().map(|e| e.feature_id.clone()).collect()
    };
    let curves = class_kdes(table, &ids, s.grid_points).stage("kde")?;
    write_atomic(&out.join("kde_curves.csv"), &curves_to_csv(&curves).stage("kde")?).stage("kde")?;
    let summary: Vec<CurveSummary> = curves
        .iter()
        .map(|c| CurveSummary {
            feature_id: &c.feature_id,
            class: c.class.map_or("all", |l| l.as_str()),
            bandwidth: c.bandwidth,
            integral: c.integral(),
            mode: c.mode(),
        })
        .collect();
    ctx.report(&out.join("kde.json"), &summary, "kde")?;
    for c in &summary {
        println!("{} [{}]: mode {:.4}", c.feature_id, c.class, c.mode);
    }
    Ok(())
}

pub fn kde(ctx: &Ctx) -> Result<()> {
    let table = ctx.load_table("kde")?;
    let out = ctx.out_dir()?;
    let ranking = if ctx.settings().kde.features.is_empty() {
        let models = cv_models(ctx, &table, "kde")?;
        Some(gini_importance(&models, &table.schema).stage("kde")?)
    } else {
        None
    };
    run_kde(ctx, &table, ranking.as_ref(), &out)?;
    ctx.write_run_config(&out)
}

/// Extract (or reuse `features.csv`), optional grid, evaluate, ablate, importance, KDE.
pub fn pipeline(ctx: &Ctx) -> Result<()> {
    let out = ctx.out_dir()?;
    let cached = out.join("features.csv");
    let table = if ctx.cfg.features.is_some() {
        ctx.load_table("extract")?
    } else if cached.is_file() {
        info!("reusing {}", cached.display());
        FeatureTable::read_csv(&cached, FeatureSchema::canonical()).stage("extract")?
    } else {
        let manifest = ctx
            .cfg
            .manifest
            .as_deref()
            .ok_or_else(|| CliError::Usage("pipeline needs --manifest or --features".into()))?;
        let table = extract_table(ctx, manifest)?;
        write_features(ctx, &table, &out)?;
        table
    };
    let s = ctx.settings();
    let params = if s.grid.is_some() {
        run_grid(ctx, &table, &out)?
    } else {
        s.model
    };
    let models = run_evaluate(ctx, &table, &params, &out)?;
    if s.ablation {
        run_ablation(ctx, &table, &params, &out)?;
    }
    let ranking = run_importance(ctx, &models, &table.schema, &out)?;
    run_kde(ctx, &table, Some(&ranking), &out)?;
    ctx.write_run_config(&out)
}
