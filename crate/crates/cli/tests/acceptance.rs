//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Learner and AUC checks use oracles written here from the definitions,
//! not the library's own code paths.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use triage_core::eval::{ablation, class_kdes, cross_validate_models, gini_importance, normalize_pooled, roc_auc};
use triage_core::features::{extract_features, ExtractConfig, FeatureGroup, FeatureSchema, FeatureTable, FeatureVector};
use triage_core::learn::{
    fit_adaboost_traced, fit_tree, AdaBoostParams, ModelParams, Node, TrainSet, TreeParams,
};
use triage_core::phantom::{generate_corpus, signal_channels, CorpusOptions, Profile};
use triage_core::volume::ClassLabel;
use triage_core::{Error, DEFAULT_SEED};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn corpus_options(n: usize, profile: Profile, seed: u64) -> CorpusOptions {
    CorpusOptions {
        n,
        seed,
        profile,
        ..CorpusOptions::default()
    }
}

/// Render a corpus and run the real extraction on every case.
fn extracted_table(options: &CorpusOptions) -> FeatureTable {
    let corpus = generate_corpus(options).unwrap();
    let rows: Vec<FeatureVector> = (0..corpus.specs.len())
        .into_par_iter()
        .map(|i| extract_features(&corpus.render(i).unwrap().bundle, &ExtractConfig::default()).unwrap())
        .collect();
    FeatureTable::new(FeatureSchema::canonical().clone(), rows).unwrap()
}

fn extraction_oracle() -> Outcome {
    let start = Instant::now();
    let mut cases = 0;
    let mut mismatches = Vec::new();
    let mut exact = 0usize;
    let mut toleranced = 0usize;
    for (profile, seed) in [(Profile::Mixed, 1_000), (Profile::PeripheralOnly, 2_000)] {
        let corpus = generate_corpus(&corpus_options(500, profile, seed)).unwrap();
        let per_case: Vec<_> = (0..corpus.specs.len())
            .into_par_iter()
            .map(|i| {
                let case = corpus.render(i).unwrap();
                let v = extract_features(&case.bundle, &ExtractConfig::default()).unwrap();
                let exact = case.truth.tolerance.iter().filter(|&&t| t == 0.0).count();
                (case.truth.compare(&v), exact, case.truth.tolerance.len() - exact)
            })
            .collect();
        for (m, e, t) in per_case {
            cases += 1;
            exact += e;
            toleranced += t;
            mismatches.extend(m);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = mismatches.is_empty() && secs < 300.0;
    let mut detail = format!(
        "{cases} phantoms, {exact} exact and {toleranced} toleranced comparisons, {} mismatches, {secs:.1} s (limit 300 s)",
        mismatches.len()
    );
    if let Some(m) = mismatches.first() {
        detail.push_str(&format!("; first: {} expected {} got {}", m.feature_id, m.expected, m.actual));
    }
    outcome(pass, detail)
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
    loop {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(0..25) as f64 * 0.3).collect())
            .collect();
        let y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        if y.iter().any(|&c| c) && y.iter().any(|&c| !c) {
            return (rows, y);
        }
    }
}

fn gini(w: [f64; 2]) -> f64 {
    let t = w[0] + w[1];
    if t == 0.0 {
        return 0.0;
    }
    1.0 - (w[0] / t).powi(2) - (w[1] / t).powi(2)
}

struct OracleSplit {
    feature: usize,
    threshold: f64,
    /// Class weights `[other, covid]` left and right of the threshold.
    sides: [[f64; 2]; 2],
}

/// Best (feature, midpoint) by weighted Gini decrease; the first of equal splits wins.
fn exhaustive_root(rows: &[Vec<f64>], y: &[bool], w: &[f64]) -> OracleSplit {
    let mut total = [0.0; 2];
    for (i, &c) in y.iter().enumerate() {
        total[c as usize] += w[i];
    }
    let mass = total[0] + total[1];
    let mut best: Option<(f64, OracleSplit)> = None;
    for j in 0..rows[0].len() {
        let mut vals: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for pair in vals.windows(2) {
            let t = (pair[0] + pair[1]) / 2.0;
            let mut sides = [[0.0; 2]; 2];
            for (i, r) in rows.iter().enumerate() {
                sides[(r[j] > t) as usize][y[i] as usize] += w[i];
            }
            let [l, r] = sides;
            let dec = gini(total) - (l[0] + l[1]) / mass * gini(l) - (r[0] + r[1]) / mass * gini(r);
            if best.as_ref().is_none_or(|(b, _)| dec > b + 1e-12) {
                best = Some((dec, OracleSplit { feature: j, threshold: t, sides }));
            }
        }
    }
    best.unwrap().1
}

/// Mann–Whitney AUC by counting every (covid, other) pair; ties count one half.
fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                wins += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

fn learner_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);

    let mut split_fail = 0;
    for _ in 0..100 {
        let (rows, y) = random_set(&mut rng, 40, 5);
        let w = vec![1.0 / 40.0; 40];
        let o = exhaustive_root(&rows, &y, &w);
        let tree = fit_tree(&TrainSet::new(rows, y).unwrap(), &TreeParams::default()).unwrap();
        let ok = matches!(tree.nodes[0], Node::Split { feature, threshold, .. }
            if feature == o.feature && (threshold - o.threshold).abs() <= 1e-12);
        split_fail += !ok as usize;
    }

    let mut max_weight_err: f64 = 0.0;
    let mut boost_fail = 0;
    for _ in 0..100 {
        let (rows, y) = random_set(&mut rng, 40, 5);
        let n = rows.len() as f64;
        let lr = rng.random_range(0.1..1.0);
        let stump = exhaustive_root(&rows, &y, &vec![1.0 / n; rows.len()]);
        let covid_side = stump.sides.map(|s| s[1] >= s[0]);
        let miss: Vec<bool> = rows
            .iter()
            .zip(&y)
            .map(|(r, &c)| covid_side[(r[stump.feature] > stump.threshold) as usize] != c)
            .collect();
        let eps = miss.iter().filter(|&&m| m).count() as f64 / n;
        let params = AdaBoostParams {
            n_estimators: 1,
            learning_rate: lr,
            tree: TreeParams { max_depth: 1, ..TreeParams::default() },
        };
        let fitted = fit_adaboost_traced(&TrainSet::new(rows.clone(), y.clone()).unwrap(), &params);
        if eps >= 0.5 {
            boost_fail += !matches!(fitted, Err(Error::NoWeakLearner)) as usize;
            continue;
        }
        let (_, trace) = fitted.unwrap();
        let alpha = lr * ((1.0 - eps) / eps).ln();
        let raw: Vec<f64> = miss.iter().map(|&m| if m { alpha.exp() / n } else { 1.0 / n }).collect();
        let z: f64 = raw.iter().sum();
        for (got, want) in trace[0].weights_after.iter().zip(&raw) {
            max_weight_err = max_weight_err.max((got - want / z).abs());
        }
        max_weight_err = max_weight_err.max((trace[0].alpha - alpha).abs());
    }

    let mut max_auc_err: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(10..120);
        let labels: Vec<bool> = (0..n).map(|i| i % 3 == 0 || rng.random_bool(0.4)).collect();
        let scores: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 20.0).round() / 20.0).collect();
        let got = roc_auc(&scores, &labels).unwrap();
        max_auc_err = max_auc_err.max((got - pairwise_auc(&scores, &labels)).abs());
    }

    let pass = split_fail == 0 && boost_fail == 0 && max_weight_err <= 1e-12 && max_auc_err <= 1e-12;
    outcome(
        pass,
        format!(
            "root split {}/100 match, AdaBoost round-1 max |Δw| {max_weight_err:.1e} ({boost_fail} failures), AUC max |Δ| {max_auc_err:.1e} on 100 sets (tol 1e-12)",
            100 - split_fail
        ),
    )
}

fn phantom_study(table: &FeatureTable, secs: f64) -> (Outcome, Vec<triage_core::learn::Ensemble>) {
    let start = Instant::now();
    let (report, models) =
        cross_validate_models(table, &ModelParams::default(), &[], 5, DEFAULT_SEED).unwrap();
    let secs = secs + start.elapsed().as_secs_f64();
    let s = &report.summary;
    let n_covid = table.labels().unwrap().iter().filter(|l| l.is_covid()).count();
    let pass = s.auc.mean >= 0.95 && s.sensitivity.mean >= 0.90 && s.auc.std <= 0.05 && secs < 600.0;
    (
        outcome(
            pass,
            format!(
                "{} cases ({n_covid} covid), AUC {} (>= 0.95, std <= 0.05), sensitivity {} (>= 0.90), specificity {}, {secs:.1} s (limit 600 s)",
                table.len(),
                s.auc,
                s.sensitivity,
                s.specificity
            ),
        ),
        models,
    )
}

fn ablation_direction() -> Outcome {
    let table = extracted_table(&corpus_options(200, Profile::PeripheralOnly, DEFAULT_SEED));
    let report = ablation(&table, &ModelParams::default(), 5, DEFAULT_SEED).unwrap();
    let full = report.full().report.summary.auc.mean;
    let drop = |g| full - report.without(g).unwrap().report.summary.auc.mean;
    let signal = drop(FeatureGroup::ShapeLocation);
    let irrelevant = [FeatureGroup::LungsStats, FeatureGroup::OpacityStats, FeatureGroup::OpacityTexture]
        .map(|g| (g, drop(g)));
    let worst = irrelevant.iter().map(|(_, d)| d.abs()).fold(0.0, f64::max);
    let pass = signal >= 0.1 && worst <= 0.02;
    let others: Vec<String> = irrelevant.iter().map(|(g, d)| format!("{} {d:+.3}", g.title())).collect();
    outcome(
        pass,
        format!(
            "peripheral-only corpus, full AUC {full:.3}; masking Location & Shape drops {signal:.3} (>= 0.1); others {} (|Δ| <= 0.02)",
            others.join(", ")
        ),
    )
}

fn importance_sanity(models: &[triage_core::learn::Ensemble]) -> Outcome {
    let schema = FeatureSchema::canonical();
    let j = schema.index_of("pos_ratio").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y: Vec<bool> = (0..30).map(|i| i % 2 == 0).collect();
    let rows: Vec<Vec<f64>> = y
        .iter()
        .map(|&c| {
            let mut r: Vec<f64> = (0..schema.len()).map(|_| rng.random_range(0.0..1.0)).collect();
            r[j] = if c { 0.8 } else { 0.1 } + rng.random_range(0.0..0.05);
            r
        })
        .collect();
    let stump = ModelParams {
        n_estimators: 1,
        max_depth: 1,
        ..ModelParams::default()
    }
    .fit(&TrainSet::new(rows, y).unwrap())
    .unwrap();
    let lone = gini_importance(&[stump], schema).unwrap();
    let stump_ok = lone.entries[0].feature_id == "pos_ratio" && (lone.entries[0].importance - 1.0).abs() < 1e-12;

    let report = gini_importance(models, schema).unwrap();
    let top: Vec<&str> = report.top(10).iter().map(|e| e.feature_id.as_str()).collect();
    let channels = signal_channels(Profile::Mixed);
    let hits: Vec<Option<&str>> = channels
        .iter()
        .map(|c| top.iter().copied().find(|id| c.contains(id)))
        .collect();
    let pass = stump_ok && hits.iter().all(Option::is_some);
    let found: Vec<&str> = hits.iter().map(|h| h.unwrap_or("-")).collect();
    outcome(
        pass,
        format!(
            "stump puts {:.3} on {}; top-10 covers {}/{} signal channels via {}",
            lone.entries[0].importance,
            lone.entries[0].feature_id,
            hits.iter().flatten().count(),
            channels.len(),
            found.join(", ")
        ),
    )
}

fn run_cli(args: &[&str]) -> i32 {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_triage"));
    cmd.args(args).env("RUST_LOG", "warn");
    for (key, _) in std::env::vars().filter(|(k, _)| k.starts_with("TRIAGE_")) {
        cmd.env_remove(key);
    }
    let out = cmd.output().unwrap();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.code().unwrap_or(-1)
}

fn read_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && p.file_name().unwrap() != "run_config.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn pipeline_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let corpus = root.join("corpus");
    assert_eq!(run_cli(&["phantom", "--n", "60", "--seed", "11", "--out", corpus.to_str().unwrap()]), 0);
    let config = root.join("config.json");
    fs::write(
        &config,
        r#"{"grid": {"n_estimators": [10, 30], "learning_rate": [0.5, 1.0], "max_depth": [1, 2], "min_samples_split": [4]},
            "refine": {"factors": [1.0, 2.0], "steps": [0, 1]}}"#,
    )
    .unwrap();
    let manifest = corpus.join("manifest.json");
    let runs: Vec<(String, BTreeMap<String, Vec<u8>>)> = ["1", "4", "1"]
        .iter()
        .enumerate()
        .map(|(i, jobs)| {
            let out = root.join(format!("run{i}"));
            let code = run_cli(&[
                "pipeline",
                "--manifest",
                manifest.to_str().unwrap(),
                "--config",
                config.to_str().unwrap(),
                "--seed",
                "3",
                "--jobs",
                jobs,
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(code, 0, "pipeline run {i} failed");
            (jobs.to_string(), read_outputs(&out))
        })
        .collect();
    let reference = &runs[0].1;
    let differing: Vec<String> = runs[1..]
        .iter()
        .flat_map(|(jobs, files)| {
            let mut bad: Vec<String> = reference
                .iter()
                .filter(|(name, bytes)| files.get(*name) != Some(bytes))
                .map(|(name, _)| format!("{name} (jobs {jobs})"))
                .collect();
            if files.len() != reference.len() {
                bad.push(format!("file set (jobs {jobs})"));
            }
            bad
        })
        .collect();
    let pass = differing.is_empty() && reference.len() >= 10;
    outcome(
        pass,
        format!(
            "{} report files byte-identical across --jobs 1, 4, 1{}",
            reference.len(),
            if differing.is_empty() { String::new() } else { format!("; differ: {}", differing.join(", ")) }
        ),
    )
}

fn kde_validity(table: &FeatureTable, models: &[triage_core::learn::Ensemble]) -> Outcome {
    let ranking = gini_importance(models, &table.schema).unwrap();
    let ids: Vec<String> = ranking.top(10).iter().map(|e| e.feature_id.clone()).collect();
    let curves = class_kdes(table, &ids, 512).unwrap();
    let worst = curves.iter().map(|c| (c.integral() - 1.0).abs()).fold(0.0, f64::max);

    // Disjoint supports: covid values in [0.6, 0.9], other in [0.0, 0.3] before scaling.
    let schema = FeatureSchema::canonical();
    let j = schema.index_of("GGO_total_ratio").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows: Vec<FeatureVector> = (0..80)
        .map(|i| {
            let covid = i % 2 == 0;
            let mut values = vec![0.0; schema.len()];
            values[j] = if covid { rng.random_range(0.6..0.9) } else { rng.random_range(0.0..0.3) };
            let label = if covid { ClassLabel::Covid } else { ClassLabel::Other };
            FeatureVector::new(schema, format!("k{i}"), Some(label), values).unwrap()
        })
        .collect();
    let disjoint = FeatureTable::new(schema.clone(), rows).unwrap();
    let pair = class_kdes(&disjoint, &["GGO_total_ratio".to_string()], 512).unwrap();
    let scaled = normalize_pooled(&disjoint.column(j));
    let labels = disjoint.labels().unwrap();
    let span = |class: ClassLabel| {
        let v: Vec<f64> = scaled.iter().zip(&labels).filter(|(_, &l)| l == class).map(|(v, _)| *v).collect();
        (v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    };
    let mode_of = |class| pair.iter().find(|c| c.class == Some(class)).unwrap().mode();
    let (cov_lo, cov_hi) = span(ClassLabel::Covid);
    let (oth_lo, oth_hi) = span(ClassLabel::Other);
    let (cov_mode, oth_mode) = (mode_of(ClassLabel::Covid), mode_of(ClassLabel::Other));
    let modes_ok = (cov_lo..=cov_hi).contains(&cov_mode)
        && (oth_lo..=oth_hi).contains(&oth_mode)
        && oth_mode < cov_lo
        && cov_mode > oth_hi;
    let pair_worst = pair.iter().map(|c| (c.integral() - 1.0).abs()).fold(0.0, f64::max);
    let pass = worst <= 1e-3 && pair_worst <= 1e-3 && modes_ok;
    outcome(
        pass,
        format!(
            "{} curves, max |∫-1| {worst:.1e} (tol 1e-3); disjoint classes: modes covid {cov_mode:.3} in [{cov_lo:.3}, {cov_hi:.3}], other {oth_mode:.3} in [{oth_lo:.3}, {oth_hi:.3}]",
            curves.len() + pair.len()
        ),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, o: Outcome| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };

    report("feature-extraction oracle equivalence", extraction_oracle());
    report("learner correctness", learner_oracles());

    let start = Instant::now();
    let table = extracted_table(&corpus_options(200, Profile::Mixed, DEFAULT_SEED));
    let (study, models) = phantom_study(&table, start.elapsed().as_secs_f64());
    report("end-to-end phantom study", study);
    report("ablation directionality", ablation_direction());
    report("importance sanity", importance_sanity(&models));
    report("pipeline determinism", pipeline_determinism());
    report("KDE validity", kde_validity(&table, &models));

    let passed = results.iter().filter(|(_, o)| o.pass).count();
    println!("{passed}/{} acceptance criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
