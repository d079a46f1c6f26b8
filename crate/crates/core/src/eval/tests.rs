use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::features::{FeatureDef, FeatureGroup, FeatureKind, FeatureSchema, FeatureTable, FeatureVector};
use crate::learn::{DecisionTree, Ensemble, Member, ModelParams, Node, TrainSet};
use crate::volume::ClassLabel;

fn small_schema() -> FeatureSchema {
    let defs = FeatureGroup::ALL
        .iter()
        .flat_map(|&g| {
            (0..2).map(move |i| FeatureDef {
                id: format!("{}_{i}", g.slug()),
                group: g,
                kind: FeatureKind::Continuous,
            })
        })
        .collect();
    FeatureSchema::new("test/1", defs).unwrap()
}

/// Feature 0 (lungs-stats) carries the class signal; the rest are noise.
fn table(n: usize, noise: f64, seed: u64) -> FeatureTable {
    let schema = small_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|i| {
            let covid = i % 2 == 0;
            let mut v: Vec<f64> = (0..schema.len()).map(|_| rng.random::<f64>()).collect();
            v[0] = if covid { 1.0 } else { 0.0 } + noise * rng.random::<f64>();
            let label = if covid { ClassLabel::Covid } else { ClassLabel::Other };
            FeatureVector::new(&schema, format!("case{i:03}"), Some(label), v).unwrap()
        })
        .collect();
    FeatureTable::new(schema, rows).unwrap()
}

fn params() -> ModelParams {
    ModelParams {
        n_estimators: 10,
        max_depth: 2,
        min_samples_split: 2,
        ..ModelParams::default()
    }
}

#[test]
fn separable_table_scores_perfectly() {
    let report = cross_validate(&table(40, 0.5, 1), &params(), &[], 5, 7).unwrap();
    assert_eq!(report.folds.len(), 5);
    assert_eq!(report.summary.auc.mean, 1.0);
    assert_eq!(report.summary.sensitivity.mean, 1.0);
}

#[test]
fn too_few_cases_per_class() {
    assert!(matches!(
        cross_validate(&table(6, 0.5, 1), &params(), &[], 6, 7),
        Err(crate::Error::TooFewPerClass { .. })
    ));
}

#[test]
fn summary_recomputes_from_folds() {
    let report = cross_validate(&table(40, 1.5, 2), &params(), &[], 4, 3).unwrap();
    let aucs: Vec<f64> = report.folds.iter().map(|f| f.metrics.auc).collect();
    assert_eq!(report.summary.auc, MeanStd::of(&aucs));
}

#[test]
fn duplicated_rows_keep_fold_metrics() {
    let t = table(30, 1.2, 5);
    let labels: Vec<bool> = t.labels().unwrap().iter().map(|l| l.is_covid()).collect();
    let split = stratified_kfold(&labels, 3, 9).unwrap();
    let mut rows = t.rows.clone();
    rows.extend(t.rows.iter().cloned());
    let doubled = FeatureTable::new(t.schema.clone(), rows).unwrap();
    let mut fold_of = split.fold_of.clone();
    fold_of.extend(split.fold_of.iter().copied());
    let split2 = FoldSplit::from_assignment(3, fold_of).unwrap();
    let (a, _) = cross_validate_split(&t, &params(), &[], &split, 9).unwrap();
    let (b, _) = cross_validate_split(&doubled, &params(), &[], &split2, 9).unwrap();
    for (fa, fb) in a.folds.iter().zip(&b.folds) {
        assert_eq!(fa.metrics.tp * 2, fb.metrics.tp);
        assert_eq!(fa.metrics.tn * 2, fb.metrics.tn);
        for (x, y) in fa.metrics.values().iter().zip(fb.metrics.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn threshold_ignores_test_labels() {
    let t = table(40, 1.5, 6);
    let labels: Vec<bool> = t.labels().unwrap().iter().map(|l| l.is_covid()).collect();
    let split = stratified_kfold(&labels, 4, 2).unwrap();
    let (base, _) = cross_validate_split(&t, &params(), &[], &split, 2).unwrap();
    // Scramble features of fold-0 test rows: only fold 0's test metrics may change.
    let mut poisoned = t.clone();
    for i in split.test_indices(0) {
        for v in poisoned.rows[i].values.iter_mut() {
            *v = 0.5;
        }
    }
    let (p, _) = cross_validate_split(&poisoned, &params(), &[], &split, 2).unwrap();
    assert_eq!(base.folds[0].threshold, p.folds[0].threshold);
}

#[test]
fn report_is_deterministic() {
    let t = table(40, 1.5, 8);
    let p = ModelParams {
        model: crate::learn::EnsembleKind::RandomForest,
        ..params()
    };
    let a = serde_json::to_string(&cross_validate(&t, &p, &[], 5, 1).unwrap()).unwrap();
    let b = serde_json::to_string(&cross_validate(&t, &p, &[], 5, 1).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_cell_grid() {
    let t = table(30, 1.0, 3);
    let g = grid_search(&t, &params(), &GridSpec::single(&params()), &[], 3, 4).unwrap();
    assert_eq!(g.cells.len(), 1);
    assert_eq!(g.best().report, cross_validate(&t, &params(), &[], 3, 4).unwrap());
}

#[test]
fn grid_ranking_matches_manual_runs() {
    let t = table(40, 1.3, 12);
    let grid = GridSpec {
        n_estimators: vec![1, 20],
        learning_rate: vec![0.5],
        max_depth: vec![1, 3],
        min_samples_split: vec![2],
    };
    let g = grid_search(&t, &params(), &grid, &[], 4, 5).unwrap();
    let mut manual: Vec<(f64, f64, usize)> = grid
        .cells(&params())
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let r = cross_validate(&t, p, &[], 4, 5).unwrap();
            (r.summary.auc.mean + r.summary.sensitivity.mean, r.summary.auc.mean, i)
        })
        .collect();
    manual.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
    let cells = grid.cells(&params());
    for (cell, m) in g.cells.iter().zip(&manual) {
        assert_eq!(cell.params, cells[m.2]);
        assert_eq!(cell.selection_score, m.0);
    }
}

#[test]
fn refinement_neighbourhood() {
    let spec = refine_grid(&params(), &Refinement::default());
    assert_eq!(spec.n_estimators, vec![5, 10, 20]);
    assert_eq!(spec.learning_rate, vec![0.25, 0.5, 1.0]);
    assert_eq!(spec.max_depth, vec![1, 2, 3]);
    assert_eq!(spec.min_samples_split, vec![2, 3]);
}

#[test]
fn ablation_rows_and_signal() {
    let t = table(60, 0.5, 21);
    let r = ablation(&t, &params(), 5, 3).unwrap();
    let titles: Vec<&str> = r.rows.iter().map(|r| r.title.as_str()).collect();
    assert_eq!(
        titles,
        [
            "AdaBoost - DT",
            "W/O Lungs statistics",
            "W/O Opacities statistics",
            "W/O Opacities texture",
            "W/O Location & Shape"
        ]
    );
    let full = r.full().report.summary.auc.mean;
    let without_signal = r.without(FeatureGroup::LungsStats).unwrap().report.summary.auc.mean;
    let without_noise = r.without(FeatureGroup::OpacityTexture).unwrap().report.summary.auc.mean;
    assert!(full - without_signal >= 0.1);
    assert!((full - without_noise).abs() <= 0.02);
    let csv = String::from_utf8(r.to_csv().unwrap()).unwrap();
    assert!(csv.contains("W/O Location & Shape,"));
}

fn stump(feature: usize, n: usize) -> DecisionTree {
    DecisionTree {
        n_features: n,
        nodes: vec![
            Node::Split {
                feature,
                threshold: 0.5,
                left: 1,
                right: 2,
                weight_fraction: 1.0,
                impurity_decrease: 0.25,
            },
            Node::Leaf { weights: [1.0, 0.0] },
            Node::Leaf { weights: [0.0, 1.0] },
        ],
    }
}

fn model_with(members: Vec<Member>, n: usize) -> Ensemble {
    let data = TrainSet::new(
        vec![vec![0.0; n], vec![1.0; n], vec![0.0; n], vec![1.0; n]],
        vec![false, true, false, true],
    )
    .unwrap();
    let mut m = ModelParams { n_estimators: 1, ..ModelParams::default() }.fit(&data).unwrap();
    m.members = members;
    m
}

#[test]
fn lone_stump_importance() {
    let schema = small_schema();
    let n = schema.len();
    let one = model_with(vec![Member { weight: 1.0, tree: stump(3, n) }], n);
    let r = gini_importance(std::slice::from_ref(&one), &schema).unwrap();
    assert_eq!(r.entries[0].feature_id, schema.features[3].id);
    assert_eq!(r.entries[0].importance, 1.0);
    assert!(r.entries[1..].iter().all(|e| e.importance == 0.0));
    let twice = gini_importance(&[one.clone(), one], &schema).unwrap();
    assert_eq!(twice.entries, r.entries);
}

#[test]
fn boosted_importance_matches_node_walk() {
    let schema = small_schema();
    let t = table(40, 1.3, 4);
    let data = TrainSet::from_table(&t, &[]).unwrap();
    let model = ModelParams { n_estimators: 3, max_depth: 3, min_samples_split: 2, ..ModelParams::default() }
        .fit(&data)
        .unwrap();
    assert_eq!(model.members.len(), 3);
    let mut oracle = vec![0.0; schema.len()];
    for m in &model.members {
        for node in &m.tree.nodes {
            if let Node::Split { feature, weight_fraction, impurity_decrease, .. } = node {
                oracle[*feature] += m.weight * weight_fraction * impurity_decrease;
            }
        }
    }
    let total: f64 = oracle.iter().sum();
    let got = ensemble_importance(&model).unwrap();
    for (g, o) in got.iter().zip(&oracle) {
        assert!((g - o / total).abs() < 1e-12);
    }
    assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn no_split_models_are_flagged() {
    let schema = small_schema();
    let n = schema.len();
    let leaf = DecisionTree { n_features: n, nodes: vec![Node::Leaf { weights: [1.0, 1.0] }] };
    let r = gini_importance(&[model_with(vec![Member { weight: 1.0, tree: leaf }], n)], &schema).unwrap();
    assert!(r.no_splits);
    assert!(r.entries.iter().all(|e| e.importance == 0.0));
}
