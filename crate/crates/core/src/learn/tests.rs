use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tree::Node;
use super::*;

fn set(rows: Vec<Vec<f64>>, y: Vec<bool>) -> TrainSet {
    TrainSet::new(rows, y).unwrap()
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> TrainSet {
    loop {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| (rng.random_range(0..20) as f64) / 4.0).collect())
            .collect();
        let y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        if y.iter().any(|&c| c) && y.iter().any(|&c| !c) {
            return set(rows, y);
        }
    }
}

fn gini_of(w: [f64; 2]) -> f64 {
    let t = w[0] + w[1];
    1.0 - (w[0] / t).powi(2) - (w[1] / t).powi(2)
}

/// Exhaustive root split: every feature, every midpoint, scanned in order.
fn oracle_root(data: &TrainSet) -> Option<(usize, f64, f64)> {
    let mut totals = [0.0; 2];
    for (i, &y) in data.labels().iter().enumerate() {
        totals[y as usize] += data.weights()[i];
    }
    let total = totals[0] + totals[1];
    let parent = gini_of(totals);
    let mut best: Option<(usize, f64, f64)> = None;
    for j in 0..data.n_features() {
        let mut vals: Vec<f64> = data.rows().iter().map(|r| r[j]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (mut l, mut r) = ([0.0; 2], [0.0; 2]);
            for (i, row) in data.rows().iter().enumerate() {
                let side = if row[j] <= t { &mut l } else { &mut r };
                side[data.labels()[i] as usize] += data.weights()[i];
            }
            let (wl, wr) = (l[0] + l[1], r[0] + r[1]);
            let dec = parent - wl / total * gini_of(l) - wr / total * gini_of(r);
            if best.is_none_or(|b| dec > b.2 + 1e-12) {
                best = Some((j, t, dec));
            }
        }
    }
    best
}

#[test]
fn root_split_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let data = random_set(&mut rng, 40, 5);
        let tree = fit_tree(&data, &TreeParams { max_depth: 2, ..TreeParams::default() }).unwrap();
        let (j, t, dec) = oracle_root(&data).unwrap();
        match &tree.nodes[0] {
            Node::Split { feature, threshold, impurity_decrease, .. } => {
                assert_eq!(*feature, j);
                assert!((threshold - t).abs() < 1e-12);
                assert!((impurity_decrease - dec).abs() < 1e-12);
            }
            Node::Leaf { .. } => panic!("expected a root split"),
        }
        assert!(tree.depth() <= 2);
    }
}

#[test]
fn alpha_closed_form() {
    // x: 4 rows, the stump on feature 0 misclassifies exactly row 3 (ε = 0.25).
    let data = set(
        vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
        vec![false, true, true, false],
    );
    let params = AdaBoostParams {
        n_estimators: 1,
        learning_rate: 1.0,
        tree: TreeParams { max_depth: 1, ..TreeParams::default() },
    };
    let (model, trace) = fit_adaboost_traced(&data, &params).unwrap();
    assert!((trace[0].error - 0.25).abs() < 1e-12);
    assert!((model.members[0].weight - 3f64.ln()).abs() < 1e-12);
    assert!((model.members[0].weight - 1.0986).abs() < 1e-4);
}

#[test]
fn reweighting_matches_hand_oracle() {
    let second = [3.0, 1.0, 2.0, 5.0, 0.0, 6.0, 7.0, 4.0];
    let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, second[i]]).collect();
    let y = vec![false, false, true, false, true, true, false, true];
    let data = set(rows.clone(), y.clone());
    let params = AdaBoostParams {
        n_estimators: 2,
        learning_rate: 0.7,
        tree: TreeParams { max_depth: 1, ..TreeParams::default() },
    };
    let (model, trace) = fit_adaboost_traced(&data, &params).unwrap();
    assert!(trace.len() >= 2);

    let first = &model.members[0].tree;
    let miss: Vec<bool> = rows
        .iter()
        .zip(&y)
        .map(|(r, &l)| first.predict(r).unwrap().class.is_covid() != l)
        .collect();
    let eps = miss.iter().filter(|&&m| m).count() as f64 / 8.0;
    let alpha = 0.7 * ((1.0 - eps) / eps).ln();
    let raw: Vec<f64> = miss.iter().map(|&m| if m { alpha.exp() / 8.0 } else { 1.0 / 8.0 }).collect();
    let z: f64 = raw.iter().sum();
    for (got, want) in trace[0].weights_after.iter().zip(raw.iter().map(|w| w / z)) {
        assert!((got - want).abs() < 1e-12);
    }
    assert!((trace[0].alpha - alpha).abs() < 1e-12);
}

#[test]
fn separable_data_stops_after_one_member() {
    let data = set(vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]], vec![false, false, true, true]);
    let model = fit_adaboost(
        &data,
        &AdaBoostParams { n_estimators: 50, learning_rate: 1.0, tree: TreeParams::default() },
    )
    .unwrap();
    assert_eq!(model.members.len(), 1);
    for (row, &y) in data.rows().iter().zip(data.labels()) {
        assert_eq!(model.proba(row).unwrap(), if y { 1.0 } else { 0.0 });
    }
}

#[test]
fn single_class_rejected() {
    let data = set(vec![vec![1.0], vec![2.0]], vec![true, true]);
    let p = AdaBoostParams { n_estimators: 3, learning_rate: 1.0, tree: TreeParams::default() };
    assert!(matches!(fit_adaboost(&data, &p), Err(crate::Error::SingleClassData)));
    let f = ForestParams { n_trees: 3, tree: TreeParams::default(), features_per_split: None, bootstrap: true };
    assert!(matches!(fit_random_forest(&data, &f, 1), Err(crate::Error::SingleClassData)));
}

fn voting_tree(covid: bool) -> DecisionTree {
    let w = if covid { [0.0, 1.0] } else { [1.0, 0.0] };
    DecisionTree { n_features: 1, nodes: vec![Node::Leaf { weights: w }] }
}

fn hand_model(members: &[(f64, bool)]) -> Ensemble {
    let data = set(vec![vec![0.0], vec![1.0]], vec![false, true]);
    let mut m = fit_adaboost(
        &data,
        &AdaBoostParams { n_estimators: 1, learning_rate: 1.0, tree: TreeParams::default() },
    )
    .unwrap();
    m.members = members
        .iter()
        .map(|&(weight, covid)| Member { weight, tree: voting_tree(covid) })
        .collect();
    m
}

#[test]
fn weighted_vote_arithmetic() {
    assert_eq!(hand_model(&[(1.0, true)]).proba(&[0.0]).unwrap(), 1.0);
    assert_eq!(hand_model(&[(1.0, true), (1.0, false)]).proba(&[0.0]).unwrap(), 0.5);
    assert_eq!(
        hand_model(&[(2.0, true), (1.0, false), (1.0, true)]).proba(&[0.0]).unwrap(),
        0.75
    );
    assert!(matches!(
        hand_model(&[(1.0, true)]).proba(&[0.0, 1.0]),
        Err(crate::Error::SchemaMismatch(_))
    ));
}

#[test]
fn forest_with_one_tree_equals_cart() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = random_set(&mut rng, 30, 4);
    let tree = fit_tree(&data, &TreeParams::default()).unwrap();
    let f = ForestParams { n_trees: 1, tree: TreeParams::default(), features_per_split: Some(4), bootstrap: false };
    let forest = fit_random_forest(&data, &f, 99).unwrap();
    assert_eq!(forest.members[0].tree, tree);
}

#[test]
fn forest_is_seeded_and_fits_separable_data() {
    let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 7) as f64, (i % 3) as f64]).collect();
    let y: Vec<bool> = (0..40).map(|i| i >= 20).collect();
    let data = set(rows, y);
    let f = ForestParams {
        n_trees: 11,
        tree: TreeParams { max_depth: 6, ..TreeParams::default() },
        features_per_split: None,
        bootstrap: true,
    };
    let a = fit_random_forest(&data, &f, 5).unwrap();
    let b = fit_random_forest(&data, &f, 5).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let correct = data
        .rows()
        .iter()
        .zip(data.labels())
        .filter(|(r, &y)| (a.proba(r).unwrap() >= 0.5) == y)
        .count();
    assert_eq!(correct, 40);
}

#[test]
fn threshold_examples() {
    let labels = [true, true, true, false, false, false];
    assert_eq!(choose_threshold(&[0.9, 0.9, 0.9, 0.1, 0.1, 0.1], &labels).unwrap(), 0.5);
    assert_eq!(choose_threshold(&[0.4; 6], &labels).unwrap(), 0.0);
    assert!(matches!(choose_threshold(&[0.1, 0.2], &[true, true]), Err(crate::Error::SingleClassData)));
}

fn youden(scores: &[f64], labels: &[bool], t: f64) -> f64 {
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let tp = scores.iter().zip(labels).filter(|(&s, &l)| l && s >= t).count() as f64;
    let tn = scores.iter().zip(labels).filter(|(&s, &l)| !l && s < t).count() as f64;
    tp / pos + tn / neg - 1.0
}

#[test]
fn threshold_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let scores: Vec<f64> = (0..6).map(|_| rng.random_range(0..5) as f64 / 4.0).collect();
        let mut labels: Vec<bool> = (0..6).map(|_| rng.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        let mut cands = vec![0.0, 1.0];
        let mut s = scores.clone();
        s.sort_by(f64::total_cmp);
        s.dedup();
        cands.extend(s.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        let best = cands.iter().map(|&t| youden(&scores, &labels, t)).fold(f64::NEG_INFINITY, f64::max);
        let smallest = cands
            .iter()
            .copied()
            .filter(|&t| youden(&scores, &labels, t) == best)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(choose_threshold(&scores, &labels).unwrap(), smallest);
    }
}

#[test]
fn model_json_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let data = random_set(&mut rng, 30, 3);
    let model = ModelParams { n_estimators: 5, ..ModelParams::default() }.fit(&data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let back = Ensemble::load(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.to_json().unwrap(), model.to_json().unwrap());
}

#[test]
fn masked_features_are_zeroed_at_prediction() {
    let data = set(
        vec![vec![0.0, 0.0], vec![0.5, 1.0], vec![1.0, 5.0], vec![1.5, 6.0]],
        vec![false, false, true, true],
    )
        .with_active(vec![true, false])
        .unwrap();
    let model = ModelParams::default().fit(&data).unwrap();
    assert_eq!(model.proba(&[1.0, 100.0]).unwrap(), model.proba(&[1.0, -3.0]).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn boosting_weights_stay_normalized(seed in any::<u64>(), lr in 0.1f64..1.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_set(&mut rng, 24, 3);
        let params = AdaBoostParams { n_estimators: 8, learning_rate: lr, tree: TreeParams { max_depth: 1, ..TreeParams::default() } };
        if let Ok((model, trace)) = fit_adaboost_traced(&data, &params) {
            for round in trace.iter().filter(|r| r.accepted) {
                prop_assert!(round.error < 0.5);
                prop_assert!((round.weights_after.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(round.weights_after.iter().all(|&w| w > 0.0));
            }
            for row in data.rows() {
                let p = model.proba(row).unwrap();
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }

    #[test]
    fn monotone_transform_keeps_predictions(seed in any::<u64>(), feature in 0usize..3, scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_set(&mut rng, 30, 3);
        let moved: Vec<Vec<f64>> = data
            .rows()
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r[feature] = (r[feature] * scale + shift).exp();
                r
            })
            .collect();
        let other = set(moved.clone(), data.labels().to_vec());
        let params = ModelParams { n_estimators: 6, max_depth: 2, ..ModelParams::default() };
        let a = params.fit(&data).unwrap();
        let b = params.fit(&other).unwrap();
        prop_assert_eq!(a.members.len(), b.members.len());
        for (ma, mb) in a.members.iter().zip(&b.members) {
            prop_assert!((ma.weight - mb.weight).abs() < 1e-9);
        }
        for (ra, rb) in data.rows().iter().zip(&moved) {
            prop_assert!((a.proba(ra).unwrap() - b.proba(rb).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn covid_member_never_lowers_score(seed in any::<u64>(), alpha in 0.01f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_set(&mut rng, 20, 2);
        let mut model = ModelParams { n_estimators: 4, ..ModelParams::default() }.fit(&data).unwrap();
        let before: Vec<f64> = data.rows().iter().map(|r| model.proba(r).unwrap()).collect();
        model.members.push(Member { weight: alpha, tree: DecisionTree { n_features: 2, nodes: vec![Node::Leaf { weights: [0.0, 1.0] }] } });
        for (r, b) in data.rows().iter().zip(before) {
            prop_assert!(model.proba(r).unwrap() >= b);
        }
    }
}
