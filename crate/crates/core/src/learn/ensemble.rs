use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureGroup, FeatureVector};
use crate::fsutil::write_json;
use crate::volume::ClassLabel;

use super::data::{class_of, TrainSet};
use super::tree::{fit_tree, fit_tree_sampled, DecisionTree, FeatureSampler, TreeParams};

/// Smallest weighted error used when computing a member weight.
pub const MIN_ERROR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    #[serde(rename = "adaboost-dt")]
    AdaBoostDt,
    #[serde(rename = "rf")]
    RandomForest,
}

impl EnsembleKind {
    pub fn title(self) -> &'static str {
        match self {
            EnsembleKind::AdaBoostDt => "AdaBoost - DT",
            EnsembleKind::RandomForest => "RF",
        }
    }
}

impl std::str::FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaboost-dt" | "adaboost" => Ok(EnsembleKind::AdaBoostDt),
            "rf" | "random-forest" => Ok(EnsembleKind::RandomForest),
            _ => Err(Error::InvalidParameter(format!("unknown model {s:?}, expected adaboost-dt or rf"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub tree: TreeParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    /// Features drawn per split; `None` means √(active features).
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

/// Flat hyper-parameter set covering both ensemble kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub model: EnsembleKind,
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_impurity_decrease: f64,
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            model: EnsembleKind::AdaBoostDt,
            n_estimators: 100,
            learning_rate: 0.5,
            max_depth: 2,
            min_samples_split: 4,
            min_impurity_decrease: 0.0,
            features_per_split: None,
            bootstrap: true,
            seed: crate::DEFAULT_SEED,
        }
    }
}

impl ModelParams {
    pub fn tree(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_impurity_decrease: self.min_impurity_decrease,
        }
    }

    pub fn adaboost(&self) -> AdaBoostParams {
        AdaBoostParams {
            n_estimators: self.n_estimators,
            learning_rate: self.learning_rate,
            tree: self.tree(),
        }
    }

    pub fn forest(&self) -> ForestParams {
        ForestParams {
            n_trees: self.n_estimators,
            tree: self.tree(),
            features_per_split: self.features_per_split,
            bootstrap: self.bootstrap,
        }
    }

    pub fn fit(&self, data: &TrainSet) -> Result<Ensemble> {
        let mut model = match self.model {
            EnsembleKind::AdaBoostDt => fit_adaboost(data, &self.adaboost())?,
            EnsembleKind::RandomForest => fit_random_forest(data, &self.forest(), self.seed)?,
        };
        model.params = *self;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub weight: f64,
    pub tree: DecisionTree,
}

/// Fitted ensemble; also the model file layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub kind: EnsembleKind,
    pub params: ModelParams,
    pub schema_version: String,
    pub n_features: usize,
    pub masked_groups: Vec<FeatureGroup>,
    /// Per feature, false where the feature belongs to a masked group.
    pub active: Vec<bool>,
    pub learning_rate: f64,
    pub threshold: f64,
    pub members: Vec<Member>,
}

impl Ensemble {
    fn empty(kind: EnsembleKind, data: &TrainSet, learning_rate: f64) -> Self {
        Ensemble {
            kind,
            params: ModelParams {
                model: kind,
                ..ModelParams::default()
            },
            schema_version: data.schema_version.clone(),
            n_features: data.n_features(),
            masked_groups: data.masked_groups.clone(),
            active: data.active().to_vec(),
            learning_rate,
            threshold: 0.5,
            members: Vec::new(),
        }
    }

    /// COVID-19 score in [0, 1] for one schema-ordered row.
    ///
    /// AdaBoost: α-weighted share of members voting covid. Random forest:
    /// mean leaf probability.
    pub fn proba(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::SchemaMismatch(format!(
                "row has {} values, model expects {}",
                row.len(),
                self.n_features
            )));
        }
        let masked: Vec<f64> = row
            .iter()
            .zip(&self.active)
            .map(|(&v, &a)| if a { v } else { 0.0 })
            .collect();
        let score = match self.kind {
            EnsembleKind::AdaBoostDt => {
                let (mut num, mut den) = (0.0, 0.0);
                for m in &self.members {
                    if m.tree.predict(&masked)?.class.is_covid() {
                        num += m.weight;
                    }
                    den += m.weight;
                }
                if den > 0.0 {
                    num / den
                } else {
                    0.0
                }
            }
            EnsembleKind::RandomForest => {
                let mut sum = 0.0;
                for m in &self.members {
                    sum += m.tree.predict(&masked)?.probability;
                }
                sum / self.members.len() as f64
            }
        };
        Ok(score.clamp(0.0, 1.0))
    }

    pub fn proba_vector(&self, v: &FeatureVector) -> Result<f64> {
        if v.schema_version != self.schema_version {
            return Err(Error::SchemaMismatch(format!(
                "vector schema {} differs from model schema {}",
                v.schema_version, self.schema_version
            )));
        }
        self.proba(&v.values)
    }

    pub fn classify(&self, row: &[f64]) -> Result<ClassLabel> {
        Ok(class_of(self.proba(row)? >= self.threshold))
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Free-function form of [`Ensemble::proba`].
pub fn ensemble_proba(model: &Ensemble, row: &[f64]) -> Result<f64> {
    model.proba(row)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostRound {
    pub error: f64,
    pub alpha: f64,
    pub accepted: bool,
    /// Normalized sample weights after this round's update.
    pub weights_after: Vec<f64>,
}

/// Discrete two-class AdaBoost over CART weak learners.
pub fn fit_adaboost(data: &TrainSet, params: &AdaBoostParams) -> Result<Ensemble> {
    fit_adaboost_traced(data, params).map(|(m, _)| m)
}

/// [`fit_adaboost`] that also returns the per-round error, weight and sample weights.
pub fn fit_adaboost_traced(data: &TrainSet, params: &AdaBoostParams) -> Result<(Ensemble, Vec<BoostRound>)> {
    if !data.has_both_classes() {
        return Err(Error::SingleClassData);
    }
    if params.n_estimators == 0 || !(params.learning_rate > 0.0 && params.learning_rate.is_finite()) {
        return Err(Error::InvalidParameter(
            "n_estimators must be >= 1 and learning_rate > 0".into(),
        ));
    }
    let mut model = Ensemble::empty(EnsembleKind::AdaBoostDt, data, params.learning_rate);
    model.params.n_estimators = params.n_estimators;
    model.params.learning_rate = params.learning_rate;
    model.params.max_depth = params.tree.max_depth;
    model.params.min_samples_split = params.tree.min_samples_split;
    model.params.min_impurity_decrease = params.tree.min_impurity_decrease;

    let mut trace = Vec::new();
    let mut weighted = data.clone();
    for _ in 0..params.n_estimators {
        let tree = fit_tree(&weighted, &params.tree)?;
        let mut miss = Vec::with_capacity(data.len());
        for (row, &y) in data.rows().iter().zip(data.labels()) {
            miss.push(tree.predict(row)?.class.is_covid() != y);
        }
        let w = weighted.weights();
        let error: f64 = w.iter().zip(&miss).filter(|(_, &m)| m).fold(0.0, |acc, (w, _)| acc + w);
        if error >= 0.5 {
            trace.push(BoostRound {
                error,
                alpha: 0.0,
                accepted: false,
                weights_after: w.to_vec(),
            });
            if model.members.is_empty() {
                return Err(Error::NoWeakLearner);
            }
            break;
        }
        let clamped = error.max(MIN_ERROR);
        let alpha = params.learning_rate * ((1.0 - clamped) / clamped).ln();
        model.members.push(Member { weight: alpha, tree });
        if error == 0.0 {
            trace.push(BoostRound {
                error,
                alpha,
                accepted: true,
                weights_after: w.to_vec(),
            });
            break;
        }
        let boost = alpha.exp();
        let updated: Vec<f64> = w
            .iter()
            .zip(&miss)
            .map(|(&w, &m)| if m { w * boost } else { w })
            .collect();
        weighted = weighted.with_weights(updated)?;
        trace.push(BoostRound {
            error,
            alpha,
            accepted: true,
            weights_after: weighted.weights().to_vec(),
        });
    }
    Ok((model, trace))
}

/// Bagged CART trees with per-split feature subsampling; every member has weight 1.
pub fn fit_random_forest(data: &TrainSet, params: &ForestParams, seed: u64) -> Result<Ensemble> {
    if !data.has_both_classes() {
        return Err(Error::SingleClassData);
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("n_trees must be >= 1".into()));
    }
    let active = data.active().iter().filter(|&&a| a).count();
    let per_split = params
        .features_per_split
        .unwrap_or_else(|| ((active as f64).sqrt().ceil() as usize).max(1));
    let mut model = Ensemble::empty(EnsembleKind::RandomForest, data, 1.0);
    model.params.n_estimators = params.n_trees;
    model.params.max_depth = params.tree.max_depth;
    model.params.min_samples_split = params.tree.min_samples_split;
    model.params.min_impurity_decrease = params.tree.min_impurity_decrease;
    model.params.features_per_split = params.features_per_split;
    model.params.bootstrap = params.bootstrap;
    model.params.seed = seed;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..params.n_trees {
        let mut tree_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let sample = if params.bootstrap {
            let idx: Vec<usize> = (0..data.len()).map(|_| tree_rng.random_range(0..data.len())).collect();
            data.resample(&idx)
        } else {
            data.clone()
        };
        let tree = if per_split >= active {
            fit_tree(&sample, &params.tree)?
        } else {
            fit_tree_sampled(
                &sample,
                &params.tree,
                FeatureSampler::Random {
                    rng: &mut tree_rng,
                    per_split,
                },
            )?
        };
        model.members.push(Member { weight: 1.0, tree });
    }
    Ok(model)
}

/// Threshold maximizing Youden's J over {0, 1} and the midpoints of adjacent
/// distinct scores. Ties go to the smallest threshold.
pub fn choose_threshold(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidParameter("scores and labels differ in length".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClassData);
    }
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut candidates = vec![0.0];
    candidates.extend(distinct.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    candidates.push(1.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut best = (f64::NEG_INFINITY, 0.0);
    for &t in &candidates {
        let (mut tp, mut tn) = (0usize, 0usize);
        for (&s, &l) in scores.iter().zip(labels) {
            match (s >= t, l) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                _ => {}
            }
        }
        let j = tp as f64 / pos as f64 + tn as f64 / neg as f64 - 1.0;
        if j > best.0 {
            best = (j, t);
        }
    }
    Ok(best.1)
}
