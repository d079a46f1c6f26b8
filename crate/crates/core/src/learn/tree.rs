use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::ClassLabel;

use super::data::{class_of, TrainSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Minimum number of cases a node needs before it may split.
    pub min_samples_split: usize,
    pub min_impurity_decrease: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 3,
            min_samples_split: 2,
            min_impurity_decrease: 0.0,
        }
    }
}

impl TreeParams {
    pub fn check(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::InvalidParameter("max_depth must be >= 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::InvalidParameter("min_samples_split must be >= 2".into()));
        }
        if !(self.min_impurity_decrease >= 0.0) {
            return Err(Error::InvalidParameter("min_impurity_decrease must be >= 0".into()));
        }
        Ok(())
    }
}

/// Gini impurity `1 - p0² - p1²` of a node with the given class weights.
pub fn gini_impurity(w_other: f64, w_covid: f64) -> Result<f64> {
    let total = w_other + w_covid;
    if !(total > 0.0) {
        return Err(Error::EmptyNode);
    }
    Ok(gini(w_other, w_covid, total))
}

#[inline]
fn gini(w0: f64, w1: f64, total: f64) -> f64 {
    let (p0, p1) = (w0 / total, w1 / total);
    1.0 - p0 * p0 - p1 * p1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `value <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Node weight over root weight.
        weight_fraction: f64,
        /// Gini decrease of this split, local to the node.
        impurity_decrease: f64,
    },
    /// Training weight per class, `[other, covid]`.
    Leaf { weights: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub n_features: usize,
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreePrediction {
    pub class: ClassLabel,
    /// Weighted covid fraction of the leaf.
    pub probability: f64,
}

impl DecisionTree {
    fn leaf(&self, row: &[f64]) -> Result<[f64; 2]> {
        if row.len() != self.n_features {
            return Err(Error::SchemaMismatch(format!(
                "row has {} values, tree expects {}",
                row.len(),
                self.n_features
            )));
        }
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if row[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { weights } => return Ok(*weights),
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> Result<TreePrediction> {
        let [w0, w1] = self.leaf(row)?;
        Ok(TreePrediction {
            class: class_of(w1 >= w0),
            probability: if w0 + w1 > 0.0 { w1 / (w0 + w1) } else { 0.0 },
        })
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    /// Per feature: sum over its splits of node weight fraction × impurity decrease.
    pub fn impurity_importance(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        for node in &self.nodes {
            if let Node::Split {
                feature,
                weight_fraction,
                impurity_decrease,
                ..
            } = node
            {
                out[*feature] += weight_fraction * impurity_decrease;
            }
        }
        out
    }

    pub fn has_splits(&self) -> bool {
        self.nodes.iter().any(|n| matches!(n, Node::Split { .. }))
    }
}

/// Which features a node may consider.
pub(crate) enum FeatureSampler<'r, R: Rng> {
    All,
    Random { rng: &'r mut R, per_split: usize },
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

struct Builder<'a, 'r, R: Rng> {
    data: &'a TrainSet,
    params: TreeParams,
    sorted: Vec<Vec<usize>>,
    active: Vec<usize>,
    sampler: FeatureSampler<'r, R>,
    root_weight: f64,
    nodes: Vec<Node>,
}

/// Greedy weighted-Gini CART.
///
/// Candidate thresholds are midpoints between consecutive distinct values.
/// Ties on impurity decrease go to the lowest feature index, then the lowest threshold.
pub fn fit_tree(data: &TrainSet, params: &TreeParams) -> Result<DecisionTree> {
    fit_tree_sampled::<rand_chacha::ChaCha8Rng>(data, params, FeatureSampler::All)
}

pub(crate) fn fit_tree_sampled<R: Rng>(
    data: &TrainSet,
    params: &TreeParams,
    sampler: FeatureSampler<'_, R>,
) -> Result<DecisionTree> {
    params.check()?;
    if data.is_empty() {
        return Err(Error::DegenerateData("no rows".into()));
    }
    let d = data.n_features();
    let active: Vec<usize> = (0..d).filter(|&j| data.active()[j]).collect();
    let sorted = (0..d)
        .map(|j| {
            if !data.active()[j] {
                return Vec::new();
            }
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.sort_by(|&a, &b| data.row(a)[j].total_cmp(&data.row(b)[j]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let mut b = Builder {
        data,
        params: *params,
        sorted,
        active,
        sampler,
        root_weight: data.weights().iter().sum(),
        nodes: Vec::new(),
    };
    let mut member = vec![true; data.len()];
    b.grow(&mut member, 0);
    Ok(DecisionTree {
        n_features: d,
        nodes: b.nodes,
    })
}

impl<R: Rng> Builder<'_, '_, R> {
    fn grow(&mut self, member: &mut [bool], depth: usize) -> usize {
        let id = self.nodes.len();
        let (mut w, mut count) = ([0.0f64; 2], [0usize; 2]);
        for i in (0..member.len()).filter(|&i| member[i]) {
            let c = self.data.labels()[i] as usize;
            w[c] += self.data.weights()[i];
            count[c] += 1;
        }
        self.nodes.push(Node::Leaf { weights: w });
        let n = count[0] + count[1];
        if depth >= self.params.max_depth || n < self.params.min_samples_split || count[0] == 0 || count[1] == 0 {
            return id;
        }
        let total = w[0] + w[1];
        let fraction = if self.root_weight > 0.0 { total / self.root_weight } else { 0.0 };
        let Some(best) = self.best_split(member, w) else {
            return id;
        };
        if fraction * best.decrease < self.params.min_impurity_decrease {
            return id;
        }
        let mut left: Vec<bool> = member.to_vec();
        for i in 0..member.len() {
            if member[i] {
                let goes_left = self.data.row(i)[best.feature] <= best.threshold;
                left[i] = goes_left;
                member[i] = !goes_left;
            }
        }
        let l = self.grow(&mut left, depth + 1);
        let r = self.grow(member, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
            weight_fraction: fraction,
            impurity_decrease: best.decrease,
        };
        id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        match &mut self.sampler {
            FeatureSampler::All => self.active.clone(),
            FeatureSampler::Random { rng, per_split } => {
                let k = (*per_split).min(self.active.len());
                let mut picked: Vec<usize> = sample(*rng, self.active.len(), k)
                    .into_iter()
                    .map(|i| self.active[i])
                    .collect();
                picked.sort_unstable();
                picked
            }
        }
    }

    fn best_split(&mut self, member: &[bool], w: [f64; 2]) -> Option<BestSplit> {
        let total = w[0] + w[1];
        let parent = gini(w[0], w[1], total);
        let mut best: Option<BestSplit> = None;
        for j in self.candidate_features() {
            let order: Vec<usize> = self.sorted[j].iter().copied().filter(|&i| member[i]).collect();
            let mut left = [0.0f64; 2];
            for k in 0..order.len() - 1 {
                let i = order[k];
                left[self.data.labels()[i] as usize] += self.data.weights()[i];
                let (a, b) = (self.data.row(i)[j], self.data.row(order[k + 1])[j]);
                if a == b {
                    continue;
                }
                let wl = left[0] + left[1];
                let right = [w[0] - left[0], w[1] - left[1]];
                let wr = total - wl;
                let child = if wl > 0.0 { wl / total * gini(left[0], left[1], wl) } else { 0.0 }
                    + if wr > 0.0 {
                        wr / total * gini(right[0].max(0.0), right[1].max(0.0), wr)
                    } else {
                        0.0
                    };
                let decrease = (parent - child).max(0.0);
                if best.as_ref().is_none_or(|b| decrease > b.decrease + TIE_EPS) {
                    best = Some(BestSplit {
                        feature: j,
                        threshold: midpoint(a, b),
                        decrease,
                    });
                }
            }
        }
        best
    }
}

/// Decreases closer than this count as tied, so summation order cannot flip a tie-break.
const TIE_EPS: f64 = 1e-12;

/// Midpoint of `a < b` that still separates them under the `<=` rule.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b || m < a {
        a
    } else {
        m
    }
}
