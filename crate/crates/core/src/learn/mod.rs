//! CART trees and the boosted / bagged ensembles built on them.

mod data;
mod ensemble;
mod tree;

pub use data::TrainSet;
pub use ensemble::{
    choose_threshold, ensemble_proba, fit_adaboost, fit_adaboost_traced, fit_random_forest, AdaBoostParams,
    BoostRound, Ensemble, EnsembleKind, ForestParams, Member, ModelParams, MIN_ERROR,
};
pub use tree::{fit_tree, gini_impurity, DecisionTree, Node, TreeParams, TreePrediction};

#[cfg(test)]
mod tests;
