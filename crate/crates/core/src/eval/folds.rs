use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Assignment of every case to exactly one test fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    /// `fold_of[i]` is the test fold of case `i`.
    pub fold_of: Vec<usize>,
}

impl FoldSplit {
    pub fn from_assignment(k: usize, fold_of: Vec<usize>) -> Result<Self> {
        if k < 2 || fold_of.iter().any(|&f| f >= k) {
            return Err(Error::InvalidParameter(format!("fold assignment must use folds 0..{k} with k >= 2")));
        }
        Ok(FoldSplit { k, fold_of })
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}

/// Seeded shuffle within each class, then round-robin over the concatenated
/// class lists (covid first), which keeps both per-class and total fold sizes within one.
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be >= 2, got {k}")));
    }
    let mut covid: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut other: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    for (class, members) in [("covid", &covid), ("other", &other)] {
        if members.len() < k {
            return Err(Error::TooFewPerClass {
                class,
                count: members.len(),
                k,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    covid.shuffle(&mut rng);
    other.shuffle(&mut rng);
    let mut fold_of = vec![0; labels.len()];
    for (pos, &i) in covid.iter().chain(&other).enumerate() {
        fold_of[i] = pos % k;
    }
    Ok(FoldSplit { k, fold_of })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(split: &FoldSplit, labels: &[bool], fold: usize) -> (usize, usize) {
        let test = split.test_indices(fold);
        let c = test.iter().filter(|&&i| labels[i]).count();
        (c, test.len() - c)
    }

    #[test]
    fn divisible_classes_fill_folds_evenly() {
        let labels: Vec<bool> = (0..20).map(|i| i < 10).collect();
        let split = stratified_kfold(&labels, 5, 1).unwrap();
        for f in 0..5 {
            assert_eq!(counts(&split, &labels, f), (2, 2));
        }
    }

    #[test]
    fn too_few_per_class() {
        let labels = [true, true, false, false, false];
        assert!(matches!(
            stratified_kfold(&labels, 3, 0),
            Err(Error::TooFewPerClass { class: "covid", count: 2, k: 3 })
        ));
    }

    proptest! {
        #[test]
        fn folds_partition_and_balance(n_covid in 5usize..40, n_other in 5usize..40, k in 2usize..6, seed in any::<u64>()) {
            let mut labels: Vec<bool> = (0..n_covid + n_other).map(|i| i < n_covid).collect();
            labels.rotate_left(seed as usize % (n_covid + n_other));
            let n_c = labels.iter().filter(|&&l| l).count();
            prop_assume!(n_c >= k && labels.len() - n_c >= k);
            let split = stratified_kfold(&labels, k, seed).unwrap();
            prop_assert_eq!(&split, &stratified_kfold(&labels, k, seed).unwrap());
            let mut seen = vec![0; labels.len()];
            let sizes: Vec<usize> = (0..k).map(|f| split.test_indices(f).len()).collect();
            for f in 0..k {
                for i in split.test_indices(f) {
                    seen[i] += 1;
                }
                let (c, o) = counts(&split, &labels, f);
                let want_c = n_c as f64 / k as f64;
                let want_o = (labels.len() - n_c) as f64 / k as f64;
                prop_assert!((c as f64 - want_c).abs() < 1.0 + 1e-9);
                prop_assert!((o as f64 - want_o).abs() < 1.0 + 1e-9);
                let mut train = split.train_indices(f);
                train.extend(split.test_indices(f));
                train.sort_unstable();
                prop_assert_eq!(train, (0..labels.len()).collect::<Vec<_>>());
            }
            prop_assert!(seen.iter().all(|&s| s == 1));
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
