use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset, Label};

/// One cross-validation fold. Ids are listed in dataset order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
}

/// Stratified k-fold split.
///
/// Each class is shuffled with the seed and dealt round-robin over the folds;
/// the dealing position carries over between classes so fold sizes differ by
/// at most one.
pub fn stratified_kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<FoldSplit>, CorpusError> {
    if k < 2 {
        return Err(CorpusError::InvalidFoldCount(k));
    }
    let labels = dataset.labels()?;
    let mut rng = crate::seed::rng(seed);
    let mut fold_of = vec![0usize; dataset.len()];
    let mut cursor = 0usize;
    for class in Label::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(CorpusError::TooFewExamples { class, count: members.len() });
        }
        members.shuffle(&mut rng);
        for idx in members {
            fold_of[idx] = cursor % k;
            cursor += 1;
        }
    }

    Ok((0..k)
        .map(|fold| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&i| fold_of[i] == fold);
            let ids = |v: Vec<usize>| v.into_iter().map(|i| dataset.posts()[i].id.clone()).collect();
            FoldSplit { fold_index: fold, train_ids: ids(train), test_ids: ids(test), seed }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Domain, Post};

    fn dataset(n_neg: usize, n_pos: usize) -> Dataset {
        let posts = (0..n_neg)
            .map(|i| Post::new(format!("n{i}"), "x", Domain::KT, Some(Label::NotDistorted)))
            .chain((0..n_pos).map(|i| Post::new(format!("p{i}"), "x", Domain::KT, Some(Label::Distorted))))
            .collect();
        Dataset::new(posts).unwrap()
    }

    #[test]
    fn two_folds_on_four_balanced_posts() {
        let ds = dataset(2, 2);
        let folds = stratified_kfold(&ds, 2, 0).unwrap();
        for f in &folds {
            assert_eq!(f.test_ids.len(), 2);
            let sub = ds.subset(&f.test_ids);
            let pos = sub.labels().unwrap().iter().filter(|l| **l == Label::Distorted).count();
            assert_eq!(pos, 1);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let ds = dataset(30, 20);
        assert_eq!(stratified_kfold(&ds, 5, 4).unwrap(), stratified_kfold(&ds, 5, 4).unwrap());
        assert_ne!(stratified_kfold(&ds, 5, 4).unwrap(), stratified_kfold(&ds, 5, 5).unwrap());
    }

    #[test]
    fn errors() {
        assert_eq!(stratified_kfold(&dataset(5, 5), 1, 0).unwrap_err(), CorpusError::InvalidFoldCount(1));
        assert_eq!(
            stratified_kfold(&dataset(10, 3), 5, 0).unwrap_err(),
            CorpusError::TooFewExamples { class: Label::Distorted, count: 3 }
        );
    }
}
