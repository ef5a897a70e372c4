use std::collections::{BTreeSet, HashSet};

use super::{weighted_metrics, EvalError, EvalReport, Scores};
use crate::corpus::{merge_domains, random_baseline, stratified_kfold, Dataset, Domain, Label};
use crate::par::{self, Execution};

/// A trainable classifier, as seen by cross-validation.
pub trait Method: Sync {
    fn name(&self) -> String;

    /// Whether the target-domain training fold joins the training data.
    fn uses_target_data(&self) -> bool {
        false
    }

    /// Trains on `train` and predicts one label per post of `test`.
    fn fit_predict(&self, train: &Dataset, test: &Dataset, seed: u64) -> crate::Result<Vec<Label>>;
}

/// Uniform random guessing.
#[derive(Clone, Copy, Debug, Default)]
pub struct RandomBaseline;

impl Method for RandomBaseline {
    fn name(&self) -> String {
        "random".into()
    }

    fn fit_predict(&self, _train: &Dataset, test: &Dataset, seed: u64) -> crate::Result<Vec<Label>> {
        Ok(random_baseline(test, seed))
    }
}

/// Returns the gold labels. Useful to test the harness itself.
#[derive(Clone, Copy, Debug, Default)]
pub struct GoldEcho;

impl Method for GoldEcho {
    fn name(&self) -> String {
        "gold_echo".into()
    }

    fn fit_predict(&self, _train: &Dataset, test: &Dataset, _seed: u64) -> crate::Result<Vec<Label>> {
        Ok(test.labels()?)
    }
}

fn tags(domains: BTreeSet<Domain>) -> String {
    domains.iter().map(|d| d.as_str()).collect::<Vec<_>>().join("+")
}

/// k-fold cross-validation on `target`.
///
/// Each fold trains on `source` (when given) plus, if the method uses target
/// data or there is no source, the target training fold; it is evaluated on
/// the target test fold. Source posts whose id appears in the test fold are
/// dropped. Fold `i` uses seed `seed + i`, so parallel and sequential runs
/// agree exactly.
pub fn cross_validate(
    method: &dyn Method,
    source: Option<&Dataset>,
    target: &Dataset,
    k: usize,
    seed: u64,
    exec: Execution,
) -> crate::Result<EvalReport> {
    Ok(cross_validate_with_predictions(method, source, target, k, seed, exec)?.0)
}

/// [`cross_validate`] that also returns the out-of-fold prediction of every
/// target post, in target order.
pub fn cross_validate_with_predictions(
    method: &dyn Method,
    source: Option<&Dataset>,
    target: &Dataset,
    k: usize,
    seed: u64,
    exec: Execution,
) -> crate::Result<(EvalReport, Vec<(String, Label)>)> {
    let folds = stratified_kfold(target, k, seed)?;
    let use_target = method.uses_target_data() || source.is_none();
    let results = par::map(exec, &folds, |fold| -> crate::Result<(Scores, Vec<(String, Label)>)> {
        let test = target.subset(&fold.test_ids);
        let held_out: HashSet<&str> = fold.test_ids.iter().map(String::as_str).collect();
        let mut train = match source {
            Some(s) => s.filter(|p| !held_out.contains(p.id.as_str())),
            None => Dataset::empty(),
        };
        if use_target {
            let target_train = target.subset(&fold.train_ids);
            train = if train.is_empty() { target_train } else { merge_domains(&train, &target_train) };
        }
        let preds = method.fit_predict(&train, &test, seed.wrapping_add(fold.fold_index as u64))?;
        if preds.len() != test.len() {
            return Err(EvalError::LengthMismatch { left: test.len(), right: preds.len() }.into());
        }
        let scores = weighted_metrics(&test.labels()?, &preds)?;
        Ok((scores, test.iter().map(|p| p.id.clone()).zip(preds).collect()))
    });
    let mut per_fold = Vec::with_capacity(k);
    let mut by_id = std::collections::HashMap::new();
    for r in results {
        let (scores, preds) = r?;
        per_fold.push(scores);
        by_id.extend(preds);
    }
    let predictions = target.iter().map(|p| (p.id.clone(), by_id[&p.id])).collect();

    let mut train_domains = source.map(Dataset::domain_tags).unwrap_or_default();
    if use_target {
        train_domains.extend(target.domain_tags());
    }
    let report = EvalReport::from_folds(method.name(), tags(train_domains), tags(target.domain_tags()), per_fold);
    Ok((report, predictions))
}
