use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{extract_batch, Lexicon, LexiconError, Normalization};
use crate::corpus::{Dataset, Label};
use crate::par::Execution;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignificanceTest {
    /// Welch's unequal-variance two-sample t-test.
    #[default]
    Welch,
    /// Paired t-test; the i-th distorted post is paired with the i-th
    /// non-distorted post in dataset order.
    Paired,
}

impl std::str::FromStr for SignificanceTest {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "welch" | "welch_two_sample" => Ok(SignificanceTest::Welch),
            "paired" => Ok(SignificanceTest::Paired),
            other => Err(format!("unknown test `{other}`")),
        }
    }
}

/// Outcome of a two-sided t-test. `None` when the statistic is undefined
/// because the data has no variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn two_sided_p(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Welch's t-test of `a` against `b` (`t > 0` when `a` has the larger mean).
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<TTest> {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 <= 0.0 || !se2.is_finite() {
        return None;
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    Some(TTest { t, df, p_value: two_sided_p(t, df) })
}

/// Paired t-test on `a[i] - b[i]`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Option<TTest> {
    debug_assert_eq!(a.len(), b.len());
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (m, v) = mean_var(&diffs);
    let n = diffs.len() as f64;
    if v <= 0.0 || !v.is_finite() {
        return None;
    }
    let t = m / (v / n).sqrt();
    let df = n - 1.0;
    Some(TTest { t, df, p_value: two_sided_p(t, df) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    /// Selected category names, sorted.
    pub selected: Vec<String>,
    /// Positions of `selected` in the lexicon the selection was computed on.
    pub indices: Vec<usize>,
    /// Number of categories in that lexicon.
    pub universe_size: usize,
    pub p_values: BTreeMap<String, f64>,
    /// Distorted minus not-distorted. Missing for degenerate categories.
    pub t_statistics: BTreeMap<String, f64>,
    /// Categories constant within both groups; excluded with p = 1.
    pub degenerate: Vec<String>,
    pub alpha: f64,
    pub test: SignificanceTest,
}

/// Tests every category for a difference between distorted and
/// not-distorted posts and keeps those with `p < alpha`.
pub fn feature_significance(
    dataset: &Dataset,
    lexicon: &Lexicon,
    test: SignificanceTest,
    alpha: f64,
    exec: Execution,
) -> Result<FeatureSelection, LexiconError> {
    if lexicon.is_empty() {
        return Err(LexiconError::EmptyLexicon);
    }
    let labels = dataset.labels()?;
    let texts = dataset.texts();
    let features = extract_batch(&texts, lexicon, Normalization::PerToken, exec)?;

    let distorted: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Distorted).collect();
    let not_distorted: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::NotDistorted).collect();
    if distorted.len() < 2 || not_distorted.len() < 2 {
        return Err(LexiconError::InsufficientData { not_distorted: not_distorted.len(), distorted: distorted.len() });
    }
    if test == SignificanceTest::Paired && distorted.len() != not_distorted.len() {
        return Err(LexiconError::UnequalGroups { not_distorted: not_distorted.len(), distorted: distorted.len() });
    }

    let mut selection = FeatureSelection {
        selected: Vec::new(),
        indices: Vec::new(),
        universe_size: lexicon.len(),
        p_values: BTreeMap::new(),
        t_statistics: BTreeMap::new(),
        degenerate: Vec::new(),
        alpha,
        test,
    };
    for (c, category) in lexicon.categories().iter().enumerate() {
        let a: Vec<f64> = distorted.iter().map(|&i| features[i].values[c]).collect();
        let b: Vec<f64> = not_distorted.iter().map(|&i| features[i].values[c]).collect();
        let result = match test {
            SignificanceTest::Welch => welch_t_test(&a, &b),
            SignificanceTest::Paired => paired_t_test(&a, &b),
        };
        match result {
            Some(r) => {
                selection.p_values.insert(category.name.clone(), r.p_value);
                selection.t_statistics.insert(category.name.clone(), r.t);
                if r.p_value < alpha {
                    selection.selected.push(category.name.clone());
                    selection.indices.push(c);
                }
            }
            None => {
                log::debug!("category `{}` has degenerate variance; p = 1", category.name);
                selection.p_values.insert(category.name.clone(), 1.0);
                selection.degenerate.push(category.name.clone());
            }
        }
    }
    Ok(selection)
}
