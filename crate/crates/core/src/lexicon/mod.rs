//! Lexicon-category features and significance-based feature selection.
//!
//! A [`Lexicon`] maps category names to term sets. Texts are scored by
//! counting token hits per category ([`extract_features`]); categories whose
//! scores differ between distorted and non-distorted posts are kept by
//! [`feature_significance`] and appended to the sentence embedding by
//! [`build_augmented_input`].

mod significance;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::text;

pub use significance::{feature_significance, paired_t_test, welch_t_test, FeatureSelection, SignificanceTest, TTest};

/// Categories (with terms) shipped with the crate, derived from the Empath
/// default category file.
pub const BUNDLED_LEXICON: &str = include_str!("../../data/empath_categories.tsv");

#[derive(Debug, Error, PartialEq)]
pub enum LexiconError {
    #[error("lexicon has no categories")]
    EmptyLexicon,
    #[error("lexicon line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("both classes need at least 2 posts (not distorted: {not_distorted}, distorted: {distorted})")]
    InsufficientData { not_distorted: usize, distorted: usize },
    #[error("paired test needs equal group sizes (not distorted: {not_distorted}, distorted: {distorted})")]
    UnequalGroups { not_distorted: usize, distorted: usize },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub terms: BTreeSet<String>,
}

/// Category name → lowercase terms. Categories are kept sorted by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Category>", into = "Vec<Category>")]
pub struct Lexicon {
    categories: Vec<Category>,
    #[serde(skip)]
    index: HashMap<String, Vec<usize>>,
}

impl From<Vec<Category>> for Lexicon {
    fn from(mut categories: Vec<Category>) -> Self {
        categories.sort_by(|a, b| a.name.cmp(&b.name));
        let mut index: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, c) in categories.iter().enumerate() {
            for t in &c.terms {
                index.entry(t.clone()).or_default().push(i);
            }
        }
        Lexicon { categories, index }
    }
}

impl From<Lexicon> for Vec<Category> {
    fn from(l: Lexicon) -> Self {
        l.categories
    }
}

impl Lexicon {
    /// Builds a lexicon from `(name, terms)` pairs. Names must be unique and
    /// term sets non-empty.
    pub fn new<I, S, T>(categories: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = (S, Vec<T>)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (i, (name, terms)) in categories.into_iter().enumerate() {
            let name = name.into();
            let terms: BTreeSet<String> =
                terms.iter().map(|t| t.as_ref().trim().to_lowercase()).filter(|t| !t.is_empty()).collect();
            if terms.is_empty() {
                return Err(LexiconError::Parse { line: i + 1, message: format!("category `{name}` has no terms") });
            }
            if !seen.insert(name.clone()) {
                return Err(LexiconError::Parse { line: i + 1, message: format!("duplicate category `{name}`") });
            }
            out.push(Category { name, terms });
        }
        Ok(Lexicon::from(out))
    }

    /// Parses `category<TAB>term1,term2,...`, one category per line.
    pub fn parse(content: &str) -> Result<Self, LexiconError> {
        let mut entries = Vec::new();
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (name, terms) = line
                .split_once('\t')
                .ok_or_else(|| LexiconError::Parse { line: i + 1, message: "expected `category<TAB>terms`".into() })?;
            let terms: Vec<&str> = terms.split(',').collect();
            entries.push((name.trim().to_string(), terms));
        }
        // Line numbers in errors from `new` count entries, which match lines
        // for files without blank lines.
        Lexicon::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Lexicon::parse(&content)?)
    }

    pub fn bundled() -> Self {
        Lexicon::parse(BUNDLED_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for c in &self.categories {
            out.push_str(&c.name);
            out.push('\t');
            out.push_str(&c.terms.iter().cloned().collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn names(&self) -> Vec<&str> {
        self.categories.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.categories.binary_search_by(|c| c.name.as_str().cmp(name)).ok()
    }

    /// The sub-lexicon holding only `names`, in name order.
    pub fn restrict<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Lexicon {
        let cats =
            names.into_iter().filter_map(|n| self.position(n)).map(|i| self.categories[i].clone()).collect::<Vec<_>>();
        Lexicon::from(cats)
    }

    fn categories_of(&self, token: &str) -> &[usize] {
        self.index.get(token).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    RawCount,
    #[default]
    PerToken,
}

/// Category scores for one text, aligned with the lexicon's category order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub normalization: Normalization,
}

/// Scores `text` against every category of `lexicon`.
///
/// A category's value is the number of tokens that belong to it, divided by
/// the token count under [`Normalization::PerToken`]. Texts without tokens
/// score zero everywhere.
pub fn extract_features(
    text: &str,
    lexicon: &Lexicon,
    normalization: Normalization,
) -> Result<FeatureVector, LexiconError> {
    if lexicon.is_empty() {
        return Err(LexiconError::EmptyLexicon);
    }
    let mut values = vec![0.0; lexicon.len()];
    let mut n_tokens = 0usize;
    for token in text::tokens(text) {
        n_tokens += 1;
        for &c in lexicon.categories_of(&token) {
            values[c] += 1.0;
        }
    }
    if normalization == Normalization::PerToken && n_tokens > 0 {
        let n = n_tokens as f64;
        values.iter_mut().for_each(|v| *v /= n);
    }
    Ok(FeatureVector { values, normalization })
}

/// [`extract_features`] over many texts.
pub fn extract_batch<S: AsRef<str> + Sync>(
    texts: &[S],
    lexicon: &Lexicon,
    normalization: Normalization,
    exec: Execution,
) -> Result<Vec<FeatureVector>, LexiconError> {
    if lexicon.is_empty() {
        return Err(LexiconError::EmptyLexicon);
    }
    par::map(exec, texts, |t| extract_features(t.as_ref(), lexicon, normalization)).into_iter().collect()
}

/// Concatenates the selected feature values onto `embedding`.
pub fn build_augmented_input(
    embedding: &[f64],
    features: &FeatureVector,
    selection: &FeatureSelection,
) -> Result<Vec<f64>, LexiconError> {
    if features.values.len() != selection.universe_size {
        return Err(LexiconError::DimensionMismatch { expected: selection.universe_size, got: features.values.len() });
    }
    let mut out = Vec::with_capacity(embedding.len() + selection.selected.len());
    out.extend_from_slice(embedding);
    out.extend(selection.indices.iter().map(|&i| features.values[i]));
    Ok(out)
}

/// Per-feature z-scoring with statistics frozen from a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics per column; constant columns get std 1.
    pub fn fit(rows: &[Vec<f64>], width: usize) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; width];
        for r in rows {
            crate::math::add_assign(&mut mean, r);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for r in rows {
            for (j, v) in r.iter().enumerate() {
                var[j] += (v - mean[j]) * (v - mean[j]);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
        Standardizer { mean, std }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

/// Selected-category features for the augmented classifier: per-token
/// scores on the selected categories, standardized with training statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LexiconAugmentation {
    pub lexicon: Lexicon,
    pub standardizer: Standardizer,
}

impl LexiconAugmentation {
    /// Restricts `lexicon` to `selection` and fits standardization on `train_texts`.
    pub fn fit<S: AsRef<str> + Sync>(
        lexicon: &Lexicon,
        selection: &FeatureSelection,
        train_texts: &[S],
        exec: Execution,
    ) -> Result<Self, LexiconError> {
        let sub = lexicon.restrict(selection.selected.iter().map(String::as_str));
        let rows: Vec<Vec<f64>> = if sub.is_empty() {
            vec![Vec::new(); train_texts.len()]
        } else {
            extract_batch(train_texts, &sub, Normalization::PerToken, exec)?.into_iter().map(|f| f.values).collect()
        };
        let standardizer = Standardizer::fit(&rows, sub.len());
        Ok(LexiconAugmentation { lexicon: sub, standardizer })
    }

    pub fn width(&self) -> usize {
        self.lexicon.len()
    }

    pub fn features(&self, text: &str) -> Vec<f64> {
        if self.lexicon.is_empty() {
            return Vec::new();
        }
        let raw = extract_features(text, &self.lexicon, Normalization::PerToken).expect("non-empty lexicon");
        self.standardizer.transform(&raw.values)
    }
}

/// Names and p-values as a sorted map, convenient for reports.
pub fn p_value_table(selection: &FeatureSelection) -> BTreeMap<&str, f64> {
    selection.p_values.iter().map(|(k, v)| (k.as_str(), *v)).collect()
}
