//! Posts, datasets and the operations that prepare them for experiments.

mod io;
mod pseudonym;
mod split;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_posts, load_posts_from_str, save_jsonl, to_jsonl, Format};
pub use pseudonym::{is_pseudonym, pseudonymize, pseudonymize_dataset, strip_urls, Pseudonymizer};
pub use split::{stratified_kfold, FoldSplit};

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("malformed record on line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("unknown domain tag `{0}`")]
    UnknownDomainTag(String),
    #[error("pseudonym space exhausted")]
    PseudonymSpaceExhausted,
    #[error("post `{0}` has no label")]
    UnlabeledPost(String),
    #[error("class {class} has {count} examples, fewer than the number of folds")]
    TooFewExamples { class: Label, count: usize },
    #[error("invalid fold count {0}; need k >= 2")]
    InvalidFoldCount(usize),
    #[error("duplicate post id `{0}`")]
    DuplicateId(String),
}

/// Where a post comes from: English Q&A, its Dutch translation, the
/// adolescent helpline forum, or English rewritten in the forum's register.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    EN,
    NL,
    KT,
    R,
}

impl Domain {
    pub const ALL: [Domain; 4] = [Domain::EN, Domain::NL, Domain::KT, Domain::R];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::EN => "EN",
            Domain::NL => "NL",
            Domain::KT => "KT",
            Domain::R => "R",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "EN" => Ok(Domain::EN),
            "NL" => Ok(Domain::NL),
            "KT" => Ok(Domain::KT),
            "R" => Ok(Domain::R),
            other => Err(CorpusError::UnknownDomainTag(other.to_string())),
        }
    }
}

/// Binary distortion label, serialized as `0` (not distorted) / `1` (distorted).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    NotDistorted,
    Distorted,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::NotDistorted, Label::Distorted];

    pub fn index(self) -> usize {
        match self {
            Label::NotDistorted => 0,
            Label::Distorted => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::NotDistorted),
            1 => Some(Label::Distorted),
            _ => None,
        }
    }

    pub fn flip(self) -> Label {
        match self {
            Label::NotDistorted => Label::Distorted,
            Label::Distorted => Label::NotDistorted,
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.index() as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Label::from_index(v as usize).ok_or_else(|| format!("label must be 0 or 1, got {v}"))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::NotDistorted => f.write_str("NotDistorted"),
            Label::Distorted => f.write_str("Distorted"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub author: String,
    pub text: String,
    pub domain: Domain,
    pub label: Option<Label>,
    pub annotator_labels: Option<Vec<Label>>,
    /// Annotators disagreed before deliberation.
    pub confusing: Option<bool>,
}

impl Post {
    pub fn new(id: impl Into<String>, text: impl Into<String>, domain: Domain, label: Option<Label>) -> Self {
        Post {
            id: id.into(),
            author: String::new(),
            text: text.into(),
            domain,
            label,
            annotator_labels: None,
            confusing: None,
        }
    }

    pub fn require_label(&self) -> Result<Label, CorpusError> {
        self.label.ok_or_else(|| CorpusError::UnlabeledPost(self.id.clone()))
    }
}

/// An ordered collection of posts with unique ids.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    posts: Vec<Post>,
}

impl Dataset {
    pub fn new(posts: Vec<Post>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(posts.len());
        for p in &posts {
            if !seen.insert(p.id.as_str()) {
                return Err(CorpusError::DuplicateId(p.id.clone()));
            }
        }
        Ok(Dataset { posts })
    }

    pub fn empty() -> Self {
        Dataset::default()
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn into_posts(self) -> Vec<Post> {
        self.posts
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Post> {
        self.posts.iter()
    }

    pub fn domain_tags(&self) -> BTreeSet<Domain> {
        self.posts.iter().map(|p| p.domain).collect()
    }

    /// Labels in post order; fails on the first unlabeled post.
    pub fn labels(&self) -> Result<Vec<Label>, CorpusError> {
        self.posts.iter().map(Post::require_label).collect()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.posts.iter().map(|p| p.text.as_str()).collect()
    }

    /// Posts whose id is in `ids`, in dataset order.
    pub fn subset<'a, I>(&self, ids: I) -> Dataset
    where
        I: IntoIterator<Item = &'a String>,
    {
        let keep: HashSet<&str> = ids.into_iter().map(String::as_str).collect();
        Dataset { posts: self.posts.iter().filter(|p| keep.contains(p.id.as_str())).cloned().collect() }
    }

    pub fn filter(&self, mut pred: impl FnMut(&Post) -> bool) -> Dataset {
        Dataset { posts: self.posts.iter().filter(|p| pred(p)).cloned().collect() }
    }

    pub fn index_by_id(&self) -> HashMap<&str, usize> {
        self.posts.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect()
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Post;
    type IntoIter = std::slice::Iter<'a, Post>;

    fn into_iter(self) -> Self::IntoIter {
        self.posts.iter()
    }
}

/// Exact counts per (domain, label).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LabelDistribution {
    pub counts: BTreeMap<(Domain, Label), usize>,
}

impl LabelDistribution {
    pub fn get(&self, domain: Domain, label: Label) -> usize {
        self.counts.get(&(domain, label)).copied().unwrap_or(0)
    }

    pub fn label_total(&self, label: Label) -> usize {
        self.counts.iter().filter(|((_, l), _)| *l == label).map(|(_, c)| c).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

pub fn label_distribution(dataset: &Dataset) -> Result<LabelDistribution, CorpusError> {
    let mut dist = LabelDistribution::default();
    for post in dataset {
        *dist.counts.entry((post.domain, post.require_label()?)).or_default() += 1;
    }
    Ok(dist)
}

/// Union of two datasets, keeping each post's domain tag.
///
/// Ids present in both inputs are namespaced as `DOMAIN:id` on both sides so
/// the result does not depend on argument order.
pub fn merge_domains(a: &Dataset, b: &Dataset) -> Dataset {
    let ids_a: HashSet<&str> = a.posts.iter().map(|p| p.id.as_str()).collect();
    let clashes: HashSet<String> =
        b.posts.iter().filter(|p| ids_a.contains(p.id.as_str())).map(|p| p.id.clone()).collect();

    let mut used: HashSet<String> = HashSet::with_capacity(a.len() + b.len());
    let mut posts = Vec::with_capacity(a.len() + b.len());
    for post in a.posts.iter().chain(&b.posts) {
        let mut post = post.clone();
        if clashes.contains(&post.id) {
            post.id = format!("{}:{}", post.domain, post.id);
        }
        if used.contains(&post.id) {
            let base = post.id.clone();
            let mut n = 2;
            while used.contains(&format!("{base}~{n}")) {
                n += 1;
            }
            post.id = format!("{base}~{n}");
        }
        used.insert(post.id.clone());
        posts.push(post);
    }
    Dataset { posts }
}

/// Uniform random binary prediction per post.
pub fn random_baseline(dataset: &Dataset, seed: u64) -> Vec<Label> {
    let mut rng = crate::seed::rng(seed);
    dataset.iter().map(|_| if rng.random_bool(0.5) { Label::Distorted } else { Label::NotDistorted }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(id: &str, domain: Domain, label: Label) -> Post {
        Post::new(id, format!("text {id}"), domain, Some(label))
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Dataset::new(vec![post("a", Domain::EN, Label::Distorted), post("a", Domain::KT, Label::Distorted)]);
        assert_eq!(err.unwrap_err(), CorpusError::DuplicateId("a".into()));
    }

    #[test]
    fn label_distribution_counts_and_errors() {
        assert_eq!(label_distribution(&Dataset::empty()).unwrap().total(), 0);
        let ds = Dataset::new(vec![
            post("a", Domain::EN, Label::Distorted),
            post("b", Domain::EN, Label::NotDistorted),
            post("c", Domain::KT, Label::Distorted),
        ])
        .unwrap();
        let d = label_distribution(&ds).unwrap();
        assert_eq!(d.get(Domain::EN, Label::Distorted), 1);
        assert_eq!(d.label_total(Label::Distorted), 2);
        assert_eq!(d.total(), 3);

        let unlabeled = Dataset::new(vec![Post::new("u", "x", Domain::KT, None)]).unwrap();
        assert_eq!(label_distribution(&unlabeled).unwrap_err(), CorpusError::UnlabeledPost("u".into()));
    }

    #[test]
    fn merge_keeps_domains_and_is_commutative() {
        let en =
            Dataset::new(vec![post("1", Domain::EN, Label::Distorted), post("2", Domain::EN, Label::NotDistorted)])
                .unwrap();
        let kt =
            Dataset::new(vec![post("1", Domain::KT, Label::NotDistorted), post("k9", Domain::KT, Label::Distorted)])
                .unwrap();
        let ab = merge_domains(&en, &kt);
        let ba = merge_domains(&kt, &en);
        assert_eq!(ab.domain_tags(), [Domain::EN, Domain::KT].into_iter().collect());
        assert_eq!(ab.len(), 4);
        let mut x: Vec<_> = ab.posts().iter().map(|p| p.id.clone()).collect();
        let mut y: Vec<_> = ba.posts().iter().map(|p| p.id.clone()).collect();
        x.sort();
        y.sort();
        assert_eq!(x, y);
        assert!(x.contains(&"EN:1".to_string()) && x.contains(&"KT:1".to_string()));
        assert!(Dataset::new(ab.into_posts()).is_ok());
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let en = Dataset::new(vec![post("1", Domain::EN, Label::Distorted)]).unwrap();
        assert_eq!(merge_domains(&en, &Dataset::empty()), en);
        assert_eq!(merge_domains(&Dataset::empty(), &en), en);
    }

    #[test]
    fn random_baseline_is_seeded() {
        let ds = Dataset::new(vec![post("only", Domain::KT, Label::Distorted)]).unwrap();
        assert_eq!(random_baseline(&ds, 3), random_baseline(&ds, 3));

        let posts: Vec<Post> = (0..10_000).map(|i| post(&i.to_string(), Domain::EN, Label::Distorted)).collect();
        let big = Dataset::new(posts).unwrap();
        let preds = random_baseline(&big, 11);
        let rate = preds.iter().filter(|l| **l == Label::Distorted).count() as f64 / 10_000.0;
        // 4 standard deviations of Binomial(10000, 0.5) is 0.02.
        assert!((0.48..=0.52).contains(&rate), "rate {rate}");
    }

    #[test]
    fn label_serializes_as_integer() {
        assert_eq!(serde_json::to_string(&Label::Distorted).unwrap(), "1");
        assert_eq!(serde_json::from_str::<Label>("0").unwrap(), Label::NotDistorted);
        assert!(serde_json::from_str::<Label>("2").is_err());
    }
}
