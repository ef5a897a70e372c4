//! Username pseudonymization and URL removal.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use super::{CorpusError, Dataset, Post};

const PSEUDONYM_SPACE: usize = 100_000_000;

fn url_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(?:https?://|www\.)\S*").expect("valid regex"))
}

fn pseudonym_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^user[0-9]{8}$").expect("valid regex"))
}

/// Removes `http://`, `https://` and `www.` prefixed spans up to the next whitespace.
pub fn strip_urls(text: &str) -> String {
    url_pattern().replace_all(text, "").into_owned()
}

pub fn is_pseudonym(author: &str) -> bool {
    pseudonym_pattern().is_match(author)
}

/// Maps usernames to `user` + 8 random digits, consistently within one run.
///
/// Authors that already look like pseudonyms are kept as they are, which
/// makes pseudonymization idempotent.
pub struct Pseudonymizer {
    rng: ChaCha8Rng,
    assigned: HashMap<String, String>,
    used: HashSet<String>,
}

impl Pseudonymizer {
    pub fn new(seed: u64) -> Self {
        Pseudonymizer { rng: crate::seed::rng(seed), assigned: HashMap::new(), used: HashSet::new() }
    }

    pub fn pseudonym_for(&mut self, username: &str) -> Result<String, CorpusError> {
        if let Some(p) = self.assigned.get(username) {
            return Ok(p.clone());
        }
        if is_pseudonym(username) {
            self.used.insert(username.to_string());
            self.assigned.insert(username.to_string(), username.to_string());
            return Ok(username.to_string());
        }
        if self.used.len() >= PSEUDONYM_SPACE {
            return Err(CorpusError::PseudonymSpaceExhausted);
        }
        let pseudonym = loop {
            let candidate = format!("user{:08}", self.rng.random_range(0..PSEUDONYM_SPACE as u32));
            if !self.used.contains(&candidate) {
                break candidate;
            }
        };
        self.used.insert(pseudonym.clone());
        self.assigned.insert(username.to_string(), pseudonym.clone());
        Ok(pseudonym)
    }

    pub fn apply(&mut self, mut post: Post) -> Result<Post, CorpusError> {
        post.author = self.pseudonym_for(&post.author)?;
        post.text = strip_urls(&post.text);
        Ok(post)
    }

    pub fn len(&self) -> usize {
        self.assigned.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assigned.is_empty()
    }
}

/// Pseudonymizes a single post with a fresh mapping.
pub fn pseudonymize(post: Post, rng_seed: u64) -> Result<Post, CorpusError> {
    Pseudonymizer::new(rng_seed).apply(post)
}

/// Pseudonymizes every post with one shared mapping.
pub fn pseudonymize_dataset(dataset: &Dataset, rng_seed: u64) -> Result<Dataset, CorpusError> {
    let mut p = Pseudonymizer::new(rng_seed);
    let posts = dataset.iter().cloned().map(|post| p.apply(post)).collect::<Result<Vec<_>, _>>()?;
    Dataset::new(posts)
}
