//! Synthetic lexicon and corpus with a known set of class-shifted categories.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::Lexicon;
use crate::corpus::{Dataset, Domain, Label, Post};

#[derive(Clone, Debug)]
pub struct ShiftedCategoryConfig {
    pub categories: usize,
    pub shifted: usize,
    /// Shift of the distorted class in units of the background standard
    /// deviation of a category's per-token score.
    pub shift_sigmas: f64,
    /// Posts per class.
    pub posts_per_class: usize,
    pub tokens_per_post: usize,
    /// Fraction of background tokens drawn from lexicon categories.
    pub category_rate: f64,
    /// Distorted posts copy the background of a not-distorted twin, so only
    /// the shifted categories differ between classes. Otherwise every post
    /// draws its own background.
    pub matched: bool,
    pub seed: u64,
}

impl Default for ShiftedCategoryConfig {
    fn default() -> Self {
        ShiftedCategoryConfig {
            categories: 195,
            shifted: 5,
            shift_sigmas: 5.0,
            posts_per_class: 100,
            tokens_per_post: 80,
            category_rate: 0.4,
            matched: true,
            seed: 0,
        }
    }
}

pub struct ShiftedCategoryCorpus {
    pub lexicon: Lexicon,
    pub dataset: Dataset,
    /// Names of the shifted categories, sorted.
    pub shifted: Vec<String>,
    /// Tokens of each shifted category added to every distorted post.
    pub injected_per_category: usize,
}

const TERMS_PER_CATEGORY: usize = 4;
const NEUTRAL: usize = 200;

fn category_name(i: usize) -> String {
    format!("cat{i:03}")
}

/// Builds the corpus. Category `i` has terms `cat{i}t0..3`; background tokens
/// pick a category uniformly with probability `category_rate` and a neutral
/// word otherwise. Each distorted post then replaces neutral tokens with
/// `ceil(shift_sigmas · sd)` terms of every shifted category, where `sd` is
/// the binomial standard deviation of a background category count.
pub fn shifted_category_corpus(config: &ShiftedCategoryConfig) -> ShiftedCategoryCorpus {
    assert!(config.shifted <= config.categories, "more shifted categories than categories");
    let mut rng = crate::seed::rng(config.seed);
    let names: Vec<String> = (0..config.categories).map(category_name).collect();
    let lexicon = Lexicon::new(
        names.iter().map(|n| (n.clone(), (0..TERMS_PER_CATEGORY).map(|t| format!("{n}t{t}")).collect::<Vec<_>>())),
    )
    .expect("generated names are unique");
    let neutral: Vec<String> = (0..NEUTRAL).map(|i| format!("w{i}")).collect();

    let mut shifted_idx: Vec<usize> = (0..config.categories).collect();
    shifted_idx = shifted_idx.choose_multiple(&mut rng, config.shifted).copied().collect();
    shifted_idx.sort_unstable();

    let len = config.tokens_per_post;
    let q = config.category_rate / config.categories as f64;
    let sd = (len as f64 * q * (1.0 - q)).sqrt();
    let inject = (config.shift_sigmas * sd).ceil() as usize;

    let background = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<String> {
        (0..len)
            .map(|_| {
                if rng.random_bool(config.category_rate) {
                    let c = rng.random_range(0..config.categories);
                    format!("{}t{}", names[c], rng.random_range(0..TERMS_PER_CATEGORY))
                } else {
                    neutral.choose(rng).expect("non-empty").clone()
                }
            })
            .collect()
    };

    let mut posts = Vec::with_capacity(2 * config.posts_per_class);
    for i in 0..config.posts_per_class {
        let base = background(&mut rng);
        let mut twin = if config.matched { base.clone() } else { background(&mut rng) };
        let mut slots: Vec<usize> = (0..len).filter(|&p| twin[p].starts_with('w')).collect();
        assert!(slots.len() >= inject * shifted_idx.len(), "posts too short for the requested shift");
        for &c in &shifted_idx {
            for _ in 0..inject {
                let k = rng.random_range(0..slots.len());
                let pos = slots.swap_remove(k);
                twin[pos] = format!("{}t{}", names[c], rng.random_range(0..TERMS_PER_CATEGORY));
            }
        }
        posts.push(Post::new(format!("nd-{i:04}"), base.join(" "), Domain::EN, Some(Label::NotDistorted)));
        posts.push(Post::new(format!("d-{i:04}"), twin.join(" "), Domain::EN, Some(Label::Distorted)));
    }
    ShiftedCategoryCorpus {
        lexicon,
        dataset: Dataset::new(posts).expect("ids are unique"),
        shifted: shifted_idx.iter().map(|&i| names[i].clone()).collect(),
        injected_per_category: inject,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{extract_features, Normalization};

    #[test]
    fn shifted_categories_move_and_others_match() {
        let corpus = shifted_category_corpus(&ShiftedCategoryConfig { posts_per_class: 10, ..Default::default() });
        assert_eq!(corpus.lexicon.len(), 195);
        assert_eq!(corpus.shifted.len(), 5);
        assert_eq!(corpus.injected_per_category, 3);
        let posts = corpus.dataset.posts();
        for pair in posts.chunks(2) {
            let a = extract_features(&pair[0].text, &corpus.lexicon, Normalization::RawCount).unwrap().values;
            let b = extract_features(&pair[1].text, &corpus.lexicon, Normalization::RawCount).unwrap().values;
            for (i, name) in corpus.lexicon.names().iter().enumerate() {
                let expected = if corpus.shifted.iter().any(|s| s == name) { 3.0 } else { 0.0 };
                assert_eq!(b[i] - a[i], expected, "{name}");
            }
        }
    }
}
