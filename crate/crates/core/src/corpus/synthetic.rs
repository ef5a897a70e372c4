//! Synthetic stand-in corpora.
//!
//! The helpline data is restricted, so experiments and tests run on
//! generated posts with controllable class and domain signal.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Domain, Label, Post};

const EN_FILLER: &[&str] = &[
    "i",
    "my",
    "the",
    "a",
    "work",
    "friend",
    "mother",
    "father",
    "job",
    "today",
    "week",
    "feel",
    "think",
    "because",
    "really",
    "just",
    "year",
    "school",
    "house",
    "talk",
    "time",
    "people",
    "wife",
    "husband",
    "therapist",
    "boss",
    "money",
    "sleep",
    "night",
    "morning",
    "want",
    "know",
    "help",
    "went",
    "said",
    "told",
    "after",
    "before",
    "life",
    "family",
    "doctor",
    "office",
    "car",
    "city",
    "weekend",
    "dinner",
    "phone",
    "call",
    "email",
    "meeting",
];

const KT_FILLER: &[&str] = &[
    "ik",
    "mijn",
    "de",
    "het",
    "een",
    "schooldag",
    "vriendin",
    "moeder",
    "vader",
    "klas",
    "vandaag",
    "weekje",
    "voel",
    "denk",
    "omdat",
    "echt",
    "gewoon",
    "jaar",
    "huis",
    "praten",
    "tijd",
    "mensen",
    "broer",
    "zus",
    "mentor",
    "juf",
    "geld",
    "slapen",
    "nacht",
    "ochtend",
    "wil",
    "weet",
    "hulp",
    "ging",
    "zei",
    "vertelde",
    "na",
    "voor",
    "leven",
    "familie",
    "dokter",
    "toets",
    "fiets",
    "stad",
    "zaterdag",
    "eten",
    "telefoon",
    "appen",
    "insta",
    "pauze",
];

/// Cue tokens shared by both domains: distorted posts draw from the first list.
const DISTORTION_CUES: &[&str] =
    &["always", "never", "everyone", "nobody", "worthless", "failure", "ruined", "hopeless"];
const NEUTRAL_CUES: &[&str] = &["sometimes", "maybe", "okay", "partly", "possibly", "usually", "fine", "bit"];

fn filler(domain: Domain) -> &'static [&'static str] {
    match domain {
        Domain::EN | Domain::R => EN_FILLER,
        Domain::NL | Domain::KT => KT_FILLER,
    }
}

fn make_text(rng: &mut ChaCha8Rng, domain: Domain, label: Label, cue_count: usize, noise: f64) -> String {
    let len = rng.random_range(10..=20);
    let mut words: Vec<&str> = (0..len).map(|_| *filler(domain).choose(rng).expect("non-empty")).collect();
    let flipped = rng.random_bool(noise);
    let cue_label = if flipped { label.flip() } else { label };
    let cues = match cue_label {
        Label::Distorted => DISTORTION_CUES,
        Label::NotDistorted => NEUTRAL_CUES,
    };
    for _ in 0..cue_count {
        let pos = rng.random_range(0..=words.len());
        words.insert(pos, cues.choose(rng).expect("non-empty"));
    }
    words.join(" ")
}

/// A labeled corpus for one domain with exactly the given class counts.
pub fn labeled_corpus(domain: Domain, not_distorted: usize, distorted: usize, noise: f64, seed: u64) -> Dataset {
    let mut rng = crate::seed::rng(seed);
    let mut labels: Vec<Label> = std::iter::repeat_n(Label::NotDistorted, not_distorted)
        .chain(std::iter::repeat_n(Label::Distorted, distorted))
        .collect();
    labels.shuffle(&mut rng);
    let posts = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let text = make_text(&mut rng, domain, label, 2, noise);
            let mut post = Post::new(format!("{}-{i:05}", domain.as_str().to_lowercase()), text, domain, Some(label));
            post.author = format!("user{:08}", rng.random_range(0..100_000_000u32));
            post
        })
        .collect();
    Dataset::new(posts).expect("generated ids are unique")
}

/// Stand-in with the English Q&A label counts (933 not distorted, 1593 distorted).
pub fn english_reference(seed: u64) -> Dataset {
    labeled_corpus(Domain::EN, 933, 1593, 0.15, seed)
}

/// Stand-in with the annotated helpline label counts (273 not distorted, 177 distorted).
pub fn helpline_reference(seed: u64) -> Dataset {
    labeled_corpus(Domain::KT, 273, 177, 0.15, seed)
}

/// Parameters for a two-domain corpus where class signal is shared across
/// domains and each domain has its own disjoint filler vocabulary.
#[derive(Clone, Debug)]
pub struct TwoDomainConfig {
    pub posts_per_domain: usize,
    /// Fraction of distorted posts in the source (EN) domain.
    pub source_distorted_rate: f64,
    /// Fraction of distorted posts in the target (KT) domain.
    pub target_distorted_rate: f64,
    /// Probability that a post carries cues of the opposite class.
    pub noise: f64,
    pub seed: u64,
}

impl Default for TwoDomainConfig {
    fn default() -> Self {
        // Label rates follow the reference label distributions, which makes
        // the domain a confounder of the label.
        TwoDomainConfig {
            posts_per_domain: 2000,
            source_distorted_rate: 1593.0 / 2526.0,
            target_distorted_rate: 177.0 / 450.0,
            noise: 0.15,
            seed: 0,
        }
    }
}

/// Returns `(source EN dataset, target KT dataset)`.
pub fn two_domain_corpus(config: &TwoDomainConfig) -> (Dataset, Dataset) {
    let n = config.posts_per_domain;
    let en_pos = (n as f64 * config.source_distorted_rate).round() as usize;
    let kt_pos = (n as f64 * config.target_distorted_rate).round() as usize;
    let en = labeled_corpus(Domain::EN, n - en_pos, en_pos, config.noise, crate::seed::derive(config.seed, "en"));
    let kt = labeled_corpus(Domain::KT, n - kt_pos, kt_pos, config.noise, crate::seed::derive(config.seed, "kt"));
    (en, kt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::label_distribution;
    use std::collections::HashSet;

    #[test]
    fn reference_counts() {
        let en = label_distribution(&english_reference(1)).unwrap();
        assert_eq!(en.get(Domain::EN, Label::NotDistorted), 933);
        assert_eq!(en.get(Domain::EN, Label::Distorted), 1593);
        let kt = label_distribution(&helpline_reference(1)).unwrap();
        assert_eq!(kt.get(Domain::KT, Label::NotDistorted), 273);
        assert_eq!(kt.get(Domain::KT, Label::Distorted), 177);
    }

    #[test]
    fn vocabularies_are_disjoint() {
        let en: HashSet<_> = EN_FILLER.iter().collect();
        assert!(KT_FILLER.iter().all(|w| !en.contains(w)));
        let cues: HashSet<_> = DISTORTION_CUES.iter().chain(NEUTRAL_CUES).collect();
        assert!(EN_FILLER.iter().chain(KT_FILLER).all(|w| !cues.contains(w)));
    }

    #[test]
    fn deterministic() {
        let cfg = TwoDomainConfig { posts_per_domain: 50, seed: 3, ..Default::default() };
        assert_eq!(two_domain_corpus(&cfg), two_domain_corpus(&cfg));
    }
}
