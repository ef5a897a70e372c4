use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::text::{self, MAX_TOKENS};

pub const UNKNOWN_TOKEN: &str = "<unk>";

/// Token → id table. Id 0 is reserved for unknown tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Builds a vocabulary from a corpus, most frequent tokens first
    /// (ties broken alphabetically). `max_size` counts the unknown token.
    pub fn build<S: AsRef<str>>(texts: &[S], max_size: Option<usize>) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in texts {
            for tok in text::tokens(t.as_ref()) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let limit = max_size.map(|m| m.saturating_sub(1)).unwrap_or(usize::MAX);
        let tokens = std::iter::once(UNKNOWN_TOKEN.to_string())
            .chain(ranked.into_iter().take(limit).map(|(t, _)| t))
            .collect::<Vec<_>>();
        Vocab::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    /// Token ids of `text`, truncated to the first [`MAX_TOKENS`] tokens.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        text::tokens(text).take(MAX_TOKENS).map(|t| self.id(&t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_order_and_unknowns() {
        let v = Vocab::build(&["b a a", "c a b"], None);
        assert_eq!(v.token(0), UNKNOWN_TOKEN);
        assert_eq!(v.token(1), "a");
        assert_eq!(v.token(2), "b");
        assert_eq!(v.encode("a zzz c"), vec![1, 0, 3]);
        assert_eq!(Vocab::build(&["b a a", "c a b"], Some(2)).len(), 2);
    }

    #[test]
    fn long_inputs_truncated() {
        let v = Vocab::build(&["w"], None);
        let long = vec!["w"; 10_000].join(" ");
        assert_eq!(v.encode(&long).len(), MAX_TOKENS);
    }
}
