//! Tokenization shared by the lexicon and the reference encoder.

/// Maximum number of tokens an encoder input keeps. Longer inputs are truncated.
pub const MAX_TOKENS: usize = 512;

/// Lowercased tokens: runs of alphanumeric characters, plus every
/// punctuation character as a token of its own. Whitespace is dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    tokens(text).collect()
}

/// Iterator form of [`tokenize`].
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    let mut chars = text.char_indices().peekable();
    std::iter::from_fn(move || loop {
        let (start, c) = chars.next()?;
        if c.is_whitespace() {
            continue;
        }
        if !c.is_alphanumeric() {
            return Some(c.to_lowercase().collect());
        }
        let mut end = start + c.len_utf8();
        while let Some(&(i, next)) = chars.peek() {
            if !next.is_alphanumeric() {
                break;
            }
            end = i + next.len_utf8();
            chars.next();
        }
        return Some(text[start..end].to_lowercase());
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("I hate this, I hate everything"),
            vec!["i", "hate", "this", ",", "i", "hate", "everything"]
        );
        assert_eq!(tokenize("Don't  STOP!"), vec!["don", "'", "t", "stop", "!"]);
        assert!(tokenize(" \t\n ").is_empty());
    }

    #[test]
    fn unicode_words_survive() {
        assert_eq!(tokenize("Ik ben één keer gefaald."), vec!["ik", "ben", "één", "keer", "gefaald", "."]);
    }
}
