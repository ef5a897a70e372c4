//! Prompt templates, verdict parsing and language-model clients.

mod client;
mod pipeline;

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, Label};

pub use client::{
    ChatTranslator, ConstantClient, GoldEchoClient, HttpClient, IdentityClient, IdentityTranslator, LlmClient,
    LookupTranslator, ScriptedClient, TranslationClient, ENDPOINT_ENV, TOKEN_ENV,
};
pub use pipeline::{
    classify_by_prompt, rewrite_dataset, translate_dataset, ClassifyOptions, PostFailure, PromptClassification,
    PromptPrediction, TransformOutcome, VerdictFallback, MAX_CONSECUTIVE_FAILURES,
};

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("post text is empty")]
    EmptyText,
    #[error("unparseable verdict: {0:?}")]
    UnparseableVerdict(String),
    #[error("client timed out")]
    ClientTimeout,
    #[error("client error: {0}")]
    ClientError(String),
    #[error("{0} is not set")]
    MissingEndpoint(&'static str),
    #[error("unknown template {0:?} (expected short, long or rewrite)")]
    UnknownTemplate(String),
    #[error("rewrite template takes {expected} example posts, got {got}")]
    ExampleCount { expected: usize, got: usize },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

const SHORT_TEXT: &str = include_str!("../../data/prompts/short.txt");
const LONG_TEXT: &str = include_str!("../../data/prompts/long.txt");
const REWRITE_TEXT: &str = include_str!("../../data/prompts/rewrite.txt");

/// Marks where the post goes in a user message.
pub const TEXT_SLOT: &str = "{text}";
const REWRITE_SLOT: &str = "<ENGLISH TEXT>";
pub const REWRITE_EXAMPLES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateName {
    Short,
    Long,
    Rewrite,
}

impl FromStr for TemplateName {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "short" => Ok(TemplateName::Short),
            "long" => Ok(TemplateName::Long),
            "rewrite" => Ok(TemplateName::Rewrite),
            _ => Err(PromptError::UnknownTemplate(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub system_text: String,
    /// User message with [`TEXT_SLOT`] standing for the post.
    pub user_slot: String,
    pub few_shot_examples: Option<Vec<String>>,
}

impl PromptTemplate {
    pub fn short() -> Self {
        Self::classification(TemplateName::Short, SHORT_TEXT)
    }

    pub fn long() -> Self {
        Self::classification(TemplateName::Long, LONG_TEXT)
    }

    fn classification(name: TemplateName, text: &str) -> Self {
        PromptTemplate {
            name,
            system_text: text.trim_end_matches('\n').to_string(),
            user_slot: TEXT_SLOT.to_string(),
            few_shot_examples: None,
        }
    }

    /// The rewriting prompt with its four example slots left as headings.
    pub fn rewrite() -> Self {
        let (system, user) = split_rewrite();
        PromptTemplate {
            name: TemplateName::Rewrite,
            system_text: system,
            user_slot: user.replace(REWRITE_SLOT, TEXT_SLOT),
            few_shot_examples: None,
        }
    }

    /// The rewriting prompt with one example post under each heading.
    pub fn rewrite_with_examples<S: AsRef<str>>(examples: &[S]) -> Result<Self, PromptError> {
        if examples.len() != REWRITE_EXAMPLES {
            return Err(PromptError::ExampleCount { expected: REWRITE_EXAMPLES, got: examples.len() });
        }
        let mut template = Self::rewrite();
        let mut lines = Vec::new();
        let mut next = 0;
        for line in template.system_text.lines() {
            lines.push(line.to_string());
            if line.trim_start().starts_with("# EXAMPLE") && next < examples.len() {
                lines.push(examples[next].as_ref().to_string());
                next += 1;
            }
        }
        template.system_text = lines.join("\n");
        template.few_shot_examples = Some(examples.iter().map(|e| e.as_ref().to_string()).collect());
        Ok(template)
    }

    pub fn by_name(name: TemplateName) -> Self {
        match name {
            TemplateName::Short => Self::short(),
            TemplateName::Long => Self::long(),
            TemplateName::Rewrite => Self::rewrite(),
        }
    }

    /// Prefix of the user message before the post text.
    pub fn user_prefix(&self) -> &str {
        self.user_slot.split(TEXT_SLOT).next().unwrap_or("")
    }
}

fn split_rewrite() -> (String, String) {
    let text = REWRITE_TEXT.trim_end_matches('\n');
    let (system, user) = text.rsplit_once('\n').expect("rewrite template has a user line");
    (system.to_string(), user.to_string())
}

/// System message with the template text, user message with the post.
pub fn render_prompt(template: &PromptTemplate, post_text: &str) -> Result<Vec<Message>, PromptError> {
    if post_text.trim().is_empty() {
        return Err(PromptError::EmptyText);
    }
    Ok(vec![
        Message { role: Role::System, content: template.system_text.clone() },
        Message { role: Role::User, content: template.user_slot.replacen(TEXT_SLOT, post_text, 1) },
    ])
}

/// `yes` → Distorted, `no` → NotDistorted, ignoring case, whitespace and punctuation.
pub fn parse_verdict(raw: &str) -> Result<Label, PromptError> {
    let word = raw.trim().trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
    match word.as_str() {
        "yes" => Ok(Label::Distorted),
        "no" => Ok(Label::NotDistorted),
        _ => Err(PromptError::UnparseableVerdict(raw.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_template_renders_two_messages() {
        let m = render_prompt(&PromptTemplate::short(), "I always fail").unwrap();
        assert_eq!(m.len(), 2);
        assert!(m[0].content.starts_with("You are a psychologist"));
        assert!(m[0].content.ends_with("Your output should ONLY BE YES OR NO, NOTHING ELSE."));
        assert_eq!(m[1], Message { role: Role::User, content: "I always fail".into() });
        assert_eq!(render_prompt(&PromptTemplate::short(), "  "), Err(PromptError::EmptyText));
    }

    #[test]
    fn long_template_lists_definitions_in_order() {
        let t = PromptTemplate::long().system_text;
        let names = [
            "1. All-or-nothing thinking",
            "2. Overgeneralization",
            "3. Mental filter",
            "4. Should statements",
            "5. Labeling and mislabeling",
            "6. Personalization",
            "7. Magnification",
            "8. Emotional reasoning",
            "9. Mind reading",
            "10. Fortune telling",
        ];
        let positions: Vec<usize> = names.iter().map(|n| t.find(n).expect(n)).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(t.contains("Your output should ONLY BE YES OR NO"));
    }

    #[test]
    fn rewrite_template_slots() {
        let t = PromptTemplate::rewrite();
        assert!(t.system_text.contains("Rewrite the following text as if a 14 year old Dutch teenager"));
        assert_eq!(t.user_slot, "Text to rewrite : {text}");
        let m = render_prompt(&t, "hello").unwrap();
        assert_eq!(m[1].content, "Text to rewrite : hello");

        let filled = PromptTemplate::rewrite_with_examples(&["a", "b", "c", "d"]).unwrap();
        assert!(filled.system_text.contains("# EXAMPLE 1\na\n# EXAMPLE 2 \nb"));
        assert!(filled.system_text.ends_with("# EXAMPLE 4 \nd"));
        assert!(matches!(
            PromptTemplate::rewrite_with_examples(&["a"]),
            Err(PromptError::ExampleCount { expected: 4, got: 1 })
        ));
    }

    #[test]
    fn rendering_is_injective_and_literal() {
        let t = PromptTemplate::rewrite();
        let a = render_prompt(&t, "x {text}").unwrap();
        let b = render_prompt(&t, "x").unwrap();
        assert_ne!(a[1], b[1]);
        assert_eq!(a[1].content, "Text to rewrite : x {text}");
    }

    #[test]
    fn verdicts() {
        assert_eq!(parse_verdict(" Yes."), Ok(Label::Distorted));
        assert_eq!(parse_verdict("no"), Ok(Label::NotDistorted));
        assert_eq!(parse_verdict("NO!\n"), Ok(Label::NotDistorted));
        assert!(matches!(parse_verdict("It depends on context"), Err(PromptError::UnparseableVerdict(_))));
    }

    #[test]
    fn template_names_parse() {
        assert_eq!("LONG".parse::<TemplateName>(), Ok(TemplateName::Long));
        assert!("medium".parse::<TemplateName>().is_err());
    }
}
