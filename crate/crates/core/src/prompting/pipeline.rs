use serde::{Deserialize, Serialize};

use super::client::{LlmClient, TranslationClient};
use super::{parse_verdict, render_prompt, PromptError, PromptTemplate};
use crate::corpus::{Dataset, Domain, Label, Post};
use crate::par::{self, Execution};

/// What to do with a reply that is neither yes nor no.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictFallback {
    #[default]
    NotDistorted,
    Skip,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassifyOptions {
    pub fallback: VerdictFallback,
    /// Requests in flight at once.
    pub parallelism: usize,
    pub exec: Execution,
    /// Remaining posts are given up once this many requests in a row have
    /// failed; 0 never gives up.
    pub max_consecutive_failures: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            fallback: VerdictFallback::NotDistorted,
            parallelism: 8,
            exec: Execution::default(),
            max_consecutive_failures: MAX_CONSECUTIVE_FAILURES,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPrediction {
    pub post_id: String,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostFailure {
    pub post_id: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptClassification {
    /// In dataset order; skipped posts are absent.
    pub predictions: Vec<PromptPrediction>,
    /// Replies that could not be parsed, with the raw text.
    pub parse_failures: Vec<PostFailure>,
    /// Posts whose request failed after retries.
    pub client_failures: Vec<PostFailure>,
}

impl PromptClassification {
    pub fn labels(&self) -> Vec<Label> {
        self.predictions.iter().map(|p| p.label).collect()
    }
}

/// Requests in a row that may fail before the remaining posts are given up.
pub const MAX_CONSECUTIVE_FAILURES: usize = 16;

/// Runs `f` over the posts in windows of `parallelism`, keeping input order.
/// After `max_failures` consecutive errors the rest are not attempted.
fn run_posts<T: Send>(
    posts: &[Post],
    parallelism: usize,
    exec: Execution,
    max_failures: usize,
    f: impl Fn(&Post) -> Result<T, PromptError> + Sync,
) -> Vec<Result<T, PromptError>> {
    let mut out = Vec::with_capacity(posts.len());
    let mut failed_in_row = 0usize;
    for window in posts.chunks(parallelism.max(1)) {
        if max_failures > 0 && failed_in_row >= max_failures {
            let message = format!("not attempted after {failed_in_row} failed requests in a row");
            out.extend(window.iter().map(|_| Err(PromptError::ClientError(message.clone()))));
            continue;
        }
        for r in par::map(exec, window, &f) {
            failed_in_row = if r.is_err() { failed_in_row + 1 } else { 0 };
            out.push(r);
        }
    }
    out
}

enum Outcome {
    Label(Label),
    Unparsed(String),
    Failed(String),
}

/// Asks the model for a verdict on every post.
pub fn classify_by_prompt(
    client: &dyn LlmClient,
    template: &PromptTemplate,
    dataset: &Dataset,
    options: ClassifyOptions,
) -> PromptClassification {
    let outcomes =
        run_posts(dataset.posts(), options.parallelism, options.exec, options.max_consecutive_failures, |post| {
            let raw = client.complete(&render_prompt(template, &post.text)?)?;
            Ok(match parse_verdict(&raw) {
                Ok(label) => Outcome::Label(label),
                Err(_) => Outcome::Unparsed(raw),
            })
        });
    let mut result = PromptClassification::default();
    for (post, outcome) in dataset.iter().zip(outcomes) {
        let post_id = post.id.clone();
        match outcome.unwrap_or_else(|e| Outcome::Failed(e.to_string())) {
            Outcome::Label(label) => result.predictions.push(PromptPrediction { post_id, label }),
            Outcome::Unparsed(raw) => {
                if options.fallback == VerdictFallback::NotDistorted {
                    result.predictions.push(PromptPrediction { post_id: post_id.clone(), label: Label::NotDistorted });
                }
                result.parse_failures.push(PostFailure { post_id, message: raw });
            }
            Outcome::Failed(message) => result.client_failures.push(PostFailure { post_id, message }),
        }
    }
    result
}

/// A transformed dataset and the posts dropped on the way.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformOutcome {
    pub dataset: Dataset,
    pub dropped: Vec<PostFailure>,
}

fn transform(
    dataset: &Dataset,
    domain: Domain,
    parallelism: usize,
    exec: Execution,
    f: impl Fn(&Post) -> Result<String, PromptError> + Sync,
) -> Result<TransformOutcome, PromptError> {
    dataset.labels()?;
    let results = run_posts(dataset.posts(), parallelism, exec, MAX_CONSECUTIVE_FAILURES, &f);
    let mut posts = Vec::with_capacity(dataset.len());
    let mut dropped = Vec::new();
    for (post, r) in dataset.iter().zip(results) {
        match r {
            Ok(text) => {
                let mut p = post.clone();
                p.text = text.trim().to_string();
                p.domain = domain;
                posts.push(p);
            }
            Err(e) => {
                log::warn!("dropping post {}: {e}", post.id);
                dropped.push(PostFailure { post_id: post.id.clone(), message: e.to_string() });
            }
        }
    }
    if posts.is_empty() {
        if let Some(f) = dropped.first() {
            return Err(PromptError::ClientError(f.message.clone()));
        }
    }
    let dataset = Dataset::new(posts)?;
    Ok(TransformOutcome { dataset, dropped })
}

/// Rewrites every post in the style of the four example posts. Ids and
/// labels are kept; the domain becomes `R`.
pub fn rewrite_dataset<S: AsRef<str>>(
    client: &dyn LlmClient,
    dataset: &Dataset,
    examples: &[S],
    parallelism: usize,
    exec: Execution,
) -> Result<TransformOutcome, PromptError> {
    let template = PromptTemplate::rewrite_with_examples(examples)?;
    transform(dataset, Domain::R, parallelism, exec, |post| client.complete(&render_prompt(&template, &post.text)?))
}

/// Translates every post from English to Dutch. Ids and labels are kept; the
/// domain becomes `NL`.
pub fn translate_dataset(
    client: &dyn TranslationClient,
    dataset: &Dataset,
    parallelism: usize,
    exec: Execution,
) -> Result<TransformOutcome, PromptError> {
    transform(dataset, Domain::NL, parallelism, exec, |post| client.translate(&post.text, "en", "nl"))
}
