//! Metrics, significance tests, MMD, cross-validation and analysis exports.

mod agreement;
mod cv;
mod embeddings;
mod metrics;
mod mmd;
mod report;
mod significance;

use thiserror::Error;

pub use agreement::{agreement_analysis, AgreementReport};
pub use cv::{cross_validate, cross_validate_with_predictions, GoldEcho, Method, RandomBaseline};
pub use embeddings::{export_embeddings, load_embeddings, write_embeddings, EmbeddingRecord};
pub use metrics::{cohen_kappa, confusion_matrix, weighted_metrics, Scores};
pub use mmd::{mmd, mmd_with, Bandwidth, MmdEstimator, MmdOptions, MmdResult};
pub use report::{read_report_csv, report_csv_string, write_report_csv, EvalReport, ReportRow};
pub use significance::{bonferroni, mcnemar, mcnemar_from_counts, BonferroniResult, McnemarMethod, SignificanceResult};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("embedding dimension mismatch: {expected} vs {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("prediction sets are not aligned on post ids: {0}")]
    IdMismatch(String),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("malformed record at line {line}: {message}")]
    Malformed { line: usize, message: String },
}

fn check_lengths(left: usize, right: usize) -> Result<(), EvalError> {
    if left != right {
        return Err(EvalError::LengthMismatch { left, right });
    }
    Ok(())
}
