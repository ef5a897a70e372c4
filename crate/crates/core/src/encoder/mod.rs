//! Text encoder abstraction, classification head, adapters and training.
//!
//! The reference encoder embeds tokens, mean-pools them and applies one
//! affine-tanh layer to produce the sentence embedding `h`. An optional
//! bottleneck adapter follows the hidden layer, and an affine head maps
//! `[h; lexicon features]` to two logits. All gradients are written by hand
//! and verified against finite differences ([`gradient_check`]).

pub mod checkpoint;
mod gradcheck;
mod model;
mod optim;
pub mod params;
mod train;
mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gradcheck::{gradient_check, relative_error, GradientCheck};
pub use model::{Backbone, EncodeTrace, EncoderModel, Example, ModelConfig, ModelGrads, Prediction};
pub use optim::AdamW;
pub use params::{AdapterParams, EncoderParams, HeadParams, ParamGroup};
pub use train::{in_scope, train_classifier, TrainReport};
pub use vocab::{Vocab, UNKNOWN_TOKEN};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

/// Which parameters an optimizer may update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainableScope {
    #[default]
    Full,
    /// Adapter bottlenecks and the head; the backbone stays frozen.
    AdaptersOnly,
    HeadOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub trainable_scope: TrainableScope,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::full_finetune()
    }
}

impl TrainConfig {
    pub const DEFAULT_BATCH_SIZE: usize = 16;

    fn preset(learning_rate: f64, epochs: usize, weight_decay: f64, scope: TrainableScope) -> Self {
        TrainConfig {
            learning_rate,
            epochs,
            weight_decay,
            batch_size: Self::DEFAULT_BATCH_SIZE,
            seed: 0,
            trainable_scope: scope,
        }
    }

    /// Full fine-tuning: lr 5e-5, 6 epochs, no decay.
    pub fn full_finetune() -> Self {
        Self::preset(5e-5, 6, 0.0, TrainableScope::Full)
    }

    /// Adapter tuning: lr 1e-4, 6 epochs, no decay.
    pub fn adapters() -> Self {
        Self::preset(1e-4, 6, 0.0, TrainableScope::AdaptersOnly)
    }

    /// Lexicon-augmented fine-tuning: lr 2e-5, 3 epochs, decay 0.01.
    pub fn empath() -> Self {
        Self::preset(2e-5, 3, 0.01, TrainableScope::Full)
    }

    /// First DCCL loop (all losses): lr 1e-5, 3 epochs, decay 0.01.
    pub fn dccl_loop1() -> Self {
        Self::preset(1e-5, 3, 0.01, TrainableScope::Full)
    }

    /// Second DCCL loop (classification only): lr 2e-5, 2 epochs, decay 0.01.
    pub fn dccl_loop2() -> Self {
        Self::preset(2e-5, 2, 0.01, TrainableScope::HeadOnly)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(EncoderError::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(EncoderError::InvalidConfig("weight_decay must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(EncoderError::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}
