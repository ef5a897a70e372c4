//! Domain adaptation toolkit for binary cognitive-distortion detection.
//!
//! The crate is organised around the experiment pipeline:
//!
//! * [`corpus`]: posts, ingestion, pseudonymization, stratified folds.
//! * [`lexicon`]: Empath-style category features and t-test feature selection.
//! * [`encoder`]: a small reference text encoder with adapters and a
//!   classification head, trained with hand-written backpropagation.
//! * [`dccl`]: domain confused contrastive learning on top of the encoder.
//! * [`prompting`]: prompt templates, verdict parsing and LLM/translation clients.
//! * [`evaluation`]: weighted metrics, Cohen's kappa, McNemar, MMD and cross-validation.
//! * [`experiment`]: configuration, manifests and end-to-end runs used by the CLI.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and falls back to sequential iteration
//! otherwise. Both paths produce bit-identical results.

#![allow(clippy::needless_range_loop)]

pub mod corpus;
pub mod dccl;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod lexicon;
pub mod math;
pub mod par;
pub mod prompting;
pub mod seed;
pub mod text;

pub use error::{Error, Result};
