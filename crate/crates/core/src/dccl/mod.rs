//! Domain confused contrastive learning.
//!
//! A perturbation generator adds a bounded vector `δ` to each sentence
//! embedding `h`. A domain classifier tries to recover the domain from
//! `h + δ` while the generator is trained to defeat it. The original and
//! perturbed embeddings are down-projected and pulled together with InfoNCE,
//! and the distortion classifier is asked to give the same prediction for
//! both. Only the logits of the unperturbed embedding feed the
//! classification loss:
//!
//! ```text
//! L = α·L_domain + β·L_consistency + λ·L_contrastive + L_classification
//! ```
//!
//! The distortion classifier is the head of the [`EncoderModel`](crate::encoder::EncoderModel),
//! so a DCCL-trained model predicts like any other checkpoint.

mod losses;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Domain;
use crate::encoder::checkpoint::{records_of, restore_into, Section};
use crate::encoder::{EncoderError, ParamGroup};
use crate::math::{self, Matrix};

pub use losses::{
    classification_loss, consistency_loss, contrastive_loss, domain_loss, total_loss, DcclBackward, DcclBatch,
    DcclForward, LossBreakdown,
};
pub use train::{train_dccl, DcclExample, DcclSystem, DcclSystemGrads, DcclTrainReport};

/// Gradients of a [`DcclState`] share its layout.
pub type DcclGrads = DcclState;

#[derive(Debug, Error)]
pub enum DcclError {
    #[error("batch contains a single domain")]
    SingleDomainBatch,
    #[error("training data contains a single domain")]
    SingleDomainDataset,
    #[error("training data lacks class {0}")]
    MissingClass(crate::corpus::Label),
    #[error("contrastive loss needs at least 2 examples, got {0}")]
    BatchTooSmall(usize),
    #[error("batch components disagree on size")]
    BatchShape,
    #[error("domain {0} is not known to the domain classifier")]
    UnknownDomain(Domain),
    #[error("invalid DCCL config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss in loop {loop_index}, epoch {epoch}, batch {batch}")]
    NonFiniteLoss { loop_index: usize, epoch: usize, batch: usize },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcclConfig {
    /// Weight of the domain loss.
    pub alpha: f64,
    /// Weight of the consistency loss.
    pub beta: f64,
    /// Weight of the contrastive loss.
    pub lambda: f64,
    /// InfoNCE temperature.
    pub temperature: f64,
    /// Bound on `‖δ‖₂`.
    pub epsilon: f64,
    pub projection_dim: usize,
    pub perturbation_hidden: usize,
}

impl Default for DcclConfig {
    fn default() -> Self {
        DcclConfig {
            alpha: 1e-3,
            beta: 5.0,
            lambda: 3e-2,
            temperature: 0.05,
            epsilon: 1.0,
            projection_dim: 128,
            perturbation_hidden: 64,
        }
    }
}

/// Perturbation generator, domain classifier and down-projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcclState {
    pub config: DcclConfig,
    /// Domain classifier output order.
    pub domains: Vec<Domain>,
    pub perturb_hidden: Matrix,
    pub perturb_hidden_bias: Vec<f64>,
    pub perturb_out: Matrix,
    pub perturb_out_bias: Vec<f64>,
    pub domain_weight: Matrix,
    pub domain_bias: Vec<f64>,
    pub projection: Matrix,
    pub projection_bias: Vec<f64>,
}

/// Intermediate values of the perturbation generator for one embedding.
#[derive(Clone, Debug)]
pub struct PerturbTrace {
    pub act: Vec<f64>,
    pub raw: Vec<f64>,
    pub raw_norm: f64,
    pub delta: Vec<f64>,
}

impl DcclState {
    /// Fresh state for `dim`-dimensional embeddings. The generator's output
    /// layer starts at zero, so initial perturbations are zero.
    pub fn new(dim: usize, mut domains: Vec<Domain>, config: DcclConfig, seed: u64) -> Result<Self, DcclError> {
        domains.sort();
        domains.dedup();
        if domains.len() < 2 {
            return Err(DcclError::SingleDomainDataset);
        }
        if config.projection_dim == 0 || config.projection_dim >= dim {
            return Err(DcclError::InvalidConfig(format!(
                "projection_dim {} must be in [1, {dim})",
                config.projection_dim
            )));
        }
        if !(config.temperature > 0.0 && config.epsilon > 0.0) {
            return Err(DcclError::InvalidConfig("temperature and epsilon must be positive".into()));
        }
        let mut rng = crate::seed::rng(seed);
        let g = config.perturbation_hidden;
        let p = config.projection_dim;
        Ok(DcclState {
            perturb_hidden: Matrix::xavier(g, dim, &mut rng),
            perturb_hidden_bias: vec![0.0; g],
            perturb_out: Matrix::zeros(dim, g),
            perturb_out_bias: vec![0.0; dim],
            domain_weight: Matrix::xavier(domains.len(), dim, &mut rng),
            domain_bias: vec![0.0; domains.len()],
            projection: Matrix::xavier(p, dim, &mut rng),
            projection_bias: vec![0.0; p],
            domains,
            config,
        })
    }

    pub fn dim(&self) -> usize {
        self.perturb_hidden.cols
    }

    pub fn domain_index(&self, domain: Domain) -> Result<usize, DcclError> {
        self.domains.iter().position(|d| *d == domain).ok_or(DcclError::UnknownDomain(domain))
    }

    /// `δ = r · min(1, ε/‖r‖)` with `r = W₂ tanh(W₁h + b₁) + b₂`.
    pub fn perturb(&self, h: &[f64]) -> PerturbTrace {
        let act: Vec<f64> =
            self.perturb_hidden.affine(h, &self.perturb_hidden_bias).into_iter().map(f64::tanh).collect();
        let raw = self.perturb_out.affine(&act, &self.perturb_out_bias);
        let raw_norm = math::norm(&raw);
        let delta = if raw_norm > self.config.epsilon {
            let s = self.config.epsilon / raw_norm;
            raw.iter().map(|v| v * s).collect()
        } else {
            raw.clone()
        };
        PerturbTrace { act, raw, raw_norm, delta }
    }

    /// Shared contrastive projection `P h + b`, before normalization.
    pub fn project(&self, h: &[f64]) -> Vec<f64> {
        self.projection.affine(h, &self.projection_bias)
    }

    pub fn zeros_like(&self) -> DcclGrads {
        let z = |m: &Matrix| Matrix::zeros(m.rows, m.cols);
        DcclState {
            config: self.config.clone(),
            domains: self.domains.clone(),
            perturb_hidden: z(&self.perturb_hidden),
            perturb_hidden_bias: vec![0.0; self.perturb_hidden_bias.len()],
            perturb_out: z(&self.perturb_out),
            perturb_out_bias: vec![0.0; self.perturb_out_bias.len()],
            domain_weight: z(&self.domain_weight),
            domain_bias: vec![0.0; self.domain_bias.len()],
            projection: z(&self.projection),
            projection_bias: vec![0.0; self.projection_bias.len()],
        }
    }

    pub fn to_section(&self) -> Section {
        let meta = serde_json::json!({ "config": self.config, "domains": self.domains });
        Section { meta, tensors: records_of(self) }
    }

    pub fn from_section(section: &Section, dim: usize) -> Result<Self, DcclError> {
        let config: DcclConfig = serde_json::from_value(section.meta["config"].clone())
            .map_err(|e| EncoderError::Checkpoint(e.to_string()))?;
        let domains: Vec<Domain> = serde_json::from_value(section.meta["domains"].clone())
            .map_err(|e| EncoderError::Checkpoint(e.to_string()))?;
        let mut state = DcclState::new(dim, domains, config, 0)?;
        restore_into(&mut state, &section.tensors)?;
        Ok(state)
    }
}

pub fn is_perturbation_tensor(name: &str) -> bool {
    name.starts_with("perturb.")
}

pub fn is_domain_classifier_tensor(name: &str) -> bool {
    name.starts_with("domain.")
}

impl ParamGroup for DcclState {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("perturb.hidden.weight", &self.perturb_hidden.data),
            ("perturb.hidden.bias", &self.perturb_hidden_bias),
            ("perturb.out.weight", &self.perturb_out.data),
            ("perturb.out.bias", &self.perturb_out_bias),
            ("domain.weight", &self.domain_weight.data),
            ("domain.bias", &self.domain_bias),
            ("projection.weight", &self.projection.data),
            ("projection.bias", &self.projection_bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("perturb.hidden.weight", &mut self.perturb_hidden.data),
            ("perturb.hidden.bias", &mut self.perturb_hidden_bias),
            ("perturb.out.weight", &mut self.perturb_out.data),
            ("perturb.out.bias", &mut self.perturb_out_bias),
            ("domain.weight", &mut self.domain_weight.data),
            ("domain.bias", &mut self.domain_bias),
            ("projection.weight", &mut self.projection.data),
            ("projection.bias", &mut self.projection_bias),
        ]
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        let m = |m: &Matrix| vec![m.rows, m.cols];
        vec![
            m(&self.perturb_hidden),
            vec![self.perturb_hidden_bias.len()],
            m(&self.perturb_out),
            vec![self.perturb_out_bias.len()],
            m(&self.domain_weight),
            vec![self.domain_bias.len()],
            m(&self.projection),
            vec![self.projection_bias.len()],
        ]
    }
}
