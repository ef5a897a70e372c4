use serde::{Deserialize, Serialize};

use super::params::{AdapterParams, EncoderParams, HeadParams, ParamGroup};
use super::vocab::Vocab;
use super::EncoderError;
use crate::corpus::{Dataset, Label};
use crate::lexicon::LexiconAugmentation;
use crate::math::{self, Matrix};
use crate::par::{self, Execution};

/// Shape of the reference encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    /// Embedding dimension `d` seen by heads and losses.
    pub hidden_dim: usize,
    /// Bottleneck width; `None` trains without adapters.
    pub adapter_width: Option<usize>,
    pub max_vocab: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { embed_dim: 64, hidden_dim: 256, adapter_width: None, max_vocab: Some(30_000) }
    }
}

impl ModelConfig {
    pub const DEFAULT_ADAPTER_WIDTH: usize = 64;

    pub fn with_adapters(mut self) -> Self {
        self.adapter_width = Some(Self::DEFAULT_ADAPTER_WIDTH);
        self
    }
}

/// Anything that maps text to a fixed-size sentence embedding.
///
/// The reference encoder implements it; a pretrained transformer can be
/// wrapped behind the same interface for embedding-level analysis.
pub trait Backbone: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct EncodeTrace {
    pub ids: Vec<u32>,
    pub pooled: Vec<f64>,
    pub hidden: Vec<f64>,
    pub adapter_act: Option<Vec<f64>>,
    /// The sentence embedding `h`.
    pub output: Vec<f64>,
}

/// A tokenized training example.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub ids: Vec<u32>,
    pub extra: Vec<f64>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub post_id: String,
    pub logits: [f64; 2],
    pub label: Label,
    pub probability: [f64; 2],
}

impl Prediction {
    pub fn from_logits(post_id: impl Into<String>, logits: [f64; 2]) -> Self {
        let p = math::softmax(&logits);
        Prediction {
            post_id: post_id.into(),
            logits,
            label: Label::from_index(math::argmax(&logits)).expect("binary"),
            probability: [p[0], p[1]],
        }
    }
}

/// Gradients of the encoder and head.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub encoder: EncoderParams,
    pub head: HeadParams,
}

impl ParamGroup for ModelGrads {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut v = self.encoder.tensors();
        v.extend(self.head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut v = self.encoder.tensors_mut();
        v.extend(self.head.tensors_mut());
        v
    }
}

/// Tokenizer, reference encoder, optional lexicon augmentation and head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub encoder: EncoderParams,
    pub head: HeadParams,
    pub augmentation: Option<LexiconAugmentation>,
}

impl ParamGroup for EncoderModel {
    fn shapes(&self) -> Vec<Vec<usize>> {
        let mut v = self.encoder.shapes();
        v.extend(self.head.shapes());
        v
    }

    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut v = self.encoder.tensors();
        v.extend(self.head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut v = self.encoder.tensors_mut();
        v.extend(self.head.tensors_mut());
        v
    }
}

impl EncoderModel {
    pub fn new(config: ModelConfig, vocab: Vocab, augmentation: Option<LexiconAugmentation>, seed: u64) -> Self {
        let mut rng = crate::seed::rng(seed);
        let mut encoder = EncoderParams::new(vocab.len(), config.embed_dim, config.hidden_dim, &mut rng);
        if let Some(width) = config.adapter_width {
            encoder.adapter = Some(AdapterParams::new(config.hidden_dim, width, &mut rng));
        }
        let aug_width = augmentation.as_ref().map_or(0, LexiconAugmentation::width);
        let head = HeadParams::new(config.hidden_dim + aug_width, &mut rng);
        EncoderModel { config, vocab, encoder, head, augmentation }
    }

    /// Builds the vocabulary from `texts` and initializes a fresh model.
    pub fn from_corpus<S: AsRef<str>>(texts: &[S], config: ModelConfig, seed: u64) -> Self {
        let vocab = Vocab::build(texts, config.max_vocab);
        Self::new(config, vocab, None, seed)
    }

    /// Replaces the head with a fresh one sized for `augmentation`.
    pub fn with_augmentation(mut self, augmentation: Option<LexiconAugmentation>, seed: u64) -> Self {
        let mut rng = crate::seed::rng(crate::seed::derive(seed, "head"));
        let aug_width = augmentation.as_ref().map_or(0, LexiconAugmentation::width);
        self.head = HeadParams::new(self.config.hidden_dim + aug_width, &mut rng);
        self.augmentation = augmentation;
        self
    }

    pub fn dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub fn augmentation_width(&self) -> usize {
        self.head.weight.cols - self.config.hidden_dim
    }

    pub fn encode_ids(&self, ids: &[u32]) -> EncodeTrace {
        let e = self.config.embed_dim;
        let mut pooled = vec![0.0; e];
        if !ids.is_empty() {
            for &id in ids {
                math::add_assign(&mut pooled, self.encoder.embed.row(id as usize));
            }
            let n = ids.len() as f64;
            pooled.iter_mut().for_each(|v| *v /= n);
        }
        let hidden: Vec<f64> =
            self.encoder.hidden.affine(&pooled, &self.encoder.hidden_bias).into_iter().map(f64::tanh).collect();
        let (adapter_act, output) = match &self.encoder.adapter {
            None => (None, hidden.clone()),
            Some(a) => {
                let act: Vec<f64> = a.down.affine(&hidden, &a.down_bias).into_iter().map(f64::tanh).collect();
                let up = a.up.matvec(&act);
                let out = (0..hidden.len()).map(|i| hidden[i] + up[i] + a.up_bias[i]).collect();
                (Some(act), out)
            }
        };
        EncodeTrace { ids: ids.to_vec(), pooled, hidden, adapter_act, output }
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        self.encode_ids(&self.vocab.encode(text)).output
    }

    /// One `d`-dimensional embedding per text.
    pub fn encode<S: AsRef<str> + Sync>(&self, texts: &[S], exec: Execution) -> Vec<Vec<f64>> {
        par::map(exec, texts, |t| self.embed_text(t.as_ref()))
    }

    /// Lexicon features for `text` (empty when the model has no augmentation).
    pub fn extra_features(&self, text: &str) -> Vec<f64> {
        self.augmentation.as_ref().map(|a| a.features(text)).unwrap_or_default()
    }

    pub fn head_logits(&self, h: &[f64], extra: &[f64]) -> Result<[f64; 2], EncoderError> {
        let expected = self.augmentation_width();
        if h.len() != self.dim() || extra.len() != expected {
            return Err(EncoderError::DimensionMismatch {
                expected: self.head.weight.cols,
                got: h.len() + extra.len(),
            });
        }
        let mut input = Vec::with_capacity(h.len() + extra.len());
        input.extend_from_slice(h);
        input.extend_from_slice(extra);
        let l = self.head.weight.affine(&input, &self.head.bias);
        Ok([l[0], l[1]])
    }

    /// Logits of `head(concat(h, extra_features))` for each embedding.
    pub fn classify(&self, h: &[Vec<f64>], extra_features: Option<&[Vec<f64>]>) -> Result<Vec<[f64; 2]>, EncoderError> {
        if let Some(extra) = extra_features {
            if extra.len() != h.len() {
                return Err(EncoderError::DimensionMismatch { expected: h.len(), got: extra.len() });
            }
        }
        h.iter()
            .enumerate()
            .map(|(i, row)| {
                let extra = extra_features.map(|e| e[i].as_slice()).unwrap_or(&[]);
                self.head_logits(row, extra)
            })
            .collect()
    }

    pub fn predict(&self, dataset: &Dataset, exec: Execution) -> Vec<Prediction> {
        par::map(exec, dataset.posts(), |post| {
            let h = self.embed_text(&post.text);
            let extra = self.extra_features(&post.text);
            let logits = self.head_logits(&h, &extra).expect("widths come from the model");
            Prediction::from_logits(post.id.clone(), logits)
        })
    }

    /// Tokenizes and featurizes labeled posts for training.
    pub fn prepare(&self, dataset: &Dataset, exec: Execution) -> Result<Vec<Example>, EncoderError> {
        let labels = dataset.labels()?;
        let examples = par::map(exec, dataset.posts(), |post| Example {
            ids: self.vocab.encode(&post.text),
            extra: self.extra_features(&post.text),
            label: 0,
        });
        Ok(examples
            .into_iter()
            .zip(labels)
            .map(|(mut ex, l)| {
                ex.label = l.index();
                ex
            })
            .collect())
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads { encoder: self.encoder.zeros_like(), head: self.head.zeros_like() }
    }

    /// Accumulates `∂L/∂θ_encoder` given `dh = ∂L/∂h`.
    pub fn backward_encoder(&self, trace: &EncodeTrace, dh: &[f64], grads: &mut EncoderParams) {
        let mut d_hidden = dh.to_vec();
        if let (Some(a), Some(act), Some(ga)) = (&self.encoder.adapter, &trace.adapter_act, &mut grads.adapter) {
            ga.up.add_outer(dh, act);
            math::add_assign(&mut ga.up_bias, dh);
            let d_act = a.up.matvec_t(dh);
            let d_pre: Vec<f64> = d_act.iter().zip(act).map(|(g, y)| g * (1.0 - y * y)).collect();
            ga.down.add_outer(&d_pre, &trace.hidden);
            math::add_assign(&mut ga.down_bias, &d_pre);
            math::add_assign(&mut d_hidden, &a.down.matvec_t(&d_pre));
        }
        let d_z: Vec<f64> = d_hidden.iter().zip(&trace.hidden).map(|(g, y)| g * (1.0 - y * y)).collect();
        grads.hidden.add_outer(&d_z, &trace.pooled);
        math::add_assign(&mut grads.hidden_bias, &d_z);
        if trace.ids.is_empty() {
            return;
        }
        let mut d_pooled = self.encoder.hidden.matvec_t(&d_z);
        let n = trace.ids.len() as f64;
        d_pooled.iter_mut().for_each(|v| *v /= n);
        for &id in &trace.ids {
            math::add_assign(grads.embed.row_mut(id as usize), &d_pooled);
        }
    }

    /// Accumulates head gradients for `input = [h; extra]` and returns `∂L/∂h`.
    pub fn backward_head(&self, h: &[f64], extra: &[f64], d_logits: &[f64], grads: &mut HeadParams) -> Vec<f64> {
        let mut input = Vec::with_capacity(h.len() + extra.len());
        input.extend_from_slice(h);
        input.extend_from_slice(extra);
        grads.weight.add_outer(d_logits, &input);
        math::add_assign(&mut grads.bias, d_logits);
        let mut d_input = self.head.weight.matvec_t(d_logits);
        d_input.truncate(h.len());
        d_input
    }

    /// Mean cross-entropy over `batch`.
    pub fn ce_loss(&self, batch: &[&Example]) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|ex| {
                let h = self.encode_ids(&ex.ids).output;
                let logits = self.head_logits(&h, &ex.extra).expect("prepared by this model");
                math::cross_entropy(&logits, ex.label)
            })
            .sum();
        total / batch.len() as f64
    }

    /// Mean cross-entropy over `batch` and its gradient.
    pub fn ce_loss_and_grad(&self, batch: &[&Example]) -> (f64, ModelGrads) {
        let mut grads = self.zero_grads();
        let n = batch.len() as f64;
        let mut total = 0.0;
        for ex in batch {
            let trace = self.encode_ids(&ex.ids);
            let logits = self.head_logits(&trace.output, &ex.extra).expect("prepared by this model");
            total += math::cross_entropy(&logits, ex.label);
            let mut d_logits = math::softmax(&logits);
            d_logits[ex.label] -= 1.0;
            d_logits.iter_mut().for_each(|v| *v /= n);
            let dh = self.backward_head(&trace.output, &ex.extra, &d_logits, &mut grads.head);
            self.backward_encoder(&trace, &dh, &mut grads.encoder);
        }
        (total / n, grads)
    }

    /// Head weights as a matrix, for callers that set them by hand.
    pub fn set_head(&mut self, weight: Matrix, bias: Vec<f64>) -> Result<(), EncoderError> {
        if weight.rows != 2 || weight.cols != self.head.weight.cols || bias.len() != 2 {
            return Err(EncoderError::DimensionMismatch { expected: self.head.weight.cols, got: weight.cols });
        }
        self.head = HeadParams { weight, bias };
        Ok(())
    }
}

impl Backbone for EncoderModel {
    fn dim(&self) -> usize {
        self.config.hidden_dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        self.embed_text(text)
    }
}
