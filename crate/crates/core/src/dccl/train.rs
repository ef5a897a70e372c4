use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::losses::{DcclBatch, DcclForward, LossBreakdown};
use super::{DcclConfig, DcclError, DcclGrads, DcclState};
use crate::corpus::{Dataset, Label};
use crate::encoder::{in_scope, train_classifier, TrainReport};
use crate::encoder::{AdamW, EncoderModel, ModelGrads, ParamGroup, TrainConfig, TrainableScope};
use crate::par::Execution;

/// A tokenized example with its domain index.
#[derive(Clone, Debug, PartialEq)]
pub struct DcclExample {
    pub ids: Vec<u32>,
    pub extra: Vec<f64>,
    pub label: usize,
    pub domain: usize,
}

/// Encoder model and DCCL components viewed as one set of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct DcclSystem {
    pub model: EncoderModel,
    pub state: DcclState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DcclSystemGrads {
    pub model: ModelGrads,
    pub dccl: DcclGrads,
}

impl ParamGroup for DcclSystem {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut v = self.model.tensors();
        v.extend(self.state.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut v = self.model.tensors_mut();
        v.extend(self.state.tensors_mut());
        v
    }
}

impl ParamGroup for DcclSystemGrads {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut v = self.model.tensors();
        v.extend(self.dccl.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut v = self.model.tensors_mut();
        v.extend(self.dccl.tensors_mut());
        v
    }
}

impl DcclSystem {
    pub fn prepare(&self, data: &Dataset, exec: Execution) -> Result<Vec<DcclExample>, DcclError> {
        let examples = self.model.prepare(data, exec)?;
        data.iter()
            .zip(examples)
            .map(|(post, ex)| {
                Ok(DcclExample {
                    ids: ex.ids,
                    extra: ex.extra,
                    label: ex.label,
                    domain: self.state.domain_index(post.domain)?,
                })
            })
            .collect()
    }

    fn forward(
        &self,
        batch: &[&DcclExample],
    ) -> Result<(Vec<crate::encoder::EncodeTrace>, DcclBatch, DcclForward), DcclError> {
        let traces: Vec<_> = batch.iter().map(|ex| self.model.encode_ids(&ex.ids)).collect();
        let dbatch = DcclBatch {
            h: traces.iter().map(|t| t.output.clone()).collect(),
            extra: batch.iter().map(|ex| ex.extra.clone()).collect(),
            domains: batch.iter().map(|ex| ex.domain).collect(),
            labels: batch.iter().map(|ex| ex.label).collect(),
        };
        let fwd = DcclForward::new(&self.model, &self.state, &dbatch)?;
        Ok((traces, dbatch, fwd))
    }

    pub fn loss(&self, batch: &[&DcclExample]) -> Result<LossBreakdown, DcclError> {
        Ok(self.forward(batch)?.2.losses)
    }

    /// Loss and gradient for every parameter, through the encoder.
    pub fn loss_and_grad(
        &self,
        batch: &[&DcclExample],
        reverse: bool,
    ) -> Result<(LossBreakdown, DcclSystemGrads), DcclError> {
        let (traces, dbatch, fwd) = self.forward(batch)?;
        let back = fwd.backward(&self.model, &self.state, &dbatch, reverse);
        let mut model = self.model.zero_grads();
        model.head = back.head;
        for (trace, dh) in traces.iter().zip(&back.dh) {
            self.model.backward_encoder(trace, dh, &mut model.encoder);
        }
        Ok((fwd.losses, DcclSystemGrads { model, dccl: back.dccl }))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DcclTrainReport {
    /// Mean loss terms per epoch of the adversarial loop.
    pub loop1: Vec<LossBreakdown>,
    /// Mean cross-entropy per epoch of the classifier loop.
    pub loop2: TrainReport,
}

/// Two-loop DCCL training on a corpus mixing at least two domains.
///
/// Loop 1 minimizes the total loss with the domain gradient reversed at the
/// domain classifier input. Loop 2 fine-tunes on the classification loss
/// alone, within `loop2.trainable_scope` (head only by default).
pub fn train_dccl(
    model: EncoderModel,
    data: &Dataset,
    config: &DcclConfig,
    loop1: &TrainConfig,
    loop2: &TrainConfig,
    exec: Execution,
) -> Result<(EncoderModel, DcclState, DcclTrainReport), DcclError> {
    loop1.validate()?;
    loop2.validate()?;
    let domains: BTreeSet<_> = data.iter().map(|p| p.domain).collect();
    if domains.len() < 2 {
        return Err(DcclError::SingleDomainDataset);
    }
    let labels = data.labels()?;
    for class in [Label::NotDistorted, Label::Distorted] {
        if !labels.contains(&class) {
            return Err(DcclError::MissingClass(class));
        }
    }
    if loop1.trainable_scope == TrainableScope::AdaptersOnly && model.encoder.adapter.is_none() {
        return Err(DcclError::InvalidConfig("adapters_only scope on a model without adapters".into()));
    }
    let state = DcclState::new(
        model.dim(),
        domains.into_iter().collect(),
        config.clone(),
        crate::seed::derive(loop1.seed, "dccl-init"),
    )?;
    let mut system = DcclSystem { model, state };
    let examples = system.prepare(data, exec)?;
    let mut report = DcclTrainReport::default();

    let mut rng = crate::seed::rng(crate::seed::derive(loop1.seed, "dccl-shuffle"));
    let mut opt = AdamW::new(loop1.learning_rate, loop1.weight_decay);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let scope = loop1.trainable_scope;
    for epoch in 0..loop1.epochs {
        order.shuffle(&mut rng);
        let chunks: Vec<&[usize]> = order.chunks(loop1.batch_size).collect();
        let mut sum = LossBreakdown::default();
        for (b, chunk) in chunks.iter().enumerate() {
            let batch: Vec<_> = chunk.iter().map(|&i| &examples[i]).collect();
            let (losses, grads) = system.loss_and_grad(&batch, true)?;
            if !losses.total.is_finite() {
                return Err(DcclError::NonFiniteLoss { loop_index: 1, epoch, batch: b });
            }
            let grads = grads.tensors();
            opt.step(system.tensors_mut(), &grads, |name| is_dccl_tensor(name) || in_scope(scope, name));
            sum.total += losses.total;
            sum.domain += losses.domain;
            sum.consistency += losses.consistency;
            sum.contrastive += losses.contrastive;
            sum.classification += losses.classification;
        }
        let k = chunks.len().max(1) as f64;
        let mean = LossBreakdown {
            total: sum.total / k,
            domain: sum.domain / k,
            consistency: sum.consistency / k,
            contrastive: sum.contrastive / k,
            classification: sum.classification / k,
        };
        log::debug!("dccl loop 1 epoch {epoch}: {mean:?}");
        report.loop1.push(mean);
    }

    let DcclSystem { model, state } = system;
    let (model, loop2_report) = train_classifier(model, data, loop2, exec)?;
    report.loop2 = loop2_report;
    Ok((model, state, report))
}

fn is_dccl_tensor(name: &str) -> bool {
    super::is_perturbation_tensor(name) || super::is_domain_classifier_tensor(name) || name.starts_with("projection.")
}
