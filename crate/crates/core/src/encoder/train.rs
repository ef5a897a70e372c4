use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::EncoderModel;
use super::optim::AdamW;
use super::params::{is_adapter_tensor, is_head_tensor, ParamGroup};
use super::{EncoderError, TrainConfig, TrainableScope};
use crate::corpus::Dataset;
use crate::par::Execution;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn in_scope(scope: TrainableScope, tensor: &str) -> bool {
    match scope {
        TrainableScope::Full => true,
        TrainableScope::AdaptersOnly => is_adapter_tensor(tensor) || is_head_tensor(tensor),
        TrainableScope::HeadOnly => is_head_tensor(tensor),
    }
}

/// Minimizes mean cross-entropy with AdamW over shuffled mini-batches.
///
/// Only tensors inside `config.trainable_scope` change. Deterministic for a
/// given seed.
pub fn train_classifier(
    mut model: EncoderModel,
    data: &Dataset,
    config: &TrainConfig,
    exec: Execution,
) -> Result<(EncoderModel, TrainReport), EncoderError> {
    config.validate()?;
    if config.trainable_scope == TrainableScope::AdaptersOnly && model.encoder.adapter.is_none() {
        return Err(EncoderError::InvalidConfig("adapters_only scope on a model without adapters".into()));
    }
    let examples = model.prepare(data, exec)?;
    let mut report = TrainReport::default();
    if config.epochs == 0 || examples.is_empty() {
        return Ok((model, report));
    }

    let mut rng = crate::seed::rng(crate::seed::derive(config.seed, "shuffle"));
    let mut opt = AdamW::new(config.learning_rate, config.weight_decay);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<_> = chunk.iter().map(|&i| &examples[i]).collect();
            let (loss, grads) = model.ce_loss_and_grad(&batch);
            if !loss.is_finite() {
                return Err(EncoderError::NonFiniteLoss { epoch, batch: b });
            }
            opt.step(model.tensors_mut(), &grads.tensors(), |name| in_scope(config.trainable_scope, name));
            sum += loss;
            batches += 1;
        }
        let mean = sum / batches as f64;
        log::debug!("epoch {epoch}: mean loss {mean:.5}");
        report.epoch_losses.push(mean);
    }
    Ok((model, report))
}
