#![allow(dead_code)]

use rand::Rng;
use regidapt::corpus::{Dataset, Domain, Label, Post};
use regidapt::dccl::{DcclConfig, DcclExample, DcclState, DcclSystem};
use regidapt::encoder::{gradient_check, EncoderModel, ModelConfig, ParamGroup};
use regidapt::lexicon::synthetic::{shifted_category_corpus, ShiftedCategoryConfig};
use regidapt::lexicon::{feature_significance, LexiconAugmentation, SignificanceTest};
use regidapt::par::Execution;

pub const TEXTS: [&str; 6] =
    ["the cat sat", "a dog ran far", "cat and dog", "far away now", "sat ran now the", "dog dog cat"];

pub fn randomize<P: ParamGroup>(p: &mut P, scale: f64, seed: u64) {
    let mut rng = regidapt::seed::rng(seed);
    for (_, t) in p.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.random_range(-scale..scale);
        }
    }
}

pub fn small_config() -> ModelConfig {
    ModelConfig { embed_dim: 6, hidden_dim: 10, adapter_width: None, max_vocab: None }
}

fn toy_dataset(texts: &[&str]) -> Dataset {
    Dataset::new(
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let label = if i % 2 == 0 { Label::NotDistorted } else { Label::Distorted };
                Post::new(format!("p{i}"), *t, Domain::EN, Some(label))
            })
            .collect(),
    )
    .unwrap()
}

/// Max relative error of the cross-entropy gradient of a randomized model.
pub fn plain_ce_error(seed: u64, adapters: bool) -> f64 {
    let mut cfg = small_config();
    if adapters {
        cfg.adapter_width = Some(4);
    }
    let mut model = EncoderModel::from_corpus(&TEXTS, cfg, seed);
    randomize(&mut model, 0.5, seed + 100);
    let examples = model.prepare(&toy_dataset(&TEXTS), Execution::Sequential).unwrap();
    let batch: Vec<_> = examples.iter().collect();
    let (_, grads) = model.ce_loss_and_grad(&batch);
    gradient_check(&model, &grads, |m| m.ce_loss(&batch), 1e-5, Execution::default()).max_relative_error
}

/// Same for a head fed lexicon features next to the embedding.
pub fn empath_ce_error(seed: u64) -> f64 {
    let corpus = shifted_category_corpus(&ShiftedCategoryConfig {
        posts_per_class: 6,
        tokens_per_post: 40,
        seed,
        ..Default::default()
    });
    let data = &corpus.dataset;
    let selection =
        feature_significance(data, &corpus.lexicon, SignificanceTest::Welch, 0.05, Execution::Sequential).unwrap();
    assert!(!selection.selected.is_empty());
    let aug = LexiconAugmentation::fit(&corpus.lexicon, &selection, &data.texts(), Execution::Sequential).unwrap();
    let mut model = EncoderModel::from_corpus(&data.texts(), small_config(), seed).with_augmentation(Some(aug), seed);
    randomize(&mut model, 0.5, seed + 200);
    let examples = model.prepare(data, Execution::Sequential).unwrap();
    assert!(examples.iter().all(|e| e.extra.len() == selection.selected.len()));
    let batch: Vec<_> = examples.iter().collect();
    let (_, grads) = model.ce_loss_and_grad(&batch);
    gradient_check(&model, &grads, |m| m.ce_loss(&batch), 1e-5, Execution::default()).max_relative_error
}

/// Same for the full DCCL objective at the default loss weights,
/// temperature and perturbation bound.
pub fn dccl_total_error(seed: u64) -> f64 {
    let mut model = EncoderModel::from_corpus(&TEXTS, small_config(), seed);
    randomize(&mut model, 0.5, seed + 300);
    let cfg = DcclConfig { projection_dim: 4, perturbation_hidden: 5, ..DcclConfig::default() };
    let mut state = DcclState::new(10, vec![Domain::EN, Domain::KT], cfg, seed).unwrap();
    randomize(&mut state, 0.4, seed + 400);
    let system = DcclSystem { model, state };
    let examples: Vec<DcclExample> = TEXTS
        .iter()
        .enumerate()
        .map(|(i, t)| DcclExample {
            ids: system.model.vocab.encode(t),
            extra: vec![],
            label: i % 2,
            domain: (i / 3) % 2,
        })
        .collect();
    let batch: Vec<_> = examples.iter().collect();
    let (_, grads) = system.loss_and_grad(&batch, false).unwrap();
    gradient_check(&system, &grads, |s| s.loss(&batch).unwrap().total, 1e-5, Execution::default()).max_relative_error
}
