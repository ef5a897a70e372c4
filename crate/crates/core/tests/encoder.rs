mod common;

use std::collections::BTreeMap;

use regidapt::corpus::synthetic::labeled_corpus;
use regidapt::corpus::{Dataset, Domain, Label, Post};
use regidapt::encoder::params::{is_adapter_tensor, is_head_tensor};
use regidapt::encoder::{checkpoint, train_classifier, EncoderError, EncoderModel, ParamGroup, TrainConfig};
use regidapt::math::Matrix;
use regidapt::par::Execution;
use regidapt::text::MAX_TOKENS;

use common::{small_config, TEXTS};

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..3 {
        assert!(common::plain_ce_error(seed, false) < 1e-4);
        assert!(common::plain_ce_error(seed, true) < 1e-4);
    }
    assert!(common::empath_ce_error(1) < 1e-4);
    assert!(common::dccl_total_error(2) < 1e-4);
}

fn toy(seed: u64) -> Dataset {
    labeled_corpus(Domain::EN, 20, 20, 0.0, seed)
}

#[test]
fn separable_toy_is_learned() {
    let data = toy(3);
    let model = EncoderModel::from_corpus(&data.texts(), small_config(), 3);
    let cfg = TrainConfig { learning_rate: 1e-2, epochs: 20, batch_size: 8, ..TrainConfig::full_finetune() };
    let (model, report) = train_classifier(model, &data, &cfg, Execution::default()).unwrap();
    let correct = model
        .predict(&data, Execution::default())
        .iter()
        .zip(data.labels().unwrap())
        .filter(|(p, l)| p.label == *l)
        .count();
    assert_eq!(correct, data.len());
    assert!(report.epoch_losses.last().unwrap() < report.epoch_losses.first().unwrap());
}

#[test]
fn zero_epochs_leave_the_model_alone() {
    let data = toy(0);
    let model = EncoderModel::from_corpus(&data.texts(), small_config(), 0);
    let cfg = TrainConfig { epochs: 0, ..TrainConfig::full_finetune() };
    let (trained, report) = train_classifier(model.clone(), &data, &cfg, Execution::default()).unwrap();
    assert_eq!(trained, model);
    assert!(report.epoch_losses.is_empty());
}

fn changed_tensors(before: &EncoderModel, after: &EncoderModel) -> Vec<&'static str> {
    before.tensors().into_iter().zip(after.tensors()).filter(|((_, a), (_, b))| a != b).map(|((n, _), _)| n).collect()
}

#[test]
fn adapter_scope_freezes_the_backbone() {
    let data = toy(1);
    let model = EncoderModel::from_corpus(&data.texts(), small_config().with_adapters(), 1);
    let cfg = TrainConfig { learning_rate: 1e-3, epochs: 2, ..TrainConfig::adapters() };
    let (trained, _) = train_classifier(model.clone(), &data, &cfg, Execution::default()).unwrap();
    let changed = changed_tensors(&model, &trained);
    assert!(!changed.is_empty());
    assert!(changed.iter().all(|n| is_adapter_tensor(n) || is_head_tensor(n)), "{changed:?}");

    let cfg = TrainConfig { learning_rate: 1e-3, epochs: 2, ..TrainConfig::dccl_loop2() };
    let (trained, _) = train_classifier(model.clone(), &data, &cfg, Execution::default()).unwrap();
    assert!(changed_tensors(&model, &trained).iter().all(|n| is_head_tensor(n)));
}

#[test]
fn adapter_scope_needs_adapters() {
    let data = toy(1);
    let model = EncoderModel::from_corpus(&data.texts(), small_config(), 1);
    let err = train_classifier(model, &data, &TrainConfig::adapters(), Execution::default()).unwrap_err();
    assert!(matches!(err, EncoderError::InvalidConfig(_)));
}

#[test]
fn fresh_adapters_are_the_identity() {
    let plain = EncoderModel::from_corpus(&TEXTS, small_config(), 9);
    let mut cfg = small_config();
    cfg.adapter_width = Some(4);
    let mut adapted = EncoderModel::from_corpus(&TEXTS, cfg, 9);
    adapted.encoder.embed = plain.encoder.embed.clone();
    adapted.encoder.hidden = plain.encoder.hidden.clone();
    adapted.encoder.hidden_bias = plain.encoder.hidden_bias.clone();
    adapted.head = plain.head.clone();
    for t in TEXTS {
        let (h0, h1) = (plain.embed_text(t), adapted.embed_text(t));
        assert_eq!(h0, h1);
        assert_eq!(plain.head_logits(&h0, &[]).unwrap(), adapted.head_logits(&h1, &[]).unwrap());
    }
}

#[test]
fn long_posts_are_truncated() {
    let model = EncoderModel::from_corpus(&TEXTS, small_config(), 0);
    let long = vec!["cat"; MAX_TOKENS + 300].join(" ");
    let longer = format!("{long} {}", vec!["dog"; 50].join(" "));
    assert_eq!(model.vocab.encode(&longer).len(), MAX_TOKENS);
    assert_eq!(model.embed_text(&long), model.embed_text(&longer));
}

#[test]
fn predictions_are_distributions() {
    let data = toy(4);
    let model = EncoderModel::from_corpus(&data.texts(), small_config(), 4);
    for p in model.predict(&data, Execution::default()) {
        assert!((p.probability[0] + p.probability[1] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn zero_head_gives_zero_logits() {
    let mut model = EncoderModel::from_corpus(&TEXTS, small_config(), 0);
    model.set_head(Matrix::zeros(2, 10), vec![0.0; 2]).unwrap();
    let h = model.encode(&TEXTS, Execution::default());
    assert!(model.classify(&h, None).unwrap().iter().all(|l| *l == [0.0, 0.0]));
}

#[test]
fn wrong_widths_are_rejected() {
    let model = EncoderModel::from_corpus(&TEXTS, small_config(), 0);
    assert!(matches!(model.head_logits(&[0.0; 7], &[]), Err(EncoderError::DimensionMismatch { .. })));
    let h = model.encode(&TEXTS[..2], Execution::default());
    let extra = vec![vec![]];
    assert!(matches!(model.classify(&h, Some(&extra)), Err(EncoderError::DimensionMismatch { .. })));
}

#[test]
fn training_is_deterministic() {
    let data = toy(5);
    let cfg = TrainConfig { learning_rate: 1e-3, epochs: 2, ..TrainConfig::full_finetune() }.with_seed(11);
    let run = |exec| {
        let model = EncoderModel::from_corpus(&data.texts(), small_config(), 5);
        train_classifier(model, &data, &cfg, exec).unwrap().0
    };
    let a = run(Execution::Parallel);
    assert_eq!(a, run(Execution::Sequential));
    let other = TrainConfig { seed: 12, ..cfg.clone() };
    let b = train_classifier(
        EncoderModel::from_corpus(&data.texts(), small_config(), 5),
        &data,
        &other,
        Execution::default(),
    )
    .unwrap()
    .0;
    assert_ne!(a, b);
}

#[test]
fn checkpoints_round_trip() {
    let model = EncoderModel::from_corpus(&TEXTS, small_config().with_adapters(), 7);
    let text = checkpoint::to_string(&model, &BTreeMap::new());
    let (back, sections) = checkpoint::from_str(&text).unwrap();
    assert_eq!(back, model);
    assert!(sections.is_empty());
    assert!(checkpoint::from_str("{\"format\": \"something-else\"}").is_err());
}

#[test]
fn unlabeled_posts_cannot_train() {
    let data = Dataset::new(vec![
        Post::new("a", "cat", Domain::EN, None),
        Post::new("b", "dog", Domain::EN, Some(Label::Distorted)),
    ])
    .unwrap();
    let model = EncoderModel::from_corpus(&data.texts(), small_config(), 0);
    assert!(train_classifier(model, &data, &TrainConfig::default(), Execution::default()).is_err());
}
