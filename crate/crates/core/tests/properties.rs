use proptest::collection::vec;
use proptest::prelude::*;

use regidapt::corpus::synthetic::labeled_corpus;
use regidapt::corpus::{
    load_posts_from_str, pseudonymize_dataset, stratified_kfold, to_jsonl, Dataset, Domain, Format, Label, Post,
};
use regidapt::dccl::{DcclConfig, DcclState};
use regidapt::evaluation::{bonferroni, cohen_kappa, mcnemar, mmd_with, weighted_metrics, MmdEstimator, MmdOptions};
use regidapt::lexicon::synthetic::{shifted_category_corpus, ShiftedCategoryConfig};
use regidapt::lexicon::{
    extract_features, feature_significance, welch_t_test, Lexicon, Normalization, SignificanceTest,
};
use regidapt::par::Execution;
use regidapt::prompting::{
    parse_verdict, rewrite_dataset, translate_dataset, IdentityClient, IdentityTranslator, PromptTemplate,
};

fn labels(max: usize) -> impl Strategy<Value = Vec<Label>> {
    vec(any::<bool>(), 1..max)
        .prop_map(|v| v.into_iter().map(|b| if b { Label::Distorted } else { Label::NotDistorted }).collect())
}

fn label_pairs(max: usize) -> impl Strategy<Value = (Vec<Label>, Vec<Label>)> {
    (1..max).prop_flat_map(|n| {
        let one = || {
            vec(any::<bool>(), n).prop_map(|v| v.into_iter().map(|b| Label::from_index(b as usize).unwrap()).collect())
        };
        (one(), one())
    })
}

fn label_triples(max: usize) -> impl Strategy<Value = (Vec<Label>, Vec<Label>, Vec<Label>)> {
    (1..max).prop_flat_map(|n| {
        let one = || {
            vec(any::<bool>(), n).prop_map(|v| v.into_iter().map(|b| Label::from_index(b as usize).unwrap()).collect())
        };
        (one(), one(), one())
    })
}

fn points(n: std::ops::Range<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    vec(vec(-3.0..3.0f64, d), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weighted_scores_are_bounded_and_recall_is_accuracy((t, p) in label_pairs(40)) {
        let s = weighted_metrics(&t, &p).unwrap();
        for v in [s.precision, s.recall, s.f1] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
        let accuracy = t.iter().zip(&p).filter(|(a, b)| a == b).count() as f64 / t.len() as f64;
        prop_assert!((s.recall - accuracy).abs() < 1e-12);
    }

    #[test]
    fn kappa_is_symmetric((a, b) in label_pairs(40)) {
        let ab = cohen_kappa(&a, &b).unwrap();
        let ba = cohen_kappa(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab <= 1.0 + 1e-12);
    }

    #[test]
    fn kappa_of_self_is_one(a in labels(40)) {
        prop_assume!(a.iter().any(|&l| l != a[0]));
        prop_assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn mcnemar_swap_preserves_p((a, b, truth) in label_triples(60)) {
        let ab = mcnemar(&a, &b, &truth).unwrap();
        let ba = mcnemar(&b, &a, &truth).unwrap();
        prop_assert_eq!(ab.p_value, ba.p_value);
        prop_assert_eq!((ab.b, ab.c), (ba.c, ba.b));
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }

    #[test]
    fn bonferroni_is_monotone_in_alpha(p in vec(0.0..1.0f64, 1..8), lo in 0.001..0.5f64, step in 0.0..0.4f64) {
        let hi = (lo + step).min(0.99);
        let strict = bonferroni(&p, lo).unwrap();
        let loose = bonferroni(&p, hi).unwrap();
        for (s, l) in strict.reject.iter().zip(&loose.reject) {
            prop_assert!(!s || *l);
        }
    }

    #[test]
    fn biased_mmd_is_non_negative(x in points(2..12, 3), y in points(2..12, 3)) {
        let opts = MmdOptions { estimator: MmdEstimator::Biased, ..MmdOptions::default() };
        prop_assert!(mmd_with(&x, &y, opts, Execution::Sequential).unwrap().value >= -1e-12);
    }

    #[test]
    fn unbiased_mmd_of_a_sample_with_itself_is_at_most_zero(x in points(3..20, 2)) {
        let v = mmd_with(&x, &x, MmdOptions::default(), Execution::Sequential).unwrap().value;
        prop_assert!(v <= 1e-12);
    }

    #[test]
    fn mmd_is_exactly_symmetric(x in points(2..10, 2), y in points(2..10, 2)) {
        let xy = mmd_with(&x, &y, MmdOptions::default(), Execution::Sequential).unwrap().value;
        let yx = mmd_with(&y, &x, MmdOptions::default(), Execution::Parallel).unwrap().value;
        prop_assert_eq!(xy.to_bits(), yx.to_bits());
    }

    #[test]
    fn perturbations_stay_inside_epsilon(h in vec(-5.0..5.0f64, 8), eps in 0.01..2.0f64, seed in 0..1000u64) {
        let cfg = DcclConfig { epsilon: eps, projection_dim: 4, perturbation_hidden: 6, ..DcclConfig::default() };
        let mut state = DcclState::new(8, vec![Domain::EN, Domain::KT], cfg, seed).unwrap();
        let mut rng = regidapt::seed::rng(seed);
        use rand::Rng;
        state.perturb_out.data.iter_mut().for_each(|v| *v = rng.random_range(-3.0..3.0));
        let delta = state.perturb(&h).delta;
        prop_assert!(delta.iter().map(|v| v * v).sum::<f64>().sqrt() <= eps * (1.0 + 1e-12));
    }

    #[test]
    fn welch_swap_negates_t(a in vec(-10.0..10.0f64, 2..15), b in vec(-10.0..10.0f64, 2..15)) {
        if let (Some(ab), Some(ba)) = (welch_t_test(&a, &b), welch_t_test(&b, &a)) {
            prop_assert_eq!(ab.t, -ba.t);
            prop_assert_eq!(ab.p_value, ba.p_value);
        }
    }

    #[test]
    fn features_ignore_case(words in vec(prop::sample::select(vec!["Happy", "sad", "ANGRY", "calm", "the", "Worry", "x"]), 0..30)) {
        let lexicon = Lexicon::new([("joy", vec!["happy", "calm"]), ("fear", vec!["worry", "sad"]), ("anger", vec!["angry"])]).unwrap();
        let text = words.join(" ");
        let lower = extract_features(&text, &lexicon, Normalization::PerToken).unwrap();
        let upper = extract_features(&text.to_uppercase(), &lexicon, Normalization::PerToken).unwrap();
        prop_assert_eq!(lower, upper);
    }

    #[test]
    fn verdicts_survive_decoration(yes in any::<bool>(), pre in "[ \n\t]{0,3}", post in "[ .!\n]{0,3}", upper in any::<bool>()) {
        let word = if yes { "yes" } else { "no" };
        let word = if upper { word.to_uppercase() } else { word.to_string() };
        let expected = if yes { Label::Distorted } else { Label::NotDistorted };
        prop_assert_eq!(parse_verdict(&format!("{pre}{word}{post}")).unwrap(), expected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pseudonymization_is_idempotent(seed in any::<u64>(), again in any::<u64>(), names in vec("[a-z]{1,8}", 1..10)) {
        let posts: Vec<Post> = names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let mut p = Post::new(format!("p{i}"), format!("see https://x.org/{n} now"), Domain::KT, None);
                p.author = n.clone();
                p
            })
            .collect();
        let ds = Dataset::new(posts).unwrap();
        let once = pseudonymize_dataset(&ds, seed).unwrap();
        prop_assert_eq!(&pseudonymize_dataset(&once, again).unwrap(), &once);
    }

    #[test]
    fn folds_follow_the_global_class_balance(neg in 5..60usize, pos in 5..60usize, k in 2..6usize, seed in any::<u64>()) {
        let ds = labeled_corpus(Domain::KT, neg, pos, 0.0, seed);
        let global = pos as f64 / (neg + pos) as f64;
        for fold in stratified_kfold(&ds, k, seed).unwrap() {
            let test = ds.subset(&fold.test_ids);
            let frac = test.labels().unwrap().iter().filter(|&&l| l == Label::Distorted).count() as f64 / test.len() as f64;
            prop_assert!((frac - global).abs() <= 1.0 / test.len() as f64 + 1e-12);
        }
    }

    #[test]
    fn jsonl_round_trips(texts in vec("\\PC{0,40}", 1..8), seed in any::<u64>()) {
        let mut rng = regidapt::seed::rng(seed);
        use rand::Rng;
        let posts: Vec<Post> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let label = match rng.random_range(0..3) {
                    0 => None,
                    1 => Some(Label::NotDistorted),
                    _ => Some(Label::Distorted),
                };
                let mut p = Post::new(format!("id-{i}"), t.clone(), Domain::NL, label);
                p.annotator_labels = label.map(|l| vec![l, l.flip()]);
                p.confusing = label.map(|_| rng.random_bool(0.5));
                p.author = format!("user{i}");
                p
            })
            .collect();
        let ds = Dataset::new(posts).unwrap();
        let back = load_posts_from_str(&to_jsonl(&ds), Format::Jsonl).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn transforms_keep_labels(neg in 1..15usize, pos in 1..15usize, seed in any::<u64>()) {
        let ds = labeled_corpus(Domain::EN, neg, pos, 0.2, seed);
        let rewrite = IdentityClient::for_template(&PromptTemplate::rewrite());
        let examples = ["one", "two", "three", "four"];
        let r = rewrite_dataset(&rewrite, &ds, &examples, 4, Execution::default()).unwrap().dataset;
        let nl = translate_dataset(&IdentityTranslator, &ds, 4, Execution::default()).unwrap().dataset;
        for out in [&r, &nl] {
            prop_assert_eq!(out.labels().unwrap(), ds.labels().unwrap());
            let ids: Vec<_> = out.iter().map(|p| p.id.clone()).collect();
            prop_assert_eq!(ids, ds.iter().map(|p| p.id.clone()).collect::<Vec<_>>());
        }
        prop_assert!(r.iter().all(|p| p.domain == Domain::R));
        prop_assert!(nl.iter().all(|p| p.domain == Domain::NL));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn selection_ignores_dataset_order(seed in 0..1000u64, shuffle in any::<u64>()) {
        let corpus = shifted_category_corpus(&ShiftedCategoryConfig { posts_per_class: 30, matched: false, seed, ..Default::default() });
        let mut posts = corpus.dataset.clone().into_posts();
        use rand::seq::SliceRandom;
        posts.shuffle(&mut regidapt::seed::rng(shuffle));
        let shuffled = Dataset::new(posts).unwrap();
        let run = |d: &Dataset| feature_significance(d, &corpus.lexicon, SignificanceTest::Welch, 0.05, Execution::Sequential).unwrap();
        let (a, b) = (run(&corpus.dataset), run(&shuffled));
        prop_assert_eq!(&a.selected, &b.selected);
        for (name, p) in &a.p_values {
            prop_assert!((p - b.p_values[name]).abs() <= 1e-12 * p.max(1e-300).max(1.0));
        }
    }
}
