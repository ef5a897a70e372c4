use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use regidapt::corpus::synthetic::{english_reference, helpline_reference, two_domain_corpus, TwoDomainConfig};
use regidapt::corpus::{
    label_distribution, load_posts, pseudonymize_dataset, save_jsonl, stratified_kfold, Dataset, Domain, Format, Label,
};
use regidapt::dccl::DcclState;
use regidapt::encoder::{checkpoint, Backbone};
use regidapt::evaluation::{
    agreement_analysis, cohen_kappa, cross_validate, export_embeddings, mmd_with, report_csv_string, weighted_metrics,
    Bandwidth, EvalError, MmdEstimator, MmdOptions,
};
use regidapt::experiment::{
    build_method, compare_runs, compare_runs_with, comparison_csv, load_predictions, rerun_from_manifest,
    run_experiment, run_name, write_predictions, DcclMethod, ExperimentConfig, ExperimentData, FineTune,
    PredictionRecord,
};
use regidapt::lexicon::{extract_batch, feature_significance, Lexicon, Normalization, SignificanceTest};
use regidapt::par::Execution;
use regidapt::prompting::{
    classify_by_prompt, rewrite_dataset, translate_dataset, ChatTranslator, ClassifyOptions, ConstantClient,
    GoldEchoClient, HttpClient, IdentityClient, IdentityTranslator, LlmClient, PromptError, PromptTemplate,
    TemplateName, TranslationClient, VerdictFallback,
};
use regidapt::{Error, Result};

#[derive(Parser)]
#[command(name = "regidapt", version, about = "Cognitive-distortion detection across languages and registers")]
struct Cli {
    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest, inspect, split and generate datasets.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Lexicon feature extraction and selection.
    #[command(subcommand)]
    Lexicon(LexiconCmd),
    /// Train an encoder on a whole dataset.
    #[command(subcommand)]
    Train(TrainCmd),
    /// Predict labels with a checkpoint.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prompt-based classification, rewriting and translation.
    #[command(subcommand)]
    Prompt(PromptCmd),
    /// Metrics, agreement, significance, MMD and cross-validation.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Run a configured experiment and write its artifacts.
    Run {
        /// Flat TOML config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Re-execute the run recorded in a manifest.
        #[arg(long, conflicts_with = "config")]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        flags: ConfigFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise McNemar tests between prediction files.
    Compare {
        #[arg(long = "pred", required = true, num_args = 1..)]
        preds: Vec<PathBuf>,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CorpusCmd {
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: String,
        #[arg(long)]
        pseudonymize: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic labeled corpus.
    Synth {
        #[arg(long, value_enum, default_value = "two-domain")]
        kind: SynthKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Posts per domain for the two-domain corpus.
        #[arg(long, default_value_t = 2000)]
        posts: usize,
        /// Output file, or directory for the two-domain corpus.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    TwoDomain,
    En,
    Kt,
}

#[derive(Subcommand)]
enum LexiconCmd {
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        /// Lexicon file; the bundled lexicon when omitted.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        raw_counts: bool,
        #[arg(long)]
        out: PathBuf,
    },
    Select {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value = "welch")]
        test: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TrainCmd {
    /// Fine-tune on one dataset (baseline, adapters or lexicon-augmented).
    Baseline {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        flags: ConfigFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-loop domain-confused contrastive training on source and target data.
    Dccl {
        #[arg(long = "train-en")]
        train_en: PathBuf,
        #[arg(long = "train-kt")]
        train_kt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        flags: ConfigFlags,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ClientKind {
    Mock,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum MockKind {
    GoldEcho,
    Inverted,
    Constant,
}

#[derive(Subcommand)]
enum PromptCmd {
    Classify {
        #[arg(long, default_value = "short")]
        template: String,
        #[arg(long, value_enum, default_value = "http")]
        client: ClientKind,
        /// Mock behaviour; gold-echo answers from the input labels.
        #[arg(long, value_enum, default_value = "gold-echo")]
        mock: MockKind,
        /// Reply of the constant mock.
        #[arg(long, default_value = "Yes")]
        response: String,
        /// Leave unparseable posts out instead of counting them as not distorted.
        #[arg(long)]
        skip_unparseable: bool,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Rewrite {
        #[arg(long, value_enum, default_value = "http")]
        client: ClientKind,
        /// Text file with the four style examples separated by blank lines.
        #[arg(long)]
        examples: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Translate {
        #[arg(long, value_enum, default_value = "http")]
        client: ClientKind,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Correction {
    None,
    Bonferroni,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Weighted precision, recall and F1 of predictions against gold labels.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Cohen's kappa between two label files, or between the first two
    /// annotators of a dataset.
    Kappa {
        #[arg(long, requires = "b")]
        a: Option<PathBuf>,
        #[arg(long)]
        b: Option<PathBuf>,
        #[arg(long, conflicts_with_all = ["a", "b"])]
        annotators: Option<PathBuf>,
    },
    Mcnemar {
        #[arg(long = "pred", required = true, num_args = 1..)]
        preds: Vec<PathBuf>,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, value_enum, default_value = "bonferroni")]
        correction: Correction,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// MMD between the embeddings of two domains in a dataset.
    Mmd {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "EN")]
        x_domain: String,
        #[arg(long, default_value = "KT")]
        y_domain: String,
        /// Average over classes, comparing same-class posts only.
        #[arg(long)]
        per_class: bool,
        /// Use the DCCL projection head's output instead of h.
        #[arg(long)]
        projected: bool,
        #[arg(long)]
        biased: bool,
        /// Fixed RBF bandwidth instead of the median heuristic.
        #[arg(long)]
        bandwidth: Option<f64>,
    },
    Cv {
        #[command(flatten)]
        flags: ConfigFlags,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Export {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Agreement {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
}

/// Command-line overrides of experiment config fields.
#[derive(Args, Default)]
struct ConfigFlags {
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    client: Option<String>,
}

impl ConfigFlags {
    fn to_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            method: self.method.clone().unwrap_or_default(),
            target: self.target.clone().unwrap_or_default(),
            source: self.source.clone(),
            k: self.k,
            seed: self.seed,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            alpha: self.alpha,
            beta: self.beta,
            lambda: self.lambda,
            client: self.client.clone(),
            ..Default::default()
        }
    }
}

fn merged_config(file: Option<&Path>, flags: &ConfigFlags) -> Result<ExperimentConfig> {
    let base = match file {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    Ok(base.overlay(&flags.to_config()))
}

fn format_of(path: &Path) -> Format {
    if path.extension().is_some_and(|e| e == "csv") {
        Format::Csv
    } else {
        Format::Jsonl
    }
}

fn load(path: &Path) -> Result<Dataset> {
    load_posts(path, format_of(path))
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

fn lexicon_or_bundled(path: Option<&Path>) -> Result<Lexicon> {
    path.map_or_else(|| Ok(Lexicon::bundled()), Lexicon::load)
}

/// Predictions aligned to the gold dataset's order.
fn aligned_predictions(pred: &Path, gold: &Dataset) -> Result<Vec<Label>> {
    let records = load_predictions(pred)?;
    let by_id: BTreeMap<&str, Label> = records.iter().map(|r| (r.id.as_str(), r.label)).collect();
    if by_id.len() != gold.len() {
        return Err(EvalError::IdMismatch(format!("{} predictions for {} gold posts", by_id.len(), gold.len())).into());
    }
    gold.iter()
        .map(|p| by_id.get(p.id.as_str()).copied().ok_or_else(|| EvalError::IdMismatch(p.id.clone()).into()))
        .collect()
}

/// Labels from a predictions file or a labeled dataset, keyed by id.
fn labels_by_id(path: &Path) -> Result<BTreeMap<String, Label>> {
    match load_predictions(path) {
        Ok(records) => Ok(records.into_iter().map(|r| (r.id, r.label)).collect()),
        Err(_) => {
            let ds = load(path)?;
            ds.iter().map(|p| Ok((p.id.clone(), p.require_label()?))).collect()
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    match dispatch(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command, exec: Execution) -> Result<()> {
    match command {
        Command::Corpus(c) => corpus(c),
        Command::Lexicon(c) => lexicon(c, exec),
        Command::Train(c) => train(c, exec),
        Command::Predict { ckpt, input, out } => {
            let (model, _) = checkpoint::load(&ckpt)?;
            let ds = load(&input)?;
            let records: Vec<PredictionRecord> = model
                .predict(&ds, exec)
                .into_iter()
                .map(|p| PredictionRecord { id: p.post_id, label: p.label, probability: Some(p.probability[1]) })
                .collect();
            write_predictions(&out, &records)
        }
        Command::Prompt(c) => prompt(c, exec),
        Command::Eval(c) => eval(c, exec),
        Command::Run { config, manifest, flags, out } => {
            let result = match manifest {
                Some(m) => rerun_from_manifest(m, &out, exec)?,
                None => run_experiment(&merged_config(config.as_deref(), &flags)?, &out, exec)?,
            };
            print!("{}", report_csv_string(std::slice::from_ref(&result.report)));
            Ok(())
        }
        Command::Compare { preds, gold, alpha, out } => {
            let csv = compare_csv(&preds, &gold, alpha)?;
            match out {
                Some(path) => write_text(&path, &csv),
                None => {
                    print!("{csv}");
                    Ok(())
                }
            }
        }
    }
}

fn compare_csv(preds: &[PathBuf], gold: &Path, alpha: f64) -> Result<String> {
    let gold = load(gold)?;
    let runs = preds.iter().map(|p| Ok((run_name(p), load_predictions(p)?))).collect::<Result<Vec<_>>>()?;
    Ok(comparison_csv(&compare_runs(&runs, &gold, alpha)?))
}

fn corpus(cmd: CorpusCmd) -> Result<()> {
    match cmd {
        CorpusCmd::Ingest { input, format, pseudonymize, seed, out } => {
            let mut ds = load_posts(&input, format.parse()?)?;
            if pseudonymize {
                ds = pseudonymize_dataset(&ds, seed)?;
            }
            save_jsonl(&ds, &out)?;
            log::info!("wrote {} posts to {}", ds.len(), out.display());
            Ok(())
        }
        CorpusCmd::Stats { input } => {
            let ds = load(&input)?;
            let mut domains: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
            for post in &ds {
                let label = post.label.map_or("unlabeled".to_string(), |l| l.index().to_string());
                *domains.entry(post.domain.to_string()).or_default().entry(label).or_default() += 1;
            }
            let labeled = ds.iter().all(|p| p.label.is_some());
            let json = serde_json::json!({
                "posts": ds.len(),
                "by_domain_and_label": domains,
                "distorted_fraction": labeled.then(|| {
                    let d = label_distribution(&ds).expect("all labeled");
                    d.label_total(Label::Distorted) as f64 / d.total().max(1) as f64
                }),
            });
            print_json(&json);
            Ok(())
        }
        CorpusCmd::Split { input, k, seed, out } => {
            let ds = load(&input)?;
            let folds = stratified_kfold(&ds, k, seed)?;
            for fold in &folds {
                let dir = out.join(format!("fold_{}", fold.fold_index));
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                save_jsonl(&ds.subset(&fold.train_ids), dir.join("train.jsonl"))?;
                save_jsonl(&ds.subset(&fold.test_ids), dir.join("test.jsonl"))?;
            }
            write_text(&out.join("folds.json"), &serde_json::to_string_pretty(&folds).expect("serializable"))
        }
        CorpusCmd::Synth { kind, seed, posts, out } => match kind {
            SynthKind::TwoDomain => {
                let (en, kt) =
                    two_domain_corpus(&TwoDomainConfig { posts_per_domain: posts, seed, ..Default::default() });
                std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
                save_jsonl(&en, out.join("en.jsonl"))?;
                save_jsonl(&kt, out.join("kt.jsonl"))
            }
            SynthKind::En => save_jsonl(&english_reference(seed), &out),
            SynthKind::Kt => save_jsonl(&helpline_reference(seed), &out),
        },
    }
}

fn lexicon(cmd: LexiconCmd, exec: Execution) -> Result<()> {
    match cmd {
        LexiconCmd::Extract { input, lexicon, raw_counts, out } => {
            let lex = lexicon_or_bundled(lexicon.as_deref())?;
            let ds = load(&input)?;
            let norm = if raw_counts { Normalization::RawCount } else { Normalization::PerToken };
            let features = extract_batch(&ds.texts(), &lex, norm, exec)?;
            let names = lex.names();
            let mut text = String::new();
            for (post, f) in ds.iter().zip(features) {
                let values: BTreeMap<&str, f64> =
                    names.iter().copied().zip(f.values).filter(|(_, v)| *v != 0.0).collect();
                let line = serde_json::json!({ "id": post.id, "domain": post.domain, "label": post.label, "features": values });
                text.push_str(&line.to_string());
                text.push('\n');
            }
            write_text(&out, &text)
        }
        LexiconCmd::Select { input, lexicon, alpha, test, out } => {
            let lex = lexicon_or_bundled(lexicon.as_deref())?;
            let test: SignificanceTest =
                test.parse().map_err(|_| Error::config("test", format!("unknown test {test:?}")))?;
            let ds = load(&input)?;
            let selection = feature_significance(&ds, &lex, test, alpha, exec)?;
            println!("{} of {} categories selected", selection.selected.len(), selection.universe_size);
            for name in &selection.selected {
                println!("{name}\t{:.3e}", selection.p_values[name]);
            }
            if let Some(out) = out {
                write_text(&out, &serde_json::to_string_pretty(&selection).expect("serializable"))?;
            }
            Ok(())
        }
    }
}

fn train(cmd: TrainCmd, exec: Execution) -> Result<()> {
    match cmd {
        TrainCmd::Baseline { train, config, flags, out } => {
            let mut cfg = merged_config(config.as_deref(), &flags)?;
            if cfg.method.is_empty() {
                cfg.method = "baseline_ft".into();
            }
            cfg.target = train.clone();
            let cfg = cfg.resolved()?;
            if !matches!(cfg.method.as_str(), "baseline_ft" | "adapters" | "empath") {
                return Err(Error::config("method", format!("{} is not a fine-tuning method", cfg.method)));
            }
            let ds = load(&train)?;
            let seed = regidapt::seed::derive(cfg.seed.unwrap_or(0), "final");
            let model = FineTune::from_config(&cfg, exec).fit(&ds, &Dataset::empty(), seed)?;
            checkpoint::save(&out, &model, &BTreeMap::new())
        }
        TrainCmd::Dccl { train_en, train_kt, config, flags, out } => {
            let mut cfg = merged_config(config.as_deref(), &flags)?;
            cfg.method = "dccl".into();
            cfg.target = train_kt.clone();
            cfg.source = Some(train_en.clone());
            let cfg = cfg.resolved()?;
            let en = load(&train_en)?;
            let kt = load(&train_kt)?;
            let train = regidapt::corpus::merge_domains(&en, &kt);
            let method = DcclMethod::from_config(&cfg, exec);
            let (model, state) =
                method.fit(&train, &Dataset::empty(), regidapt::seed::derive(cfg.seed.unwrap_or(0), "final"))?;
            let sections = BTreeMap::from([("dccl".to_string(), state.to_section())]);
            checkpoint::save(&out, &model, &sections)
        }
    }
}

fn llm_client(kind: ClientKind, mock: impl FnOnce() -> Box<dyn LlmClient>) -> Result<Box<dyn LlmClient>> {
    Ok(match kind {
        ClientKind::Mock => mock(),
        ClientKind::Http => Box::new(HttpClient::from_env()?),
    })
}

fn prompt(cmd: PromptCmd, exec: Execution) -> Result<()> {
    match cmd {
        PromptCmd::Classify { template, client, mock, response, skip_unparseable, input, out } => {
            let template = PromptTemplate::by_name(template.parse::<TemplateName>()?);
            let ds = load(&input)?;
            let client = llm_client(client, || match mock {
                MockKind::GoldEcho => Box::new(GoldEchoClient::new(&ds)),
                MockKind::Inverted => Box::new(GoldEchoClient::inverted(&ds)),
                MockKind::Constant => Box::new(ConstantClient(response.clone())),
            })?;
            let fallback = if skip_unparseable { VerdictFallback::Skip } else { VerdictFallback::NotDistorted };
            let options = ClassifyOptions { fallback, exec, ..ClassifyOptions::default() };
            let result = classify_by_prompt(client.as_ref(), &template, &ds, options);
            for f in result.parse_failures.iter().chain(&result.client_failures) {
                log::warn!("{}: {}", f.post_id, f.message);
            }
            if result.predictions.is_empty() {
                if let Some(f) = result.client_failures.first() {
                    return Err(PromptError::ClientError(f.message.clone()).into());
                }
            }
            let records: Vec<PredictionRecord> = result
                .predictions
                .iter()
                .map(|p| PredictionRecord { id: p.post_id.clone(), label: p.label, probability: None })
                .collect();
            write_predictions(&out, &records)
        }
        PromptCmd::Rewrite { client, examples, input, out } => {
            let text = std::fs::read_to_string(&examples).map_err(|e| Error::io(&examples, e))?;
            let examples: Vec<&str> = text.split("\n\n").map(str::trim).filter(|s| !s.is_empty()).collect();
            let ds = load(&input)?;
            let client = llm_client(client, || Box::new(IdentityClient::for_template(&PromptTemplate::rewrite())))?;
            let outcome = rewrite_dataset(client.as_ref(), &ds, &examples, 8, exec)?;
            for f in &outcome.dropped {
                log::warn!("dropped {}: {}", f.post_id, f.message);
            }
            save_jsonl(&outcome.dataset, &out)
        }
        PromptCmd::Translate { client, input, out } => {
            let ds = load(&input)?;
            let translator: Box<dyn TranslationClient> = match client {
                ClientKind::Mock => Box::new(IdentityTranslator),
                ClientKind::Http => Box::new(ChatTranslator { client: HttpClient::from_env()? }),
            };
            let outcome = translate_dataset(translator.as_ref(), &ds, 8, exec)?;
            for f in &outcome.dropped {
                log::warn!("dropped {}: {}", f.post_id, f.message);
            }
            save_jsonl(&outcome.dataset, &out)
        }
    }
}

fn domain_arg(s: &str) -> Result<Domain> {
    s.parse().map_err(|_| Error::config("domain", format!("unknown domain {s:?}")))
}

fn eval(cmd: EvalCmd, exec: Execution) -> Result<()> {
    match cmd {
        EvalCmd::Metrics { pred, gold } => {
            let gold = load(&gold)?;
            let preds = aligned_predictions(&pred, &gold)?;
            let truth = gold.labels()?;
            let scores = weighted_metrics(&truth, &preds)?;
            print_json(&scores);
            Ok(())
        }
        EvalCmd::Kappa { a, b, annotators } => {
            let (x, y) = if let Some(path) = annotators {
                let ds = load(&path)?;
                let mut x = Vec::new();
                let mut y = Vec::new();
                for post in &ds {
                    if let Some([first, second, ..]) = post.annotator_labels.as_deref() {
                        x.push(*first);
                        y.push(*second);
                    }
                }
                (x, y)
            } else {
                let (Some(a), Some(b)) = (a, b) else {
                    return Err(Error::config("kappa", "pass --a and --b, or --annotators"));
                };
                let la = labels_by_id(&a)?;
                let lb = labels_by_id(&b)?;
                if la.len() != lb.len() || la.keys().any(|k| !lb.contains_key(k)) {
                    return Err(EvalError::IdMismatch(format!(
                        "{} and {} cover different posts",
                        a.display(),
                        b.display()
                    ))
                    .into());
                }
                (la.values().copied().collect(), la.keys().map(|k| lb[k]).collect())
            };
            let kappa = cohen_kappa(&x, &y)?;
            print_json(&serde_json::json!({ "kappa": kappa, "n": x.len() }));
            Ok(())
        }
        EvalCmd::Mcnemar { preds, gold, correction, alpha } => {
            let gold = load(&gold)?;
            let runs = preds.iter().map(|p| Ok((run_name(p), load_predictions(p)?))).collect::<Result<Vec<_>>>()?;
            let rows = compare_runs_with(&runs, &gold, alpha, matches!(correction, Correction::Bonferroni))?;
            print!("{}", comparison_csv(&rows));
            Ok(())
        }
        EvalCmd::Mmd { ckpt, input, x_domain, y_domain, per_class, projected, biased, bandwidth } => {
            let (model, sections) = checkpoint::load(&ckpt)?;
            let projection = if projected {
                let section = sections
                    .get("dccl")
                    .ok_or_else(|| Error::config("projected", "checkpoint has no DCCL projection"))?;
                Some(DcclState::from_section(section, model.dim())?)
            } else {
                None
            };
            let ds = load(&input)?;
            let (dx, dy) = (domain_arg(&x_domain)?, domain_arg(&y_domain)?);
            let options = MmdOptions {
                estimator: if biased { MmdEstimator::Biased } else { MmdEstimator::Unbiased },
                bandwidth: bandwidth.map_or(Bandwidth::Median, Bandwidth::Fixed),
            };
            let embed = |d: &Dataset| -> Vec<Vec<f64>> {
                let h = model.encode(&d.texts(), exec);
                match &projection {
                    Some(state) => h.iter().map(|v| state.project(v)).collect(),
                    None => h,
                }
            };
            let groups: Vec<(String, Option<Label>)> = if per_class {
                Label::ALL.iter().map(|l| (format!("label_{}", l.index()), Some(*l))).collect()
            } else {
                vec![("all".to_string(), None)]
            };
            let mut out = BTreeMap::new();
            let mut sum = 0.0;
            for (name, label) in &groups {
                let pick = |d: Domain| ds.filter(|p| p.domain == d && (label.is_none() || p.label == *label));
                let result = mmd_with(&embed(&pick(dx)), &embed(&pick(dy)), options, exec)?;
                sum += result.value;
                out.insert(name.clone(), serde_json::to_value(&result).expect("serializable"));
            }
            out.insert("mean".into(), serde_json::json!(sum / groups.len() as f64));
            print_json(&out);
            Ok(())
        }
        EvalCmd::Cv { flags, config, out } => {
            let cfg = merged_config(config.as_deref(), &flags)?.resolved()?;
            let data = ExperimentData::load(&cfg)?;
            let method = build_method(&cfg, &data, exec)?;
            let seed = regidapt::seed::derive(cfg.seed.unwrap_or(0), "cv");
            let report =
                cross_validate(method.as_ref(), data.source.as_ref(), &data.target, cfg.k.unwrap_or(5), seed, exec)?;
            let csv = report_csv_string(std::slice::from_ref(&report));
            match out {
                Some(path) => write_text(&path, &csv),
                None => {
                    print!("{csv}");
                    Ok(())
                }
            }
        }
        EvalCmd::Export { ckpt, input, out } => {
            let (model, _) = checkpoint::load(&ckpt)?;
            let ds = load(&input)?;
            export_embeddings(&model as &dyn Backbone, &ds, &out, exec)?;
            Ok(())
        }
        EvalCmd::Agreement { pred, gold } => {
            let gold = load(&gold)?;
            let preds = aligned_predictions(&pred, &gold)?;
            let truth = gold.labels()?;
            let confusing: Vec<bool> = gold.iter().map(|p| p.confusing.unwrap_or(false)).collect();
            let report = agreement_analysis(&preds, &truth, &confusing)?;
            print_json(&report);
            Ok(())
        }
    }
}
