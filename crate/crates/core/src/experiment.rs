//! Experiment configuration, the built-in methods, run orchestration with
//! manifests, and pairwise comparison of prediction files.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{load_posts, merge_domains, Dataset, Format, Label};
use crate::dccl::{train_dccl, DcclConfig};
use crate::encoder::{checkpoint, train_classifier, EncoderModel, ModelConfig, TrainConfig, Vocab};
use crate::evaluation::{
    bonferroni, cross_validate_with_predictions, mcnemar, write_report_csv, BonferroniResult, EvalError, EvalReport,
    Method, RandomBaseline, SignificanceResult,
};
use crate::lexicon::{feature_significance, Lexicon, LexiconAugmentation, SignificanceTest};
use crate::par::Execution;
use crate::prompting::{
    classify_by_prompt, ClassifyOptions, ConstantClient, GoldEchoClient, HttpClient, LlmClient, PromptError,
    PromptTemplate, VerdictFallback,
};
use crate::{Error, Result};

pub const MANIFEST_FORMAT: &str = "regidapt-manifest-v1";
pub const REPORT_FILE: &str = "report.csv";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Random,
    BaselineFt,
    Adapters,
    Empath,
    Dccl,
    PromptShort,
    PromptLong,
}

impl MethodKind {
    pub const ALL: [MethodKind; 7] = [
        MethodKind::Random,
        MethodKind::BaselineFt,
        MethodKind::Adapters,
        MethodKind::Empath,
        MethodKind::Dccl,
        MethodKind::PromptShort,
        MethodKind::PromptLong,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodKind::Random => "random",
            MethodKind::BaselineFt => "baseline_ft",
            MethodKind::Adapters => "adapters",
            MethodKind::Empath => "empath",
            MethodKind::Dccl => "dccl",
            MethodKind::PromptShort => "prompt_short",
            MethodKind::PromptLong => "prompt_long",
        }
    }

    /// Accepts the canonical names plus `baseline` and `prompt` (short).
    pub fn parse(s: &str) -> Result<Self> {
        let kind = match s {
            "baseline" => MethodKind::BaselineFt,
            "prompt" => MethodKind::PromptShort,
            other => *Self::ALL
                .iter()
                .find(|m| m.as_str() == other)
                .ok_or_else(|| Error::config("method", format!("unknown method {other:?}")))?,
        };
        Ok(kind)
    }

    fn trains_encoder(self) -> bool {
        matches!(self, MethodKind::BaselineFt | MethodKind::Adapters | MethodKind::Empath | MethodKind::Dccl)
    }

    /// Per-method training presets. DCCL returns its first loop.
    fn train_defaults(self) -> TrainConfig {
        match self {
            MethodKind::Adapters => TrainConfig::adapters(),
            MethodKind::Empath => TrainConfig::empath(),
            MethodKind::Dccl => TrainConfig::dccl_loop1(),
            _ => TrainConfig::full_finetune(),
        }
    }
}

/// Flat key-value experiment description.
///
/// Every field except `method` and `target` is optional; unset training
/// hyperparameters fall back to the method's presets. Keys:
///
/// | key | meaning |
/// |-----|---------|
/// | `method` | random, baseline_ft, adapters, empath, dccl, prompt_short, prompt_long |
/// | `target` | labeled dataset that is cross-validated |
/// | `source` | extra labeled training data from another domain |
/// | `format` | jsonl or csv; inferred from the extension when unset |
/// | `k`, `seed` | folds (5) and master seed (0) |
/// | `train_on_target` | add the target training fold to the training data |
/// | `learning_rate`, `epochs`, `weight_decay`, `batch_size` | training (loop 1 for DCCL) |
/// | `loop2_learning_rate`, `loop2_epochs`, `loop2_weight_decay` | DCCL loop 2 |
/// | `embed_dim`, `hidden_dim`, `adapter_width`, `max_vocab` | encoder shape |
/// | `alpha`, `beta`, `lambda`, `temperature`, `epsilon`, `projection_dim` | DCCL |
/// | `significance_test`, `significance_alpha` | Empath feature selection |
/// | `client`, `client_response`, `verdict_fallback` | prompting |
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: String,
    pub target: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_on_target: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loop2_learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loop2_epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loop2_weight_decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embed_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adapter_width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_vocab: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projection_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub significance_test: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub significance_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub client: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub client_response: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict_fallback: Option<String>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl ExperimentConfig {
    pub fn from_toml(content: &str) -> Result<Self> {
        toml::from_str(content).map_err(|e| Error::config("config", e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&content)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(mut self, other: &ExperimentConfig) -> Self {
        if !other.method.is_empty() {
            self.method = other.method.clone();
        }
        if !other.target.as_os_str().is_empty() {
            self.target = other.target.clone();
        }
        overlay!(self, other; source, format, k, seed, train_on_target, learning_rate, epochs, weight_decay,
            batch_size, loop2_learning_rate, loop2_epochs, loop2_weight_decay, embed_dim, hidden_dim,
            adapter_width, max_vocab, alpha, beta, lambda, temperature, epsilon, projection_dim,
            significance_test, significance_alpha, client, client_response, verdict_fallback);
        self
    }

    pub fn method_kind(&self) -> Result<MethodKind> {
        MethodKind::parse(&self.method)
    }

    /// Fills every unset field relevant to the method with its default.
    pub fn resolved(&self) -> Result<Self> {
        let kind = self.method_kind()?;
        let mut c = self.clone();
        c.method = kind.as_str().to_string();
        if c.target.as_os_str().is_empty() {
            return Err(Error::config("target", "a target dataset is required"));
        }
        c.k.get_or_insert(5);
        c.seed.get_or_insert(0);
        c.train_on_target.get_or_insert(kind == MethodKind::Dccl || c.source.is_none());
        if c.format.is_none() {
            c.format = Some(if c.target.extension().is_some_and(|e| e == "csv") { "csv" } else { "jsonl" }.into());
        }
        if kind.trains_encoder() {
            let t = kind.train_defaults();
            c.learning_rate.get_or_insert(t.learning_rate);
            c.epochs.get_or_insert(t.epochs);
            c.weight_decay.get_or_insert(t.weight_decay);
            c.batch_size.get_or_insert(t.batch_size);
            let m = ModelConfig::default();
            c.embed_dim.get_or_insert(m.embed_dim);
            c.hidden_dim.get_or_insert(m.hidden_dim);
            c.max_vocab.get_or_insert(m.max_vocab.unwrap_or(30_000));
        }
        if kind == MethodKind::Adapters {
            c.adapter_width.get_or_insert(ModelConfig::DEFAULT_ADAPTER_WIDTH);
        }
        if kind == MethodKind::Empath {
            c.significance_test.get_or_insert("welch".into());
            c.significance_alpha.get_or_insert(0.05);
        }
        if kind == MethodKind::Dccl {
            let l2 = TrainConfig::dccl_loop2();
            c.loop2_learning_rate.get_or_insert(l2.learning_rate);
            c.loop2_epochs.get_or_insert(l2.epochs);
            c.loop2_weight_decay.get_or_insert(l2.weight_decay);
            let d = DcclConfig::default();
            c.alpha.get_or_insert(d.alpha);
            c.beta.get_or_insert(d.beta);
            c.lambda.get_or_insert(d.lambda);
            c.temperature.get_or_insert(d.temperature);
            c.epsilon.get_or_insert(d.epsilon);
            c.projection_dim.get_or_insert(d.projection_dim.min(c.hidden_dim.unwrap_or(256).saturating_sub(1)));
        }
        if matches!(kind, MethodKind::PromptShort | MethodKind::PromptLong) {
            c.client.get_or_insert("http".into());
            c.verdict_fallback.get_or_insert("not_distorted".into());
        }
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if self.k.is_some_and(|k| k < 2) {
            return Err(Error::config("k", "at least 2 folds are required"));
        }
        if let Some(f) = &self.format {
            f.parse::<Format>().map_err(|_| Error::config("format", format!("unknown format {f:?}")))?;
        }
        if let Some(t) = &self.significance_test {
            t.parse::<SignificanceTest>()
                .map_err(|_| Error::config("significance_test", format!("unknown test {t:?}")))?;
        }
        if let Some(c) = &self.client {
            if !["http", "gold_echo", "inverted", "constant"].contains(&c.as_str()) {
                return Err(Error::config("client", format!("unknown client {c:?}")));
            }
        }
        if let Some(f) = &self.verdict_fallback {
            if !["not_distorted", "skip"].contains(&f.as_str()) {
                return Err(Error::config("verdict_fallback", format!("unknown fallback {f:?}")));
            }
        }
        for (field, v) in [("learning_rate", self.learning_rate), ("loop2_learning_rate", self.loop2_learning_rate)] {
            if v.is_some_and(|v| !v.is_finite() || v <= 0.0) {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.batch_size == Some(0) {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if let (Some(p), Some(h)) = (self.projection_dim, self.hidden_dim) {
            if p == 0 || p >= h {
                return Err(Error::config("projection_dim", format!("must be in [1, {h})")));
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_toml().as_bytes()))
    }

    fn model_config(&self) -> ModelConfig {
        let d = ModelConfig::default();
        ModelConfig {
            embed_dim: self.embed_dim.unwrap_or(d.embed_dim),
            hidden_dim: self.hidden_dim.unwrap_or(d.hidden_dim),
            adapter_width: self.adapter_width,
            max_vocab: self.max_vocab.or(d.max_vocab),
        }
    }

    fn train_config(&self, kind: MethodKind) -> TrainConfig {
        let mut t = kind.train_defaults();
        t.learning_rate = self.learning_rate.unwrap_or(t.learning_rate);
        t.epochs = self.epochs.unwrap_or(t.epochs);
        t.weight_decay = self.weight_decay.unwrap_or(t.weight_decay);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.seed = self.seed.unwrap_or(0);
        t
    }

    fn loop2_config(&self) -> TrainConfig {
        let mut t = TrainConfig::dccl_loop2();
        t.learning_rate = self.loop2_learning_rate.unwrap_or(t.learning_rate);
        t.epochs = self.loop2_epochs.unwrap_or(t.epochs);
        t.weight_decay = self.loop2_weight_decay.unwrap_or(t.weight_decay);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.seed = crate::seed::derive(self.seed.unwrap_or(0), "loop2");
        t
    }

    fn dccl_config(&self) -> DcclConfig {
        let d = DcclConfig::default();
        DcclConfig {
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            lambda: self.lambda.unwrap_or(d.lambda),
            temperature: self.temperature.unwrap_or(d.temperature),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            projection_dim: self.projection_dim.unwrap_or(d.projection_dim),
            perturbation_hidden: d.perturbation_hidden,
        }
    }

    fn format(&self) -> Format {
        self.format.as_deref().and_then(|f| f.parse().ok()).unwrap_or(Format::Jsonl)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// Fine-tuning of the reference encoder, optionally with adapters or
/// lexicon features.
pub struct FineTune {
    pub name: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Feature-selection test and alpha for lexicon augmentation.
    pub lexicon: Option<(SignificanceTest, f64)>,
    pub use_target: bool,
    pub exec: Execution,
}

/// Vocabulary over the training and evaluation texts, labels unseen. Stands
/// in for a pretrained tokenizer that covers every language involved.
fn shared_vocab(train: &Dataset, test: &Dataset, max_size: Option<usize>) -> Vocab {
    let mut texts = train.texts();
    texts.extend(test.texts());
    Vocab::build(&texts, max_size)
}

impl FineTune {
    /// Fine-tuning as described by a resolved config.
    pub fn from_config(config: &ExperimentConfig, exec: Execution) -> Self {
        let kind = config.method_kind().unwrap_or(MethodKind::BaselineFt);
        let lexicon = (kind == MethodKind::Empath).then(|| {
            let test =
                config.significance_test.as_deref().and_then(|t| t.parse().ok()).unwrap_or(SignificanceTest::Welch);
            (test, config.significance_alpha.unwrap_or(0.05))
        });
        FineTune {
            name: kind.as_str().into(),
            model: config.model_config(),
            train: config.train_config(kind),
            lexicon,
            use_target: config.train_on_target.unwrap_or(true),
            exec,
        }
    }

    pub fn fit(&self, train: &Dataset, test: &Dataset, seed: u64) -> Result<EncoderModel> {
        let vocab = shared_vocab(train, test, self.model.max_vocab);
        let model = EncoderModel::new(self.model.clone(), vocab, None, crate::seed::derive(seed, "init"));
        let model = match self.lexicon {
            None => model,
            Some((test_kind, alpha)) => {
                let lexicon = Lexicon::bundled();
                let selection = feature_significance(train, &lexicon, test_kind, alpha, self.exec)?;
                log::info!("{} lexicon categories selected", selection.selected.len());
                let aug = LexiconAugmentation::fit(&lexicon, &selection, &train.texts(), self.exec)?;
                model.with_augmentation(Some(aug), seed)
            }
        };
        let cfg = TrainConfig { seed, ..self.train.clone() };
        Ok(train_classifier(model, train, &cfg, self.exec)?.0)
    }
}

impl Method for FineTune {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn uses_target_data(&self) -> bool {
        self.use_target
    }

    fn fit_predict(&self, train: &Dataset, test: &Dataset, seed: u64) -> Result<Vec<Label>> {
        let model = self.fit(train, test, seed)?;
        Ok(model.predict(test, self.exec).into_iter().map(|p| p.label).collect())
    }
}

pub struct DcclMethod {
    pub model: ModelConfig,
    pub dccl: DcclConfig,
    pub loop1: TrainConfig,
    pub loop2: TrainConfig,
    pub exec: Execution,
}

impl DcclMethod {
    pub fn from_config(config: &ExperimentConfig, exec: Execution) -> Self {
        DcclMethod {
            model: config.model_config(),
            dccl: config.dccl_config(),
            loop1: config.train_config(MethodKind::Dccl),
            loop2: config.loop2_config(),
            exec,
        }
    }

    pub fn fit(&self, train: &Dataset, test: &Dataset, seed: u64) -> Result<(EncoderModel, crate::dccl::DcclState)> {
        let vocab = shared_vocab(train, test, self.model.max_vocab);
        let model = EncoderModel::new(self.model.clone(), vocab, None, crate::seed::derive(seed, "init"));
        let l1 = TrainConfig { seed, ..self.loop1.clone() };
        let l2 = TrainConfig { seed: crate::seed::derive(seed, "loop2"), ..self.loop2.clone() };
        let (model, state, _) = train_dccl(model, train, &self.dccl, &l1, &l2, self.exec)?;
        Ok((model, state))
    }
}

impl Method for DcclMethod {
    fn name(&self) -> String {
        "dccl".into()
    }

    fn uses_target_data(&self) -> bool {
        true
    }

    fn fit_predict(&self, train: &Dataset, test: &Dataset, seed: u64) -> Result<Vec<Label>> {
        let (model, _) = self.fit(train, test, seed)?;
        Ok(model.predict(test, self.exec).into_iter().map(|p| p.label).collect())
    }
}

/// Classification by prompting a language model. Posts without a usable
/// answer count as not distorted.
pub struct PromptMethod {
    pub name: String,
    pub template: PromptTemplate,
    pub client: Arc<dyn LlmClient>,
    pub options: ClassifyOptions,
}

impl Method for PromptMethod {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn fit_predict(&self, _train: &Dataset, test: &Dataset, _seed: u64) -> Result<Vec<Label>> {
        let result = classify_by_prompt(self.client.as_ref(), &self.template, test, self.options);
        if !result.parse_failures.is_empty() || !result.client_failures.is_empty() {
            log::warn!(
                "{}: {} unparseable replies, {} failed requests",
                self.name,
                result.parse_failures.len(),
                result.client_failures.len()
            );
        }
        if result.predictions.is_empty() {
            if let Some(f) = result.client_failures.first() {
                return Err(PromptError::ClientError(f.message.clone()).into());
            }
        }
        let by_id: HashMap<&str, Label> = result.predictions.iter().map(|p| (p.post_id.as_str(), p.label)).collect();
        Ok(test.iter().map(|p| by_id.get(p.id.as_str()).copied().unwrap_or(Label::NotDistorted)).collect())
    }
}

/// Datasets named by a config.
pub struct ExperimentData {
    pub target: Dataset,
    pub source: Option<Dataset>,
}

impl ExperimentData {
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        let format = config.format();
        let target = load_posts(&config.target, format)?;
        let source = config.source.as_ref().map(|p| load_posts(p, format)).transpose()?;
        Ok(ExperimentData { target, source })
    }
}

/// Builds the method a resolved config describes.
pub fn build_method(config: &ExperimentConfig, data: &ExperimentData, exec: Execution) -> Result<Box<dyn Method>> {
    let kind = config.method_kind()?;
    Ok(match kind {
        MethodKind::Random => Box::new(RandomBaseline),
        MethodKind::BaselineFt | MethodKind::Adapters | MethodKind::Empath => {
            Box::new(FineTune::from_config(config, exec))
        }
        MethodKind::Dccl => Box::new(DcclMethod::from_config(config, exec)),
        MethodKind::PromptShort | MethodKind::PromptLong => {
            let template =
                if kind == MethodKind::PromptShort { PromptTemplate::short() } else { PromptTemplate::long() };
            let gold = merge_all(data);
            let client: Arc<dyn LlmClient> = match config.client.as_deref().unwrap_or("http") {
                "gold_echo" => Arc::new(GoldEchoClient::new(&gold)),
                "inverted" => Arc::new(GoldEchoClient::inverted(&gold)),
                "constant" => Arc::new(ConstantClient(config.client_response.clone().unwrap_or_else(|| "No".into()))),
                _ => Arc::new(HttpClient::from_env()?),
            };
            let fallback = match config.verdict_fallback.as_deref() {
                Some("skip") => VerdictFallback::Skip,
                _ => VerdictFallback::NotDistorted,
            };
            Box::new(PromptMethod {
                name: kind.as_str().into(),
                template,
                client,
                options: ClassifyOptions { fallback, exec, ..ClassifyOptions::default() },
            })
        }
    })
}

fn merge_all(data: &ExperimentData) -> Dataset {
    match &data.source {
        Some(s) => merge_domains(s, &data.target),
        None => data.target.clone(),
    }
}

/// One line of a predictions file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub label: Label,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub probability: Option<f64>,
}

pub fn write_predictions(path: impl AsRef<Path>, records: &[PredictionRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Malformed { line: i + 1, message: e.to_string() }.into())
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub status: String,
    pub config_hash: String,
    pub seed: u64,
    pub crate_version: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failed_stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    /// SHA-256 of each input file.
    pub inputs: BTreeMap<String, String>,
    /// Artifact name to file name; only artifacts that were written.
    pub artifacts: BTreeMap<String, String>,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = toml::from_str(&content).map_err(|e| Error::config("manifest", e.message().to_string()))?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::config("manifest.format", format!("expected {MANIFEST_FORMAT}, got {}", m.format)));
        }
        Ok(m)
    }
}

/// Outcome of [`run_experiment`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: EvalReport,
    pub manifest: Manifest,
    pub out_dir: PathBuf,
}

/// Runs the configured method with k-fold cross-validation on the target and
/// writes `report.csv`, `predictions.jsonl` (out-of-fold), a checkpoint of a
/// model fit on all training data (encoder methods), and `manifest.toml`.
///
/// On failure the manifest is still written with `status = "failed"` and the
/// failing stage.
pub fn run_experiment(config: &ExperimentConfig, out_dir: impl AsRef<Path>, exec: Execution) -> Result<RunOutput> {
    let config = config.resolved()?;
    let out_dir = out_dir.as_ref().to_path_buf();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let mut manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        status: "running".into(),
        config_hash: config.hash(),
        seed: config.seed.unwrap_or(0),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        failed_stage: None,
        error: None,
        inputs: BTreeMap::new(),
        artifacts: BTreeMap::new(),
        config: config.clone(),
    };
    let result = run_stages(&config, &out_dir, exec, &mut manifest);
    match &result {
        Ok(_) => manifest.status = "complete".into(),
        Err(e) => {
            manifest.status = "failed".into();
            if let Error::Stage { stage, .. } = e {
                manifest.failed_stage = Some(stage.clone());
            }
            manifest.error = Some(e.to_string());
        }
    }
    write_manifest(&out_dir, &manifest)?;
    let report = result?;
    Ok(RunOutput { report, manifest, out_dir })
}

fn write_manifest(out_dir: &Path, manifest: &Manifest) -> Result<()> {
    let path = out_dir.join(MANIFEST_FILE);
    let text = toml::to_string(manifest).expect("manifest serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn run_stages(
    config: &ExperimentConfig,
    out_dir: &Path,
    exec: Execution,
    manifest: &mut Manifest,
) -> Result<EvalReport> {
    let stage = |name: &'static str| move |e: Error| e.in_stage(name);
    for (key, path) in [("target", Some(&config.target)), ("source", config.source.as_ref())] {
        if let Some(p) = path {
            manifest.inputs.insert(key.into(), file_sha256(p).map_err(stage("load"))?);
        }
    }
    let data = ExperimentData::load(config).map_err(stage("load"))?;
    let method = build_method(config, &data, exec).map_err(stage("setup"))?;
    let k = config.k.unwrap_or(5);
    let seed = config.seed.unwrap_or(0);
    let cv_seed = crate::seed::derive(seed, "cv");
    let (report, preds) =
        cross_validate_with_predictions(method.as_ref(), data.source.as_ref(), &data.target, k, cv_seed, exec)
            .map_err(stage("cross_validate"))?;

    write_report_csv(out_dir.join(REPORT_FILE), std::slice::from_ref(&report)).map_err(stage("write"))?;
    manifest.artifacts.insert("report".into(), REPORT_FILE.into());
    let records: Vec<PredictionRecord> =
        preds.into_iter().map(|(id, label)| PredictionRecord { id, label, probability: None }).collect();
    write_predictions(out_dir.join(PREDICTIONS_FILE), &records).map_err(stage("write"))?;
    manifest.artifacts.insert("predictions".into(), PREDICTIONS_FILE.into());

    let kind = config.method_kind()?;
    if kind.trains_encoder() {
        let final_seed = crate::seed::derive(seed, "final");
        let mut train = data.source.clone().unwrap_or_else(Dataset::empty);
        if config.train_on_target.unwrap_or(true) || train.is_empty() {
            train = if train.is_empty() { data.target.clone() } else { merge_domains(&train, &data.target) };
        }
        let mut sections = BTreeMap::new();
        let model = if kind == MethodKind::Dccl {
            let (model, state) = DcclMethod::from_config(config, exec)
                .fit(&train, &data.target, final_seed)
                .map_err(stage("final_fit"))?;
            sections.insert("dccl".to_string(), state.to_section());
            model
        } else {
            FineTune::from_config(config, exec).fit(&train, &data.target, final_seed).map_err(stage("final_fit"))?
        };
        checkpoint::save(out_dir.join(CHECKPOINT_FILE), &model, &sections).map_err(stage("write"))?;
        manifest.artifacts.insert("checkpoint".into(), CHECKPOINT_FILE.into());
    }
    Ok(report)
}

/// Re-executes the run a manifest describes into `out_dir`.
pub fn rerun_from_manifest(
    manifest: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    exec: Execution,
) -> Result<RunOutput> {
    let m = Manifest::load(manifest)?;
    for (key, expected) in &m.inputs {
        let path = if key == "target" { Some(&m.config.target) } else { m.config.source.as_ref() };
        if let Some(p) = path {
            if file_sha256(p).ok().as_deref() != Some(expected.as_str()) {
                log::warn!("input {} changed since the recorded run", p.display());
            }
        }
    }
    run_experiment(&m.config, out_dir, exec)
}

/// One pairwise comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model_a: String,
    pub model_b: String,
    pub b: usize,
    pub c: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha_adjusted: f64,
    pub significant: bool,
    pub test: String,
}

/// Name of a predictions file: its stem, or the directory name for the
/// default `predictions.jsonl`.
pub fn run_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if stem == "predictions" {
        if let Some(dir) = path.parent().and_then(Path::file_name) {
            return dir.to_string_lossy().into_owned();
        }
    }
    stem
}

/// All-pairs McNemar tests with Bonferroni correction over the pairs.
pub fn compare_runs(
    runs: &[(String, Vec<PredictionRecord>)],
    gold: &Dataset,
    alpha: f64,
) -> Result<Vec<ComparisonRow>> {
    compare_runs_with(runs, gold, alpha, true)
}

/// [`compare_runs`], optionally testing every pair at the uncorrected alpha.
pub fn compare_runs_with(
    runs: &[(String, Vec<PredictionRecord>)],
    gold: &Dataset,
    alpha: f64,
    correct: bool,
) -> Result<Vec<ComparisonRow>> {
    if runs.len() < 2 {
        return Err(Error::config("predictions", "at least two prediction files are needed"));
    }
    let gold_by_id: HashMap<&str, Label> =
        gold.iter().map(|p| Ok((p.id.as_str(), p.require_label()?))).collect::<Result<_>>()?;
    let reference: Vec<&str> = {
        let mut ids: Vec<&str> = runs[0].1.iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        ids
    };
    let mut aligned = Vec::with_capacity(runs.len());
    for (name, records) in runs {
        let by_id: HashMap<&str, Label> = records.iter().map(|r| (r.id.as_str(), r.label)).collect();
        if by_id.len() != reference.len() || reference.iter().any(|id| !by_id.contains_key(id)) {
            return Err(EvalError::IdMismatch(format!("{name} does not cover the same posts as {}", runs[0].0)).into());
        }
        aligned.push(reference.iter().map(|id| by_id[id]).collect::<Vec<_>>());
    }
    let truth: Vec<Label> = reference
        .iter()
        .map(|id| gold_by_id.get(id).copied().ok_or_else(|| EvalError::IdMismatch(format!("{id} has no gold label"))))
        .collect::<Result<_, _>>()?;

    let mut pairs: Vec<(usize, usize, SignificanceResult)> = Vec::new();
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            pairs.push((i, j, mcnemar(&aligned[i], &aligned[j], &truth)?));
        }
    }
    let p: Vec<f64> = pairs.iter().map(|(_, _, r)| r.p_value).collect();
    let correction = if correct { bonferroni(&p, alpha)? } else { uncorrected(&p, alpha)? };
    Ok(pairs
        .into_iter()
        .zip(correction.reject)
        .map(|((i, j, r), reject)| ComparisonRow {
            model_a: runs[i].0.clone(),
            model_b: runs[j].0.clone(),
            b: r.b,
            c: r.c,
            statistic: r.statistic,
            p_value: r.p_value,
            alpha_adjusted: correction.alpha_adjusted,
            significant: reject,
            test: serde_json::to_value(r.method).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        })
        .collect())
}

fn uncorrected(p: &[f64], alpha: f64) -> Result<BonferroniResult, EvalError> {
    // A single test needs no correction.
    let mut r = bonferroni(&p[..1], alpha)?;
    r.reject = p.iter().map(|&p| p < alpha).collect();
    Ok(r)
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synthetic::labeled_corpus;
    use crate::corpus::{save_jsonl, Domain};

    fn write_data(dir: &Path) -> PathBuf {
        let path = dir.join("kt.jsonl");
        save_jsonl(&labeled_corpus(Domain::KT, 30, 20, 0.1, 4), &path).unwrap();
        path
    }

    #[test]
    fn unknown_method_is_a_config_error() {
        let cfg = ExperimentConfig { method: "magic".into(), target: "x.jsonl".into(), ..Default::default() };
        let err = cfg.resolved().unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "method"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn defaults_follow_presets_and_overlay_wins() {
        let cfg =
            ExperimentConfig::from_toml("method = \"dccl\"\ntarget = \"kt.jsonl\"\nsource = \"en.jsonl\"\n").unwrap();
        let r = cfg.resolved().unwrap();
        assert_eq!((r.learning_rate, r.epochs, r.weight_decay), (Some(1e-5), Some(3), Some(0.01)));
        assert_eq!((r.loop2_learning_rate, r.loop2_epochs), (Some(2e-5), Some(2)));
        assert_eq!((r.alpha, r.beta, r.lambda), (Some(1e-3), Some(5.0), Some(3e-2)));
        assert_eq!(r.train_on_target, Some(true));
        let flags = ExperimentConfig { seed: Some(9), epochs: Some(1), ..Default::default() };
        let r = cfg.overlay(&flags).resolved().unwrap();
        assert_eq!((r.seed, r.epochs), (Some(9), Some(1)));
        let a =
            ExperimentConfig::from_toml("method = \"adapters\"\ntarget = \"kt.jsonl\"").unwrap().resolved().unwrap();
        assert_eq!((a.learning_rate, a.epochs, a.adapter_width), (Some(1e-4), Some(6), Some(64)));
        assert!(ExperimentConfig::from_toml("method = \"random\"\ntarget = \"a\"\nbogus = 1").is_err());
    }

    #[test]
    fn random_run_is_reproducible_from_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let target = write_data(dir.path());
        let cfg = ExperimentConfig { method: "random".into(), target, seed: Some(3), ..Default::default() };
        let first = run_experiment(&cfg, dir.path().join("a"), Execution::default()).unwrap();
        assert_eq!(first.manifest.status, "complete");
        assert!((0.3..0.7).contains(&first.report.mean.f1));
        let again =
            rerun_from_manifest(dir.path().join("a").join(MANIFEST_FILE), dir.path().join("b"), Execution::Sequential)
                .unwrap();
        assert_eq!(again.manifest.config_hash, first.manifest.config_hash);
        let read = |d: &str| std::fs::read(dir.path().join(d).join(REPORT_FILE)).unwrap();
        assert_eq!(read("a"), read("b"));
    }

    #[test]
    fn failed_runs_leave_a_flagged_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            method: "random".into(),
            target: dir.path().join("missing.jsonl"),
            ..Default::default()
        };
        let err = run_experiment(&cfg, dir.path().join("out"), Execution::default()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        let m = Manifest::load(dir.path().join("out").join(MANIFEST_FILE)).unwrap();
        assert_eq!(m.status, "failed");
        assert_eq!(m.failed_stage.as_deref(), Some("load"));
        assert!(m.artifacts.is_empty());
    }

    #[test]
    fn comparisons() {
        let gold = labeled_corpus(Domain::KT, 30, 20, 0.1, 4);
        let echo: Vec<PredictionRecord> = gold
            .iter()
            .map(|p| PredictionRecord { id: p.id.clone(), label: p.label.unwrap(), probability: None })
            .collect();
        let rows = compare_runs(&[("a".into(), echo.clone()), ("b".into(), echo.clone())], &gold, 0.05).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].p_value, rows[0].significant, rows[0].alpha_adjusted), (1.0, false, 0.05));

        let flipped: Vec<PredictionRecord> =
            echo.iter().map(|r| PredictionRecord { label: r.label.flip(), ..r.clone() }).collect();
        let three = [("a".into(), echo.clone()), ("b".into(), echo.clone()), ("c".into(), flipped)];
        let rows = compare_runs(&three, &gold, 0.05).unwrap();
        assert_eq!(rows.len(), 3);
        assert!((rows[0].alpha_adjusted - 0.05 / 3.0).abs() < 1e-15);
        assert!(rows[1].significant && rows[2].significant && !rows[0].significant);

        let short = echo[1..].to_vec();
        let err = compare_runs(&[("a".into(), echo), ("b".into(), short)], &gold, 0.05).unwrap_err();
        assert!(matches!(err, Error::Eval(EvalError::IdMismatch(_))));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn run_names() {
        assert_eq!(run_name(Path::new("runs/dccl/predictions.jsonl")), "dccl");
        assert_eq!(run_name(Path::new("x/ft.jsonl")), "ft");
    }
}
