//! Training, evaluation, multi-seed averaging and ablations.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::{alignment_loss, ProjectionParams, DEFAULT_D_ALIGN, DEFAULT_D_EMBED, DEFAULT_T};
use crate::backend::{AlignmentEncoders, BackendBundle, TextEncoder};
use crate::error::{Error, Result};
use crate::face::DEFAULT_ALPHA;
use crate::fusion::{
    build_phrase, build_visual_phrase, pool_phrase, Dropout, FeatureBatch, GateMode, GateParams, Head, LinearHead,
    Prediction, DEFAULT_MAX_LEN, DEFAULT_TEXT_DIM,
};
use crate::imaging::ImageStore;
use crate::metrics::{ConfusionMatrix, Metrics};
use crate::optim::AdamW;
use crate::pipeline::PreparedExample;

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    NoGating,
    NoAlignment,
    NoSceneCaption,
}

impl Ablation {
    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::NoGating => "no_gating",
            Ablation::NoAlignment => "no_alignment",
            Ablation::NoSceneCaption => "no_scene_caption",
        }
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "no_gating" => Ok(Ablation::NoGating),
            "no_alignment" => Ok(Ablation::NoAlignment),
            "no_scene_caption" => Ok(Ablation::NoSceneCaption),
            other => Err(Error::Config(format!(
                "unknown ablation {other:?} (expected no_gating, no_alignment or no_scene_caption)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    #[default]
    Multimodal,
    CaptionOnly,
    VisualOnly,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Multimodal => "multimodal",
            Modality::CaptionOnly => "caption_only",
            Modality::VisualOnly => "visual_only",
        }
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "multimodal" => Ok(Modality::Multimodal),
            "caption_only" => Ok(Modality::CaptionOnly),
            "visual_only" => Ok(Modality::VisualOnly),
            other => Err(Error::Config(format!(
                "unknown modality {other:?} (expected multimodal, caption_only or visual_only)"
            ))),
        }
    }
}

/// The four rows of an ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoGating,
    NoAlignment,
    NoSceneCaption,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::NoGating,
        Variant::NoAlignment,
        Variant::NoSceneCaption,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoGating => "no_gating",
            Variant::NoAlignment => "no_alignment",
            Variant::NoSceneCaption => "no_scene_caption",
        }
    }

    pub fn ablation(self) -> Option<Ablation> {
        match self {
            Variant::Full => None,
            Variant::NoGating => Some(Ablation::NoGating),
            Variant::NoAlignment => Some(Ablation::NoAlignment),
            Variant::NoSceneCaption => Some(Ablation::NoSceneCaption),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub alpha: f64,
    pub t: f64,
    pub max_len: usize,
    pub seed: u64,
    pub ablation: BTreeSet<Ablation>,
    pub modality: Modality,
    pub backend: String,
    pub text_dim: usize,
    pub embed_dim: usize,
    pub align_dim: usize,
    pub weight_decay: f64,
    /// One text encoder for both phrases.
    pub shared_encoder: bool,
    /// `jt * o_dt + (1 - jt) * o_ic` instead of the shared gate.
    pub gate_complement: bool,
    /// Fit the alignment projections on the training split before the head.
    pub train_projection: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-5,
            batch_size: 32,
            dropout: 0.4,
            epochs: 15,
            alpha: DEFAULT_ALPHA,
            t: DEFAULT_T,
            max_len: DEFAULT_MAX_LEN,
            seed: 0,
            ablation: BTreeSet::new(),
            modality: Modality::Multimodal,
            backend: "toy".into(),
            text_dim: DEFAULT_TEXT_DIM,
            embed_dim: DEFAULT_D_EMBED,
            align_dim: DEFAULT_D_ALIGN,
            weight_decay: 0.01,
            shared_encoder: false,
            gate_complement: false,
            train_projection: false,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!("invalid learning_rate {}", self.learning_rate)));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::Config(format!("invalid weight_decay {}", self.weight_decay)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must be in [0, 1], got {}", self.alpha)));
        }
        if !self.t.is_finite() {
            return Err(Error::Config("t must be finite".into()));
        }
        if self.text_dim == 0 || self.embed_dim == 0 || self.align_dim == 0 {
            return Err(Error::Config("dimensions must be >= 1".into()));
        }
        if self.max_len <= crate::fusion::MARKER_COUNT {
            return Err(Error::Config(format!("max_len {} leaves no room for a target", self.max_len)));
        }
        if self.modality == Modality::CaptionOnly && !self.ablation.is_empty() {
            return Err(Error::Config("ablations do not apply to the caption_only modality".into()));
        }
        Ok(())
    }

    pub fn gate_mode(&self) -> GateMode {
        if self.gate_complement {
            GateMode::Complement
        } else {
            GateMode::Shared
        }
    }

    pub fn projection(&self) -> ProjectionParams {
        ProjectionParams::identity(self.embed_dim, self.align_dim, self.t)
    }

    /// Sets one field from its `key=value` spelling.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "learning_rate" | "lr" => self.learning_rate = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "dropout" => self.dropout = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "t" => self.t = parse_value(key, value)?,
            "max_len" => self.max_len = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "ablation" => {
                self.ablation = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty() && *s != "none")
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "modality" => self.modality = value.parse()?,
            "backend" => self.backend = value.to_string(),
            "text_dim" => self.text_dim = parse_value(key, value)?,
            "embed_dim" => self.embed_dim = parse_value(key, value)?,
            "align_dim" | "d_align" => self.align_dim = parse_value(key, value)?,
            "weight_decay" => self.weight_decay = parse_value(key, value)?,
            "shared_encoder" => self.shared_encoder = parse_value(key, value)?,
            "gate_complement" => self.gate_complement = parse_value(key, value)?,
            "train_projection" => self.train_projection = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are ignored.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        c.apply_kv(text)?;
        Ok(c)
    }

    pub fn with_variant(&self, variant: Variant) -> TrainConfig {
        let mut c = self.clone();
        c.ablation = variant.ablation().into_iter().collect();
        c
    }
}

/// What fills the third segment of a phrase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Auxiliary {
    Empty,
    Description,
    SceneCaption,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderSlot {
    Description,
    Scene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseSpec {
    pub caption: bool,
    pub auxiliary: Auxiliary,
    pub encoder: EncoderSlot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Gated,
    Linear,
}

/// Which refined description feeds the description phrase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMode {
    Scored,
    FirstFace,
    Unused,
}

/// The effective computation graph of a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelPlan {
    pub phrases: Vec<PhraseSpec>,
    pub head: HeadKind,
    pub alignment: AlignmentMode,
}

impl ModelPlan {
    pub fn for_config(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let has = |a| config.ablation.contains(&a);
        if config.modality == Modality::CaptionOnly {
            return Ok(ModelPlan {
                phrases: vec![PhraseSpec {
                    caption: true,
                    auxiliary: Auxiliary::Empty,
                    encoder: EncoderSlot::Description,
                }],
                head: HeadKind::Linear,
                alignment: AlignmentMode::Unused,
            });
        }
        let caption = config.modality == Modality::Multimodal;
        Ok(ModelPlan {
            phrases: vec![
                PhraseSpec {
                    caption,
                    auxiliary: Auxiliary::Description,
                    encoder: EncoderSlot::Description,
                },
                PhraseSpec {
                    caption,
                    auxiliary: if has(Ablation::NoSceneCaption) {
                        Auxiliary::Empty
                    } else {
                        Auxiliary::SceneCaption
                    },
                    encoder: EncoderSlot::Scene,
                },
            ],
            head: if has(Ablation::NoGating) {
                HeadKind::Linear
            } else {
                HeadKind::Gated
            },
            alignment: if has(Ablation::NoAlignment) {
                AlignmentMode::FirstFace
            } else {
                AlignmentMode::Scored
            },
        })
    }

    fn encoder<'a>(&self, slot: EncoderSlot, bundle: &'a BackendBundle) -> &'a dyn TextEncoder {
        match slot {
            EncoderSlot::Description => bundle.text_dt.as_ref(),
            EncoderSlot::Scene => bundle.text_ic.as_ref(),
        }
    }

    /// A freshly initialized head for this plan.
    pub fn init_head(&self, bundle: &BackendBundle, mode: GateMode, seed: u64) -> Result<Head> {
        let mut rng = stream(seed, INIT_STREAM);
        let dims: Vec<usize> = self.phrases.iter().map(|p| self.encoder(p.encoder, bundle).dim()).collect();
        match self.head {
            HeadKind::Gated => {
                if dims.len() != 2 || dims[0] != dims[1] {
                    return Err(Error::Config(format!("gated head needs two equal-width inputs, got {dims:?}")));
                }
                Ok(Head::Gated {
                    params: GateParams::init(dims[0], &mut rng),
                    mode,
                })
            }
            HeadKind::Linear => Ok(Head::Linear(LinearHead::zeros(dims.iter().sum()))),
        }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Pooled phrase vectors for a whole split; encoders are frozen, so this is
/// computed once per run.
#[derive(Debug, Clone)]
pub struct EncodedSplit {
    pub ids: Vec<String>,
    pub features: FeatureBatch,
    pub labels: Vec<usize>,
}

impl EncodedSplit {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn rows(&self, idx: &[usize]) -> FeatureBatch {
        FeatureBatch {
            inputs: self.features.inputs.iter().map(|m| m.select(Axis(0), idx)).collect(),
        }
    }
}

pub fn encode_split(
    examples: &[PreparedExample],
    plan: &ModelPlan,
    bundle: &BackendBundle,
    max_len: usize,
) -> Result<EncodedSplit> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("split"));
    }
    let mut inputs = Vec::with_capacity(plan.phrases.len());
    for spec in &plan.phrases {
        let encoder = plan.encoder(spec.encoder, bundle);
        let mut m = Array2::zeros((examples.len(), encoder.dim()));
        for (i, p) in examples.iter().enumerate() {
            let auxiliary = match spec.auxiliary {
                Auxiliary::Empty => "",
                Auxiliary::SceneCaption => p.scene_caption.as_str(),
                Auxiliary::Description => match plan.alignment {
                    AlignmentMode::FirstFace => p.refined_first.text.as_str(),
                    _ => p.refined.text.as_str(),
                },
            };
            let ex = &p.example;
            let phrase = if spec.caption {
                build_phrase(&ex.caption, &ex.target, auxiliary, max_len)?
            } else {
                build_visual_phrase(&ex.target, auxiliary, max_len)?
            };
            m.row_mut(i).assign(&pool_phrase(&phrase, encoder)?);
        }
        inputs.push(m);
    }
    Ok(EncodedSplit {
        ids: examples.iter().map(|p| p.example.id.clone()).collect(),
        features: FeatureBatch { inputs },
        labels: examples.iter().map(|p| p.example.label.index()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's mini-batches, weighted by size.
    pub loss: f64,
    pub train_accuracy: f64,
    pub valid_accuracy: f64,
    pub valid_macro_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Head with the best validation macro-F1 (earliest on ties).
    pub head: Head,
    pub best_epoch: usize,
    pub epochs: Vec<EpochRecord>,
}

pub fn train(config: &TrainConfig, head: Head, train_split: &EncodedSplit, valid_split: &EncodedSplit) -> Result<TrainOutcome> {
    config.validate()?;
    if train_split.is_empty() || valid_split.is_empty() {
        return Err(Error::EmptyInput("split"));
    }
    let mut head = head;
    let mut opt = AdamW::new(config.learning_rate, config.weight_decay);
    let mut shuffle_rng = stream(config.seed, SHUFFLE_STREAM);
    let mut dropout_rng = stream(config.seed, DROPOUT_STREAM);
    let mut order: Vec<usize> = (0..train_split.len()).collect();
    let mut best: Option<(f64, usize, Head)> = None;
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = train_split.rows(idx);
            let labels: Vec<usize> = idx.iter().map(|&i| train_split.labels[i]).collect();
            let mut dropout = if config.dropout > 0.0 {
                Dropout::Active {
                    rate: config.dropout,
                    rng: &mut dropout_rng,
                }
            } else {
                Dropout::Inactive
            };
            let (loss, grads) = head.loss_and_grads(&batch, &labels, &mut dropout).map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged {
                    epoch,
                    batch: b,
                    loss: f64::NAN,
                },
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b, loss });
            }
            total += loss * idx.len() as f64;
            opt.step(&mut head, &grads)?;
        }
        let train_metrics = evaluate(&head, train_split)?;
        let valid_metrics = evaluate(&head, valid_split)?;
        let record = EpochRecord {
            epoch,
            loss: total / train_split.len() as f64,
            train_accuracy: train_metrics.accuracy,
            valid_accuracy: valid_metrics.accuracy,
            valid_macro_f1: valid_metrics.macro_f1,
        };
        log::info!(
            "epoch {epoch}: loss {:.6} train acc {:.4} valid acc {:.4} valid macro-F1 {:.4}",
            record.loss,
            record.train_accuracy,
            record.valid_accuracy,
            record.valid_macro_f1
        );
        if best.as_ref().is_none_or(|(f1, _, _)| record.valid_macro_f1 > *f1) {
            best = Some((record.valid_macro_f1, epoch, head.clone()));
        }
        epochs.push(record);
    }
    let (_, best_epoch, head) = best.expect("at least one epoch");
    Ok(TrainOutcome { head, best_epoch, epochs })
}

pub fn predict(head: &Head, split: &EncodedSplit) -> Result<Vec<Prediction>> {
    if split.is_empty() {
        return Err(Error::EmptyInput("split"));
    }
    head.predict(&split.features)
}

pub fn evaluate(head: &Head, split: &EncodedSplit) -> Result<Metrics> {
    let predictions = predict(head, split)?;
    let mut confusion = ConfusionMatrix::default();
    for (p, &y) in predictions.iter().zip(&split.labels) {
        confusion.0[y][p.predicted.index()] += 1;
    }
    Metrics::from_confusion(confusion)
}

/// Prepared examples for one experiment. `test` falls back to `valid` for
/// reporting when absent.
#[derive(Debug, Clone, Default)]
pub struct PreparedSplits {
    pub train: Vec<PreparedExample>,
    pub valid: Vec<PreparedExample>,
    pub test: Option<Vec<PreparedExample>>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub variant: String,
    pub seed: u64,
    pub plan: ModelPlan,
    pub head: Head,
    pub best_epoch: usize,
    pub epochs: Vec<EpochRecord>,
    pub train: Metrics,
    pub valid: Metrics,
    pub test: Option<Metrics>,
}

impl RunReport {
    /// Test metrics when a test split was given, otherwise validation.
    pub fn reported(&self) -> &Metrics {
        self.test.as_ref().unwrap_or(&self.valid)
    }

    pub fn record(&self) -> MetricsRecord {
        let m = self.reported();
        MetricsRecord {
            variant: self.variant.clone(),
            seed: self.seed,
            accuracy: m.accuracy,
            macro_f1: m.macro_f1,
            per_class_f1: m.per_class_f1,
            confusion: m.confusion,
            best_epoch: self.best_epoch,
            epochs: self.epochs.clone(),
        }
    }
}

/// `metrics.json`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub variant: String,
    pub seed: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: [f64; 3],
    pub confusion: ConfusionMatrix,
    pub best_epoch: usize,
    pub epochs: Vec<EpochRecord>,
}

fn variant_name(config: &TrainConfig) -> String {
    let mut parts: Vec<&str> = Vec::new();
    if config.modality != Modality::Multimodal {
        parts.push(config.modality.as_str());
    }
    parts.extend(config.ablation.iter().map(|a| a.as_str()));
    if parts.is_empty() {
        "full".into()
    } else {
        parts.join("+")
    }
}

/// Encode, train, select and evaluate one configuration.
pub fn run_experiment(config: &TrainConfig, splits: &PreparedSplits, bundle: &BackendBundle) -> Result<RunReport> {
    let plan = ModelPlan::for_config(config)?;
    let train_split = encode_split(&splits.train, &plan, bundle, config.max_len)?;
    let valid_split = encode_split(&splits.valid, &plan, bundle, config.max_len)?;
    let test_split = splits
        .test
        .as_deref()
        .map(|t| encode_split(t, &plan, bundle, config.max_len))
        .transpose()?;
    let head = plan.init_head(bundle, config.gate_mode(), config.seed)?;
    let outcome = train(config, head, &train_split, &valid_split)?;
    Ok(RunReport {
        variant: variant_name(config),
        seed: config.seed,
        train: evaluate(&outcome.head, &train_split)?,
        valid: evaluate(&outcome.head, &valid_split)?,
        test: test_split.as_ref().map(|s| evaluate(&outcome.head, s)).transpose()?,
        plan,
        head: outcome.head,
        best_epoch: outcome.best_epoch,
        epochs: outcome.epochs,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiSeedReport {
    pub runs: Vec<SeedRun>,
    /// Mean over the successful runs.
    pub mean: Option<Metrics>,
    pub failed: bool,
}

/// Runs seeds `seed, seed+1, ...`. A failing run is recorded and the rest
/// still execute.
pub fn run_multi_seed(
    config: &TrainConfig,
    n_runs: usize,
    splits: &PreparedSplits,
    bundle: &BackendBundle,
) -> Result<MultiSeedReport> {
    if n_runs == 0 {
        return Err(Error::Config("n_runs must be >= 1".into()));
    }
    let mut runs = Vec::with_capacity(n_runs);
    for i in 0..n_runs as u64 {
        let mut c = config.clone();
        c.seed = config.seed.wrapping_add(i);
        runs.push(match run_experiment(&c, splits, bundle) {
            Ok(r) => SeedRun {
                seed: c.seed,
                metrics: Some(r.reported().clone()),
                error: None,
            },
            Err(e) => {
                log::error!("seed {} failed: {e}", c.seed);
                SeedRun {
                    seed: c.seed,
                    metrics: None,
                    error: Some(e.to_string()),
                }
            }
        });
    }
    let ok: Vec<Metrics> = runs.iter().filter_map(|r| r.metrics.clone()).collect();
    Ok(MultiSeedReport {
        failed: ok.len() != runs.len(),
        mean: if ok.is_empty() { None } else { Some(Metrics::mean(&ok)?) },
        runs,
    })
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: Variant,
    pub report: RunReport,
}

/// One run per ablation variant, in table order. Ablation flags already set
/// on `base` are replaced by each variant's own.
pub fn run_ablation(base: &TrainConfig, splits: &PreparedSplits, bundle: &BackendBundle) -> Result<Vec<AblationRow>> {
    Variant::ALL
        .iter()
        .map(|&variant| {
            let mut report = run_experiment(&base.with_variant(variant), splits, bundle)?;
            report.variant = variant.as_str().into();
            Ok(AblationRow { variant, report })
        })
        .collect()
}

/// Raw embeddings for fitting the alignment projections.
#[derive(Debug, Clone)]
pub struct AlignmentSample {
    pub image: Vec<f64>,
    pub descriptions: Vec<Vec<f64>>,
    pub gold: usize,
}

/// Multi-face training examples whose gold candidate is the first one
/// carrying the example's label; examples without such a candidate are
/// skipped.
pub fn alignment_samples(
    examples: &[PreparedExample],
    store: &ImageStore,
    encoders: &dyn AlignmentEncoders,
) -> Result<Vec<AlignmentSample>> {
    let mut out = Vec::new();
    for p in examples.iter().filter(|p| p.candidates.len() >= 2) {
        let Some(gold) = p.candidates.iter().position(|c| c.sentiment == p.example.label) else {
            continue;
        };
        let image = encoders.encode_image(&store.load(&p.example.image_ref)?)?;
        let descriptions = p
            .candidates
            .iter()
            .map(|c| crate::alignment::encode_description_with_target(c, &p.example.target, encoders))
            .collect::<Result<_>>()?;
        out.push(AlignmentSample {
            image,
            descriptions,
            gold,
        });
    }
    Ok(out)
}

/// Full-batch AdamW on the alignment cross-entropy, one step per epoch.
/// Returns the fitted projections and the per-epoch mean loss.
pub fn fit_projection(
    config: &TrainConfig,
    samples: &[AlignmentSample],
    init: ProjectionParams,
) -> Result<(ProjectionParams, Vec<f64>)> {
    init.validate()?;
    let mut proj = init;
    if samples.is_empty() {
        return Ok((proj, Vec::new()));
    }
    let mut opt = AdamW::new(config.learning_rate, config.weight_decay);
    let mut losses = Vec::with_capacity(config.epochs);
    let inv = 1.0 / samples.len() as f64;
    for epoch in 1..=config.epochs {
        let mut total = 0.0;
        let mut grads = crate::alignment::ProjectionGrads::zeros(proj.d_embed(), proj.d_align());
        for s in samples {
            let (loss, g) = alignment_loss(&s.image, &s.descriptions, s.gold, &proj)?;
            total += loss * inv;
            grads.v_dt.scaled_add(inv, &g.v_dt);
            grads.v_i.scaled_add(inv, &g.v_i);
        }
        if !total.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: 0,
                loss: total,
            });
        }
        opt.step(&mut proj, &grads)?;
        losses.push(total);
    }
    Ok((proj, losses))
}
