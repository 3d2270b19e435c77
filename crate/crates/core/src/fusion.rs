//! Gated fusion classifier.
//!
//! Two phrases are built per example, `[CLS] caption [SEP] target [SEP]
//! auxiliary [SEP]`, one with the refined face description and one with the
//! scene caption as auxiliary segment. Their pooled vectors `o_dt`, `o_ic`
//! are fused as
//!
//! ```text
//! jt    = tanh(V_dt o_dt + V_ic o_ic + b_j)
//! fused = jt * o_dt + jt * o_ic
//! p     = softmax(V^T fused + b)
//! ```
//!
//! and trained with mean cross-entropy. Gradients are computed analytically
//! for the head parameters; encoders are frozen.

use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::{RefinedDescription, SceneCaption};
use crate::backend::TextEncoder;
use crate::dataset::{Example, Label};
use crate::error::{Error, Result};

pub const CLS_TOKEN: &str = "[CLS]";
pub const SEP_TOKEN: &str = "[SEP]";
pub const MARKER_COUNT: usize = 4;
pub const DEFAULT_MAX_LEN: usize = 128;
pub const DEFAULT_TEXT_DIM: usize = 768;
pub const NUM_CLASSES: usize = 3;
/// Floor applied to the true-class probability inside the log.
pub const LOG_FLOOR: f64 = 1e-12;

/// Marker tokens are reserved; literal occurrences in user text are lowercased.
fn sanitize(token: &str) -> String {
    if token == CLS_TOKEN || token == SEP_TOKEN {
        token.to_lowercase()
    } else {
        token.to_string()
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(sanitize).collect()
}

/// A three-segment phrase; markers are implicit and added on serialization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusionPhrase {
    pub caption: Vec<String>,
    pub target: Vec<String>,
    pub auxiliary: Vec<String>,
}

impl FusionPhrase {
    pub fn tokens(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.len());
        out.push(CLS_TOKEN);
        out.extend(self.caption.iter().map(String::as_str));
        out.push(SEP_TOKEN);
        out.extend(self.target.iter().map(String::as_str));
        out.push(SEP_TOKEN);
        out.extend(self.auxiliary.iter().map(String::as_str));
        out.push(SEP_TOKEN);
        out
    }

    pub fn serialize(&self) -> String {
        self.tokens().join(" ")
    }

    pub fn len(&self) -> usize {
        self.caption.len() + self.target.len() + self.auxiliary.len() + MARKER_COUNT
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl std::fmt::Display for FusionPhrase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.serialize())
    }
}

/// Builds `[CLS] caption [SEP] target [SEP] auxiliary [SEP]` within
/// `max_len` tokens. The caption is truncated first, then the auxiliary
/// segment; the target never is.
pub fn build_phrase(caption: &str, target: &str, auxiliary: &str, max_len: usize) -> Result<FusionPhrase> {
    if caption.trim().is_empty() {
        return Err(Error::EmptyInput("caption"));
    }
    assemble(caption, target, auxiliary, max_len)
}

/// Phrase with an empty caption segment, for the visual-only modality.
pub fn build_visual_phrase(target: &str, auxiliary: &str, max_len: usize) -> Result<FusionPhrase> {
    assemble("", target, auxiliary, max_len)
}

fn assemble(caption: &str, target: &str, auxiliary: &str, max_len: usize) -> Result<FusionPhrase> {
    let target = tokenize(target);
    if target.is_empty() {
        return Err(Error::EmptyInput("target"));
    }
    if target.len() + MARKER_COUNT > max_len {
        return Err(Error::TargetTooLong {
            target_tokens: target.len(),
            max_len,
        });
    }
    let mut caption = tokenize(caption);
    let mut auxiliary = tokenize(auxiliary);
    let budget = max_len - MARKER_COUNT - target.len();
    if caption.len() + auxiliary.len() > budget {
        caption.truncate(budget.saturating_sub(auxiliary.len()));
        auxiliary.truncate(budget - caption.len());
    }
    Ok(FusionPhrase {
        caption,
        target,
        auxiliary,
    })
}

pub fn pool_phrase(phrase: &FusionPhrase, encoder: &dyn TextEncoder) -> Result<Array1<f64>> {
    let v = encoder.pool(phrase)?;
    if v.len() != encoder.dim() {
        return Err(Error::DimensionMismatch {
            expected: encoder.dim(),
            found: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("pooled phrase vector"));
    }
    Ok(Array1::from(v))
}

/// How the gate weights the two pooled vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// `jt * o_dt + jt * o_ic`, the same gate on both terms.
    #[default]
    Shared,
    /// `jt * o_dt + (1 - jt) * o_ic`. Experimental alternative.
    Complement,
}

/// Gate and classifier weights. Also used to hold their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    /// `d x d`
    pub v_dt: Array2<f64>,
    /// `d x d`
    pub v_ic: Array2<f64>,
    /// `d`
    pub b_j: Array1<f64>,
    /// `d x 3`
    pub v: Array2<f64>,
    /// `3`
    pub b: Array1<f64>,
}

impl GateParams {
    pub fn zeros(d: usize) -> Self {
        GateParams {
            v_dt: Array2::zeros((d, d)),
            v_ic: Array2::zeros((d, d)),
            b_j: Array1::zeros(d),
            v: Array2::zeros((d, NUM_CLASSES)),
            b: Array1::zeros(NUM_CLASSES),
        }
    }

    /// Uniform in `[-1/sqrt(d), 1/sqrt(d))` for every entry.
    pub fn random(d: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (d as f64).sqrt();
        let mut p = GateParams::zeros(d);
        for x in p.v_dt.iter_mut().chain(p.v_ic.iter_mut()).chain(p.b_j.iter_mut()) {
            *x = rng.random_range(-bound..bound);
        }
        for x in p.v.iter_mut().chain(p.b.iter_mut()) {
            *x = rng.random_range(-bound..bound);
        }
        p
    }

    /// Training initialization: gate matrices uniform in `[-1/sqrt(d),
    /// 1/sqrt(d))`, gate bias 1 so the gate starts open, classifier zero.
    pub fn init(d: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (d as f64).sqrt();
        let mut p = GateParams::zeros(d);
        for x in p.v_dt.iter_mut().chain(p.v_ic.iter_mut()) {
            *x = rng.random_range(-bound..bound);
        }
        p.b_j.fill(1.0);
        p
    }

    pub fn dim(&self) -> usize {
        self.b_j.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.v_dt.dim() != (d, d) || self.v_ic.dim() != (d, d) || self.v.dim() != (d, NUM_CLASSES) || self.b.len() != NUM_CLASSES {
            return Err(Error::Config("inconsistent gate parameter shapes".into()));
        }
        if self.tensors().iter().any(|(t, _)| t.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("gate parameters"));
        }
        Ok(())
    }

    pub fn tensors(&self) -> Vec<(&[f64], bool)> {
        vec![
            (self.v_dt.as_slice().expect("standard layout"), true),
            (self.v_ic.as_slice().expect("standard layout"), true),
            (self.b_j.as_slice().expect("standard layout"), false),
            (self.v.as_slice().expect("standard layout"), true),
            (self.b.as_slice().expect("standard layout"), false),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&mut [f64], bool)> {
        vec![
            (self.v_dt.as_slice_mut().expect("standard layout"), true),
            (self.v_ic.as_slice_mut().expect("standard layout"), true),
            (self.b_j.as_slice_mut().expect("standard layout"), false),
            (self.v.as_slice_mut().expect("standard layout"), true),
            (self.b.as_slice_mut().expect("standard layout"), false),
        ]
    }
}

/// Linear classifier over the concatenated pooled vectors, used when the
/// gate is ablated and for single-phrase modalities.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    /// `k x 3`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl LinearHead {
    pub fn zeros(inputs: usize) -> Self {
        LinearHead {
            w: Array2::zeros((inputs, NUM_CLASSES)),
            b: Array1::zeros(NUM_CLASSES),
        }
    }

    pub fn random(inputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut h = LinearHead::zeros(inputs);
        for x in h.w.iter_mut().chain(h.b.iter_mut()) {
            *x = rng.random_range(-bound..bound);
        }
        h
    }

    pub fn inputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn tensors(&self) -> Vec<(&[f64], bool)> {
        vec![
            (self.w.as_slice().expect("standard layout"), true),
            (self.b.as_slice().expect("standard layout"), false),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&mut [f64], bool)> {
        vec![
            (self.w.as_slice_mut().expect("standard layout"), true),
            (self.b.as_slice_mut().expect("standard layout"), false),
        ]
    }
}

/// Elementwise gate and fused vector for one example.
pub fn gate_fuse(o_dt: ArrayView1<f64>, o_ic: ArrayView1<f64>, params: &GateParams) -> Result<(Array1<f64>, Array1<f64>)> {
    gate_fuse_with(o_dt, o_ic, params, GateMode::Shared)
}

pub fn gate_fuse_with(
    o_dt: ArrayView1<f64>,
    o_ic: ArrayView1<f64>,
    params: &GateParams,
    mode: GateMode,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let d = params.dim();
    for v in [&o_dt, &o_ic] {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: v.len(),
            });
        }
    }
    let jt = (params.v_dt.dot(&o_dt) + params.v_ic.dot(&o_ic) + &params.b_j).mapv(f64::tanh);
    let fused = match mode {
        GateMode::Shared => &jt * &o_dt + &jt * &o_ic,
        GateMode::Complement => &jt * &o_dt + &jt.mapv(|j| 1.0 - j) * &o_ic,
    };
    Ok((jt, fused))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub probabilities: [f64; NUM_CLASSES],
    pub predicted: Label,
}

impl Prediction {
    pub fn from_logits(logits: [f64; NUM_CLASSES]) -> Result<Self> {
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("logits"));
        }
        let probabilities = softmax(logits);
        Ok(Prediction {
            probabilities,
            predicted: Label::from_index(argmax(&probabilities))?,
        })
    }
}

pub fn softmax(logits: [f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.map(|z| (z - max).exp());
    let sum: f64 = exps.iter().sum();
    exps.map(|e| e / sum)
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Dropout on the classifier input. `Active` draws an inverted-dropout mask.
pub enum Dropout<'a> {
    Inactive,
    Active { rate: f64, rng: &'a mut ChaCha8Rng },
}

impl Dropout<'_> {
    fn mask(&mut self, rows: usize, cols: usize) -> Option<Array2<f64>> {
        match self {
            Dropout::Inactive => None,
            Dropout::Active { rate, rng } => {
                let keep = 1.0 / (1.0 - *rate);
                Some(Array2::from_shape_fn((rows, cols), |_| {
                    if rng.random::<f64>() < *rate {
                        0.0
                    } else {
                        keep
                    }
                }))
            }
        }
    }
}

/// Softmax classifier over the fused vector.
pub fn classify(fused: ArrayView1<f64>, v: &Array2<f64>, b: &Array1<f64>, dropout: &mut Dropout) -> Result<Prediction> {
    if fused.len() != v.nrows() {
        return Err(Error::DimensionMismatch {
            expected: v.nrows(),
            found: fused.len(),
        });
    }
    if v.ncols() != NUM_CLASSES || b.len() != NUM_CLASSES {
        return Err(Error::DimensionMismatch {
            expected: NUM_CLASSES,
            found: b.len(),
        });
    }
    let input = match dropout.mask(1, fused.len()) {
        Some(m) => &fused * &m.row(0),
        None => fused.to_owned(),
    };
    let z = v.t().dot(&input) + b;
    Prediction::from_logits([z[0], z[1], z[2]])
}

fn check_probabilities(p: &[f64; NUM_CLASSES]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidProbabilities(format!("{p:?}")));
    }
    Ok(())
}

/// Mean negative log-probability of the true labels.
pub fn batch_loss(probabilities: &[[f64; NUM_CLASSES]], labels: &[usize]) -> Result<f64> {
    if probabilities.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    if probabilities.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: probabilities.len(),
            found: labels.len(),
        });
    }
    let mut total = 0.0;
    for (p, &y) in probabilities.iter().zip(labels) {
        check_probabilities(p)?;
        let py = *p.get(y).ok_or_else(|| Error::UnknownLabel(y.to_string()))?;
        total -= py.max(LOG_FLOOR).ln();
    }
    Ok(total / probabilities.len() as f64)
}

/// Classifier head: the gate, or a plain linear layer over concatenated inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Gated { params: GateParams, mode: GateMode },
    Linear(LinearHead),
}

/// Pooled inputs for a batch: one `batch x d` matrix per phrase.
#[derive(Debug, Clone)]
pub struct FeatureBatch {
    pub inputs: Vec<Array2<f64>>,
}

impl FeatureBatch {
    pub fn rows(&self) -> usize {
        self.inputs.first().map_or(0, |m| m.nrows())
    }

    pub fn from_examples<'a>(examples: impl IntoIterator<Item = &'a [Array1<f64>]>) -> Result<Self> {
        let rows: Vec<&[Array1<f64>]> = examples.into_iter().collect();
        let arity = rows.first().map_or(0, |r| r.len());
        let mut inputs = Vec::with_capacity(arity);
        for k in 0..arity {
            let views = rows
                .iter()
                .map(|r| r.get(k).map(|v| v.view().insert_axis(Axis(0))).ok_or(Error::DimensionMismatch { expected: arity, found: r.len() }))
                .collect::<Result<Vec<_>>>()?;
            inputs.push(concatenate(Axis(0), &views).map_err(|e| Error::Config(e.to_string()))?);
        }
        Ok(FeatureBatch { inputs })
    }
}

fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut p = z.clone();
    for mut row in p.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| (x - max).exp());
        let s = row.sum();
        row.mapv_inplace(|x| x / s);
    }
    p
}

struct GatedCache {
    jt: Array2<f64>,
    mix: Array2<f64>,
    fused: Array2<f64>,
}

fn gated_forward(params: &GateParams, mode: GateMode, x: &Array2<f64>, y: &Array2<f64>) -> GatedCache {
    let a = x.dot(&params.v_dt.t()) + y.dot(&params.v_ic.t()) + &params.b_j;
    let jt = a.mapv(f64::tanh);
    let (mix, fused) = match mode {
        GateMode::Shared => {
            let s = x + y;
            let f = &jt * &s;
            (s, f)
        }
        GateMode::Complement => {
            let s = x - y;
            let f = &jt * &s + y;
            (s, f)
        }
    };
    GatedCache { jt, mix, fused }
}

impl Head {
    pub fn gated(params: GateParams) -> Self {
        Head::Gated {
            params,
            mode: GateMode::Shared,
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Head::Gated { .. } => 2,
            Head::Linear(h) => h.inputs(),
        }
    }

    pub fn zeros_like(&self) -> Head {
        match self {
            Head::Gated { params, mode } => Head::Gated {
                params: GateParams::zeros(params.dim()),
                mode: *mode,
            },
            Head::Linear(h) => Head::Linear(LinearHead::zeros(h.inputs())),
        }
    }

    pub fn tensors(&self) -> Vec<(&[f64], bool)> {
        match self {
            Head::Gated { params, .. } => params.tensors(),
            Head::Linear(h) => h.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<(&mut [f64], bool)> {
        match self {
            Head::Gated { params, .. } => params.tensors_mut(),
            Head::Linear(h) => h.tensors_mut(),
        }
    }

    fn check_batch(&self, batch: &FeatureBatch) -> Result<()> {
        match self {
            Head::Gated { params, .. } => {
                if batch.inputs.len() != 2 {
                    return Err(Error::DimensionMismatch {
                        expected: 2,
                        found: batch.inputs.len(),
                    });
                }
                for m in &batch.inputs {
                    if m.ncols() != params.dim() {
                        return Err(Error::DimensionMismatch {
                            expected: params.dim(),
                            found: m.ncols(),
                        });
                    }
                }
            }
            Head::Linear(h) => {
                let width: usize = batch.inputs.iter().map(|m| m.ncols()).sum();
                if width != h.inputs() {
                    return Err(Error::DimensionMismatch {
                        expected: h.inputs(),
                        found: width,
                    });
                }
            }
        }
        if batch.inputs.iter().any(|m| m.nrows() != batch.rows()) {
            return Err(Error::Config("ragged feature batch".into()));
        }
        Ok(())
    }

    fn classifier_input(&self, batch: &FeatureBatch) -> Result<(Array2<f64>, Option<GatedCache>)> {
        match self {
            Head::Gated { params, mode } => {
                let c = gated_forward(params, *mode, &batch.inputs[0], &batch.inputs[1]);
                Ok((c.fused.clone(), Some(c)))
            }
            Head::Linear(_) => {
                let views: Vec<_> = batch.inputs.iter().map(|m| m.view()).collect();
                let f = concatenate(Axis(1), &views).map_err(|e| Error::Config(e.to_string()))?;
                Ok((f, None))
            }
        }
    }

    fn classifier(&self) -> (&Array2<f64>, &Array1<f64>) {
        match self {
            Head::Gated { params, .. } => (&params.v, &params.b),
            Head::Linear(h) => (&h.w, &h.b),
        }
    }

    /// Inference-mode predictions for every row of the batch.
    pub fn predict(&self, batch: &FeatureBatch) -> Result<Vec<Prediction>> {
        self.check_batch(batch)?;
        let (input, _) = self.classifier_input(batch)?;
        let (w, b) = self.classifier();
        let z = input.dot(w) + b;
        z.rows()
            .into_iter()
            .map(|r| Prediction::from_logits([r[0], r[1], r[2]]))
            .collect()
    }

    /// Mean cross-entropy and its gradient with respect to every head
    /// parameter. The gradient has the same shape as `self`.
    pub fn loss_and_grads(&self, batch: &FeatureBatch, labels: &[usize], dropout: &mut Dropout) -> Result<(f64, Head)> {
        self.check_batch(batch)?;
        let n = batch.rows();
        if n == 0 {
            return Err(Error::EmptyInput("batch"));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: labels.len(),
            });
        }
        let (input, cache) = self.classifier_input(batch)?;
        let mask = dropout.mask(input.nrows(), input.ncols());
        let dropped = match &mask {
            Some(m) => &input * m,
            None => input,
        };
        let (w, b) = self.classifier();
        let z = dropped.dot(w) + b;
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("logits"));
        }
        let p = softmax_rows(&z);

        let mut loss = 0.0;
        let mut dz = p.clone();
        for (i, &y) in labels.iter().enumerate() {
            if y >= NUM_CLASSES {
                return Err(Error::UnknownLabel(y.to_string()));
            }
            let py = p[[i, y]];
            loss -= py.max(LOG_FLOOR).ln();
            if py < LOG_FLOOR {
                dz.row_mut(i).fill(0.0);
            } else {
                dz[[i, y]] -= 1.0;
            }
        }
        let inv_n = 1.0 / n as f64;
        loss *= inv_n;
        dz.mapv_inplace(|x| x * inv_n);

        let d_w = dropped.t().dot(&dz);
        let d_b = dz.sum_axis(Axis(0));
        let grads = match self {
            Head::Linear(_) => Head::Linear(LinearHead { w: d_w, b: d_b }),
            Head::Gated { params, mode } => {
                let cache = cache.expect("gated cache");
                let mut d_in = dz.dot(&params.v.t());
                if let Some(m) = &mask {
                    d_in *= m;
                }
                let d_jt = &d_in * &cache.mix;
                let d_a = &d_jt * &cache.jt.mapv(|j| 1.0 - j * j);
                Head::Gated {
                    params: GateParams {
                        v_dt: d_a.t().dot(&batch.inputs[0]),
                        v_ic: d_a.t().dot(&batch.inputs[1]),
                        b_j: d_a.sum_axis(Axis(0)),
                        v: d_w,
                        b: d_b,
                    },
                    mode: *mode,
                }
            }
        };
        if grads.tensors().iter().any(|(t, _)| t.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("gradients"));
        }
        Ok((loss, grads))
    }
}

/// Loss and gradients of the gated head for pooled inputs `o_dt`, `o_ic`
/// (`batch x d` each).
pub fn gradients(
    o_dt: &Array2<f64>,
    o_ic: &Array2<f64>,
    labels: &[usize],
    params: &GateParams,
    mode: GateMode,
) -> Result<(f64, GateParams)> {
    let head = Head::Gated {
        params: params.clone(),
        mode,
    };
    let batch = FeatureBatch {
        inputs: vec![o_dt.clone(), o_ic.clone()],
    };
    match head.loss_and_grads(&batch, labels, &mut Dropout::Inactive)? {
        (loss, Head::Gated { params, .. }) => Ok((loss, params)),
        _ => unreachable!("gated head yields gated gradients"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub max_len: usize,
    pub mode: GateMode,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            max_len: DEFAULT_MAX_LEN,
            mode: GateMode::Shared,
        }
    }
}

/// Full inference for one example from prepared upstream outputs.
pub fn forward(
    example: &Example,
    refined: &RefinedDescription,
    scene: &SceneCaption,
    encoder_dt: &dyn TextEncoder,
    encoder_ic: &dyn TextEncoder,
    params: &GateParams,
    config: &FusionConfig,
) -> Result<Prediction> {
    let phrase_dt = build_phrase(&example.caption, &example.target, &refined.text, config.max_len)?;
    let phrase_ic = build_phrase(&example.caption, &example.target, &scene.text, config.max_len)?;
    let o_dt = pool_phrase(&phrase_dt, encoder_dt)?;
    let o_ic = pool_phrase(&phrase_ic, encoder_ic)?;
    let (_, fused) = gate_fuse_with(o_dt.view(), o_ic.view(), params, config.mode)?;
    classify(fused.view(), &params.v, &params.b, &mut Dropout::Inactive)
}
