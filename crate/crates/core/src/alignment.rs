//! Target alignment of face descriptions.
//!
//! Each candidate description is joined with the target and embedded by the
//! contrastive text encoder; the image is embedded by its visual encoder.
//! Both sides are projected into a shared space, L2-normalized and compared
//! by an exponentially scaled inner product. The best-scoring candidate is
//! rewritten to mention only the target and its expression.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::backend::{AlignmentEncoders, Captioner};
use crate::dataset::{Example, Label};
use crate::error::{Error, Result};
use crate::face::{indefinite_article, FaceDescription};
use crate::imaging::LoadedImage;

pub const DEFAULT_T: f64 = 4.6;
pub const DEFAULT_D_EMBED: usize = 512;
pub const DEFAULT_D_ALIGN: usize = 512;

/// Projection matrices (`d_embed x d_align`) for the description and image
/// sides, plus the log-scale `t` of the similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams {
    pub v_dt: Array2<f64>,
    pub v_i: Array2<f64>,
    pub t: f64,
}

impl ProjectionParams {
    /// Identity in the leading `min(d_embed, d_align)` block, zero elsewhere.
    pub fn identity(d_embed: usize, d_align: usize, t: f64) -> Self {
        let mut m = Array2::zeros((d_embed, d_align));
        for i in 0..d_embed.min(d_align) {
            m[[i, i]] = 1.0;
        }
        ProjectionParams {
            v_dt: m.clone(),
            v_i: m,
            t,
        }
    }

    pub fn d_embed(&self) -> usize {
        self.v_dt.nrows()
    }

    pub fn d_align(&self) -> usize {
        self.v_dt.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.v_dt.dim() != self.v_i.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.v_dt.len(),
                found: self.v_i.len(),
            });
        }
        if self.d_align() == 0 || self.d_embed() == 0 {
            return Err(Error::Config("projection dimensions must be >= 1".into()));
        }
        if !self.t.is_finite() || self.v_dt.iter().chain(self.v_i.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("projection parameters"));
        }
        Ok(())
    }
}

/// Target-aligned description: "<target> exhibits a <sentiment> expression",
/// or empty when the image had no usable face.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedDescription {
    pub text: String,
    pub source_face_index: Option<usize>,
    pub sentiment: Option<Label>,
}

impl RefinedDescription {
    pub fn empty() -> Self {
        RefinedDescription {
            text: String::new(),
            source_face_index: None,
            sentiment: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.source_face_index.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneCaption {
    pub text: String,
}

impl SceneCaption {
    pub fn token_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

pub fn encode_description_with_target(
    description: &FaceDescription,
    target: &str,
    enc: &dyn AlignmentEncoders,
) -> Result<Vec<f64>> {
    if description.text.trim().is_empty() {
        return Err(Error::EmptyInput("description text"));
    }
    if target.trim().is_empty() {
        return Err(Error::EmptyInput("target"));
    }
    enc.encode_text(&format!("{} {}", description.text, target))
}

/// `(v W) / ||v W||`.
pub fn project_normalize(v: &[f64], w: &Array2<f64>) -> Result<Array1<f64>> {
    if v.len() != w.nrows() {
        return Err(Error::DimensionMismatch {
            expected: w.nrows(),
            found: v.len(),
        });
    }
    let projected = w.t().dot(&ArrayView1::from(v));
    let norm = projected.dot(&projected).sqrt();
    if !norm.is_finite() {
        return Err(Error::NonFinite("projected embedding"));
    }
    if norm == 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    Ok(projected / norm)
}

/// `(image . desc_k) * e^t` for each candidate.
pub fn score_descriptions(image_unit: ArrayView1<f64>, desc_units: &[Array1<f64>], t: f64) -> Result<Vec<f64>> {
    let scale = t.exp();
    desc_units
        .iter()
        .map(|d| {
            if d.len() != image_unit.len() {
                return Err(Error::DimensionMismatch {
                    expected: image_unit.len(),
                    found: d.len(),
                });
            }
            Ok(image_unit.dot(d) * scale)
        })
        .collect()
}

/// Argmax; the lowest index wins ties.
pub fn select_description(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("scores"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores"));
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

pub fn refine_description(description: &FaceDescription, target: &str) -> Result<RefinedDescription> {
    let target = target.trim();
    if target.is_empty() {
        return Err(Error::EmptyInput("target"));
    }
    let word = description.sentiment.as_str();
    Ok(RefinedDescription {
        text: format!("{target} exhibits {} {word} expression", indefinite_article(word)),
        source_face_index: Some(description.face_index),
        sentiment: Some(description.sentiment),
    })
}

pub fn scene_caption(image: &LoadedImage, captioner: &dyn Captioner) -> Result<SceneCaption> {
    if image.is_empty() {
        return Err(Error::EmptyInput("image"));
    }
    Ok(SceneCaption {
        text: captioner.caption(image)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentOutcome {
    pub refined: RefinedDescription,
    /// Present only when two or more candidates were scored.
    pub scores: Option<Vec<f64>>,
}

/// Picks the description that belongs to the example's target. Zero
/// candidates give an empty refinement, one candidate is refined without
/// scoring, and two or more are scored against the image, which is only
/// loaded in that case.
pub fn align_example(
    example: &Example,
    descriptions: &[FaceDescription],
    image: impl FnOnce() -> Result<LoadedImage>,
    enc: &dyn AlignmentEncoders,
    proj: &ProjectionParams,
) -> Result<AlignmentOutcome> {
    match descriptions {
        [] => Ok(AlignmentOutcome {
            refined: RefinedDescription::empty(),
            scores: None,
        }),
        [only] => Ok(AlignmentOutcome {
            refined: refine_description(only, &example.target)?,
            scores: None,
        }),
        many => {
            let image_unit = project_normalize(&enc.encode_image(&image()?)?, &proj.v_i)?;
            let desc_units = many
                .iter()
                .map(|d| {
                    let raw = encode_description_with_target(d, &example.target, enc)?;
                    project_normalize(&raw, &proj.v_dt)
                })
                .collect::<Result<Vec<_>>>()?;
            let scores = score_descriptions(image_unit.view(), &desc_units, proj.t)?;
            let best = select_description(&scores)?;
            Ok(AlignmentOutcome {
                refined: refine_description(&many[best], &example.target)?,
                scores: Some(scores),
            })
        }
    }
}

/// Refinement of the first candidate, skipping alignment entirely.
pub fn first_face_refinement(example: &Example, descriptions: &[FaceDescription]) -> Result<RefinedDescription> {
    match descriptions.first() {
        Some(d) => refine_description(d, &example.target),
        None => Ok(RefinedDescription::empty()),
    }
}

/// Gradients of [`alignment_loss`] with respect to both projections.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionGrads {
    pub v_dt: Array2<f64>,
    pub v_i: Array2<f64>,
}

impl ProjectionGrads {
    pub fn zeros(d_embed: usize, d_align: usize) -> Self {
        ProjectionGrads {
            v_dt: Array2::zeros((d_embed, d_align)),
            v_i: Array2::zeros((d_embed, d_align)),
        }
    }
}

fn normalize_backward(unit: &Array1<f64>, norm: f64, d_unit: &Array1<f64>) -> Array1<f64> {
    (d_unit - &(unit * unit.dot(d_unit))) / norm
}

/// Softmax cross-entropy over the scaled similarity scores with `gold` as
/// the matching candidate. Used to train the projections when they are not
/// frozen; `t` itself stays fixed.
pub fn alignment_loss(
    image_raw: &[f64],
    desc_raws: &[Vec<f64>],
    gold: usize,
    proj: &ProjectionParams,
) -> Result<(f64, ProjectionGrads)> {
    if gold >= desc_raws.len() {
        return Err(Error::Config(format!(
            "gold index {gold} out of range for {} candidates",
            desc_raws.len()
        )));
    }
    let project = |v: &[f64], w: &Array2<f64>| -> Result<(Array1<f64>, f64)> {
        if v.len() != w.nrows() {
            return Err(Error::DimensionMismatch {
                expected: w.nrows(),
                found: v.len(),
            });
        }
        let p = w.t().dot(&ArrayView1::from(v));
        let n = p.dot(&p).sqrt();
        if n == 0.0 {
            return Err(Error::DegenerateEmbedding);
        }
        Ok((p / n, n))
    };
    let (u_i, n_i) = project(image_raw, &proj.v_i)?;
    let descs = desc_raws
        .iter()
        .map(|d| project(d, &proj.v_dt))
        .collect::<Result<Vec<_>>>()?;
    let scale = proj.t.exp();
    let scores: Vec<f64> = descs.iter().map(|(u, _)| u_i.dot(u) * scale).collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = -(exps[gold] / z).ln();

    let mut grads = ProjectionGrads::zeros(proj.d_embed(), proj.d_align());
    let mut d_ui = Array1::zeros(u_i.len());
    for (k, ((u_k, n_k), raw)) in descs.iter().zip(desc_raws).enumerate() {
        let ds = exps[k] / z - if k == gold { 1.0 } else { 0.0 };
        d_ui.scaled_add(ds * scale, u_k);
        let dp_k = normalize_backward(u_k, *n_k, &(&u_i * (ds * scale)));
        add_outer(&mut grads.v_dt, raw, &dp_k);
    }
    let dp_i = normalize_backward(&u_i, n_i, &d_ui);
    add_outer(&mut grads.v_i, image_raw, &dp_i);
    Ok((loss, grads))
}

fn add_outer(acc: &mut Array2<f64>, left: &[f64], right: &Array1<f64>) {
    for (mut row, l) in acc.rows_mut().into_iter().zip(left) {
        row.scaled_add(*l, right);
    }
}
