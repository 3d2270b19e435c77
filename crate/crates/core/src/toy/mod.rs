//! Deterministic stand-ins for the perception and language-model backends.
//!
//! Perception is driven by sidecar annotations (one JSON object per image,
//! keyed by `image_ref`), so every pipeline value can be checked by hand.
//! Text and image embeddings come from [`ToyEncoderRule`].
//!
//! # Hash rule
//!
//! For a text, split on Unicode whitespace (tokens are used verbatim, no case
//! folding). For each token:
//!
//! 1. `h = FNV-1a-64(token UTF-8 bytes)` (offset basis `0xcbf29ce484222325`,
//!    prime `0x100000001b3`);
//! 2. `state = h XOR seed`;
//! 3. for `i` in `0..dim`: advance `state` by SplitMix64 (increment
//!    `0x9E3779B97F4A7C15`, mixers `0xBF58476D1CE4E5B9` / `0x94D049BB133111EB`,
//!    shifts 30/27/31) to get `z`, and set `v[i] = (z >> 11) * 2^-53 * 2 - 1`.
//!
//! The embedding is the sum of the token vectors, accumulated in token order,
//! divided by `sqrt(n)` for `n` tokens. Each coordinate then has the same
//! spread whatever the text length. The empty text maps to the zero vector.

mod fixture;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use fixture::{generate_fixture, FixtureLayout, FixtureSpec};

use crate::backend::{
    AlignmentEncoders, BackendBundle, BackendIdentity, BackendOptions, Captioner, FaceAnalyzer, FaceDetector,
    TextEncoder,
};
use crate::error::{Error, Result};
use crate::face::{BBox, FaceAttributes, FaceRecord, FaceRegion};
use crate::fusion::FusionPhrase;
use crate::imaging::LoadedImage;

/// Rule seed of the toy contrastive encoder pair.
pub const ALIGN_SEED: u64 = 0x7A11_6E00;
/// Rule seed of the description-phrase text encoder.
pub const TEXT_DT_SEED: u64 = 0x7E47_0001;
/// Rule seed of the scene-caption-phrase text encoder.
pub const TEXT_IC_SEED: u64 = 0x7E47_0002;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyEncoderRule {
    pub seed: u64,
    pub dim: usize,
}

impl ToyEncoderRule {
    pub fn new(seed: u64, dim: usize) -> Self {
        ToyEncoderRule { seed, dim }
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut state = fnv1a64(token.as_bytes()) ^ self.seed;
        (0..self.dim)
            .map(|_| ((splitmix64(&mut state) >> 11) as f64) * (1.0 / (1u64 << 53) as f64) * 2.0 - 1.0)
            .collect()
    }

    pub fn embed(&self, text: &str) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        let mut n = 0usize;
        for token in text.split_whitespace() {
            for (a, v) in acc.iter_mut().zip(self.token_vector(token)) {
                *a += v;
            }
            n += 1;
        }
        if n > 0 {
            let scale = (n as f64).sqrt();
            acc.iter_mut().for_each(|a| *a /= scale);
        }
        acc
    }
}

pub fn toy_embed(text: &str, rule: &ToyEncoderRule) -> Vec<f64> {
    rule.embed(text)
}

/// Sidecar ground truth for one image.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageAnnotation {
    pub id: String,
    #[serde(default)]
    pub faces: Vec<FaceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_caption: Option<String>,
    /// Text the toy visual encoder embeds in place of pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual_text: Option<String>,
}

impl ImageAnnotation {
    pub fn visual_string(&self) -> &str {
        self.visual_text
            .as_deref()
            .or(self.scene_caption.as_deref())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, Default)]
pub struct ToyAnnotations {
    by_image: HashMap<String, ImageAnnotation>,
}

impl ToyAnnotations {
    pub fn new(annotations: impl IntoIterator<Item = ImageAnnotation>) -> Self {
        ToyAnnotations {
            by_image: annotations.into_iter().map(|a| (a.id.clone(), a)).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut out = Vec::new();
        for (offset, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let a: ImageAnnotation = serde_json::from_str(&line).map_err(|e| Error::Malformed {
                source_name: path.display().to_string(),
                offset,
                reason: e.to_string(),
            })?;
            out.push(a);
        }
        Ok(ToyAnnotations::new(out))
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageAnnotation> {
        self.by_image.get(image_id)
    }

    pub fn len(&self) -> usize {
        self.by_image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_image.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ToyDetector {
    annotations: Arc<ToyAnnotations>,
}

impl ToyDetector {
    pub fn new(annotations: Arc<ToyAnnotations>) -> Self {
        ToyDetector { annotations }
    }
}

impl FaceDetector for ToyDetector {
    fn detect(&self, image: &LoadedImage) -> Result<Vec<BBox>> {
        Ok(self
            .annotations
            .get(&image.id)
            .map(|a| a.faces.iter().map(|f| f.bbox).collect())
            .unwrap_or_default())
    }
}

/// Copies the sidecar attributes of the face whose box matches.
#[derive(Debug, Clone)]
pub struct ToyAnalyzer {
    annotations: Arc<ToyAnnotations>,
    min_side: u32,
}

impl ToyAnalyzer {
    pub fn new(annotations: Arc<ToyAnnotations>) -> Self {
        ToyAnalyzer {
            annotations,
            min_side: 1,
        }
    }

    pub fn with_min_side(mut self, min_side: u32) -> Self {
        self.min_side = min_side;
        self
    }
}

impl FaceAnalyzer for ToyAnalyzer {
    fn min_crop_side(&self) -> u32 {
        self.min_side
    }

    fn analyze(&self, face: &FaceRegion) -> Result<FaceAttributes> {
        self.annotations
            .get(&face.image_id)
            .and_then(|a| a.faces.iter().find(|f| f.bbox == face.bbox))
            .map(FaceRecord::attributes)
            .ok_or_else(|| {
                Error::Backend(format!(
                    "no annotation for face {:?} of image {}",
                    <[u32; 4]>::from(face.bbox),
                    face.image_id
                ))
            })
    }
}

#[derive(Debug, Clone)]
pub struct ToyCaptioner {
    annotations: Arc<ToyAnnotations>,
}

impl ToyCaptioner {
    pub fn new(annotations: Arc<ToyAnnotations>) -> Self {
        ToyCaptioner { annotations }
    }
}

impl Captioner for ToyCaptioner {
    fn caption(&self, image: &LoadedImage) -> Result<String> {
        Ok(self
            .annotations
            .get(&image.id)
            .and_then(|a| a.scene_caption.clone())
            .unwrap_or_default())
    }
}

/// Text side embeds the text; image side embeds the image's sidecar visual
/// string with the same rule.
#[derive(Debug, Clone)]
pub struct ToyAlignmentEncoders {
    annotations: Arc<ToyAnnotations>,
    rule: ToyEncoderRule,
}

impl ToyAlignmentEncoders {
    pub fn new(annotations: Arc<ToyAnnotations>, rule: ToyEncoderRule) -> Self {
        ToyAlignmentEncoders { annotations, rule }
    }
}

impl AlignmentEncoders for ToyAlignmentEncoders {
    fn dim(&self) -> usize {
        self.rule.dim
    }

    fn encode_text(&self, text: &str) -> Result<Vec<f64>> {
        Ok(self.rule.embed(text))
    }

    fn encode_image(&self, image: &LoadedImage) -> Result<Vec<f64>> {
        let text = self.annotations.get(&image.id).map_or("", ImageAnnotation::visual_string);
        Ok(self.rule.embed(text))
    }
}

/// Pools a phrase by embedding its serialized token sequence.
#[derive(Debug, Clone)]
pub struct ToyTextEncoder {
    rule: ToyEncoderRule,
}

impl ToyTextEncoder {
    pub fn new(rule: ToyEncoderRule) -> Self {
        ToyTextEncoder { rule }
    }
}

impl TextEncoder for ToyTextEncoder {
    fn dim(&self) -> usize {
        self.rule.dim
    }

    fn pool(&self, phrase: &FusionPhrase) -> Result<Vec<f64>> {
        Ok(self.rule.embed(&phrase.serialize()))
    }
}

pub struct ToyBackend {
    annotations: Arc<ToyAnnotations>,
    align_rule: ToyEncoderRule,
    text_dt_rule: ToyEncoderRule,
    text_ic_rule: ToyEncoderRule,
}

impl ToyBackend {
    pub fn new(annotations: Arc<ToyAnnotations>, options: &BackendOptions) -> Self {
        let text_ic_seed = if options.shared_encoder { TEXT_DT_SEED } else { TEXT_IC_SEED };
        ToyBackend {
            annotations,
            align_rule: ToyEncoderRule::new(ALIGN_SEED, options.embed_dim),
            text_dt_rule: ToyEncoderRule::new(TEXT_DT_SEED, options.text_dim),
            text_ic_rule: ToyEncoderRule::new(text_ic_seed, options.text_dim),
        }
    }

    pub fn into_bundle(self) -> BackendBundle {
        let components = BTreeMap::from([
            ("align_rule".to_string(), format!("{:#x}/{}", self.align_rule.seed, self.align_rule.dim)),
            ("text_dt_rule".to_string(), format!("{:#x}/{}", self.text_dt_rule.seed, self.text_dt_rule.dim)),
            ("text_ic_rule".to_string(), format!("{:#x}/{}", self.text_ic_rule.seed, self.text_ic_rule.dim)),
        ]);
        let text_dt: Arc<dyn TextEncoder> = Arc::new(ToyTextEncoder::new(self.text_dt_rule));
        let text_ic: Arc<dyn TextEncoder> = if self.text_ic_rule == self.text_dt_rule {
            Arc::clone(&text_dt)
        } else {
            Arc::new(ToyTextEncoder::new(self.text_ic_rule))
        };
        BackendBundle {
            identity: BackendIdentity {
                name: "toy".into(),
                text_dim: self.text_dt_rule.dim,
                embed_dim: self.align_rule.dim,
                components,
            },
            detector: Arc::new(ToyDetector::new(Arc::clone(&self.annotations))),
            analyzer: Arc::new(ToyAnalyzer::new(Arc::clone(&self.annotations))),
            captioner: Arc::new(ToyCaptioner::new(Arc::clone(&self.annotations))),
            encoders: Arc::new(ToyAlignmentEncoders::new(Arc::clone(&self.annotations), self.align_rule)),
            text_dt,
            text_ic,
        }
    }
}
