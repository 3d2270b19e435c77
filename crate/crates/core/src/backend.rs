//! Perception and language-model contracts, and the registry that builds
//! backend bundles by name.
//!
//! Every contract is `Send + Sync`: implementations must tolerate concurrent
//! read-only calls.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::face::{BBox, FaceAttributes, FaceRegion};
use crate::fusion::FusionPhrase;
use crate::imaging::LoadedImage;
use crate::toy::{ToyAnnotations, ToyBackend};

pub trait FaceDetector: Send + Sync {
    /// Face boxes in any order; callers sort and validate them.
    fn detect(&self, image: &LoadedImage) -> Result<Vec<BBox>>;
}

pub trait FaceAnalyzer: Send + Sync {
    fn min_crop_side(&self) -> u32 {
        1
    }

    /// Attributes with confidences. Emotion outputs must already be collapsed
    /// to sentiment labels.
    fn analyze(&self, face: &FaceRegion) -> Result<FaceAttributes>;
}

pub trait Captioner: Send + Sync {
    fn caption(&self, image: &LoadedImage) -> Result<String>;
}

/// The contrastive text/image encoder pair used for target alignment.
pub trait AlignmentEncoders: Send + Sync {
    fn dim(&self) -> usize;
    fn encode_text(&self, text: &str) -> Result<Vec<f64>>;
    fn encode_image(&self, image: &LoadedImage) -> Result<Vec<f64>>;
}

/// Pooled sentence representation of a fusion phrase.
pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn pool(&self, phrase: &FusionPhrase) -> Result<Vec<f64>>;
}

/// Identifies the backend a checkpoint was trained against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendIdentity {
    pub name: String,
    pub text_dim: usize,
    pub embed_dim: usize,
    pub components: BTreeMap<String, String>,
}

#[derive(Clone)]
pub struct BackendBundle {
    pub identity: BackendIdentity,
    pub detector: Arc<dyn FaceDetector>,
    pub analyzer: Arc<dyn FaceAnalyzer>,
    pub captioner: Arc<dyn Captioner>,
    pub encoders: Arc<dyn AlignmentEncoders>,
    /// Encoder for the description phrase.
    pub text_dt: Arc<dyn TextEncoder>,
    /// Encoder for the scene-caption phrase.
    pub text_ic: Arc<dyn TextEncoder>,
}

impl std::fmt::Debug for BackendBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendBundle").field("identity", &self.identity).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub struct BackendOptions {
    /// Sidecar annotations for the toy backend.
    pub annotations: Option<PathBuf>,
    /// Model asset directory for the pretrained backend.
    pub model_dir: Option<PathBuf>,
    pub text_dim: usize,
    pub embed_dim: usize,
    pub shared_encoder: bool,
}

impl Default for BackendOptions {
    fn default() -> Self {
        BackendOptions {
            annotations: None,
            model_dir: None,
            text_dim: 768,
            embed_dim: 512,
            shared_encoder: false,
        }
    }
}

type Factory = Box<dyn Fn(&BackendOptions) -> Result<BackendBundle> + Send + Sync>;

/// Name to bundle-factory map. `toy` is always registered.
pub struct BackendRegistry {
    factories: BTreeMap<String, Factory>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        let mut r = BackendRegistry {
            factories: BTreeMap::new(),
        };
        r.register("toy", Box::new(build_toy));
        r.register("pretrained", Box::new(build_pretrained));
        r
    }
}

impl BackendRegistry {
    pub fn register(&mut self, name: &str, factory: Factory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<String> {
        self.factories.keys().cloned().collect()
    }

    pub fn resolve(&self, name: &str, options: &BackendOptions) -> Result<BackendBundle> {
        match self.factories.get(name) {
            Some(factory) => factory(options),
            None => Err(Error::UnknownBackend {
                name: name.to_string(),
                registered: self.names(),
            }),
        }
    }
}

pub fn resolve_backend(name: &str, registry: &BackendRegistry, options: &BackendOptions) -> Result<BackendBundle> {
    registry.resolve(name, options)
}

fn build_toy(options: &BackendOptions) -> Result<BackendBundle> {
    let annotations = match &options.annotations {
        Some(path) => ToyAnnotations::load(path)?,
        None => ToyAnnotations::default(),
    };
    Ok(ToyBackend::new(Arc::new(annotations), options).into_bundle())
}

/// Asset files the pretrained adapters look for under the model directory.
pub const PRETRAINED_ASSETS: [&str; 6] = [
    "face_detector.onnx",
    "face_attributes.onnx",
    "clip_text.onnx",
    "clip_visual.onnx",
    "captioner.onnx",
    "text_encoder.onnx",
];

fn build_pretrained(options: &BackendOptions) -> Result<BackendBundle> {
    let dir = options
        .model_dir
        .clone()
        .or_else(|| std::env::var_os("VECTN_MODEL_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("models"));
    let missing: Vec<PathBuf> = PRETRAINED_ASSETS
        .iter()
        .map(|f| dir.join(f))
        .filter(|p| !p.is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingAssets {
            backend: "pretrained".into(),
            missing,
        });
    }
    Err(Error::Backend(format!(
        "model assets found in {} but this build has no inference runtime for them",
        dir.display()
    )))
}
