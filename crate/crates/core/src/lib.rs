//! Target-dependent multimodal sentiment analysis by translating faces into
//! text.
//!
//! Faces in a post's image are detected and described with a fixed template,
//! the description matching the post's target is selected with a
//! contrastive image-text encoder pair, and a gated fusion classifier
//! combines the caption, the target, the description and a generated scene
//! caption into a three-way sentiment prediction.
//!
//! Perception and language models sit behind the traits in [`backend`]; the
//! deterministic [`toy`] backends make every stage testable without
//! pretrained weights.

pub mod alignment;
pub mod backend;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod face;
pub mod fusion;
pub mod imaging;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod toy;
pub mod training;

pub use backend::{resolve_backend, BackendBundle, BackendOptions, BackendRegistry};
pub use checkpoint::Checkpoint;
pub use dataset::{Example, Label};
pub use error::{Error, Result};
pub use metrics::Metrics;
pub use training::{TrainConfig, Variant};
