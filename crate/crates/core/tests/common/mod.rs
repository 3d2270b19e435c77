#![allow(dead_code)]

use std::path::Path;

use tempfile::TempDir;
use vectn::backend::{resolve_backend, BackendBundle, BackendOptions, BackendRegistry};
use vectn::dataset::{load_split, DatasetFormat};
use vectn::imaging::ImageStore;
use vectn::pipeline::prepare_split;
use vectn::toy::{generate_fixture, FixtureLayout, FixtureSpec};
use vectn::training::{PreparedSplits, TrainConfig};

/// A generated toy fixture with its backend and prepared splits.
pub struct ToyWorld {
    pub dir: TempDir,
    pub layout: FixtureLayout,
    pub bundle: BackendBundle,
    pub store: ImageStore,
    pub splits: PreparedSplits,
}

pub fn toy_bundle(annotations: &Path, config: &TrainConfig) -> BackendBundle {
    let options = BackendOptions {
        annotations: Some(annotations.to_path_buf()),
        text_dim: config.text_dim,
        embed_dim: config.embed_dim,
        shared_encoder: config.shared_encoder,
        ..BackendOptions::default()
    };
    resolve_backend("toy", &BackendRegistry::default(), &options).expect("toy backend")
}

pub fn toy_world(spec: &FixtureSpec, config: &TrainConfig) -> ToyWorld {
    let dir = tempfile::tempdir().expect("tempdir");
    let layout = generate_fixture(spec, dir.path()).expect("fixture");
    let bundle = toy_bundle(&layout.annotations, config);
    let store = ImageStore::new(&layout.images);
    let prepare = |path: &Path| {
        let examples = load_split(path, DatasetFormat::Jsonl).expect("split");
        prepare_split(&examples, &store, &bundle, config.alpha, &config.projection()).expect("prepare")
    };
    let splits = PreparedSplits {
        train: prepare(&layout.train),
        valid: prepare(&layout.valid),
        test: Some(prepare(&layout.test)),
    };
    ToyWorld {
        dir,
        layout,
        bundle,
        store,
        splits,
    }
}

/// Small fixture with narrow encoders for fast tests.
pub fn small_world() -> (ToyWorld, TrainConfig) {
    let config = TrainConfig {
        text_dim: 32,
        embed_dim: 32,
        align_dim: 32,
        epochs: 3,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    let spec = FixtureSpec {
        train: 48,
        valid: 12,
        test: 12,
        ..FixtureSpec::default()
    };
    (toy_world(&spec, &config), config)
}
