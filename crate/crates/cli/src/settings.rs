//! Layered configuration: defaults, then the config file, then
//! `VECTN_BACKEND`, then command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use vectn::backend::{resolve_backend, BackendBundle, BackendOptions, BackendRegistry};
use vectn::TrainConfig;

/// Config-file keys that name files rather than training settings.
/// Relative values are resolved against the config file's directory.
pub const PATH_KEYS: [&str; 7] = ["train_data", "valid_data", "test_data", "out_dir", "images", "annotations", "model_dir"];

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Flat `key=value` config file; `#` starts a comment
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Backend name (toy, pretrained)
    #[arg(long, env = "VECTN_BACKEND")]
    pub backend: Option<String>,
    /// Sidecar annotations for the toy backend
    #[arg(long, value_name = "FILE")]
    pub annotations: Option<PathBuf>,
    /// Model asset directory for the pretrained backend
    #[arg(long, value_name = "DIR")]
    pub model_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Confidence threshold; attributes below it are dropped
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Log-scale of the alignment similarity
    #[arg(long)]
    pub t: Option<f64>,
    /// Width of the alignment projection space
    #[arg(long = "d-align")]
    pub d_align: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Comma-separated: no_gating, no_alignment, no_scene_caption, or none
    #[arg(long)]
    pub ablation: Option<String>,
    /// multimodal, caption_only or visual_only
    #[arg(long)]
    pub modality: Option<String>,
    /// Use one text encoder for both phrases
    #[arg(long)]
    pub shared_encoder: bool,
    /// Experimental gate weighting jt * o_dt + (1 - jt) * o_ic
    #[arg(long)]
    pub gate_complement: bool,
    /// Fit the alignment projections on the training split first
    #[arg(long)]
    pub train_projection: bool,
    /// Any config key, as KEY=VALUE; repeatable, applied last
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Resolved training config plus file locations named in the config file.
#[derive(Debug, Clone)]
pub struct Settings {
    pub config: TrainConfig,
    pub paths: BTreeMap<String, PathBuf>,
    pub model_dir: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
}

impl Settings {
    pub fn path(&self, key: &str) -> Option<&Path> {
        self.paths.get(key).map(PathBuf::as_path)
    }

    pub fn backend_options(&self) -> BackendOptions {
        BackendOptions {
            annotations: self.annotations.clone(),
            model_dir: self.model_dir.clone(),
            text_dim: self.config.text_dim,
            embed_dim: self.config.embed_dim,
            shared_encoder: self.config.shared_encoder,
        }
    }

    pub fn bundle(&self) -> Result<BackendBundle> {
        resolve_backend(&self.config.backend, &BackendRegistry::default(), &self.backend_options())
            .with_context(|| format!("resolving backend {:?}", self.config.backend))
    }
}

fn split_paths(text: &str, base: &Path) -> Result<(String, BTreeMap<String, PathBuf>)> {
    let mut rest = String::new();
    let mut paths = BTreeMap::new();
    for line in text.lines() {
        let content = line.split('#').next().unwrap_or("");
        match content.split_once('=') {
            Some((k, v)) if PATH_KEYS.contains(&k.trim()) => {
                let v = v.trim();
                if v.is_empty() {
                    bail!("empty path for {}", k.trim());
                }
                paths.insert(k.trim().to_string(), base.join(v));
            }
            _ => {
                rest.push_str(line);
            }
        }
        rest.push('\n');
    }
    Ok((rest, paths))
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<Settings> {
        let mut config = TrainConfig::default();
        let mut paths = BTreeMap::new();
        if let Some(file) = &self.config {
            let text = fs::read_to_string(file).with_context(|| format!("reading config {}", file.display()))?;
            let base = file.parent().unwrap_or(Path::new("."));
            let (rest, found) = split_paths(&text, base)?;
            config.apply_kv(&rest).with_context(|| format!("in config {}", file.display()))?;
            paths = found;
        }
        if let Some(b) = &self.backend {
            config.backend = b.clone();
        }
        let mut set = |key: &str, value: Option<String>| -> Result<()> {
            if let Some(v) = value {
                config.set(key, &v).with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
            Ok(())
        };
        set("seed", self.seed.map(|v| v.to_string()))?;
        set("alpha", self.alpha.map(|v| v.to_string()))?;
        set("t", self.t.map(|v| v.to_string()))?;
        set("align_dim", self.d_align.map(|v| v.to_string()))?;
        set("epochs", self.epochs.map(|v| v.to_string()))?;
        set("learning_rate", self.learning_rate.map(|v| v.to_string()))?;
        set("batch_size", self.batch_size.map(|v| v.to_string()))?;
        set("dropout", self.dropout.map(|v| v.to_string()))?;
        set("ablation", self.ablation.clone())?;
        set("modality", self.modality.clone())?;
        if self.shared_encoder {
            config.shared_encoder = true;
        }
        if self.gate_complement {
            config.gate_complement = true;
        }
        if self.train_projection {
            config.train_projection = true;
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
            if PATH_KEYS.contains(&k.trim()) {
                paths.insert(k.trim().to_string(), PathBuf::from(v.trim()));
            } else {
                config.set(k, v).with_context(|| format!("--set {kv}"))?;
            }
        }
        config.validate()?;
        Ok(Settings {
            annotations: self.annotations.clone().or_else(|| paths.get("annotations").cloned()),
            model_dir: self.model_dir.clone().or_else(|| paths.get("model_dir").cloned()),
            config,
            paths,
        })
    }
}
