use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde_json::json;

use vectn::backend::{resolve_backend, BackendBundle, BackendOptions, BackendRegistry};
use vectn::checkpoint::Checkpoint;
use vectn::dataset::{build_face_subset, load_split_with, split_stats, DatasetFormat, Example, LabelScheme};
use vectn::imaging::ImageStore;
use vectn::pipeline::{
    align_stage, caption_stage, faces_stage, read_jsonl, realign, write_jsonl, CaptionRecord, DescriptionRecord,
    FacesRecord, PreparedExample,
};
use vectn::toy::{generate_fixture, FixtureSpec};
use vectn::training::{
    alignment_samples, encode_split, evaluate, fit_projection, predict, run_ablation, run_experiment,
    run_multi_seed, PreparedSplits,
};
use vectn::{Metrics, TrainConfig};

use crate::settings::Settings;

/// `println!` that stops quietly when stdout is closed early.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let mut line = format!($($arg)*);
        line.push('\n');
        if let Err(e) = std::io::stdout().write_all(line.as_bytes()) {
            if e.kind() != std::io::ErrorKind::BrokenPipe {
                return Err(e.into());
            }
        }
    }};
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn images_dir(flag: Option<&Path>, settings: &Settings) -> Result<ImageStore> {
    match flag.or(settings.path("images")) {
        Some(dir) => Ok(ImageStore::new(dir)),
        None => bail!("an image directory is required (--images or images= in the config)"),
    }
}

fn required<'a>(flag: Option<&'a Path>, settings: &'a Settings, key: &str, what: &str) -> Result<&'a Path> {
    flag.or(settings.path(key))
        .with_context(|| format!("missing {what} (flag or {key}= in the config)"))
}

pub fn ingest(
    input: &Path,
    out: &Path,
    format: Option<DatasetFormat>,
    scheme: LabelScheme,
    face_subset: Option<(&Path, &Settings)>,
) -> Result<()> {
    let format = format.unwrap_or(match input.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => DatasetFormat::Jsonl,
        _ => DatasetFormat::Fourline,
    });
    let mut examples = load_split_with(input, format, scheme)?;
    if let Some((images, settings)) = face_subset {
        let bundle = settings.bundle()?;
        let before = examples.len();
        examples = build_face_subset(&examples, &ImageStore::new(images), bundle.detector.as_ref())?;
        log::info!("face subset keeps {} of {before} examples", examples.len());
    }
    write_jsonl(out, &examples)?;
    out!("{}", serde_json::to_string(&split_stats(&examples))?);
    Ok(())
}

pub fn faces(input: &Path, out: &Path, images: Option<&Path>, settings: &Settings) -> Result<()> {
    let examples: Vec<Example> = read_jsonl(input)?;
    let store = images_dir(images, settings)?;
    let bundle = settings.bundle()?;
    let records = faces_stage(
        &examples,
        &store,
        bundle.detector.as_ref(),
        bundle.analyzer.as_ref(),
        settings.config.alpha,
    )?;
    write_jsonl(out, &records)?;
    log::info!("wrote faces for {} of {} examples", records.len(), examples.len());
    Ok(())
}

pub fn caption(input: &Path, out: &Path, images: Option<&Path>, settings: &Settings) -> Result<()> {
    let examples: Vec<Example> = read_jsonl(input)?;
    let store = images_dir(images, settings)?;
    let bundle = settings.bundle()?;
    write_jsonl(out, &caption_stage(&examples, &store, bundle.captioner.as_ref())?)?;
    Ok(())
}

pub struct AlignPaths<'a> {
    pub input: &'a Path,
    pub faces: &'a Path,
    pub captions: Option<&'a Path>,
    pub out: &'a Path,
    pub descriptions: Option<&'a Path>,
    pub images: Option<&'a Path>,
}

pub fn align(paths: AlignPaths, settings: &Settings) -> Result<()> {
    let examples: Vec<Example> = read_jsonl(paths.input)?;
    let faces: Vec<FacesRecord> = read_jsonl(paths.faces)?;
    let captions: Vec<CaptionRecord> = match paths.captions {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    let store = images_dir(paths.images, settings)?;
    let bundle = settings.bundle()?;
    // examples whose image could not be read have no faces record
    let kept: std::collections::HashSet<&str> = faces.iter().map(|f| f.id.as_str()).collect();
    let examples: Vec<Example> = examples.into_iter().filter(|e| kept.contains(e.id.as_str())).collect();
    let prepared = align_stage(
        &examples,
        &faces,
        &captions,
        &store,
        bundle.encoders.as_ref(),
        &settings.config.projection(),
    )?;
    write_jsonl(paths.out, &prepared)?;
    if let Some(d) = paths.descriptions {
        let records: Vec<DescriptionRecord> = prepared.iter().map(PreparedExample::description_record).collect();
        write_jsonl(d, &records)?;
    }
    Ok(())
}

pub struct DataPaths<'a> {
    pub train: Option<&'a Path>,
    pub valid: Option<&'a Path>,
    pub test: Option<&'a Path>,
    pub out: Option<&'a Path>,
    pub images: Option<&'a Path>,
}

fn load_splits(paths: &DataPaths, settings: &Settings) -> Result<PreparedSplits> {
    let train = required(paths.train, settings, "train_data", "training split")?;
    let valid = required(paths.valid, settings, "valid_data", "validation split")?;
    Ok(PreparedSplits {
        train: read_jsonl(train)?,
        valid: read_jsonl(valid)?,
        test: paths.test.or(settings.path("test_data")).map(read_jsonl).transpose()?,
    })
}

/// Fits the projections when asked to and re-aligns every split with them.
fn maybe_fit_projection(
    splits: &mut PreparedSplits,
    paths: &DataPaths,
    settings: &Settings,
    bundle: &BackendBundle,
) -> Result<vectn::alignment::ProjectionParams> {
    let config = &settings.config;
    if !config.train_projection {
        return Ok(config.projection());
    }
    let store = images_dir(paths.images, settings)?;
    let encoders = bundle.encoders.as_ref();
    let samples = alignment_samples(&splits.train, &store, encoders)?;
    let (proj, losses) = fit_projection(config, &samples, config.projection())?;
    log::info!(
        "fitted projections on {} samples; loss {:?} -> {:?}",
        samples.len(),
        losses.first(),
        losses.last()
    );
    realign(&mut splits.train, &store, encoders, &proj)?;
    realign(&mut splits.valid, &store, encoders, &proj)?;
    if let Some(t) = splits.test.as_mut() {
        realign(t, &store, encoders, &proj)?;
    }
    Ok(proj)
}

fn out_dir<'a>(paths: &'a DataPaths, settings: &'a Settings) -> Result<&'a Path> {
    let dir = required(paths.out, settings, "out_dir", "output directory")?;
    create_dir(dir)?;
    Ok(dir)
}

pub fn train(paths: DataPaths, settings: &Settings) -> Result<()> {
    let mut splits = load_splits(&paths, settings)?;
    let dir = out_dir(&paths, settings)?;
    let bundle = settings.bundle()?;
    let projection = maybe_fit_projection(&mut splits, &paths, settings, &bundle)?;
    let report = run_experiment(&settings.config, &splits, &bundle)?;
    let checkpoint = Checkpoint {
        config: settings.config.clone(),
        backend: bundle.identity.clone(),
        plan: report.plan.clone(),
        head: report.head.clone(),
        projection,
        best_epoch: report.best_epoch,
    };
    checkpoint.save(&dir.join("model.ckpt"))?;
    write_json(&dir.join("metrics.json"), &report.record())?;
    let m = report.reported();
    out!(
        "{}: accuracy {:.4} macro-F1 {:.4} (best epoch {})",
        report.variant, m.accuracy, m.macro_f1, report.best_epoch
    );
    Ok(())
}

/// Loads a checkpoint and the backend it was trained against.
fn restore(checkpoint: &Path, backend: &BackendOverrides) -> Result<(Checkpoint, BackendBundle)> {
    let ck = Checkpoint::load(checkpoint)?;
    let name = backend.name.clone().unwrap_or_else(|| ck.backend.name.clone());
    let options = BackendOptions {
        annotations: backend.annotations.clone(),
        model_dir: backend.model_dir.clone(),
        text_dim: ck.config.text_dim,
        embed_dim: ck.config.embed_dim,
        shared_encoder: ck.config.shared_encoder,
    };
    let bundle = resolve_backend(&name, &BackendRegistry::default(), &options)?;
    ensure!(
        bundle.identity == ck.backend,
        "checkpoint was trained against backend {:?}, but {:?} was resolved",
        ck.backend,
        bundle.identity
    );
    Ok((ck, bundle))
}

#[derive(Debug, Clone, Default)]
pub struct BackendOverrides {
    pub name: Option<String>,
    pub annotations: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
}

pub fn eval(checkpoint: &Path, input: &Path, out: Option<&Path>, backend: &BackendOverrides) -> Result<()> {
    let (ck, bundle) = restore(checkpoint, backend)?;
    let prepared: Vec<PreparedExample> = read_jsonl(input)?;
    let split = encode_split(&prepared, &ck.plan, &bundle, ck.config.max_len)?;
    let metrics: Metrics = evaluate(&ck.head, &split)?;
    let text = serde_json::to_string_pretty(&metrics)?;
    match out {
        Some(p) => write_json(p, &metrics)?,
        None => out!("{text}"),
    }
    Ok(())
}

pub fn predict_cmd(checkpoint: &Path, input: &Path, out: &Path, backend: &BackendOverrides) -> Result<()> {
    let (ck, bundle) = restore(checkpoint, backend)?;
    let prepared: Vec<PreparedExample> = read_jsonl(input)?;
    let split = encode_split(&prepared, &ck.plan, &bundle, ck.config.max_len)?;
    let rows: Vec<serde_json::Value> = predict(&ck.head, &split)?
        .iter()
        .zip(&split.ids)
        .map(|(p, id)| json!({"id": id, "probabilities": p.probabilities, "label": p.predicted}))
        .collect();
    write_jsonl(out, &rows)?;
    Ok(())
}

pub fn ablate(paths: DataPaths, settings: &Settings) -> Result<()> {
    let mut splits = load_splits(&paths, settings)?;
    let dir = out_dir(&paths, settings)?;
    let bundle = settings.bundle()?;
    maybe_fit_projection(&mut splits, &paths, settings, &bundle)?;
    let rows = run_ablation(&settings.config, &splits, &bundle)?;
    let full = rows[0].report.reported().clone();
    let table: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            let m = r.report.reported();
            json!({
                "variant": r.variant.as_str(),
                "accuracy": m.accuracy,
                "macro_f1": m.macro_f1,
                // drops in absolute percentage points relative to the full model
                "accuracy_drop": (full.accuracy - m.accuracy) * 100.0,
                "macro_f1_drop": (full.macro_f1 - m.macro_f1) * 100.0,
            })
        })
        .collect();
    write_json(&dir.join("ablation.json"), &table)?;
    for r in &rows {
        let m = r.report.reported();
        out!("{:<18} accuracy {:.4} macro-F1 {:.4}", r.variant.as_str(), m.accuracy, m.macro_f1);
    }
    Ok(())
}

pub fn multiseed(paths: DataPaths, runs: usize, settings: &Settings) -> Result<bool> {
    let mut splits = load_splits(&paths, settings)?;
    let dir = out_dir(&paths, settings)?;
    let bundle = settings.bundle()?;
    maybe_fit_projection(&mut splits, &paths, settings, &bundle)?;
    let report = run_multi_seed(&settings.config, runs, &splits, &bundle)?;
    write_json(&dir.join("multiseed.json"), &report)?;
    if let Some(m) = &report.mean {
        out!("mean over {runs} seeds: accuracy {:.4} macro-F1 {:.4}", m.accuracy, m.macro_f1);
    }
    Ok(!report.failed)
}

pub fn synth(out: &Path, spec: &FixtureSpec) -> Result<()> {
    create_dir(out)?;
    let layout = generate_fixture(spec, out)?;
    out!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "images": layout.images,
            "annotations": layout.annotations,
            "train": layout.train,
            "valid": layout.valid,
            "test": layout.test,
        }))?
    );
    Ok(())
}

/// Prints the effective settings as JSON.
pub fn show_config(settings: &Settings) -> Result<()> {
    let config: &TrainConfig = &settings.config;
    out!("{}", serde_json::to_string_pretty(&json!({"config": config, "paths": settings.paths}))?);
    Ok(())
}
