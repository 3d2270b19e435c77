//! Preprocessing stages (faces, scene captions, alignment) and their JSONL
//! record types.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::alignment::{
    align_example, first_face_refinement, scene_caption, ProjectionParams, RefinedDescription,
};
use crate::backend::{AlignmentEncoders, BackendBundle, Captioner, FaceAnalyzer, FaceDetector};
use crate::dataset::Example;
use crate::error::{Error, Result};
use crate::face::{describe_faces, render_description, FaceDescription, FaceRecord};
use crate::imaging::{ImageStore, LoadedImage};

/// `faces.jsonl`: α-filtered faces per example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacesRecord {
    pub id: String,
    pub faces: Vec<FaceRecord>,
}

impl FacesRecord {
    /// Descriptions of the faces that kept a sentiment.
    pub fn descriptions(&self) -> Vec<FaceDescription> {
        self.faces
            .iter()
            .enumerate()
            .filter_map(|(i, f)| render_description(&f.attributes(), i))
            .collect()
    }
}

/// `captions.jsonl`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub id: String,
    pub scene_caption: String,
}

/// `descriptions.jsonl`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptionRecord {
    pub id: String,
    pub candidates: Vec<String>,
    pub scores: Option<Vec<f64>>,
    pub refined: String,
    pub face_index: Option<usize>,
}

/// Everything the classifier needs for one example (`prepared.jsonl`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedExample {
    #[serde(flatten)]
    pub example: Example,
    pub candidates: Vec<FaceDescription>,
    pub scores: Option<Vec<f64>>,
    /// Target-aligned description.
    pub refined: RefinedDescription,
    /// Refinement of the first candidate, without alignment.
    pub refined_first: RefinedDescription,
    pub scene_caption: String,
}

impl PreparedExample {
    pub fn description_record(&self) -> DescriptionRecord {
        DescriptionRecord {
            id: self.example.id.clone(),
            candidates: self.candidates.iter().map(|c| c.text.clone()).collect(),
            scores: self.scores.clone(),
            refined: self.refined.text.clone(),
            face_index: self.refined.source_face_index,
        }
    }
}

fn load_or_warn(store: &ImageStore, example: &Example) -> Option<LoadedImage> {
    match store.load(&example.image_ref) {
        Ok(img) => Some(img),
        Err(e) => {
            log::warn!("skipping example {}: {e}", example.id);
            None
        }
    }
}

/// Detect, analyze and α-filter faces for every example. Examples whose image
/// cannot be read are skipped with a warning.
pub fn faces_stage(
    examples: &[Example],
    store: &ImageStore,
    detector: &dyn FaceDetector,
    analyzer: &dyn FaceAnalyzer,
    alpha: f64,
) -> Result<Vec<FacesRecord>> {
    let mut by_image: HashMap<&str, Vec<FaceRecord>> = HashMap::new();
    let mut out = Vec::with_capacity(examples.len());
    for ex in examples {
        if !by_image.contains_key(ex.image_ref.as_str()) {
            let Some(img) = load_or_warn(store, ex) else { continue };
            let faces = describe_faces(&img, detector, analyzer, alpha)?
                .into_iter()
                .map(|(region, attrs, _)| FaceRecord::new(region.bbox, &attrs))
                .collect();
            by_image.insert(ex.image_ref.as_str(), faces);
        }
        out.push(FacesRecord {
            id: ex.id.clone(),
            faces: by_image[ex.image_ref.as_str()].clone(),
        });
    }
    Ok(out)
}

pub fn caption_stage(examples: &[Example], store: &ImageStore, captioner: &dyn Captioner) -> Result<Vec<CaptionRecord>> {
    let mut by_image: HashMap<&str, String> = HashMap::new();
    let mut out = Vec::with_capacity(examples.len());
    for ex in examples {
        if !by_image.contains_key(ex.image_ref.as_str()) {
            let Some(img) = load_or_warn(store, ex) else { continue };
            by_image.insert(ex.image_ref.as_str(), scene_caption(&img, captioner)?.text);
        }
        out.push(CaptionRecord {
            id: ex.id.clone(),
            scene_caption: by_image[ex.image_ref.as_str()].clone(),
        });
    }
    Ok(out)
}

/// Aligns every example and joins faces and captions into prepared records.
/// Examples without a faces record have no candidates; without a caption
/// record, an empty scene caption.
pub fn align_stage(
    examples: &[Example],
    faces: &[FacesRecord],
    captions: &[CaptionRecord],
    store: &ImageStore,
    encoders: &dyn AlignmentEncoders,
    proj: &ProjectionParams,
) -> Result<Vec<PreparedExample>> {
    let faces: HashMap<&str, &FacesRecord> = faces.iter().map(|f| (f.id.as_str(), f)).collect();
    let captions: HashMap<&str, &str> = captions
        .iter()
        .map(|c| (c.id.as_str(), c.scene_caption.as_str()))
        .collect();
    examples
        .iter()
        .map(|ex| {
            let candidates = faces.get(ex.id.as_str()).map(|f| f.descriptions()).unwrap_or_default();
            let outcome = align_example(ex, &candidates, || store.load(&ex.image_ref), encoders, proj)?;
            Ok(PreparedExample {
                example: ex.clone(),
                refined_first: first_face_refinement(ex, &candidates)?,
                candidates,
                scores: outcome.scores,
                refined: outcome.refined,
                scene_caption: captions.get(ex.id.as_str()).map(|s| s.to_string()).unwrap_or_default(),
            })
        })
        .collect()
}

/// Re-runs alignment over already prepared examples, e.g. after the
/// projections changed.
pub fn realign(
    prepared: &mut [PreparedExample],
    store: &ImageStore,
    encoders: &dyn AlignmentEncoders,
    proj: &ProjectionParams,
) -> Result<()> {
    for p in prepared {
        let outcome = align_example(&p.example, &p.candidates, || store.load(&p.example.image_ref), encoders, proj)?;
        p.refined = outcome.refined;
        p.scores = outcome.scores;
    }
    Ok(())
}

/// All three stages in memory.
pub fn prepare_split(
    examples: &[Example],
    store: &ImageStore,
    bundle: &BackendBundle,
    alpha: f64,
    proj: &ProjectionParams,
) -> Result<Vec<PreparedExample>> {
    let faces = faces_stage(examples, store, bundle.detector.as_ref(), bundle.analyzer.as_ref(), alpha)?;
    let captions = caption_stage(examples, store, bundle.captioner.as_ref())?;
    let kept: std::collections::HashSet<&str> = faces.iter().map(|f| f.id.as_str()).collect();
    let readable: Vec<Example> = examples.iter().filter(|e| kept.contains(e.id.as_str())).cloned().collect();
    align_stage(&readable, &faces, &captions, store, bundle.encoders.as_ref(), proj)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (offset, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Malformed {
            source_name: path.display().to_string(),
            offset,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
