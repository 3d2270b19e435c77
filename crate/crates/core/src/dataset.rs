//! Visual-caption-target datasets: loading, label encoding, split statistics
//! and the face-bearing subset.
//!
//! Two on-disk formats are understood:
//!
//! * `jsonl`: one object per line,
//!   `{"id": str, "image": str, "caption": str, "target": str, "label": "negative"|"neutral"|"positive"}`.
//! * `fourline`: four physical lines per record: the sentence with a `$T$`
//!   placeholder, the target string, the label, and the image file name.
//!   The placeholder is substituted at load time, so every [`Example`]
//!   carries a plain caption.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::FaceDetector;
use crate::error::{Error, Result};
use crate::face::detect_faces;
use crate::imaging::ImageStore;

/// Placeholder marking the target inside `fourline` sentences.
pub const TARGET_PLACEHOLDER: &str = "$T$";

/// Sentiment polarity. The index order (negative, neutral, positive) is fixed
/// and shared with checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Negative,
    Neutral,
    Positive,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Negative, Label::Neutral, Label::Positive];

    pub fn index(self) -> usize {
        match self {
            Label::Negative => 0,
            Label::Neutral => 1,
            Label::Positive => 2,
        }
    }

    pub fn from_index(index: usize) -> Result<Label> {
        Label::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::UnknownLabel(index.to_string()))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Negative => "negative",
            Label::Neutral => "neutral",
            Label::Positive => "positive",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Label> {
        match s.trim().to_ascii_lowercase().as_str() {
            "negative" => Ok(Label::Negative),
            "neutral" => Ok(Label::Neutral),
            "positive" => Ok(Label::Positive),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

pub fn encode_label(label: Label) -> usize {
    label.index()
}

pub fn decode_label(index: usize) -> Result<Label> {
    Label::from_index(index)
}

/// One multimodal sample: an image reference, its caption, the target span
/// inside the caption and the target's sentiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    #[serde(rename = "image")]
    pub image_ref: String,
    pub caption: String,
    pub target: String,
    pub label: Label,
}

impl Example {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidExample {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.caption.trim().is_empty() {
            return Err(invalid("caption is empty"));
        }
        if self.target.trim().is_empty() {
            return Err(invalid("target is empty"));
        }
        if !self.caption.contains(self.target.as_str()) {
            return Err(invalid("target does not occur in caption"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Jsonl,
    Fourline,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(DatasetFormat::Jsonl),
            "fourline" => Ok(DatasetFormat::Fourline),
            other => Err(Error::Config(format!("unknown dataset format {other:?}"))),
        }
    }
}

/// How the label line of a `fourline` record is read.
///
/// `Index` uses this crate's encoding (0 negative, 1 neutral, 2 positive);
/// `Polarity` reads the signed convention (-1, 0, 1). Label words are accepted
/// by both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelScheme {
    #[default]
    Index,
    Polarity,
}

impl FromStr for LabelScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "index" => Ok(LabelScheme::Index),
            "polarity" => Ok(LabelScheme::Polarity),
            other => Err(Error::Config(format!("unknown label scheme {other:?}"))),
        }
    }
}

impl LabelScheme {
    pub fn parse(self, token: &str) -> Result<Label> {
        let token = token.trim();
        if let Ok(label) = token.parse::<Label>() {
            return Ok(label);
        }
        let index: i64 = token
            .parse()
            .map_err(|_| Error::UnknownLabel(token.to_string()))?;
        let shifted = match self {
            LabelScheme::Index => index,
            LabelScheme::Polarity => index + 1,
        };
        usize::try_from(shifted)
            .ok()
            .and_then(|i| Label::from_index(i).ok())
            .ok_or_else(|| Error::UnknownLabel(token.to_string()))
    }
}

pub fn load_split(path: &Path, format: DatasetFormat) -> Result<Vec<Example>> {
    load_split_with(path, format, LabelScheme::default())
}

pub fn load_split_with(path: &Path, format: DatasetFormat, scheme: LabelScheme) -> Result<Vec<Example>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    match format {
        DatasetFormat::Jsonl => read_jsonl_examples(file, &name),
        DatasetFormat::Fourline => {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "record".into());
            read_fourline(file, &name, &stem, scheme)
        }
    }
}

pub fn read_jsonl_examples(reader: impl Read, source_name: &str) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (offset, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| malformed(source_name, offset, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let example: Example =
            serde_json::from_str(&line).map_err(|e| map_label_error(source_name, offset, e))?;
        example
            .validate()
            .map_err(|e| malformed(source_name, offset, e.to_string()))?;
        if !seen.insert(example.id.clone()) {
            return Err(malformed(source_name, offset, format!("duplicate id {:?}", example.id)));
        }
        out.push(example);
    }
    Ok(out)
}

fn map_label_error(source_name: &str, offset: usize, e: serde_json::Error) -> Error {
    // serde reports an unknown enum variant for bad label strings
    let msg = e.to_string();
    if msg.contains("unknown variant") {
        let token = msg.split('`').nth(1).unwrap_or_default().to_string();
        return Error::UnknownLabel(token);
    }
    malformed(source_name, offset, msg)
}

pub fn read_fourline(
    reader: impl Read,
    source_name: &str,
    id_prefix: &str,
    scheme: LabelScheme,
) -> Result<Vec<Example>> {
    let mut lines = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| malformed(source_name, n / 4, e.to_string()))?;
        lines.push(line.trim_end_matches('\r').to_string());
    }
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    if lines.len() % 4 != 0 {
        return Err(malformed(
            source_name,
            lines.len() / 4,
            format!("truncated record: {} trailing line(s)", lines.len() % 4),
        ));
    }
    let mut out = Vec::with_capacity(lines.len() / 4);
    for (offset, record) in lines.chunks(4).enumerate() {
        let (sentence, target, label, image) = (&record[0], record[1].trim(), &record[2], record[3].trim());
        if !sentence.contains(TARGET_PLACEHOLDER) {
            return Err(malformed(source_name, offset, "sentence has no $T$ placeholder".into()));
        }
        let label = scheme.parse(label)?;
        let example = Example {
            id: format!("{id_prefix}-{offset}"),
            image_ref: image.to_string(),
            caption: sentence.trim().replace(TARGET_PLACEHOLDER, target),
            target: target.to_string(),
            label,
        };
        example
            .validate()
            .map_err(|e| malformed(source_name, offset, e.to_string()))?;
        out.push(example);
    }
    Ok(out)
}

fn malformed(source_name: &str, offset: usize, reason: String) -> Error {
    Error::Malformed {
        source_name: source_name.to_string(),
        offset,
        reason,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub positive_count: usize,
    pub negative_count: usize,
    pub neutral_count: usize,
    pub avg_targets_per_caption: f64,
}

impl SplitStats {
    pub fn total(&self) -> usize {
        self.positive_count + self.negative_count + self.neutral_count
    }
}

/// Label counts and the mean number of targets per post. A post is keyed by
/// `(image_ref, caption)`, so examples differing only in target count as
/// several targets of one post.
pub fn split_stats(examples: &[Example]) -> SplitStats {
    let mut counts = [0usize; 3];
    let mut posts = HashSet::new();
    for ex in examples {
        counts[ex.label.index()] += 1;
        posts.insert((ex.image_ref.as_str(), ex.caption.as_str()));
    }
    let avg = if posts.is_empty() {
        0.0
    } else {
        examples.len() as f64 / posts.len() as f64
    };
    SplitStats {
        negative_count: counts[0],
        neutral_count: counts[1],
        positive_count: counts[2],
        avg_targets_per_caption: avg,
    }
}

/// Keeps the examples whose image yields at least one face. Unreadable
/// images are skipped with a warning; detector failures abort.
pub fn build_face_subset(
    examples: &[Example],
    store: &ImageStore,
    detector: &dyn FaceDetector,
) -> Result<Vec<Example>> {
    let mut has_face: HashMap<&str, bool> = HashMap::new();
    let mut out = Vec::new();
    for ex in examples {
        let keep = match has_face.get(ex.image_ref.as_str()) {
            Some(&k) => k,
            None => {
                let k = match store.load(&ex.image_ref) {
                    Ok(img) => !detect_faces(&img, detector)?.is_empty(),
                    Err(e) => {
                        log::warn!("skipping example {}: {e}", ex.id);
                        false
                    }
                };
                has_face.insert(ex.image_ref.as_str(), k);
                k
            }
        };
        if keep {
            out.push(ex.clone());
        }
    }
    Ok(out)
}
