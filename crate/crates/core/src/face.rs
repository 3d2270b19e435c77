//! Face detection, attribute analysis, confidence filtering and the fluent
//! face-description template.

use std::collections::BTreeMap;
use std::fmt;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::backend::{FaceAnalyzer, FaceDetector};
use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::imaging::LoadedImage;

/// Default confidence threshold below which attributes are dropped.
pub const DEFAULT_ALPHA: f64 = 0.5;

/// Pixel bounding box `(x, y, width, height)`; serialized as a 4-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl BBox {
    pub fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        BBox { x, y, width, height }
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.width >= 1
            && self.height >= 1
            && self.x.checked_add(self.width).is_some_and(|r| r <= width)
            && self.y.checked_add(self.height).is_some_and(|b| b <= height)
    }
}

impl From<[u32; 4]> for BBox {
    fn from(v: [u32; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.width, b.height]
    }
}

/// A detected face: its box in the source image and the cropped pixels.
#[derive(Debug, Clone)]
pub struct FaceRegion {
    pub image_id: String,
    pub face_index: usize,
    pub bbox: BBox,
    pub crop: RgbImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Man,
    Woman,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Man => "man",
            Gender::Woman => "woman",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Race {
    Indian,
    Black,
    Asian,
    White,
    Latino,
    #[serde(rename = "Middle Eastern")]
    MiddleEastern,
}

impl Race {
    pub const ALL: [Race; 6] = [
        Race::Indian,
        Race::Black,
        Race::Asian,
        Race::White,
        Race::Latino,
        Race::MiddleEastern,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Race::Indian => "Indian",
            Race::Black => "Black",
            Race::Asian => "Asian",
            Race::White => "White",
            Race::Latino => "Latino",
            Race::MiddleEastern => "Middle Eastern",
        }
    }
}

/// Seven-way facial emotion taxonomy as emitted by common expression heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Angry,
    Disgust,
    Fear,
    Happy,
    Sad,
    Surprise,
    Neutral,
}

impl Emotion {
    /// Collapse onto the three sentiment labels.
    pub fn sentiment(self) -> Label {
        match self {
            Emotion::Happy | Emotion::Surprise => Label::Positive,
            Emotion::Angry | Emotion::Disgust | Emotion::Fear | Emotion::Sad => Label::Negative,
            Emotion::Neutral => Label::Neutral,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Age,
    Gender,
    Race,
    Sentiment,
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Attribute::Age => "age",
            Attribute::Gender => "gender",
            Attribute::Race => "race",
            Attribute::Sentiment => "sentiment",
        })
    }
}

/// Attribute values without confidences; the `attributes` object of
/// `faces.jsonl`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributeValues {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<Gender>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub race: Option<Race>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment: Option<Label>,
}

/// Predicted facial attributes with per-attribute confidence in `[0, 1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaceAttributes {
    pub age: Option<u32>,
    pub gender: Option<Gender>,
    pub race: Option<Race>,
    pub sentiment: Option<Label>,
    pub confidence: BTreeMap<Attribute, f64>,
}

impl FaceAttributes {
    pub fn from_parts(values: AttributeValues, confidence: BTreeMap<Attribute, f64>) -> Self {
        FaceAttributes {
            age: values.age,
            gender: values.gender,
            race: values.race,
            sentiment: values.sentiment,
            confidence,
        }
    }

    pub fn values(&self) -> AttributeValues {
        AttributeValues {
            age: self.age,
            gender: self.gender,
            race: self.race,
            sentiment: self.sentiment,
        }
    }

    pub fn is_present(&self, attr: Attribute) -> bool {
        match attr {
            Attribute::Age => self.age.is_some(),
            Attribute::Gender => self.gender.is_some(),
            Attribute::Race => self.race.is_some(),
            Attribute::Sentiment => self.sentiment.is_some(),
        }
    }

    pub fn present(&self) -> Vec<Attribute> {
        [Attribute::Age, Attribute::Gender, Attribute::Race, Attribute::Sentiment]
            .into_iter()
            .filter(|a| self.is_present(*a))
            .collect()
    }

    fn clear(&mut self, attr: Attribute) {
        match attr {
            Attribute::Age => self.age = None,
            Attribute::Gender => self.gender = None,
            Attribute::Race => self.race = None,
            Attribute::Sentiment => self.sentiment = None,
        }
        self.confidence.remove(&attr);
    }

    pub fn validate(&self) -> Result<()> {
        for attr in self.present() {
            match self.confidence.get(&attr) {
                Some(c) if (0.0..=1.0).contains(c) => {}
                Some(c) => {
                    return Err(Error::InvalidAttributes(format!(
                        "{attr} confidence {c} outside [0, 1]"
                    )))
                }
                None => return Err(Error::InvalidAttributes(format!("{attr} has no confidence"))),
            }
        }
        Ok(())
    }
}

/// One face entry of `faces.jsonl` and of the toy sidecar annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceRecord {
    pub bbox: BBox,
    #[serde(default)]
    pub attributes: AttributeValues,
    #[serde(default)]
    pub confidence: BTreeMap<Attribute, f64>,
    /// Raw expression class; collapsed to a sentiment when `attributes`
    /// carries none. Its confidence is read from the `sentiment` entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<Emotion>,
}

impl FaceRecord {
    pub fn new(bbox: BBox, attrs: &FaceAttributes) -> Self {
        FaceRecord {
            bbox,
            attributes: attrs.values(),
            confidence: attrs.confidence.clone(),
            emotion: None,
        }
    }

    pub fn attributes(&self) -> FaceAttributes {
        let mut values = self.attributes.clone();
        if values.sentiment.is_none() {
            values.sentiment = self.emotion.map(Emotion::sentiment);
        }
        FaceAttributes::from_parts(values, self.confidence.clone())
    }
}

/// Rendered face description, e.g. "A Black man with 43 years of age exhibits
/// a negative expression".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceDescription {
    pub text: String,
    pub face_index: usize,
    pub sentiment: Label,
}

/// Runs the detector and returns validated, cropped regions ordered by box
/// origin: left to right, then top to bottom.
pub fn detect_faces(image: &LoadedImage, detector: &dyn FaceDetector) -> Result<Vec<FaceRegion>> {
    if image.is_empty() {
        return Err(Error::Image {
            id: image.id.clone(),
            reason: "image has no pixels".into(),
        });
    }
    let mut boxes = detector.detect(image).map_err(|e| match e {
        Error::Detector { .. } => e,
        other => Error::Detector {
            image_id: image.id.clone(),
            reason: other.to_string(),
        },
    })?;
    for b in &boxes {
        if !b.fits_within(image.width(), image.height()) {
            return Err(Error::Detector {
                image_id: image.id.clone(),
                reason: format!(
                    "box {:?} outside {}x{} image",
                    <[u32; 4]>::from(*b),
                    image.width(),
                    image.height()
                ),
            });
        }
    }
    boxes.sort_by_key(|b| (b.x, b.y, b.width, b.height));
    boxes.dedup();
    Ok(boxes
        .into_iter()
        .enumerate()
        .map(|(face_index, bbox)| FaceRegion {
            image_id: image.id.clone(),
            face_index,
            bbox,
            crop: image::imageops::crop_imm(&image.pixels, bbox.x, bbox.y, bbox.width, bbox.height).to_image(),
        })
        .collect())
}

/// Analyzes one face. Age and gender come from regression-style heads and
/// default to confidence 1.0 when the analyzer reports none.
pub fn analyze_attributes(face: &FaceRegion, analyzer: &dyn FaceAnalyzer) -> Result<FaceAttributes> {
    let min_side = analyzer.min_crop_side();
    let (w, h) = face.crop.dimensions();
    if w < min_side || h < min_side {
        return Err(Error::CropTooSmall {
            width: w,
            height: h,
            min_side,
        });
    }
    let mut attrs = analyzer.analyze(face)?;
    for attr in [Attribute::Age, Attribute::Gender] {
        if attrs.is_present(attr) {
            attrs.confidence.entry(attr).or_insert(1.0);
        }
    }
    attrs.validate()?;
    Ok(attrs)
}

/// Drops every attribute whose confidence is strictly below `alpha`.
pub fn filter_attributes(attrs: &FaceAttributes, alpha: f64) -> FaceAttributes {
    let mut out = attrs.clone();
    for attr in attrs.present() {
        let keep = attrs.confidence.get(&attr).is_some_and(|c| *c >= alpha);
        if !keep {
            out.clear(attr);
        }
    }
    out
}

/// "a" or "an" for the following word, by its first letter.
pub fn indefinite_article(next_word: &str) -> &'static str {
    match next_word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// Instantiates "A [Race] [Gender] with [Age] years of age exhibits a
/// [Sentiment] expression" with whatever survived filtering. No sentiment
/// means no description.
pub fn render_description(attrs: &FaceAttributes, face_index: usize) -> Option<FaceDescription> {
    let sentiment = attrs.sentiment?;
    let mut subject = Vec::new();
    if let Some(race) = attrs.race {
        subject.push(race.as_str());
    }
    subject.push(attrs.gender.map_or("person", Gender::as_str));
    let subject = subject.join(" ");

    let article = indefinite_article(&subject);
    let mut text = format!("{}{} {subject}", article[..1].to_uppercase(), &article[1..]);
    if let Some(age) = attrs.age {
        text.push_str(&format!(" with {age} years of age"));
    }
    let word = sentiment.as_str();
    text.push_str(&format!(" exhibits {} {word} expression", indefinite_article(word)));
    Some(FaceDescription {
        text,
        face_index,
        sentiment,
    })
}

/// Detect, analyze, filter and render every face of one image. Faces without
/// a surviving sentiment yield no description.
pub fn describe_faces(
    image: &LoadedImage,
    detector: &dyn FaceDetector,
    analyzer: &dyn FaceAnalyzer,
    alpha: f64,
) -> Result<Vec<(FaceRegion, FaceAttributes, Option<FaceDescription>)>> {
    detect_faces(image, detector)?
        .into_iter()
        .map(|face| {
            let attrs = filter_attributes(&analyze_attributes(&face, analyzer)?, alpha);
            let desc = render_description(&attrs, face.face_index);
            Ok((face, attrs, desc))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn table3() -> FaceAttributes {
        FaceAttributes {
            age: Some(43),
            gender: Some(Gender::Man),
            race: Some(Race::Black),
            sentiment: Some(Label::Negative),
            confidence: BTreeMap::from([
                (Attribute::Age, 1.0),
                (Attribute::Gender, 1.0),
                (Attribute::Race, 0.879),
                (Attribute::Sentiment, 0.9467),
            ]),
        }
    }

    #[test]
    fn table3_string_is_byte_exact() {
        let d = render_description(&table3(), 0).unwrap();
        assert_eq!(d.text, "A Black man with 43 years of age exhibits a negative expression");
        assert_eq!(d.sentiment, Label::Negative);
    }

    #[test]
    fn alpha_filtering_keeps_table3_race() {
        let f = filter_attributes(&table3(), DEFAULT_ALPHA);
        assert_eq!(f, table3());
    }

    #[test]
    fn alpha_boundary_is_inclusive() {
        let mut a = table3();
        a.confidence.insert(Attribute::Race, 0.5);
        assert_eq!(filter_attributes(&a, 0.5).race, Some(Race::Black));
        a.confidence.insert(Attribute::Race, 0.4);
        let f = filter_attributes(&a, 0.5);
        assert_eq!(f.race, None);
        assert!(!f.confidence.contains_key(&Attribute::Race));
    }

    #[test]
    fn fallbacks() {
        let mut a = table3();
        a.race = None;
        assert_eq!(
            render_description(&a, 0).unwrap().text,
            "A man with 43 years of age exhibits a negative expression"
        );
        a.age = None;
        a.gender = None;
        assert_eq!(render_description(&a, 0).unwrap().text, "A person exhibits a negative expression");
        a.sentiment = None;
        assert!(render_description(&a, 0).is_none());
    }

    #[test]
    fn vowel_articles() {
        let mut a = table3();
        a.race = Some(Race::Indian);
        a.gender = Some(Gender::Woman);
        a.age = Some(8);
        a.sentiment = Some(Label::Positive);
        assert_eq!(
            render_description(&a, 2).unwrap().text,
            "An Indian woman with 8 years of age exhibits a positive expression"
        );
        assert_eq!(indefinite_article("emotional"), "an");
    }

    #[test]
    fn emotion_collapse() {
        assert_eq!(Emotion::Happy.sentiment(), Label::Positive);
        assert_eq!(Emotion::Surprise.sentiment(), Label::Positive);
        for e in [Emotion::Angry, Emotion::Disgust, Emotion::Fear, Emotion::Sad] {
            assert_eq!(e.sentiment(), Label::Negative);
        }
        assert_eq!(Emotion::Neutral.sentiment(), Label::Neutral);
    }

    #[test]
    fn validate_rejects_missing_or_bad_confidence() {
        let mut a = table3();
        a.confidence.remove(&Attribute::Race);
        assert!(a.validate().is_err());
        let mut b = table3();
        b.confidence.insert(Attribute::Sentiment, 1.5);
        assert!(b.validate().is_err());
    }

    #[test]
    fn bbox_serializes_as_array() {
        let b = BBox::new(1, 2, 3, 4);
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1,2,3,4]");
        assert!(b.fits_within(4, 6));
        assert!(!b.fits_within(3, 6));
        assert!(!BBox::new(0, 0, 0, 1).fits_within(5, 5));
    }
}
