//! Synthetic separable dataset for the toy backends.
//!
//! Every post has one target whose label is planted in the sentiment
//! attribute of that target's face. Three kinds of post are generated:
//!
//! * single face, confident sentiment;
//! * several faces where the target's face is never the first one and the
//!   other faces show different sentiments, so only alignment recovers the
//!   label from the faces;
//! * single face whose sentiment confidence falls below the default α, so
//!   no description survives and the label is carried only by a mood cue in
//!   the scene caption.
//!
//! A share of the other posts also carry the mood cue; captions never carry
//! sentiment. Posts come
//! in groups of three, one per label, sharing target name, caption and
//! neutral scene caption, so no nuisance token correlates with the label.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ImageAnnotation;
use crate::dataset::{Example, Label};
use crate::error::{Error, Result};
use crate::face::{Attribute, AttributeValues, BBox, FaceAttributes, FaceRecord, Gender, Race};
use crate::pipeline::write_jsonl;

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub seed: u64,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    /// Share of posts with two or three faces.
    pub multi_face: f64,
    /// Share of posts whose only face has a low-confidence sentiment.
    pub low_confidence: f64,
    /// Share of the remaining posts whose scene caption also carries the
    /// label's mood cue.
    pub scene_cue: f64,
    /// Extra posts per split whose image has no face at all.
    pub faceless: usize,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            seed: 0,
            train: 300,
            valid: 60,
            test: 90,
            multi_face: 0.3,
            low_confidence: 0.2,
            scene_cue: 0.5,
            faceless: 0,
        }
    }
}

/// Where [`generate_fixture`] put things.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureLayout {
    pub root: PathBuf,
    pub images: PathBuf,
    pub annotations: PathBuf,
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
}

const WIDTH: u32 = 96;
const HEIGHT: u32 = 64;
const FACE_SIDE: u32 = 20;

const NAMES: [&str; 24] = [
    "Lydia", "Justin", "Obama", "Messi", "Serena", "Adele", "Kanye", "Taylor", "Drake", "Rihanna", "Federer",
    "Beyonce", "Ronaldo", "Shakira", "Bieber", "Oprah", "Jordan", "Bolt", "Hamilton", "Nadal", "Ellen", "Swift",
    "Biden", "Merkel",
];

const FILLERS: [&str; 12] = [
    "arrives at the stadium today",
    "spotted in town this afternoon",
    "at the press conference",
    "meets fans after the show",
    "on the red carpet tonight",
    "during the interview",
    "in new photos from the event",
    "speaks at the summit",
    "with the team at practice",
    "at the airport this morning",
    "visits the school",
    "backstage before the concert",
];

const SCENES: [&str; 6] = [
    "a group of people standing in a room",
    "a person standing in front of a building",
    "people on a stage with lights",
    "a crowd gathered outside",
    "a man and a woman posing for a picture",
    "a person holding a microphone",
];

fn cue(label: Label) -> &'static str {
    match label {
        Label::Positive => "joyful",
        Label::Negative => "gloomy",
        Label::Neutral => "calm",
    }
}

struct Face {
    bbox: BBox,
    attrs: FaceAttributes,
}

fn face(rng: &mut ChaCha8Rng, slot: u32, race: Race, sentiment: Label, sentiment_conf: f64) -> Face {
    let values = AttributeValues {
        age: Some(rng.random_range(18..=70)),
        gender: Some(if rng.random_bool(0.5) { Gender::Man } else { Gender::Woman }),
        race: Some(race),
        sentiment: Some(sentiment),
    };
    let confidence = BTreeMap::from([
        (Attribute::Age, rng.random_range(0.6..0.99)),
        (Attribute::Gender, rng.random_range(0.6..0.99)),
        (Attribute::Race, rng.random_range(0.3..1.0)),
        (Attribute::Sentiment, sentiment_conf),
    ]);
    Face {
        bbox: BBox::new(4 + slot * 30, 22, FACE_SIDE, FACE_SIDE),
        attrs: FaceAttributes::from_parts(values, confidence),
    }
}

fn visual_text(target: &str, f: &FaceAttributes) -> String {
    format!(
        "{target} {} {} {} {}",
        f.race.map_or("", Race::as_str),
        f.gender.map_or("", Gender::as_str),
        f.age.unwrap_or_default(),
        f.sentiment.map_or("", Label::as_str)
    )
}

fn draw(faces: &[Face]) -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([235, 235, 225]));
    for (k, f) in faces.iter().enumerate() {
        let shade = Rgb([200 - 40 * k as u8, 150, 110 + 30 * k as u8]);
        for y in f.bbox.y..f.bbox.y + f.bbox.height {
            for x in f.bbox.x..f.bbox.x + f.bbox.width {
                img.put_pixel(x, y, shade);
            }
        }
    }
    img
}

struct Post {
    example: Example,
    annotation: ImageAnnotation,
    faces: Vec<Face>,
}

/// Nuisance tokens shared by the three posts of a label-balanced group.
struct Group {
    target: &'static str,
    filler: &'static str,
    scene: &'static str,
}

fn post(rng: &mut ChaCha8Rng, split: &str, index: usize, label: Label, group: &Group, kind: f64, spec: &FixtureSpec) -> Post {
    let id = format!("{split}-{index:04}");
    let target = group.target;
    let caption = format!("{target} {}", group.filler);
    let moody_scene = format!("{} in a {} mood", group.scene, cue(label));
    let other_scene = if rng.random_bool(spec.scene_cue) {
        moody_scene.clone()
    } else {
        group.scene.to_string()
    };
    let mut races = Race::ALL.to_vec();
    races.shuffle(rng);

    let (faces, target_slot, scene) = if kind < spec.multi_face {
        let n = rng.random_range(2..=3u32);
        let target_slot = rng.random_range(1..n);
        let mut others: Vec<Label> = Label::ALL.into_iter().filter(|l| *l != label).collect();
        others.shuffle(rng);
        let mut other = others.into_iter().cycle();
        let faces = (0..n)
            .map(|slot| {
                let sentiment = if slot == target_slot { label } else { other.next().expect("cycle") };
                let conf = rng.random_range(0.6..0.99);
                face(rng, slot, races[slot as usize], sentiment, conf)
            })
            .collect();
        (faces, target_slot, other_scene)
    } else if kind < spec.multi_face + spec.low_confidence {
        let conf = rng.random_range(0.05..0.45);
        let f = face(rng, 0, races[0], label, conf);
        (vec![f], 0, moody_scene)
    } else {
        let conf = rng.random_range(0.6..0.99);
        (vec![face(rng, 0, races[0], label, conf)], 0, other_scene)
    };

    let image_ref = format!("{id}.png");
    Post {
        annotation: ImageAnnotation {
            id: image_ref.clone(),
            faces: faces.iter().map(|f| FaceRecord::new(f.bbox, &f.attrs)).collect(),
            scene_caption: Some(scene),
            visual_text: Some(visual_text(target, &faces[target_slot as usize].attrs)),
        },
        example: Example {
            id,
            image_ref,
            caption,
            target: target.to_string(),
            label,
        },
        faces,
    }
}

fn faceless_post(rng: &mut ChaCha8Rng, split: &str, index: usize, label: Label) -> Post {
    let id = format!("{split}-nf-{index:04}");
    let target = *NAMES.choose(rng).expect("names");
    let image_ref = format!("{id}.png");
    Post {
        example: Example {
            id,
            image_ref: image_ref.clone(),
            caption: format!("{target} {}", FILLERS.choose(rng).expect("fillers")),
            target: target.to_string(),
            label,
        },
        annotation: ImageAnnotation {
            id: image_ref,
            faces: Vec::new(),
            scene_caption: Some(format!("an empty {} landscape", cue(label))),
            visual_text: None,
        },
        faces: Vec::new(),
    }
}

/// Writes images, sidecar annotations and `train/valid/test.jsonl` under
/// `dir`. Output is a pure function of `spec`.
pub fn generate_fixture(spec: &FixtureSpec, dir: &Path) -> Result<FixtureLayout> {
    let fractions = [spec.multi_face, spec.low_confidence, spec.scene_cue];
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || spec.multi_face + spec.low_confidence > 1.0 {
        return Err(Error::Config("fixture fractions must lie in [0, 1] and the post kinds sum to at most 1".into()));
    }
    let layout = FixtureLayout {
        root: dir.to_path_buf(),
        images: dir.join("images"),
        annotations: dir.join("annotations.jsonl"),
        train: dir.join("train.jsonl"),
        valid: dir.join("valid.jsonl"),
        test: dir.join("test.jsonl"),
    };
    fs::create_dir_all(&layout.images).map_err(|e| Error::io(&layout.images, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut annotations = Vec::new();
    for (split, n, path) in [
        ("train", spec.train, &layout.train),
        ("valid", spec.valid, &layout.valid),
        ("test", spec.test, &layout.test),
    ] {
        // groups of three posts, one per label, share every nuisance token
        let groups: Vec<Group> = (0..n.div_ceil(3))
            .map(|g| Group {
                target: NAMES[g % NAMES.len()],
                filler: FILLERS[(g * 7 + g / NAMES.len()) % FILLERS.len()],
                scene: SCENES[(g * 5 + g / FILLERS.len()) % SCENES.len()],
            })
            .collect();
        let mut slots: Vec<usize> = (0..n).collect();
        slots.shuffle(&mut rng);
        let mut posts: Vec<Post> = slots
            .into_iter()
            .enumerate()
            .map(|(i, slot)| {
                let kind = rng.random::<f64>();
                post(&mut rng, split, i, Label::ALL[slot % 3], &groups[slot / 3], kind, spec)
            })
            .collect();
        for i in 0..spec.faceless {
            posts.push(faceless_post(&mut rng, split, i, Label::ALL[i % 3]));
        }
        for p in &posts {
            let file = layout.images.join(&p.example.image_ref);
            draw(&p.faces)
                .save(&file)
                .map_err(|e| Error::Image {
                    id: p.example.image_ref.clone(),
                    reason: e.to_string(),
                })?;
        }
        let examples: Vec<&Example> = posts.iter().map(|p| &p.example).collect();
        write_jsonl(path, &examples)?;
        annotations.extend(posts.into_iter().map(|p| p.annotation));
    }
    write_jsonl(&layout.annotations, &annotations)?;
    Ok(layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_split, DatasetFormat};

    #[test]
    fn deterministic_and_balanced() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = FixtureSpec {
            train: 30,
            valid: 6,
            test: 9,
            ..FixtureSpec::default()
        };
        let la = generate_fixture(&spec, a.path()).unwrap();
        let lb = generate_fixture(&spec, b.path()).unwrap();
        for (x, y) in [(&la.train, &lb.train), (&la.annotations, &lb.annotations)] {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
        let train = load_split(&la.train, DatasetFormat::Jsonl).unwrap();
        assert_eq!(train.len(), 30);
        for l in Label::ALL {
            assert_eq!(train.iter().filter(|e| e.label == l).count(), 10);
        }
        assert!(la.images.join(&train[0].image_ref).is_file());
    }
}
