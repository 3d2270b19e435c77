//! Image loading for dataset records.

use std::path::{Path, PathBuf};

use image::RgbImage;

use crate::error::{Error, Result};

/// An RGB pixel array together with the reference it was loaded from.
#[derive(Debug, Clone)]
pub struct LoadedImage {
    pub id: String,
    pub pixels: RgbImage,
}

impl LoadedImage {
    pub fn new(id: impl Into<String>, pixels: RgbImage) -> Self {
        LoadedImage {
            id: id.into(),
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.width() == 0 || self.pixels.height() == 0
    }
}

/// Resolves `image_ref`s relative to a root directory.
#[derive(Debug, Clone)]
pub struct ImageStore {
    root: PathBuf,
}

impl ImageStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ImageStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_of(&self, image_ref: &str) -> PathBuf {
        self.root.join(image_ref)
    }

    pub fn load(&self, image_ref: &str) -> Result<LoadedImage> {
        let path = self.path_of(image_ref);
        let decoded = image::open(&path).map_err(|e| Error::Image {
            id: image_ref.to_string(),
            reason: e.to_string(),
        })?;
        let img = LoadedImage::new(image_ref, decoded.to_rgb8());
        if img.is_empty() {
            return Err(Error::Image {
                id: image_ref.to_string(),
                reason: "image has no pixels".into(),
            });
        }
        Ok(img)
    }
}
