use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{shape_err, Result};

/// Row-major `height x width x channels` image with `f64` samples.
///
/// Ingested files keep their raw 8-bit range `[0, 255]`; generated images are
/// already in `[0, 1]`. [`preprocess`](super::preprocess) maps either to a
/// unit-range channel-first tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(shape_err!(
                "image dimensions must be positive, got {height}x{width}x{channels}"
            ));
        }
        if data.len() != height * width * channels {
            return Err(shape_err!(
                "{height}x{width}x{channels} image needs {} samples, got {}",
                height * width * channels,
                data.len()
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// Single-channel image from rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let h = rows.len();
        let w = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != w) {
            return Err(shape_err!("ragged rows"));
        }
        Self::new(h, w, 1, rows.concat())
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }
}

/// One dataset item. `label` is the binary class (0 normal, 1 defect) once
/// known; a confusable defect and the normal image sharing its base texture
/// carry the same `pair` id.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: Image,
    pub raw_label: String,
    pub label: Option<u8>,
    pub confusable: bool,
    pub pair: Option<usize>,
    pub source: Option<PathBuf>,
}

impl LabeledImage {
    pub fn new(image: Image, raw_label: impl Into<String>, label: Option<u8>) -> Self {
        Self {
            image,
            raw_label: raw_label.into(),
            label,
            confusable: false,
            pair: None,
            source: None,
        }
    }
}

/// An ordered collection of labeled images plus the factor that maps its
/// pixel values into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub items: Vec<LabeledImage>,
    pub rescale: f64,
}

impl Dataset {
    pub fn new(items: Vec<LabeledImage>, rescale: f64) -> Self {
        Self { items, rescale }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Count per binary label; unlabeled items are not counted.
    pub fn class_counts(&self) -> BTreeMap<u8, usize> {
        let mut counts = BTreeMap::new();
        for item in &self.items {
            if let Some(l) = item.label {
                *counts.entry(l).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn raw_label_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for item in &self.items {
            *counts.entry(item.raw_label.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
            rescale: self.rescale,
        }
    }
}
