//! `manifest.csv` (`path,raw_label,label,confusable`), the interchange format
//! between pipeline stages, and on-disk export of generated datasets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::image::{Dataset, LabeledImage};
use super::pgm::{decode_pgm, unit_to_byte, write_pgm};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub raw_label: String,
    pub label: u8,
    pub confusable: u8,
}

/// Writes every image as an 8-bit PGM under `dir/<raw_label>/` and returns
/// the manifest rows with paths relative to `dir`.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let dir = dir.as_ref();
    let mut rows = Vec::with_capacity(dataset.len());
    for (i, item) in dataset.items.iter().enumerate() {
        if item.image.channels != 1 {
            return Err(invalid!("item {i}: only single-channel images export to PGM"));
        }
        let label = item.label.ok_or_else(|| invalid!("item {i} has no binary label"))?;
        let rel = PathBuf::from(&item.raw_label).join(format!("{i:05}.pgm"));
        let full = dir.join(&rel);
        if let Some(parent) = full.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let bytes: Vec<u8> = item
            .image
            .data
            .iter()
            .map(|&v| unit_to_byte(v * dataset.rescale))
            .collect();
        write_pgm(&full, item.image.width, item.image.height, &bytes)?;
        rows.push(ManifestRow {
            path: rel.to_string_lossy().replace('\\', "/"),
            raw_label: item.raw_label.clone(),
            label,
            confusable: u8::from(item.confusable),
        });
    }
    write_manifest(dir.join("manifest.csv"), &rows)?;
    Ok(rows)
}

pub fn write_manifest(path: impl AsRef<Path>, rows: &[ManifestRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Loads the images a manifest lists, resolving paths against the
/// manifest's directory. Pixel values come back in the 8-bit range.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let mut items = Vec::new();
    for row in read_manifest(path)? {
        if row.label > 1 || row.confusable > 1 {
            return Err(invalid!(
                "manifest row {:?}: label and confusable must be 0 or 1",
                row.path
            ));
        }
        let file = base.join(&row.path);
        let bytes = std::fs::read(&file).map_err(|e| Error::io(&file, e))?;
        let image = decode_pgm(&bytes)?;
        let mut item = LabeledImage::new(image, row.raw_label, Some(row.label));
        item.confusable = row.confusable == 1;
        item.source = Some(file);
        items.push(item);
    }
    Ok(Dataset::new(items, 1.0 / 255.0))
}
