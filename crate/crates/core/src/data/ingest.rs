use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::image::{Dataset, Image, LabeledImage};
use super::pgm::decode_pgm;
use crate::error::{invalid, Error, Result};

/// Result of scanning a directory tree: the dataset plus per-label counts
/// and the files that could not be decoded.
#[derive(Debug)]
pub struct IngestReport {
    pub dataset: Dataset,
    pub per_label: BTreeMap<String, usize>,
    pub skipped: Vec<(PathBuf, String)>,
}

/// Binary label implied by a directory name, if it is one of the two
/// canonical class names.
pub fn canonical_label(raw: &str) -> Option<u8> {
    match raw.to_ascii_lowercase().as_str() {
        "normal" => Some(0),
        "defect" => Some(1),
        _ => None,
    }
}

fn decode_file(path: &Path) -> std::result::Result<Image, String> {
    let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
    if bytes.starts_with(b"P5") {
        return decode_pgm(&bytes).map_err(|e| e.to_string());
    }
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(|e| e.to_string())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let decoded = if img.color().has_color() {
        Image::new(h, w, 3, img.to_rgb8().into_raw().into_iter().map(f64::from).collect())
    } else {
        Image::new(h, w, 1, img.to_luma8().into_raw().into_iter().map(f64::from).collect())
    };
    decoded.map_err(|e| e.to_string())
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("png" | "pgm")
    )
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Reads `root/<raw label>/*.{png,pgm}`. Every subdirectory becomes a raw
/// label; `normal` and `defect` also set the binary label. Unreadable files
/// are skipped with a warning.
pub fn ingest(root: impl AsRef<Path>) -> Result<IngestReport> {
    let root = root.as_ref();
    let dirs: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if dirs.is_empty() {
        return Err(invalid!("{} contains no label directories", root.display()));
    }
    let mut items = Vec::new();
    let mut per_label = BTreeMap::new();
    let mut skipped = Vec::new();
    for dir in dirs {
        let raw = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let count = per_label.entry(raw.clone()).or_insert(0usize);
        for file in sorted_entries(&dir)?.into_iter().filter(|p| p.is_file() && is_image(p)) {
            match decode_file(&file) {
                Ok(image) => {
                    let mut item = LabeledImage::new(image, raw.clone(), canonical_label(&raw));
                    item.source = Some(file);
                    items.push(item);
                    *count += 1;
                }
                Err(reason) => {
                    log::warn!("skipping {}: {reason}", file.display());
                    skipped.push((file, reason));
                }
            }
        }
    }
    Ok(IngestReport {
        dataset: Dataset::new(items, 1.0 / 255.0),
        per_label,
        skipped,
    })
}
