//! Ensemble manifests: `{format_version, mode, operand, threshold,
//! expected_shape, members: [{model_id, model_path, val_loss, weight}]}`.
//! Model paths are stored relative to the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::{EnsembleMode, EnsembleModel, MemberRecord};
use super::weights::Operand;
use crate::error::{Error, Result};
use crate::nn::{load_model, save_model};

pub const ENSEMBLE_FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestMember {
    pub model_id: String,
    pub model_path: String,
    pub val_loss: Option<f64>,
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleManifest {
    pub format_version: u64,
    pub mode: EnsembleMode,
    #[serde(default)]
    pub operand: Operand,
    pub threshold: f64,
    pub expected_shape: [usize; 3],
    pub members: Vec<ManifestMember>,
}

fn model_file(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.model.json")
}

/// Writes each member's model next to the manifest and the manifest itself.
pub fn save_ensemble(ensemble: &EnsembleModel, manifest_path: impl AsRef<Path>) -> Result<EnsembleManifest> {
    let manifest_path = manifest_path.as_ref();
    let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut members = Vec::with_capacity(ensemble.members.len());
    for m in &ensemble.members {
        let rel = model_file(&m.model_id);
        save_model(&m.model, dir.join(&rel))?;
        members.push(ManifestMember {
            model_id: m.model_id.clone(),
            model_path: rel,
            val_loss: m.val_loss,
            weight: m.weight,
        });
    }
    let manifest = EnsembleManifest {
        format_version: ENSEMBLE_FORMAT_VERSION,
        mode: ensemble.mode,
        operand: ensemble.operand,
        threshold: ensemble.threshold,
        expected_shape: ensemble.expected_shape,
        members,
    };
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))?;
    Ok(manifest)
}

pub fn load_ensemble(manifest_path: impl AsRef<Path>) -> Result<EnsembleModel> {
    let manifest_path = manifest_path.as_ref();
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: EnsembleManifest = serde_json::from_str(&text)?;
    if manifest.format_version != ENSEMBLE_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: manifest.format_version,
            expected: ENSEMBLE_FORMAT_VERSION,
        });
    }
    if manifest.members.is_empty() {
        return Err(Error::Format("ensemble manifest lists no members".into()));
    }
    let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut members = Vec::with_capacity(manifest.members.len());
    for m in manifest.members {
        let path = PathBuf::from(&m.model_path);
        let path = if path.is_absolute() { path } else { dir.join(path) };
        let model = load_model(&path)?;
        if model.input_shape() != manifest.expected_shape {
            return Err(Error::Format(format!(
                "member {} has input shape {:?}, manifest expects {:?}",
                m.model_id,
                model.input_shape(),
                manifest.expected_shape
            )));
        }
        members.push(MemberRecord {
            model_id: m.model_id,
            input_shape: model.input_shape(),
            model,
            val_loss: m.val_loss,
            weight: m.weight,
        });
    }
    let ensemble = EnsembleModel {
        members,
        mode: manifest.mode,
        operand: manifest.operand,
        threshold: manifest.threshold,
        expected_shape: manifest.expected_shape,
    };
    if ensemble.mode != EnsembleMode::MinLoss {
        let w = ensemble
            .weights()
            .ok_or_else(|| Error::Format("weighted ensemble is missing member weights".into()))?;
        let mut check = ensemble.clone();
        check.set_weights(&w).map_err(|e| Error::Format(e.to_string()))?;
    } else if ensemble.val_losses().is_none() {
        return Err(Error::Format("min-loss ensemble is missing validation losses".into()));
    }
    Ok(ensemble)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::BackboneSpec;

    fn ensemble() -> EnsembleModel {
        let mut rng = crate::rng::rng_from(3);
        let members = (0..2)
            .map(|i| {
                let model = BackboneSpec::small().build([1, 8, 8], 1, &mut rng).unwrap();
                MemberRecord {
                    model_id: format!("m/{i}"),
                    input_shape: [1, 8, 8],
                    model,
                    val_loss: Some(0.25 + i as f64 / 10.0),
                    weight: Some([0.3, 0.7][i]),
                }
            })
            .collect();
        EnsembleModel {
            members,
            mode: EnsembleMode::Calibrated,
            operand: Operand::Logit,
            threshold: 0.4,
            expected_shape: [1, 8, 8],
        }
    }

    #[test]
    fn round_trip_uses_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let e = ensemble();
        let manifest = save_ensemble(&e, dir.path().join("ensemble.json")).unwrap();
        assert_eq!(manifest.members[0].model_path, "m_0.model.json");
        let moved = tempfile::tempdir().unwrap();
        for name in ["ensemble.json", "m_0.model.json", "m_1.model.json"] {
            std::fs::copy(dir.path().join(name), moved.path().join(name)).unwrap();
        }
        let back = load_ensemble(moved.path().join("ensemble.json")).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn unknown_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ensemble.json");
        save_ensemble(&ensemble(), &path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 9");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            load_ensemble(&path),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
    }
}
