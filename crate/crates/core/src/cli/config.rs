//! Run configuration: a strict JSON document where every key is optional.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{AugmentPipeline, SplitRatios, SyntheticConfig};
use crate::ensemble::{EnsembleMode, Operand};
use crate::monitor::ConsistencyCriterion;
use crate::nn::SgdSchedule;
use crate::transfer::{BackboneSpec, FreezePolicy, InputLayer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Synthetic,
    /// One subdirectory per raw label under `path`.
    Directory,
    /// A `manifest.csv` written by `synth`.
    Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub path: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
    /// Defaults to the experiment preset when absent.
    pub ratios: Option<SplitRatios>,
    pub image_size: (usize, usize),
    /// Raw-label prefix to parent class, applied before binary mapping.
    pub label_groups: BTreeMap<String, String>,
    pub defect_classes: Vec<String>,
    pub normal_classes: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            path: None,
            synthetic: SyntheticConfig::default(),
            ratios: None,
            image_size: (32, 32),
            label_groups: BTreeMap::new(),
            defect_classes: vec!["defect".into()],
            normal_classes: vec!["normal".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Defaults to on for `exp1` and off elsewhere.
    pub enabled: Option<bool>,
    pub flip_h: bool,
    pub flip_v: bool,
    pub rotation_factor: f64,
    pub zoom_factor: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        let p = AugmentPipeline::default();
        Self {
            enabled: None,
            flip_h: p.flip_h,
            flip_v: p.flip_v,
            rotation_factor: p.rotation_factor,
            zoom_factor: p.zoom_factor,
        }
    }
}

/// Surrogate source-task pretraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub per_class: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub decay: f64,
}

impl Default for PretrainSection {
    fn default() -> Self {
        Self {
            per_class: 150,
            epochs: 30,
            batch_size: 32,
            lr: 0.3,
            decay: 0.97,
        }
    }
}

impl PretrainSection {
    pub fn schedule(&self) -> SgdSchedule {
        SgdSchedule {
            initial_lr: self.lr,
            decay: self.decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezeChoice {
    #[default]
    Backbone,
    None,
}

impl From<FreezeChoice> for FreezePolicy {
    fn from(c: FreezeChoice) -> Self {
        match c {
            FreezeChoice::Backbone => FreezePolicy::Backbone,
            FreezeChoice::None => FreezePolicy::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    /// Defaults to the experiment preset when absent.
    pub epochs: Option<usize>,
    pub lr: f64,
    pub decay: f64,
    pub freeze: FreezeChoice,
    pub input_layer: InputLayer,
    /// Normalize model inputs by the training pixels' mean and deviation.
    pub standardize: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let s = SgdSchedule::default();
        Self {
            batch_size: 32,
            epochs: None,
            lr: s.initial_lr,
            decay: s.decay,
            freeze: FreezeChoice::Backbone,
            input_layer: InputLayer::Adapted,
            standardize: true,
        }
    }
}

impl TrainSection {
    pub fn schedule(&self) -> SgdSchedule {
        SgdSchedule {
            initial_lr: self.lr,
            decay: self.decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub n: usize,
    pub mode: EnsembleMode,
    pub operand: Operand,
    pub threshold: f64,
    pub lambda: f64,
    pub grid_step: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            n: 3,
            mode: EnsembleMode::MinLoss,
            operand: Operand::Logit,
            threshold: 0.5,
            lambda: 1.0,
            grid_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsistencySection {
    pub epsilon: f64,
    pub window: usize,
    /// Defaults to the last quarter of the epochs, at least 3.
    pub tail: Option<usize>,
}

impl Default for ConsistencySection {
    fn default() -> Self {
        let c = ConsistencyCriterion::default();
        Self {
            epsilon: c.epsilon,
            window: c.window,
            tail: None,
        }
    }
}

impl ConsistencySection {
    pub fn criterion(&self) -> ConsistencyCriterion {
        ConsistencyCriterion {
            epsilon: self.epsilon,
            window: self.window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Convolution whose channels are correlated; the last one when absent.
    pub feature_layer: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub augment: AugmentConfig,
    pub pretrain: PretrainSection,
    pub train: TrainSection,
    pub backbones: Vec<BackboneSpec>,
    pub ensemble: EnsembleSection,
    pub consistency: ConsistencySection,
    pub diagnostics: DiagnosticsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            augment: AugmentConfig::default(),
            pretrain: PretrainSection::default(),
            train: TrainSection::default(),
            backbones: BackboneSpec::defaults(),
            ensemble: EnsembleSection::default(),
            consistency: ConsistencySection::default(),
            diagnostics: DiagnosticsSection::default(),
        }
    }
}

/// Values that depend on which command runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub epochs: usize,
    pub ratios: SplitRatios,
    pub augment: bool,
}

impl Preset {
    /// Augmented from-scratch baseline.
    pub const EXP1: Preset = Preset {
        epochs: 50,
        ratios: SplitRatios::new(0.8, 0.1, 0.1),
        augment: true,
    };
    /// Per-backbone frozen fine-tuning.
    pub const EXP2: Preset = Preset {
        epochs: 10,
        ratios: SplitRatios::new(0.6, 0.2, 0.2),
        augment: false,
    };
    /// Ensemble of fine-tuned members.
    pub const EXP3: Preset = Preset {
        epochs: 20,
        ratios: SplitRatios::new(0.6, 0.2, 0.2),
        augment: false,
    };
    pub const STAGE: Preset = Preset::EXP3;
}

impl RunConfig {
    /// Fills every preset-dependent field left unset.
    pub fn resolve(mut self, preset: Preset) -> Self {
        self.train.epochs.get_or_insert(preset.epochs);
        self.data.ratios.get_or_insert(preset.ratios);
        self.augment.enabled.get_or_insert(preset.augment);
        self.data.synthetic.image_size = self.data.image_size;
        self.data.synthetic.seed = self.seed;
        self
    }

    pub fn epochs(&self) -> usize {
        self.train.epochs.unwrap_or(Preset::STAGE.epochs)
    }

    pub fn ratios(&self) -> SplitRatios {
        self.data.ratios.unwrap_or(Preset::STAGE.ratios)
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [1, self.data.image_size.0, self.data.image_size.1]
    }

    /// The training-time augmentation, or `None` when disabled.
    pub fn augment_pipeline(&self) -> Option<AugmentPipeline> {
        if !self.augment.enabled.unwrap_or(false) {
            return None;
        }
        Some(AugmentPipeline {
            target_size: self.data.image_size,
            rescale: 1.0,
            flip_h: self.augment.flip_h,
            flip_v: self.augment.flip_v,
            rotation_factor: self.augment.rotation_factor,
            zoom_factor: self.augment.zoom_factor,
            seed: self.seed,
        })
    }
}

/// A configuration problem, reported with exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn describe(e: &serde_json::Error, origin: &str) -> ConfigError {
    if e.line() > 0 {
        ConfigError(format!("{origin}: {e}"))
    } else {
        ConfigError(format!("{origin}: {e} (line {}, column {})", e.line(), e.column()))
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses a configuration document and applies inline JSON overrides in
/// order. Absent keys take defaults; unknown keys are rejected.
pub fn parse_config(text: Option<&str>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let text = text.unwrap_or("{}");
    if overrides.is_empty() {
        return serde_json::from_str(text).map_err(|e| describe(&e, "config"));
    }
    let mut doc: Value = serde_json::from_str(text).map_err(|e| describe(&e, "config"))?;
    for (i, o) in overrides.iter().enumerate() {
        let patch: Value = serde_json::from_str(o).map_err(|e| describe(&e, &format!("override {}", i + 1)))?;
        if !patch.is_object() {
            return Err(ConfigError(format!("override {}: expected a JSON object", i + 1)));
        }
        merge(&mut doc, patch);
    }
    serde_json::from_value(doc).map_err(|e| ConfigError(format!("config: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c = parse_config(Some("{}"), &[]).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.seed, 42);
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.train.lr, 0.003);
        assert_eq!(c.consistency.epsilon, 0.001);
        assert_eq!(c.consistency.window, 3);
        assert_eq!(c.ensemble.n, 3);
        assert_eq!(c.ensemble.threshold, 0.5);
        assert_eq!(c.ensemble.lambda, 1.0);
    }

    #[test]
    fn partial_sections_merge() {
        let c = parse_config(Some(r#"{"train":{"epochs":20}}"#), &[]).unwrap();
        assert_eq!(c.train.epochs, Some(20));
        assert_eq!(c.train.batch_size, 32);
        let c = parse_config(
            Some(r#"{"seed":1}"#),
            &[r#"{"train":{"lr":0.1}}"#.into(), r#"{"seed":5}"#.into()],
        )
        .unwrap();
        assert_eq!((c.seed, c.train.lr), (5, 0.1));
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = parse_config(Some(r#"{"trian":{}}"#), &[]).unwrap_err();
        assert!(e.0.contains("trian"), "{e}");
        let e = parse_config(Some(r#"{"train":{"epoch":3}}"#), &[]).unwrap_err();
        assert!(e.0.contains("epoch"), "{e}");
        let e = parse_config(None, &[r#"{"trian":{}}"#.into()]).unwrap_err();
        assert!(e.0.contains("trian"), "{e}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let e = parse_config(Some("{\n  \"seed\": 4,\n  oops\n}"), &[]).unwrap_err();
        assert!(e.0.contains("line 3"), "{e}");
    }

    #[test]
    fn presets_fill_only_unset_fields() {
        let c = parse_config(Some(r#"{"train":{"epochs":7}}"#), &[])
            .unwrap()
            .resolve(Preset::EXP1);
        assert_eq!(c.train.epochs, Some(7));
        assert_eq!(c.data.ratios, Some(SplitRatios::new(0.8, 0.1, 0.1)));
        assert_eq!(c.augment.enabled, Some(true));
        let round: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(round.resolve(Preset::EXP3).data.ratios, c.data.ratios);
    }
}
