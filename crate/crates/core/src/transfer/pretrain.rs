use serde::{Deserialize, Serialize};

use super::backbone::BackboneSpec;
use super::history::TrainingHistory;
use super::train::{train_until, TrainOptions};
use crate::data::Samples;
use crate::error::{invalid, Result};
use crate::nn::{LayeredModel, SgdSchedule};
use crate::rng::{stream, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceMeta {
    pub source_task_id: String,
    pub epochs: usize,
    pub final_train_acc: f64,
}

/// A backbone trained on a source task, whose weights seed fine-tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedModel {
    pub model: LayeredModel,
    pub source_meta: SourceMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub schedule: SgdSchedule,
    pub seed: u64,
    /// Normalize inputs by the source pixels' mean and deviation.
    pub standardize: bool,
}

/// Trains every layer of a freshly initialized backbone on the source task.
/// The head has one sigmoid unit per source class.
pub fn pretrain_backbone(
    source: &Samples,
    classes: usize,
    source_task_id: &str,
    spec: &BackboneSpec,
    config: &PretrainConfig,
) -> Result<PretrainedModel> {
    if source.is_empty() {
        return Err(invalid!("source dataset is empty"));
    }
    if config.epochs == 0 {
        return Err(invalid!("epochs must be positive"));
    }
    let mut seen = vec![false; classes.max(1)];
    for &l in source.labels() {
        let k = l as usize;
        if k >= classes {
            return Err(invalid!("source label {k} outside {classes} classes"));
        }
        seen[k] = true;
    }
    if classes < 2 || seen.iter().filter(|s| **s).count() < 2 {
        return Err(invalid!("source task needs at least two populated classes"));
    }
    let outputs = if classes == 2 { 1 } else { classes };
    let mut rng = substream(config.seed, &[stream::INIT]);
    let mut model = spec.build(source.shape(), outputs, &mut rng)?;
    if config.standardize {
        model.set_input_norm(source.pixel_norm())?;
    }
    let opts = TrainOptions {
        batch_size: config.batch_size.min(source.len()),
        epochs: config.epochs,
        schedule: config.schedule,
        seed: config.seed,
        augment: None,
    };
    let mut history = TrainingHistory::default();
    train_until(&mut model, source, None, &opts, &mut history)?;
    let final_train_acc = *history.train_acc.last().expect("at least one epoch");
    Ok(PretrainedModel {
        model,
        source_meta: SourceMeta {
            source_task_id: source_task_id.to_string(),
            epochs: config.epochs,
            final_train_acc,
        },
    })
}
