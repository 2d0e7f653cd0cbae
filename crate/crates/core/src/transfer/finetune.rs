use serde::{Deserialize, Serialize};

use super::graft::middle_range;
use super::history::TrainingHistory;
use super::train::{train_until, TrainOptions};
use crate::data::{AugmentPipeline, Samples};
use crate::error::{invalid, Result};
use crate::nn::{LayerKind, LayeredModel, SgdSchedule};

/// Which layers stay frozen during fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezePolicy {
    /// Everything between the grafted input layer and the grafted head.
    Backbone,
    /// Nothing frozen (training from scratch).
    None,
    /// An explicit half-open layer range.
    Range(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineTuneConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub schedule: SgdSchedule,
    pub freeze: FreezePolicy,
    pub seed: u64,
    pub augment: Option<AugmentPipeline>,
    /// Refit the model's input normalization to the training pixels first.
    pub standardize: bool,
}

impl FineTuneConfig {
    pub fn freeze_range(&self, model: &LayeredModel) -> Result<Option<(usize, usize)>> {
        match self.freeze {
            FreezePolicy::Backbone => middle_range(model).map(Some),
            FreezePolicy::None => Ok(None),
            FreezePolicy::Range(a, b) => {
                if a > b || b > model.len() {
                    return Err(invalid!("freeze range {a}..{b} outside 0..{}", model.len()));
                }
                Ok(Some((a, b)))
            }
        }
    }

    fn options(&self) -> TrainOptions {
        TrainOptions {
            batch_size: self.batch_size,
            epochs: self.epochs,
            schedule: self.schedule,
            seed: self.seed,
            augment: self.augment.clone(),
        }
    }
}

/// A fine-tuned member candidate: a sigmoid-headed model and its name.
#[derive(Debug, Clone, PartialEq)]
pub struct FineTunedModel {
    pub id: String,
    pub model: LayeredModel,
}

impl FineTunedModel {
    pub fn new(id: impl Into<String>, model: LayeredModel) -> Self {
        Self { id: id.into(), model }
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.model.input_shape()
    }
}

fn check_binary_head(model: &LayeredModel, train: &Samples) -> Result<()> {
    if !matches!(model.layers().last().map(|l| l.kind), Some(LayerKind::Sigmoid)) || model.output_shape().size() != 1 {
        return Err(invalid!("fine-tuning needs a single sigmoid output unit"));
    }
    if train.labels().iter().any(|&l| l != 0.0 && l != 1.0) {
        return Err(invalid!("fine-tuning labels must be binary"));
    }
    Ok(())
}

/// Optionally refits input normalization, freezes per `config`, then runs `config.epochs` epochs of SGD.
pub fn finetune(
    mut model: LayeredModel,
    train: &Samples,
    val: &Samples,
    config: &FineTuneConfig,
) -> Result<(LayeredModel, TrainingHistory)> {
    check_binary_head(&model, train)?;
    if config.standardize {
        model.set_input_norm(train.pixel_norm())?;
    }
    if let Some(range) = config.freeze_range(&model)? {
        model.freeze(range)?;
    }
    let mut history = TrainingHistory::default();
    train_until(&mut model, train, Some(val), &config.options(), &mut history)?;
    Ok((model, history))
}

/// Continues a fine-tune that stopped after `history.epochs()` epochs up to
/// `config.epochs`. With the same seed and data this reproduces an
/// uninterrupted run exactly, because shuffles, augmentation and learning
/// rates are keyed by absolute epoch. Trainable flags and input
/// normalization are taken from the model as saved.
pub fn resume_finetune(
    mut model: LayeredModel,
    mut history: TrainingHistory,
    train: &Samples,
    val: &Samples,
    config: &FineTuneConfig,
) -> Result<(LayeredModel, TrainingHistory)> {
    check_binary_head(&model, train)?;
    history.validate()?;
    if history.epochs() > config.epochs {
        return Err(invalid!(
            "history already has {} epochs, more than the {} requested",
            history.epochs(),
            config.epochs
        ));
    }
    if history.epochs() < config.epochs {
        train_until(&mut model, train, Some(val), &config.options(), &mut history)?;
    }
    Ok((model, history))
}
