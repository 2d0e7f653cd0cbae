use serde::{Deserialize, Serialize};

use super::weights::{calibrate_from_logits, classify, combine, reciprocal_weights, Operand};
use crate::data::Samples;
use crate::error::{invalid, Result};
use crate::nn::{bce_mean, LayeredModel};
use crate::tensor::Tensor;
use crate::transfer::{FineTunedModel, TrainingHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    /// Serve the member with the lowest validation loss.
    #[default]
    MinLoss,
    /// Combine members with weights proportional to `1 / val_loss`.
    ReciprocalWeighted,
    /// Combine members with grid-calibrated weights.
    Calibrated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemberRecord {
    pub model_id: String,
    pub model: LayeredModel,
    pub input_shape: [usize; 3],
    pub val_loss: Option<f64>,
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub members: Vec<MemberRecord>,
    pub mode: EnsembleMode,
    pub operand: Operand,
    pub threshold: f64,
    pub expected_shape: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub model_id: String,
    pub reason: String,
}

/// Built ensemble plus the candidates that were turned away.
#[derive(Debug, Clone)]
pub struct Admission {
    pub ensemble: EnsembleModel,
    pub rejected: Vec<Rejection>,
}

/// Admits candidates in order while fewer than `n` are admitted, keeping
/// only those whose input shape equals `expected_shape`.
pub fn build_ensemble(candidates: Vec<FineTunedModel>, expected_shape: [usize; 3], n: usize) -> Result<Admission> {
    if n == 0 {
        return Err(invalid!("ensemble size must be at least 1"));
    }
    let mut members = Vec::new();
    let mut rejected = Vec::new();
    for cand in candidates {
        let shape = cand.input_shape();
        if members.len() == n {
            rejected.push(Rejection {
                model_id: cand.id,
                reason: format!("ensemble already holds {n} members"),
            });
        } else if shape != expected_shape {
            log::warn!("rejecting {}: input shape {shape:?} != {expected_shape:?}", cand.id);
            rejected.push(Rejection {
                model_id: cand.id,
                reason: format!("input shape {shape:?} differs from expected {expected_shape:?}"),
            });
        } else {
            members.push(MemberRecord {
                model_id: cand.id,
                input_shape: shape,
                model: cand.model,
                val_loss: None,
                weight: None,
            });
        }
    }
    if members.is_empty() {
        return Err(invalid!("no shape-compatible candidates"));
    }
    Ok(Admission {
        ensemble: EnsembleModel {
            members,
            mode: EnsembleMode::MinLoss,
            operand: Operand::Logit,
            threshold: 0.5,
            expected_shape,
        },
        rejected,
    })
}

/// Index of the smallest value; ties go to the lowest index.
pub fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v < values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Per-epoch history of the minimum-loss ensemble: at each epoch, the row
/// of the member with the lowest validation loss.
pub fn ensemble_history(members: &[TrainingHistory]) -> Result<TrainingHistory> {
    let epochs = members
        .first()
        .map(TrainingHistory::epochs)
        .ok_or_else(|| invalid!("no member histories"))?;
    if members.iter().any(|h| h.epochs() != epochs) {
        return Err(invalid!("member histories have different lengths"));
    }
    let mut out = TrainingHistory::default();
    for t in 0..epochs {
        let losses: Vec<f64> = members.iter().map(|h| h.val_loss[t]).collect();
        let i = argmin(&losses).expect("non-empty");
        let h = &members[i];
        out.push(h.train_loss[t], h.val_loss[t], h.train_acc[t], h.val_acc[t]);
    }
    Ok(out)
}

impl EnsembleModel {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn weights(&self) -> Option<Vec<f64>> {
        self.members.iter().map(|m| m.weight).collect()
    }

    pub fn val_losses(&self) -> Option<Vec<f64>> {
        self.members.iter().map(|m| m.val_loss).collect()
    }

    pub fn set_weights(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.members.len() {
            return Err(invalid!("{} weights for {} members", weights.len(), self.members.len()));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid!("weights must lie in [0, 1] and sum to 1, got {weights:?}"));
        }
        for (m, &w) in self.members.iter_mut().zip(weights) {
            m.weight = Some(w);
        }
        Ok(())
    }

    /// Fills each member's validation loss with its mean BCE on `val`.
    pub fn evaluate_members(&mut self, val: &Samples) -> Result<()> {
        if val.is_empty() {
            return Err(invalid!("validation set is empty"));
        }
        let logits = self.member_logits(val)?;
        for (member, z) in self.members.iter_mut().zip(&logits) {
            let probs: Vec<f64> = z.iter().map(|&v| crate::nn::sigmoid(v)).collect();
            member.val_loss = Some(bce_mean(&probs, val.labels()));
        }
        Ok(())
    }

    /// Member pre-sigmoid outputs over a sample set: `out[member][item]`.
    pub fn member_logits(&self, samples: &Samples) -> Result<Vec<Vec<f64>>> {
        if samples.shape() != self.expected_shape {
            return Err(invalid!(
                "samples have shape {:?}, ensemble expects {:?}",
                samples.shape(),
                self.expected_shape
            ));
        }
        let all: Vec<usize> = (0..samples.len()).collect();
        self.members
            .iter()
            .map(|m| {
                let mut out = Vec::with_capacity(samples.len());
                for chunk in all.chunks(256) {
                    let (x, _) = samples.batch(chunk);
                    out.extend_from_slice(m.model.logits(&x)?.values());
                }
                Ok(out)
            })
            .collect()
    }

    pub fn select_min_loss(&self) -> Result<usize> {
        let losses = self
            .val_losses()
            .ok_or_else(|| invalid!("member validation losses have not been computed"))?;
        if losses.iter().any(|l| l.is_nan()) {
            return Err(invalid!("member validation loss is NaN"));
        }
        argmin(&losses).ok_or_else(|| invalid!("ensemble has no members"))
    }

    /// Output of the minimum-loss member on `x`, a `(batch, C, H, W)` tensor.
    pub fn predict_min_loss(&self, x: &Tensor) -> Result<Tensor> {
        let i = self.select_min_loss()?;
        self.members[i].model.forward(x)
    }

    /// Weighted combination of member outputs on `x`.
    pub fn combine_weighted(&self, x: &Tensor) -> Result<Tensor> {
        let weights = self.weights().ok_or_else(|| invalid!("ensemble weights are not set"))?;
        let logits = self
            .members
            .iter()
            .map(|m| m.model.logits(x))
            .collect::<Result<Vec<_>>>()?;
        let n = logits[0].len();
        let mut column = vec![0.0; logits.len()];
        let probs: Vec<f64> = (0..n)
            .map(|j| {
                for (c, z) in column.iter_mut().zip(&logits) {
                    *c = z.values()[j];
                }
                combine(&column, &weights, self.operand)
            })
            .collect();
        Tensor::new(logits[0].shape().to_vec(), probs)
    }

    /// Sets weights proportional to the reciprocal validation losses.
    pub fn apply_reciprocal_weights(&mut self) -> Result<Vec<f64>> {
        let losses = self
            .val_losses()
            .ok_or_else(|| invalid!("member validation losses have not been computed"))?;
        let w = reciprocal_weights(&losses)?;
        self.set_weights(&w)?;
        self.mode = EnsembleMode::ReciprocalWeighted;
        Ok(w)
    }

    /// Grid search of weights maximizing `accuracy - lambda * loss` on `val`.
    pub fn calibrate_weights(&mut self, val: &Samples, lambda: f64, grid_step: f64) -> Result<Vec<f64>> {
        if val.is_empty() {
            return Err(invalid!("validation set is empty"));
        }
        let logits = self.member_logits(val)?;
        let (w, _) = calibrate_from_logits(&logits, val.labels(), self.operand, self.threshold, lambda, grid_step)?;
        self.set_weights(&w)?;
        self.mode = EnsembleMode::Calibrated;
        Ok(w)
    }

    /// Probabilities under the ensemble's mode.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        match self.mode {
            EnsembleMode::MinLoss => self.predict_min_loss(x),
            EnsembleMode::ReciprocalWeighted | EnsembleMode::Calibrated => self.combine_weighted(x),
        }
    }

    pub fn predict_samples(&self, samples: &Samples) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..samples.len()).collect();
        let mut out = Vec::with_capacity(samples.len());
        for chunk in all.chunks(256) {
            let (x, _) = samples.batch(chunk);
            out.extend_from_slice(self.predict(&x)?.values());
        }
        Ok(out)
    }

    pub fn classify(&self, probability: f64) -> u8 {
        classify(probability, self.threshold)
    }
}
