//! Epsilon-consistency of validation-loss histories.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::transfer::TrainingHistory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCriterion {
    pub epsilon: f64,
    pub window: usize,
}

impl Default for ConsistencyCriterion {
    fn default() -> Self {
        Self {
            epsilon: 0.001,
            window: 3,
        }
    }
}

impl ConsistencyCriterion {
    pub fn new(epsilon: f64, window: usize) -> Result<Self> {
        let c = Self { epsilon, window };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(invalid!(
                "epsilon must be finite and non-negative, got {}",
                self.epsilon
            ));
        }
        if self.window == 0 {
            return Err(invalid!("consistency window must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub epsilon: f64,
    pub window: usize,
    pub deltas: Vec<f64>,
    pub first_stable_epoch: Option<usize>,
    pub empirical_epsilon: f64,
    pub tail: usize,
    pub reusable: bool,
}

/// `|val_loss[t + 1] - val_loss[t]|` for each pair of neighbouring epochs.
pub fn successive_deltas(history: &TrainingHistory) -> Result<Vec<f64>> {
    let v = &history.val_loss;
    if v.len() < 2 {
        return Err(invalid!("need at least 2 epochs for loss deltas, got {}", v.len()));
    }
    Ok(v.windows(2).map(|w| (w[1] - w[0]).abs()).collect())
}

/// Smallest `t` where `window` consecutive deltas starting at `t` are all
/// within `epsilon`.
pub fn first_stable_from_deltas(deltas: &[f64], criterion: &ConsistencyCriterion) -> Result<Option<usize>> {
    criterion.validate()?;
    if deltas.len() < criterion.window {
        return Err(invalid!(
            "{} epochs cannot hold a window of {} deltas",
            deltas.len() + 1,
            criterion.window
        ));
    }
    let mut run = 0;
    for (i, &d) in deltas.iter().enumerate() {
        run = if d <= criterion.epsilon { run + 1 } else { 0 };
        if run == criterion.window {
            return Ok(Some(i + 1 - criterion.window));
        }
    }
    Ok(None)
}

pub fn first_stable_epoch(history: &TrainingHistory, criterion: &ConsistencyCriterion) -> Result<Option<usize>> {
    first_stable_from_deltas(&successive_deltas(history)?, criterion)
}

/// Default tail: the last quarter of the epochs, at least 3 deltas, capped
/// by the number of deltas available.
pub fn default_tail(epochs: usize) -> usize {
    let quarter = (epochs as f64 * 0.25).ceil() as usize;
    quarter.max(3).min(epochs.saturating_sub(1))
}

/// Largest delta among the last `tail`.
pub fn empirical_epsilon(history: &TrainingHistory, tail: usize) -> Result<f64> {
    let deltas = successive_deltas(history)?;
    if tail == 0 || tail > deltas.len() {
        return Err(invalid!("tail must lie in 1..={}, got {tail}", deltas.len()));
    }
    Ok(deltas[deltas.len() - tail..].iter().cloned().fold(0.0, f64::max))
}

/// Full report. `tail` defaults to [`default_tail`].
pub fn consistency_report(
    history: &TrainingHistory,
    criterion: &ConsistencyCriterion,
    tail: Option<usize>,
) -> Result<ConsistencyReport> {
    let deltas = successive_deltas(history)?;
    let first = first_stable_from_deltas(&deltas, criterion)?;
    let tail = tail.unwrap_or_else(|| default_tail(history.epochs()));
    let eps = empirical_epsilon(history, tail)?;
    Ok(ConsistencyReport {
        epsilon: criterion.epsilon,
        window: criterion.window,
        deltas,
        first_stable_epoch: first,
        empirical_epsilon: eps,
        tail,
        reusable: eps <= criterion.epsilon,
    })
}
