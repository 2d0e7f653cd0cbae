//! `report.json`, `consistency.json` and curve export.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::consistency::ConsistencyReport;
use super::metrics::{ConfusionMatrix, Metrics, UndefinedFlags};
use crate::error::{Error, Result};
use crate::transfer::TrainingHistory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySummary {
    pub epsilon: f64,
    pub window: usize,
    pub first_stable_epoch: Option<usize>,
    pub empirical_epsilon: f64,
    pub reusable: bool,
}

impl From<&ConsistencyReport> for ConsistencySummary {
    fn from(r: &ConsistencyReport) -> Self {
        Self {
            epsilon: r.epsilon,
            window: r.window,
            first_stable_epoch: r.first_stable_epoch,
            empirical_epsilon: r.empirical_epsilon,
            reusable: r.reusable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: ConfusionMatrix,
    pub undefined: UndefinedFlags,
    pub threshold: f64,
    pub consistency: Option<ConsistencySummary>,
}

impl EvalReport {
    pub fn new(metrics: &Metrics, threshold: f64, consistency: Option<&ConsistencyReport>) -> Self {
        Self {
            accuracy: metrics.accuracy,
            precision: metrics.precision,
            recall: metrics.recall,
            f1: metrics.f1,
            confusion: metrics.confusion,
            undefined: metrics.undefined,
            threshold,
            consistency: consistency.map(ConsistencySummary::from),
        }
    }
}

/// Full consistency detail, with the per-epoch `val_loss - train_loss` gap
/// as an ungated diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyDetail {
    #[serde(flatten)]
    pub report: ConsistencyReport,
    pub loss_gap: Vec<f64>,
}

impl ConsistencyDetail {
    pub fn new(report: ConsistencyReport, history: &TrainingHistory) -> Self {
        let loss_gap = history
            .val_loss
            .iter()
            .zip(&history.train_loss)
            .map(|(v, t)| v - t)
            .collect();
        Self { report, loss_gap }
    }
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn export_curves(history: &TrainingHistory, path: impl AsRef<Path>) -> Result<()> {
    history.write_csv(path)
}
