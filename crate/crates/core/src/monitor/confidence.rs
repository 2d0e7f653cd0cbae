use std::path::Path;

use serde::Serialize;

use crate::data::Samples;
use crate::ensemble::{classify, EnsembleModel};
use crate::error::{invalid, Error, Result};
use crate::nn::LayeredModel;
use crate::tensor::Tensor;

/// Anything that maps a `(batch, C, H, W)` tensor to per-item probabilities.
pub trait Predictor {
    fn input_shape(&self) -> [usize; 3];
    fn predict(&self, x: &Tensor) -> Result<Tensor>;
}

impl Predictor for LayeredModel {
    fn input_shape(&self) -> [usize; 3] {
        LayeredModel::input_shape(self)
    }

    fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(x)
    }
}

impl Predictor for EnsembleModel {
    fn input_shape(&self) -> [usize; 3] {
        self.expected_shape
    }

    fn predict(&self, x: &Tensor) -> Result<Tensor> {
        EnsembleModel::predict(self, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceRow {
    pub item_id: usize,
    pub probability: f64,
    pub predicted: u8,
    #[serde(rename = "true")]
    pub true_label: u8,
}

/// One row per item of `samples`, evaluated one item at a time so rows do
/// not depend on how a caller batches them.
pub fn batch_confidence<P: Predictor + ?Sized>(
    predictor: &P,
    samples: &Samples,
    threshold: f64,
) -> Result<Vec<ConfidenceRow>> {
    if samples.is_empty() {
        return Err(invalid!("confidence batch is empty"));
    }
    if samples.shape() != predictor.input_shape() {
        return Err(invalid!(
            "batch items have shape {:?}, predictor expects {:?}",
            samples.shape(),
            predictor.input_shape()
        ));
    }
    (0..samples.len())
        .map(|i| {
            let (x, _) = samples.batch(&[i]);
            let out = predictor.predict(&x)?;
            if out.len() != 1 {
                return Err(invalid!(
                    "predictor returned {} outputs per item, expected 1",
                    out.len()
                ));
            }
            let probability = out.values()[0];
            Ok(ConfidenceRow {
                item_id: i,
                probability,
                predicted: classify(probability, threshold),
                true_label: samples.labels()[i] as u8,
            })
        })
        .collect()
}

pub fn write_confidence_csv(rows: &[ConfidenceRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
