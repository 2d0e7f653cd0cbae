use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Log clamp for probabilities entering the cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

/// Mean binary cross-entropy over every element, and its gradient with
/// respect to `pred`. Predictions are clamped to `[BCE_EPS, 1 - BCE_EPS]`
/// before the logarithm and in the derivative.
pub fn bce_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(shape_err!(
            "prediction shape {:?} differs from target shape {:?}",
            pred.shape(),
            target.shape()
        ));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &y) in pred.values().iter().zip(target.values()) {
        let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        grad.push((-y / p + (1.0 - y) / (1.0 - p)) / n);
    }
    Ok((loss / n, Tensor::new(pred.shape().to_vec(), grad)?))
}

/// Mean binary cross-entropy of plain probability/label slices.
pub fn bce_mean(pred: &[f64], target: &[f64]) -> f64 {
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    sum / pred.len() as f64
}
