//! Central finite differences, the reference that backpropagation is checked
//! against. Each parameter is perturbed on a private copy of the model.

use super::loss::bce_loss;
use super::model::{Gradients, LayeredModel};
use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Finite-difference estimate of d(mean BCE)/d(param) for every trainable
/// parameter. Frozen layers get no entry.
pub fn finite_difference_grads(model: &LayeredModel, batch: &Tensor, targets: &Tensor, h: f64) -> Result<Gradients> {
    if !(h > 0.0) {
        return Err(invalid!("step must be positive, got {h}"));
    }
    let loss_at = |m: &LayeredModel| -> Result<f64> {
        let out = m.forward(batch)?;
        Ok(bce_loss(&out, targets)?.0)
    };
    loss_at(model)?;
    let mut work = model.clone();
    let mut grads = Gradients::default();
    for (li, layer) in model.layers().iter().enumerate() {
        if !layer.trainable || !layer.kind.has_params() {
            continue;
        }
        let mut per_param = Vec::with_capacity(layer.params.len());
        for (pi, param) in layer.params.iter().enumerate() {
            let mut g = vec![0.0; param.len()];
            for (k, slot) in g.iter_mut().enumerate() {
                let orig = param.values()[k];
                work.layers_mut()[li].params[pi].values_mut()[k] = orig + h;
                let up = loss_at(&work)?;
                work.layers_mut()[li].params[pi].values_mut()[k] = orig - h;
                let down = loss_at(&work)?;
                work.layers_mut()[li].params[pi].values_mut()[k] = orig;
                *slot = (up - down) / (2.0 * h);
            }
            per_param.push(Tensor::new(param.shape().to_vec(), g)?);
        }
        grads.entries.insert(li, per_param);
    }
    Ok(grads)
}
