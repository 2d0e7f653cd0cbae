//! Mini-batch SGD over [`Samples`] with binary cross-entropy.

use rand::seq::SliceRandom;

use super::history::TrainingHistory;
use crate::data::{AugmentPipeline, Samples};
use crate::error::{invalid, Result};
use crate::nn::{bce_loss, ForwardCache, LayeredModel, SgdSchedule};
use crate::rng::{derive_seed, rng_from, stream, substream};
use crate::tensor::Tensor;

/// Settings shared by pretraining and fine-tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub batch_size: usize,
    pub epochs: usize,
    pub schedule: SgdSchedule,
    pub seed: u64,
    pub augment: Option<AugmentPipeline>,
}

/// Targets for a batch: the label itself for one output unit, one-hot
/// vectors for several.
fn targets(samples: &Samples, indices: &[usize], outputs: usize) -> Result<Tensor> {
    if outputs == 1 {
        return Ok(samples.batch(indices).1);
    }
    let mut y = vec![0.0; indices.len() * outputs];
    for (row, &i) in indices.iter().enumerate() {
        let class = samples.labels()[i] as usize;
        if class >= outputs {
            return Err(invalid!("label {class} outside a {outputs}-unit head"));
        }
        y[row * outputs + class] = 1.0;
    }
    Tensor::new(vec![indices.len(), outputs], y)
}

fn output_units(model: &LayeredModel) -> usize {
    model.output_shape().size()
}

/// Correct predictions in a batch: threshold 0.5 for one unit, argmax for
/// several.
fn correct(pred: &Tensor, samples: &Samples, indices: &[usize], outputs: usize) -> usize {
    pred.values()
        .chunks_exact(outputs)
        .zip(indices)
        .filter(|(p, &i)| {
            let label = samples.labels()[i];
            if outputs == 1 {
                (p[0] >= 0.5) == (label >= 0.5)
            } else {
                let arg = p
                    .iter()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |best, (k, &v)| if v > best.1 { (k, v) } else { best },
                    )
                    .0;
                arg == label as usize
            }
        })
        .count()
}

const EVAL_CHUNK: usize = 256;

/// Mean BCE and accuracy of `model` over all of `samples`.
pub fn evaluate(model: &LayeredModel, samples: &Samples) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(invalid!("cannot evaluate on an empty set"));
    }
    let outputs = output_units(model);
    let all: Vec<usize> = (0..samples.len()).collect();
    let (mut loss_sum, mut hits) = (0.0, 0usize);
    for chunk in all.chunks(EVAL_CHUNK) {
        let (x, _) = samples.batch(chunk);
        let y = targets(samples, chunk, outputs)?;
        let pred = model.forward(&x)?;
        loss_sum += bce_loss(&pred, &y)?.0 * chunk.len() as f64;
        hits += correct(&pred, samples, chunk, outputs);
    }
    let n = samples.len() as f64;
    Ok((loss_sum / n, hits as f64 / n))
}

/// Sigmoid output per item of a single-output model.
pub fn predict_probabilities(model: &LayeredModel, samples: &Samples) -> Result<Vec<f64>> {
    let all: Vec<usize> = (0..samples.len()).collect();
    let mut out = Vec::with_capacity(samples.len());
    for chunk in all.chunks(EVAL_CHUNK) {
        let (x, _) = samples.batch(chunk);
        out.extend_from_slice(model.forward(&x)?.values());
    }
    Ok(out)
}

/// Training inputs for one batch, augmented per item when a pipeline is set.
/// The augmentation stream depends only on (seed, epoch, item).
fn training_batch(samples: &Samples, indices: &[usize], epoch: usize, opts: &TrainOptions) -> Result<Tensor> {
    let (x, _) = samples.batch(indices);
    let Some(pipeline) = opts.augment.as_ref().filter(|p| !p.is_identity()) else {
        return Ok(x);
    };
    let [c, h, w] = samples.shape();
    let mut values = Vec::with_capacity(x.len());
    for &i in indices {
        let mut rng = rng_from(derive_seed(
            opts.seed,
            &[stream::AUGMENT, pipeline.seed, epoch as u64, i as u64],
        ));
        values.extend(pipeline.augment(&samples.item_tensor(i), &mut rng)?.into_values());
    }
    Tensor::new(vec![indices.len(), c, h, w], values)
}

/// One epoch of shuffled mini-batch SGD. Returns the size-weighted mean
/// training loss and accuracy seen during the epoch.
pub fn train_epoch(model: &mut LayeredModel, train: &Samples, epoch: usize, opts: &TrainOptions) -> Result<(f64, f64)> {
    let outputs = output_units(model);
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut substream(opts.seed, &[stream::SHUFFLE, epoch as u64]));
    let lr = opts.schedule.lr_at(epoch);
    let mut cache = ForwardCache::new();
    let (mut loss_sum, mut hits) = (0.0, 0usize);
    for chunk in order.chunks(opts.batch_size) {
        let x = training_batch(train, chunk, epoch, opts)?;
        let y = targets(train, chunk, outputs)?;
        let pred = model.forward_cached(&x, &mut cache)?;
        let (loss, grad) = bce_loss(&pred, &y)?;
        loss_sum += loss * chunk.len() as f64;
        hits += correct(&pred, train, chunk, outputs);
        let grads = model.backward(&cache, &grad)?;
        model.sgd_step(&grads, lr)?;
    }
    let n = train.len() as f64;
    Ok((loss_sum / n, hits as f64 / n))
}

/// Runs epochs `history.epochs() .. opts.epochs`, appending a row per epoch
/// with validation metrics measured after that epoch's updates.
pub fn train_until(
    model: &mut LayeredModel,
    train: &Samples,
    val: Option<&Samples>,
    opts: &TrainOptions,
    history: &mut TrainingHistory,
) -> Result<()> {
    if opts.epochs == 0 {
        return Err(invalid!("epochs must be positive"));
    }
    if opts.batch_size == 0 || opts.batch_size > train.len() {
        return Err(invalid!(
            "batch size {} must lie in 1..={} (training-set size)",
            opts.batch_size,
            train.len()
        ));
    }
    if train.shape() != model.input_shape() {
        return Err(invalid!(
            "training inputs have shape {:?}, model expects {:?}",
            train.shape(),
            model.input_shape()
        ));
    }
    opts.schedule.validate()?;
    for epoch in history.epochs()..opts.epochs {
        let (train_loss, train_acc) = train_epoch(model, train, epoch, opts)?;
        let (val_loss, val_acc) = match val {
            Some(v) => evaluate(model, v)?,
            None => (train_loss, train_acc),
        };
        log::debug!("epoch {epoch}: train_loss {train_loss:.4} val_loss {val_loss:.4} val_acc {val_acc:.3}");
        history.push(train_loss, val_loss, train_acc, val_acc);
    }
    Ok(())
}
