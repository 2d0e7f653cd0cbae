use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{ActShape, ConvGeom, Layer, LayerKind};
use crate::error::{invalid, shape_err, Error, Result};
use crate::tensor::Tensor;

/// Affine map `(x - mean) / std` applied to every input value before the
/// first layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputNorm {
    pub mean: f64,
    pub std: f64,
}

impl Default for InputNorm {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl InputNorm {
    pub const IDENTITY: InputNorm = InputNorm { mean: 0.0, std: 1.0 };

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() || !self.std.is_finite() || self.std <= 0.0 {
            return Err(invalid!(
                "input normalization needs finite mean and positive std, got {self:?}"
            ));
        }
        Ok(())
    }

    /// Mean and population standard deviation of `values`; a constant input
    /// keeps unit scale.
    pub fn fit(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::IDENTITY;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Self { mean, std }
    }
}

/// Ordered stack of layers over a fixed `(channels, height, width)` input.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredModel {
    layers: Vec<Layer>,
    input_shape: [usize; 3],
    input_norm: InputNorm,
}

/// Parameter gradients keyed by layer index. Only trainable layers appear.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    pub entries: BTreeMap<usize, Vec<Tensor>>,
}

impl Gradients {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, layer: usize) -> Option<&[Tensor]> {
        self.entries.get(&layer).map(Vec::as_slice)
    }

    /// Largest relative discrepancy `|a-b| / max(|a|, |b|, floor)` against
    /// another gradient set over the same layers.
    pub fn max_relative_error(&self, other: &Gradients, floor: f64) -> Result<f64> {
        if self.entries.keys().ne(other.entries.keys()) {
            return Err(invalid!("gradient sets cover different layers"));
        }
        let mut worst = 0.0f64;
        for (layer, ours) in &self.entries {
            let theirs = &other.entries[layer];
            for (a, b) in ours.iter().zip(theirs) {
                if a.shape() != b.shape() {
                    return Err(shape_err!("layer {layer}: gradient shapes differ"));
                }
                for (&x, &y) in a.values().iter().zip(b.values()) {
                    let denom = x.abs().max(y.abs()).max(floor);
                    worst = worst.max((x - y).abs() / denom);
                }
            }
        }
        Ok(worst)
    }
}

/// Activations recorded by [`LayeredModel::forward_cached`] for one batch.
/// Owned by the caller, so a model can serve several evaluations at once.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    batch: usize,
    /// Input to each layer, flattened over the batch.
    inputs: Vec<Vec<f64>>,
    /// Output of the final layer.
    output: Vec<f64>,
    /// Winning input offset per pooled output, for max-pool layers.
    pool_argmax: BTreeMap<usize, Vec<usize>>,
    input_shape: [usize; 3],
}

impl ForwardCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }
}

impl LayeredModel {
    /// Validates that every consecutive pair of layers agrees on shape.
    pub fn new(input_shape: [usize; 3], layers: Vec<Layer>) -> Result<Self> {
        if input_shape.contains(&0) {
            return Err(shape_err!("input shape must be positive, got {input_shape:?}"));
        }
        let model = Self {
            layers,
            input_shape,
            input_norm: InputNorm::IDENTITY,
        };
        model.shapes()?;
        Ok(model)
    }

    /// Builds a model from layer kinds with fresh seeded initialization.
    pub fn from_kinds<R: Rng + ?Sized>(input_shape: [usize; 3], kinds: &[LayerKind], rng: &mut R) -> Result<Self> {
        let layers = kinds.iter().map(|&k| Layer::init(k, rng)).collect::<Result<Vec<_>>>()?;
        Self::new(input_shape, layers)
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn input_norm(&self) -> InputNorm {
        self.input_norm
    }

    pub fn set_input_norm(&mut self, norm: InputNorm) -> Result<()> {
        norm.validate()?;
        self.input_norm = norm;
        Ok(())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, index: usize) -> Option<&Layer> {
        self.layers.get(index)
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn input_act_shape(&self) -> ActShape {
        let [c, h, w] = self.input_shape;
        ActShape::spatial(c, h, w)
    }

    /// Per-sample shape after each layer. Fails on the first incompatible layer.
    pub fn shapes(&self) -> Result<Vec<ActShape>> {
        let mut shape = self.input_act_shape();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            layer.kind.validate()?;
            let expected = layer.kind.param_shapes();
            if expected.len() != layer.params.len()
                || expected
                    .iter()
                    .zip(&layer.params)
                    .any(|(e, p)| e.as_slice() != p.shape())
            {
                return Err(shape_err!(
                    "layer {i} ({}): parameter shapes do not match hyperparameters",
                    layer.kind.name()
                ));
            }
            shape = layer
                .kind
                .output_shape(shape)
                .map_err(|m| shape_err!("layer {i} ({}): {m}", layer.kind.name()))?;
            out.push(shape);
        }
        Ok(out)
    }

    pub fn output_shape(&self) -> ActShape {
        self.shapes()
            .ok()
            .and_then(|s| s.last().copied())
            .unwrap_or_else(|| self.input_act_shape())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn trainable_parameter_count(&self) -> usize {
        self.layers.iter().filter(|l| l.trainable).map(Layer::param_count).sum()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let s = batch.shape();
        if s.len() != 4 || s[1..] != self.input_shape {
            return Err(shape_err!(
                "batch shape {s:?} does not match (batch,) + input shape {:?}",
                self.input_shape
            ));
        }
        Ok(s[0])
    }

    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        self.run(batch, self.layers.len(), None)
    }

    /// Output of the first `end` layers.
    pub fn forward_until(&self, batch: &Tensor, end: usize) -> Result<Tensor> {
        if end > self.layers.len() {
            return Err(invalid!("layer index {end} beyond model depth {}", self.layers.len()));
        }
        self.run(batch, end, None)
    }

    /// Pre-sigmoid output of a sigmoid-headed model.
    pub fn logits(&self, batch: &Tensor) -> Result<Tensor> {
        match self.layers.last().map(|l| l.kind) {
            Some(LayerKind::Sigmoid) => self.run(batch, self.layers.len() - 1, None),
            _ => Err(invalid!("model does not end in a sigmoid layer")),
        }
    }

    pub fn forward_cached(&self, batch: &Tensor, cache: &mut ForwardCache) -> Result<Tensor> {
        self.run(batch, self.layers.len(), Some(cache))
    }

    fn run(&self, batch: &Tensor, end: usize, mut cache: Option<&mut ForwardCache>) -> Result<Tensor> {
        let n = self.check_batch(batch)?;
        let shapes = self.shapes()?;
        let mut shape = self.input_act_shape();
        let mut act = batch.values().to_vec();
        if !self.input_norm.is_identity() {
            let InputNorm { mean, std } = self.input_norm;
            act.iter_mut().for_each(|v| *v = (*v - mean) / std);
        }
        if let Some(c) = cache.as_deref_mut() {
            c.clear();
            c.batch = n;
            c.input_shape = self.input_shape;
        }
        for (i, layer) in self.layers[..end].iter().enumerate() {
            let out_shape = shapes[i];
            let (next, argmax) = forward_layer(layer, shape, out_shape, n, &act);
            if let Some(c) = cache.as_deref_mut() {
                c.inputs.push(std::mem::replace(&mut act, next));
                if let Some(a) = argmax {
                    c.pool_argmax.insert(i, a);
                }
            } else {
                act = next;
            }
            shape = out_shape;
        }
        if let Some(c) = cache {
            c.output = act.clone();
        }
        let mut dims = vec![n];
        dims.extend(shape.dims());
        Tensor::new(dims, act)
    }

    /// Backpropagates `loss_grad` (gradient of the loss with respect to the
    /// model output) through the activations in `cache`.
    pub fn backward(&self, cache: &ForwardCache, loss_grad: &Tensor) -> Result<Gradients> {
        if cache.is_empty() {
            return Err(Error::BackwardBeforeForward);
        }
        if cache.inputs.len() != self.layers.len() || cache.input_shape != self.input_shape {
            return Err(invalid!("activation cache was recorded on a different model"));
        }
        if loss_grad.len() != cache.output.len() {
            return Err(shape_err!(
                "loss gradient has {} values, model output has {}",
                loss_grad.len(),
                cache.output.len()
            ));
        }
        let shapes = self.shapes()?;
        let n = cache.batch;
        let lowest_trainable = match self.layers.iter().position(|l| l.trainable && l.kind.has_params()) {
            Some(i) => i,
            None => return Ok(Gradients::default()),
        };
        let mut grads = Gradients::default();
        let mut grad = loss_grad.values().to_vec();
        for i in (lowest_trainable..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let in_shape = if i == 0 { self.input_act_shape() } else { shapes[i - 1] };
            let out_shape = shapes[i];
            let input = &cache.inputs[i];
            let output = if i + 1 < self.layers.len() {
                &cache.inputs[i + 1]
            } else {
                &cache.output
            };
            let need_input_grad = i > lowest_trainable;
            let (grad_in, param_grads) = backward_layer(
                layer,
                in_shape,
                out_shape,
                n,
                input,
                output,
                &grad,
                cache.pool_argmax.get(&i),
                need_input_grad,
            );
            if layer.trainable && layer.kind.has_params() {
                grads.entries.insert(i, param_grads);
            }
            match grad_in {
                Some(g) => grad = g,
                None => break,
            }
        }
        Ok(grads)
    }

    /// Applies `p <- p - lr * g` to every trainable layer named in `grads`.
    /// Entries for frozen layers are ignored, so frozen parameters never move.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(invalid!("learning rate must be finite and non-negative, got {lr}"));
        }
        for (&i, g) in &grads.entries {
            let layer = self
                .layers
                .get(i)
                .ok_or_else(|| shape_err!("gradient for layer {i}, model has {}", self.layers.len()))?;
            if g.len() != layer.params.len() || g.iter().zip(&layer.params).any(|(a, b)| a.shape() != b.shape()) {
                return Err(shape_err!("gradient shapes for layer {i} do not match its parameters"));
            }
        }
        if lr == 0.0 {
            return Ok(());
        }
        for (&i, g) in &grads.entries {
            let layer = &mut self.layers[i];
            if !layer.trainable {
                continue;
            }
            for (p, gt) in layer.params.iter_mut().zip(g) {
                for (v, &d) in p.values_mut().iter_mut().zip(gt.values()) {
                    *v -= lr * d;
                }
            }
        }
        Ok(())
    }

    /// Clears the trainable flag on layers `range.0 .. range.1`.
    pub fn freeze(&mut self, range: (usize, usize)) -> Result<()> {
        self.set_trainable(range, false)
    }

    pub fn unfreeze(&mut self, range: (usize, usize)) -> Result<()> {
        self.set_trainable(range, true)
    }

    fn set_trainable(&mut self, (start, end): (usize, usize), trainable: bool) -> Result<()> {
        if self.layers.is_empty() {
            return Err(invalid!("model has no layers"));
        }
        if start > end || end > self.layers.len() {
            return Err(invalid!("layer range {start}..{end} outside 0..{}", self.layers.len()));
        }
        for layer in &mut self.layers[start..end] {
            layer.trainable = trainable;
        }
        Ok(())
    }

    /// Index of the last convolution, the default feature layer for diagnostics.
    pub fn last_conv_index(&self) -> Option<usize> {
        self.layers
            .iter()
            .rposition(|l| matches!(l.kind, LayerKind::Conv2d { .. }))
    }
}

fn conv_geom(kind: LayerKind, input: ActShape, output: ActShape) -> ConvGeom {
    match (kind, input, output) {
        (
            LayerKind::Conv2d {
                kernel_h,
                kernel_w,
                stride,
                padding,
                in_ch,
                out_ch,
            },
            ActShape::Spatial { height, width, .. },
            ActShape::Spatial {
                height: out_h,
                width: out_w,
                ..
            },
        ) => ConvGeom {
            in_ch,
            out_ch,
            height,
            width,
            kernel_h,
            kernel_w,
            stride,
            padding,
            out_h,
            out_w,
        },
        _ => unreachable!("shapes validated"),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    sigmoid(x)
}

fn forward_layer(
    layer: &Layer,
    in_shape: ActShape,
    out_shape: ActShape,
    n: usize,
    input: &[f64],
) -> (Vec<f64>, Option<Vec<usize>>) {
    let isz = in_shape.size();
    let osz = out_shape.size();
    match layer.kind {
        LayerKind::Conv2d { .. } => {
            let geom = conv_geom(layer.kind, in_shape, out_shape);
            let mut out = vec![0.0; n * osz];
            let (w, b) = (layer.params[0].values(), layer.params[1].values());
            for (x, y) in input.chunks_exact(isz).zip(out.chunks_exact_mut(osz)) {
                geom.forward(x, w, b, y);
            }
            (out, None)
        }
        LayerKind::MaxPool2d { k_h, k_w } => {
            let (
                ActShape::Spatial {
                    channels,
                    height,
                    width,
                },
                ActShape::Spatial {
                    height: oh, width: ow, ..
                },
            ) = (in_shape, out_shape)
            else {
                unreachable!("shapes validated")
            };
            let mut out = vec![0.0; n * osz];
            let mut arg = vec![0usize; n * osz];
            for s in 0..n {
                for c in 0..channels {
                    let base = s * isz + c * height * width;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = f64::NEG_INFINITY;
                            let mut best_at = base + oy * k_h * width + ox * k_w;
                            for ky in 0..k_h {
                                for kx in 0..k_w {
                                    let at = base + (oy * k_h + ky) * width + ox * k_w + kx;
                                    if input[at] > best {
                                        best = input[at];
                                        best_at = at;
                                    }
                                }
                            }
                            let o = s * osz + (c * oh + oy) * ow + ox;
                            out[o] = best;
                            arg[o] = best_at;
                        }
                    }
                }
            }
            (out, Some(arg))
        }
        LayerKind::Relu => (input.iter().map(|&v| v.max(0.0)).collect(), None),
        LayerKind::Sigmoid => (input.iter().map(|&v| sigmoid(v)).collect(), None),
        LayerKind::Flatten => (input.to_vec(), None),
        LayerKind::Dense { in_dim, out_dim } => {
            let (w, b) = (layer.params[0].values(), layer.params[1].values());
            let mut out = Vec::with_capacity(n * out_dim);
            for x in input.chunks_exact(in_dim) {
                for (row, &bias) in w.chunks_exact(in_dim).zip(b) {
                    out.push(bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
                }
            }
            (out, None)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn backward_layer(
    layer: &Layer,
    in_shape: ActShape,
    out_shape: ActShape,
    n: usize,
    input: &[f64],
    output: &[f64],
    grad_out: &[f64],
    argmax: Option<&Vec<usize>>,
    need_input_grad: bool,
) -> (Option<Vec<f64>>, Vec<Tensor>) {
    let isz = in_shape.size();
    let osz = out_shape.size();
    match layer.kind {
        LayerKind::Conv2d { .. } => {
            let geom = conv_geom(layer.kind, in_shape, out_shape);
            let w = layer.params[0].values();
            let mut gw = vec![0.0; w.len()];
            let mut gb = vec![0.0; layer.params[1].len()];
            let mut gin = need_input_grad.then(|| vec![0.0; n * isz]);
            for s in 0..n {
                let gi = gin.as_mut().map(|g| &mut g[s * isz..(s + 1) * isz]);
                geom.backward(
                    &input[s * isz..(s + 1) * isz],
                    w,
                    &grad_out[s * osz..(s + 1) * osz],
                    &mut gw,
                    &mut gb,
                    gi,
                );
            }
            let params = if layer.trainable {
                vec![
                    Tensor::new(layer.params[0].shape().to_vec(), gw).expect("shape"),
                    Tensor::new(layer.params[1].shape().to_vec(), gb).expect("shape"),
                ]
            } else {
                Vec::new()
            };
            (gin, params)
        }
        LayerKind::MaxPool2d { .. } => {
            let arg = argmax.expect("pool argmax cached");
            let mut gin = vec![0.0; n * isz];
            for (&at, &g) in arg.iter().zip(grad_out) {
                gin[at] += g;
            }
            (Some(gin), Vec::new())
        }
        LayerKind::Relu => (
            Some(
                input
                    .iter()
                    .zip(grad_out)
                    .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                    .collect(),
            ),
            Vec::new(),
        ),
        LayerKind::Sigmoid => (
            Some(output.iter().zip(grad_out).map(|(&y, &g)| g * y * (1.0 - y)).collect()),
            Vec::new(),
        ),
        LayerKind::Flatten => (Some(grad_out.to_vec()), Vec::new()),
        LayerKind::Dense { in_dim, out_dim } => {
            let w = layer.params[0].values();
            let mut gw = vec![0.0; w.len()];
            let mut gb = vec![0.0; out_dim];
            let mut gin = need_input_grad.then(|| vec![0.0; n * in_dim]);
            for s in 0..n {
                let x = &input[s * in_dim..(s + 1) * in_dim];
                let go = &grad_out[s * out_dim..(s + 1) * out_dim];
                for (o, &g) in go.iter().enumerate() {
                    gb[o] += g;
                    let row = &mut gw[o * in_dim..(o + 1) * in_dim];
                    for (r, &xv) in row.iter_mut().zip(x) {
                        *r += g * xv;
                    }
                    if let Some(gi) = gin.as_mut() {
                        let dst = &mut gi[s * in_dim..(s + 1) * in_dim];
                        for (d, &wv) in dst.iter_mut().zip(&w[o * in_dim..(o + 1) * in_dim]) {
                            *d += g * wv;
                        }
                    }
                }
            }
            let params = if layer.trainable {
                vec![
                    Tensor::new(vec![out_dim, in_dim], gw).expect("shape"),
                    Tensor::new(vec![out_dim], gb).expect("shape"),
                ]
            } else {
                Vec::new()
            };
            (gin, params)
        }
    }
}
