use rand::Rng;

use serde::{Deserialize, Serialize};

use super::pretrain::PretrainedModel;
use crate::error::{invalid, shape_err, Result};
use crate::nn::{ActShape, Layer, LayerKind, LayeredModel};
use crate::tensor::Tensor;

/// Output head to attach: `outputs == 1` is a single sigmoid unit for binary
/// defect/normal decisions; larger values give per-class sigmoid units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadSpec {
    pub outputs: usize,
}

impl HeadSpec {
    pub const BINARY: HeadSpec = HeadSpec { outputs: 1 };
}

/// How the replacement input convolution gets its weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputLayer {
    /// Pretrained kernels carried over to the new channel count: copied
    /// when it matches, otherwise summed over source channels and spread
    /// evenly over the new ones, so a gray image gets the same response.
    #[default]
    Adapted,
    /// Glorot-initialized from the graft generator.
    Fresh,
}

/// Index of the layer where the classification head starts: the last dense
/// layer.
pub fn head_start(model: &LayeredModel) -> Option<usize> {
    model
        .layers()
        .iter()
        .rposition(|l| matches!(l.kind, LayerKind::Dense { .. }))
}

/// Layers copied from the backbone: everything between the input
/// convolution and the head. This is the default freeze range.
pub fn middle_range(model: &LayeredModel) -> Result<(usize, usize)> {
    let end = head_start(model).ok_or_else(|| invalid!("model has no dense head"))?;
    Ok((1.min(end), end))
}

fn adapt_kernels(source: &Layer, in_ch: usize) -> Result<Vec<Tensor>> {
    let [out, src_ch, kh, kw] = source.params[0].shape() else {
        return Err(invalid!("input convolution has a malformed kernel"));
    };
    let (out, src_ch, kh, kw) = (*out, *src_ch, *kh, *kw);
    if src_ch == in_ch {
        return Ok(source.params.clone());
    }
    let k = kh * kw;
    let w = source.params[0].values();
    let mut adapted = Vec::with_capacity(out * in_ch * k);
    for o in 0..out {
        let mut summed = vec![0.0; k];
        for c in 0..src_ch {
            for (s, v) in summed
                .iter_mut()
                .zip(&w[(o * src_ch + c) * k..(o * src_ch + c + 1) * k])
            {
                *s += v;
            }
        }
        for _ in 0..in_ch {
            adapted.extend(summed.iter().map(|s| s / in_ch as f64));
        }
    }
    Ok(vec![
        Tensor::new(vec![out, in_ch, kh, kw], adapted)?,
        source.params[1].clone(),
    ])
}

/// [`graft_head_with`] using adapted input kernels.
pub fn graft_head<R: Rng + ?Sized>(
    pretrained: &PretrainedModel,
    new_input_shape: [usize; 3],
    head: HeadSpec,
    rng: &mut R,
) -> Result<LayeredModel> {
    graft_head_with(pretrained, new_input_shape, head, InputLayer::Adapted, rng)
}

/// Replaces the input convolution with a new one sized for
/// `new_input_shape` and the head with a fresh dense layer plus sigmoid.
/// Middle layers are copied verbatim, trainable flags included; the new
/// input and head layers are trainable.
pub fn graft_head_with<R: Rng + ?Sized>(
    pretrained: &PretrainedModel,
    new_input_shape: [usize; 3],
    head: HeadSpec,
    input: InputLayer,
    rng: &mut R,
) -> Result<LayeredModel> {
    if head.outputs == 0 {
        return Err(invalid!("head needs at least one output"));
    }
    let source = &pretrained.model;
    let first = source
        .layers()
        .first()
        .ok_or_else(|| invalid!("pretrained model has no layers"))?;
    let LayerKind::Conv2d {
        kernel_h,
        kernel_w,
        stride,
        padding,
        out_ch,
        ..
    } = first.kind
    else {
        return Err(invalid!("pretrained model must start with a convolution"));
    };
    let (_, head_at) = middle_range(source)?;
    let input_kind = LayerKind::Conv2d {
        kernel_h,
        kernel_w,
        stride,
        padding,
        in_ch: new_input_shape[0],
        out_ch,
    };
    let input_layer = match input {
        InputLayer::Fresh => Layer::init(input_kind, rng)?,
        InputLayer::Adapted => Layer::with_params(input_kind, adapt_kernels(first, new_input_shape[0])?, true)?,
    };
    let mut layers = vec![input_layer];
    layers.extend(source.layers()[1..head_at].iter().cloned());

    let [c, h, w] = new_input_shape;
    let mut shape = ActShape::spatial(c, h, w);
    for (i, layer) in layers.iter().enumerate() {
        shape = layer
            .kind
            .output_shape(shape)
            .map_err(|m| shape_err!("layer {i} ({}) after input swap: {m}", layer.kind.name()))?;
    }
    let in_dim = match shape {
        ActShape::Flat(n) => n,
        s @ ActShape::Spatial { .. } => {
            layers.push(Layer::init(LayerKind::Flatten, rng)?);
            s.size()
        }
    };
    layers.push(Layer::init(
        LayerKind::Dense {
            in_dim,
            out_dim: head.outputs,
        },
        rng,
    )?);
    layers.push(Layer::init(LayerKind::Sigmoid, rng)?);
    let mut model = LayeredModel::new(new_input_shape, layers)?;
    model.set_input_norm(pretrained.model.input_norm())?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::{BackboneSpec, SourceMeta};

    fn pretrained() -> PretrainedModel {
        let mut rng = crate::rng::rng_from(5);
        PretrainedModel {
            model: BackboneSpec::medium().build([1, 16, 16], 3, &mut rng).unwrap(),
            source_meta: SourceMeta {
                source_task_id: "t".into(),
                epochs: 1,
                final_train_acc: 0.0,
            },
        }
    }

    #[test]
    fn middle_copied_and_head_fresh() {
        let p = pretrained();
        let g = graft_head(&p, [1, 16, 16], HeadSpec::BINARY, &mut crate::rng::rng_from(9)).unwrap();
        let (a, b) = middle_range(&p.model).unwrap();
        for i in a..b {
            assert_eq!(g.layers()[i], p.model.layers()[i]);
        }
        assert_eq!(g.layers()[0].params, p.model.layers()[0].params);
        let head = &g.layers()[head_start(&g).unwrap()];
        assert_eq!(head.params[0].shape(), &[1, 16]);
        assert!(g.layers().iter().all(|l| l.trainable));
        let fresh = graft_head_with(
            &p,
            [1, 16, 16],
            HeadSpec::BINARY,
            InputLayer::Fresh,
            &mut crate::rng::rng_from(9),
        )
        .unwrap();
        assert_ne!(fresh.layers()[0].params, p.model.layers()[0].params);
    }

    #[test]
    fn adapted_kernels_keep_gray_response() {
        let p = pretrained();
        let gray1 = Tensor::new(vec![1, 1, 16, 16], (0..256).map(|i| (i % 13) as f64 / 13.0).collect()).unwrap();
        let mut v3 = Vec::new();
        for _ in 0..3 {
            v3.extend_from_slice(gray1.values());
        }
        let gray3 = Tensor::new(vec![1, 3, 16, 16], v3).unwrap();
        let g16 = graft_head(&p, [3, 16, 16], HeadSpec::BINARY, &mut crate::rng::rng_from(9)).unwrap();
        let a = p.model.forward_until(&gray1, 1).unwrap();
        let b = g16.forward_until(&gray3, 1).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn spatial_size_may_change_without_middle_dense() {
        let mut rng = crate::rng::rng_from(5);
        let p = PretrainedModel {
            model: BackboneSpec::small().build([1, 16, 16], 3, &mut rng).unwrap(),
            ..pretrained()
        };
        let g = graft_head(&p, [3, 20, 12], HeadSpec::BINARY, &mut rng).unwrap();
        assert_eq!(g.input_shape(), [3, 20, 12]);
        assert!(graft_head(&pretrained(), [3, 20, 12], HeadSpec::BINARY, &mut rng).is_err());
    }

    #[test]
    fn zero_outputs_rejected() {
        let p = pretrained();
        assert!(graft_head(&p, [1, 16, 16], HeadSpec { outputs: 0 }, &mut crate::rng::rng_from(1)).is_err());
    }
}
