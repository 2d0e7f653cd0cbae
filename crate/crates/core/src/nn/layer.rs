use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Per-sample activation shape flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActShape {
    Spatial {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flat(usize),
}

impl ActShape {
    pub fn spatial(channels: usize, height: usize, width: usize) -> Self {
        ActShape::Spatial {
            channels,
            height,
            width,
        }
    }

    pub fn size(&self) -> usize {
        match *self {
            ActShape::Spatial {
                channels,
                height,
                width,
            } => channels * height * width,
            ActShape::Flat(n) => n,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            ActShape::Spatial {
                channels,
                height,
                width,
            } => vec![channels, height, width],
            ActShape::Flat(n) => vec![n],
        }
    }
}

impl std::fmt::Display for ActShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ActShape::Spatial {
                channels,
                height,
                width,
            } => write!(f, "({channels}, {height}, {width})"),
            ActShape::Flat(n) => write!(f, "({n})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d {
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
        in_ch: usize,
        out_ch: usize,
    },
    MaxPool2d {
        k_h: usize,
        k_w: usize,
    },
    Relu,
    Sigmoid,
    Flatten,
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::MaxPool2d { .. } => "max_pool2d",
            LayerKind::Relu => "relu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::Flatten => "flatten",
            LayerKind::Dense { .. } => "dense",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerKind::Conv2d { .. } | LayerKind::Dense { .. })
    }

    /// Expected shapes of the parameter tensors: weight first, then bias.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerKind::Conv2d {
                kernel_h,
                kernel_w,
                in_ch,
                out_ch,
                ..
            } => vec![vec![out_ch, in_ch, kernel_h, kernel_w], vec![out_ch]],
            LayerKind::Dense { in_dim, out_dim } => vec![vec![out_dim, in_dim], vec![out_dim]],
            _ => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = match *self {
            LayerKind::Conv2d {
                kernel_h,
                kernel_w,
                stride,
                in_ch,
                out_ch,
                ..
            } => [kernel_h, kernel_w, stride, in_ch, out_ch].iter().all(|&v| v > 0),
            LayerKind::MaxPool2d { k_h, k_w } => k_h > 0 && k_w > 0,
            LayerKind::Dense { in_dim, out_dim } => in_dim > 0 && out_dim > 0,
            _ => true,
        };
        if positive {
            Ok(())
        } else {
            Err(shape_err!("{} has a zero-sized hyperparameter: {self:?}", self.name()))
        }
    }

    /// Output shape for a given input shape, or a description of the mismatch.
    pub fn output_shape(&self, input: ActShape) -> std::result::Result<ActShape, String> {
        match (*self, input) {
            (
                LayerKind::Conv2d {
                    kernel_h,
                    kernel_w,
                    stride,
                    padding,
                    in_ch,
                    out_ch,
                },
                ActShape::Spatial {
                    channels,
                    height,
                    width,
                },
            ) => {
                if channels != in_ch {
                    return Err(format!("expects {in_ch} input channels, got {channels}"));
                }
                let ph = height + 2 * padding;
                let pw = width + 2 * padding;
                if ph < kernel_h || pw < kernel_w {
                    return Err(format!(
                        "kernel {kernel_h}x{kernel_w} larger than padded input {ph}x{pw}"
                    ));
                }
                Ok(ActShape::spatial(
                    out_ch,
                    (ph - kernel_h) / stride + 1,
                    (pw - kernel_w) / stride + 1,
                ))
            }
            (
                LayerKind::MaxPool2d { k_h, k_w },
                ActShape::Spatial {
                    channels,
                    height,
                    width,
                },
            ) => {
                if height < k_h || width < k_w {
                    return Err(format!("pool window {k_h}x{k_w} larger than input {height}x{width}"));
                }
                Ok(ActShape::spatial(channels, height / k_h, width / k_w))
            }
            (LayerKind::Relu | LayerKind::Sigmoid, s) => Ok(s),
            (LayerKind::Flatten, s) => Ok(ActShape::Flat(s.size())),
            (LayerKind::Dense { in_dim, out_dim }, ActShape::Flat(n)) => {
                if n != in_dim {
                    return Err(format!("expects {in_dim} inputs, got {n}"));
                }
                Ok(ActShape::Flat(out_dim))
            }
            (kind, s) => Err(format!("{} cannot accept input of shape {s}", kind.name())),
        }
    }
}

/// One layer of a [`LayeredModel`](super::LayeredModel): its kind, its
/// parameters (weight then bias, for conv and dense) and whether an optimizer
/// may update them.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub params: Vec<Tensor>,
    pub trainable: bool,
}

impl Layer {
    /// Builds a layer with Glorot-uniform weights and zero biases.
    pub fn init<R: Rng + ?Sized>(kind: LayerKind, rng: &mut R) -> Result<Self> {
        kind.validate()?;
        let params = match kind {
            LayerKind::Conv2d {
                kernel_h,
                kernel_w,
                in_ch,
                out_ch,
                ..
            } => {
                let area = kernel_h * kernel_w;
                glorot(kind.param_shapes(), in_ch * area, out_ch * area, rng)
            }
            LayerKind::Dense { in_dim, out_dim } => glorot(kind.param_shapes(), in_dim, out_dim, rng),
            _ => Vec::new(),
        };
        Ok(Self {
            kind,
            params,
            trainable: true,
        })
    }

    pub fn with_params(kind: LayerKind, params: Vec<Tensor>, trainable: bool) -> Result<Self> {
        kind.validate()?;
        let expected = kind.param_shapes();
        if expected.len() != params.len() || expected.iter().zip(&params).any(|(e, p)| e.as_slice() != p.shape()) {
            return Err(shape_err!(
                "{} expects parameter shapes {expected:?}, got {:?}",
                kind.name(),
                params.iter().map(|p| p.shape().to_vec()).collect::<Vec<_>>()
            ));
        }
        Ok(Self {
            kind,
            params,
            trainable,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }
}

fn glorot<R: Rng + ?Sized>(shapes: Vec<Vec<usize>>, fan_in: usize, fan_out: usize, rng: &mut R) -> Vec<Tensor> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut out = Vec::with_capacity(2);
    let mut shapes = shapes.into_iter();
    let wshape = shapes.next().expect("weight shape");
    let n: usize = wshape.iter().product();
    let values = (0..n).map(|_| rng.gen_range(-limit..=limit)).collect();
    out.push(Tensor::new(wshape, values).expect("weight shape"));
    out.extend(shapes.map(Tensor::zeros));
    out
}

/// Geometry of a 2-D convolution over one sample.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub in_ch: usize,
    pub out_ch: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    /// Output positions `o` along one axis for which `o*stride + k - padding`
    /// lands inside `[0, len)`.
    #[inline]
    fn valid_range(k: usize, stride: usize, padding: usize, len: usize, out_len: usize) -> (usize, usize) {
        let lo = if padding > k { (padding - k).div_ceil(stride) } else { 0 };
        let hi = if len + padding > k {
            ((len + padding - k - 1) / stride + 1).min(out_len)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    pub fn forward(&self, input: &[f64], weight: &[f64], bias: &[f64], out: &mut [f64]) {
        let (h, w) = (self.height, self.width);
        let (oh, ow) = (self.out_h, self.out_w);
        let (kh, kw) = (self.kernel_h, self.kernel_w);
        let (s, p) = (self.stride, self.padding);
        for o in 0..self.out_ch {
            let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
            plane.fill(bias[o]);
            for c in 0..self.in_ch {
                let src = &input[c * h * w..(c + 1) * h * w];
                for ky in 0..kh {
                    let (y0, y1) = Self::valid_range(ky, s, p, h, oh);
                    for kx in 0..kw {
                        let wv = weight[((o * self.in_ch + c) * kh + ky) * kw + kx];
                        let (x0, x1) = Self::valid_range(kx, s, p, w, ow);
                        for oy in y0..y1 {
                            let iy = oy * s + ky - p;
                            let row = &src[iy * w..(iy + 1) * w];
                            let orow = &mut plane[oy * ow..(oy + 1) * ow];
                            if s == 1 {
                                let ix0 = x0 + kx - p;
                                for (dst, &v) in orow[x0..x1].iter_mut().zip(&row[ix0..ix0 + (x1 - x0)]) {
                                    *dst += wv * v;
                                }
                            } else {
                                for ox in x0..x1 {
                                    orow[ox] += wv * row[ox * s + kx - p];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Accumulates parameter gradients and, when `grad_in` is given, the
    /// gradient with respect to the input.
    pub fn backward(
        &self,
        input: &[f64],
        weight: &[f64],
        grad_out: &[f64],
        grad_w: &mut [f64],
        grad_b: &mut [f64],
        mut grad_in: Option<&mut [f64]>,
    ) {
        let (h, w) = (self.height, self.width);
        let (oh, ow) = (self.out_h, self.out_w);
        let (kh, kw) = (self.kernel_h, self.kernel_w);
        let (s, p) = (self.stride, self.padding);
        for o in 0..self.out_ch {
            let gplane = &grad_out[o * oh * ow..(o + 1) * oh * ow];
            grad_b[o] += gplane.iter().sum::<f64>();
            for c in 0..self.in_ch {
                let src = &input[c * h * w..(c + 1) * h * w];
                for ky in 0..kh {
                    let (y0, y1) = Self::valid_range(ky, s, p, h, oh);
                    for kx in 0..kw {
                        let widx = ((o * self.in_ch + c) * kh + ky) * kw + kx;
                        let wv = weight[widx];
                        let (x0, x1) = Self::valid_range(kx, s, p, w, ow);
                        let mut acc = 0.0;
                        for oy in y0..y1 {
                            let iy = oy * s + ky - p;
                            let grow = &gplane[oy * ow..(oy + 1) * ow];
                            if s == 1 {
                                let ix0 = x0 + kx - p;
                                let n = x1 - x0;
                                let row = &src[iy * w + ix0..iy * w + ix0 + n];
                                acc += grow[x0..x1].iter().zip(row).map(|(g, v)| g * v).sum::<f64>();
                                if let Some(gi) = grad_in.as_deref_mut() {
                                    let dst = &mut gi[c * h * w + iy * w + ix0..c * h * w + iy * w + ix0 + n];
                                    for (d, &g) in dst.iter_mut().zip(&grow[x0..x1]) {
                                        *d += wv * g;
                                    }
                                }
                            } else {
                                for (ox, &g) in grow.iter().enumerate().take(x1).skip(x0) {
                                    let ix = ox * s + kx - p;
                                    acc += g * src[iy * w + ix];
                                    if let Some(gi) = grad_in.as_deref_mut() {
                                        gi[c * h * w + iy * w + ix] += wv * g;
                                    }
                                }
                            }
                        }
                        grad_w[widx] += acc;
                    }
                }
            }
        }
    }
}
