use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::nn::{LayerKind, LayeredModel};

/// Convolutional backbone description: a stack of 3x3-style conv blocks
/// (conv, ReLU, optional 2x2 max-pool), a flatten, an optional hidden dense
/// layer, and a sigmoid classification head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneSpec {
    pub name: String,
    pub channels: Vec<usize>,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    #[serde(default = "default_padding")]
    pub padding: usize,
    pub pool: Vec<bool>,
    pub hidden: Option<usize>,
}

fn default_kernel() -> usize {
    3
}

fn default_padding() -> usize {
    1
}

impl BackboneSpec {
    pub fn new(name: &str, channels: &[usize], pool: &[bool], hidden: Option<usize>) -> Self {
        Self {
            name: name.to_string(),
            channels: channels.to_vec(),
            kernel: 3,
            padding: 1,
            pool: pool.to_vec(),
            hidden,
        }
    }

    /// Two narrow conv blocks.
    pub fn small() -> Self {
        Self::new("small", &[4, 8], &[true, true], None)
    }

    /// Three conv blocks and a hidden dense layer.
    pub fn medium() -> Self {
        Self::new("medium", &[6, 8, 12], &[true, true, true], Some(16))
    }

    /// Two wide conv blocks.
    pub fn wide() -> Self {
        Self::new("wide", &[12, 16], &[true, true], None)
    }

    pub fn defaults() -> Vec<Self> {
        vec![Self::small(), Self::medium(), Self::wide()]
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Self::defaults().into_iter().find(|s| s.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(invalid!("backbone {:?} needs at least one conv block", self.name));
        }
        if self.pool.len() != self.channels.len() {
            return Err(invalid!(
                "backbone {:?}: {} pool flags for {} conv blocks",
                self.name,
                self.pool.len(),
                self.channels.len()
            ));
        }
        if self.kernel == 0 {
            return Err(invalid!("backbone {:?}: kernel must be positive", self.name));
        }
        Ok(())
    }

    /// Layer kinds for a given input shape and number of output units.
    pub fn layer_kinds(&self, input_shape: [usize; 3], outputs: usize) -> Result<Vec<LayerKind>> {
        self.validate()?;
        let [mut ch, mut h, mut w] = input_shape;
        let mut kinds = Vec::new();
        for (&out_ch, &pool) in self.channels.iter().zip(&self.pool) {
            kinds.push(LayerKind::Conv2d {
                kernel_h: self.kernel,
                kernel_w: self.kernel,
                stride: 1,
                padding: self.padding,
                in_ch: ch,
                out_ch,
            });
            kinds.push(LayerKind::Relu);
            h = (h + 2 * self.padding)
                .checked_sub(self.kernel)
                .ok_or_else(|| invalid!("input too small for backbone"))?
                + 1;
            w = (w + 2 * self.padding)
                .checked_sub(self.kernel)
                .ok_or_else(|| invalid!("input too small for backbone"))?
                + 1;
            ch = out_ch;
            if pool {
                if h < 2 || w < 2 {
                    return Err(invalid!("backbone {:?}: input too small to pool", self.name));
                }
                kinds.push(LayerKind::MaxPool2d { k_h: 2, k_w: 2 });
                h /= 2;
                w /= 2;
            }
        }
        kinds.push(LayerKind::Flatten);
        let mut flat = ch * h * w;
        if let Some(hidden) = self.hidden {
            kinds.push(LayerKind::Dense {
                in_dim: flat,
                out_dim: hidden,
            });
            kinds.push(LayerKind::Relu);
            flat = hidden;
        }
        kinds.push(LayerKind::Dense {
            in_dim: flat,
            out_dim: outputs,
        });
        kinds.push(LayerKind::Sigmoid);
        Ok(kinds)
    }

    pub fn build<R: Rng + ?Sized>(&self, input_shape: [usize; 3], outputs: usize, rng: &mut R) -> Result<LayeredModel> {
        LayeredModel::from_kinds(input_shape, &self.layer_kinds(input_shape, outputs)?, rng)
    }
}
