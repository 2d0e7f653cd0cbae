//! Channel correlation of convolutional feature maps and heatmap export.

use std::path::Path;

use crate::data::pgm::write_pgm;
use crate::error::{invalid, Result};
use crate::nn::{LayerKind, LayeredModel};
use crate::tensor::Tensor;

/// Square matrix of channel-to-channel Pearson correlations.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CorrelationMatrix {
    pub size: usize,
    pub values: Vec<f64>,
    /// Channels whose activation is constant; their rows and columns are 0.
    pub constant: Vec<bool>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn max_abs_diff(&self, other: &CorrelationMatrix) -> Result<f64> {
        if self.size != other.size {
            return Err(invalid!("matrices of size {} and {}", self.size, other.size));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Pearson correlation between the rows of a `(channels, n)` block.
pub fn channel_correlation(channels: usize, n: usize, data: &[f64]) -> Result<CorrelationMatrix> {
    if channels == 0 || n == 0 || data.len() != channels * n {
        return Err(invalid!("expected {channels} x {n} activations, got {}", data.len()));
    }
    let mut centered = vec![0.0; data.len()];
    let mut norms = vec![0.0; channels];
    for c in 0..channels {
        let row = &data[c * n..(c + 1) * n];
        let mean = row.iter().sum::<f64>() / n as f64;
        let out = &mut centered[c * n..(c + 1) * n];
        for (o, &v) in out.iter_mut().zip(row) {
            *o = v - mean;
        }
        norms[c] = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    let scale = norms.iter().cloned().fold(0.0, f64::max);
    let constant: Vec<bool> = norms.iter().map(|&s| s <= 1e-12 * scale.max(1.0)).collect();
    let mut values = vec![0.0; channels * channels];
    for i in 0..channels {
        for j in i..channels {
            let r = if constant[i] || constant[j] {
                0.0
            } else if i == j {
                1.0
            } else {
                let a = &centered[i * n..(i + 1) * n];
                let b = &centered[j * n..(j + 1) * n];
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            values[i * channels + j] = r;
            values[j * channels + i] = r;
        }
    }
    Ok(CorrelationMatrix {
        size: channels,
        values,
        constant,
    })
}

/// Correlates the channels of convolution `layer_index`'s output on one
/// preprocessed `(C, H, W)` image.
pub fn feature_correlation(model: &LayeredModel, image: &Tensor, layer_index: usize) -> Result<CorrelationMatrix> {
    match model.layer(layer_index).map(|l| l.kind) {
        Some(LayerKind::Conv2d { .. }) => {}
        Some(kind) => return Err(invalid!("layer {layer_index} is {}, not a convolution", kind.name())),
        None => return Err(invalid!("layer {layer_index} beyond model depth {}", model.len())),
    }
    let x = match image.shape() {
        [c, h, w] => image.clone().reshape(vec![1, *c, *h, *w])?,
        [1, _, _, _] => image.clone(),
        s => return Err(invalid!("expected a single (C, H, W) image, got shape {s:?}")),
    };
    let act = model.forward_until(&x, layer_index + 1)?;
    let [_, c, h, w] = act.shape() else {
        return Err(invalid!("convolution output is not spatial"));
    };
    channel_correlation(*c, h * w, act.values())
}

/// Maps `[-1, 1]` linearly onto `[0, 255]` with `floor`, so 0 becomes 127.
pub fn heatmap_byte(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) / 2.0 * 255.0).floor() as u8
}

pub fn render_heatmap(matrix: &CorrelationMatrix, path: impl AsRef<Path>) -> Result<()> {
    let pixels: Vec<u8> = matrix.values.iter().map(|&v| heatmap_byte(v)).collect();
    write_pgm(path, matrix.size, matrix.size, &pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::pgm::decode_pgm;
    use proptest::prelude::*;

    #[test]
    fn duplicate_and_constant_channels() {
        let data = [1.0, 2.0, 4.0, 1.0, 2.0, 4.0, 3.0, 3.0, 3.0, -1.0, -2.0, -4.0];
        let m = channel_correlation(4, 3, &data).unwrap();
        assert!((m.get(0, 1) - 1.0).abs() < 1e-12);
        assert!((m.get(0, 3) + 1.0).abs() < 1e-12);
        assert_eq!(m.constant, vec![false, false, true, false]);
        assert_eq!(m.get(2, 2), 0.0);
        assert_eq!(m.get(0, 0), 1.0);
    }

    #[test]
    fn heatmap_mapping() {
        assert_eq!(heatmap_byte(1.0), 255);
        assert_eq!(heatmap_byte(0.0), 127);
        assert_eq!(heatmap_byte(-1.0), 0);
        let m = CorrelationMatrix {
            size: 3,
            values: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            constant: vec![false; 3],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.pgm");
        render_heatmap(&m, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(
            &bytes[bytes.len() - 9..],
            &[255, 127, 127, 127, 255, 127, 127, 127, 255]
        );
        assert_eq!(decode_pgm(&bytes).unwrap().width, 3);
        assert!(render_heatmap(&m, dir.path().join("missing/h.pgm")).is_err());
    }

    #[test]
    fn non_conv_layer_rejected() {
        let mut rng = crate::rng::rng_from(1);
        let model = crate::transfer::BackboneSpec::small()
            .build([1, 8, 8], 1, &mut rng)
            .unwrap();
        let img = Tensor::full(vec![1, 8, 8], 0.5);
        assert!(feature_correlation(&model, &img, 1).is_err());
        let m = feature_correlation(&model, &img, 0).unwrap();
        assert_eq!(m.size, 4);
    }

    proptest! {
        #[test]
        fn symmetric_bounded_unit_diagonal(data in proptest::collection::vec(-3.0f64..3.0, 4 * 6)) {
            let m = channel_correlation(4, 6, &data).unwrap();
            for i in 0..4 {
                if !m.constant[i] {
                    prop_assert!((m.get(i, i) - 1.0).abs() < 1e-12);
                }
                for j in 0..4 {
                    prop_assert_eq!(m.get(i, j), m.get(j, i));
                    prop_assert!(m.get(i, j).abs() <= 1.0);
                }
            }
        }
    }
}
