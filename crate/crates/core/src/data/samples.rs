use super::image::Dataset;
use super::preprocess::preprocess;
use crate::error::{invalid, Result};
use crate::nn::InputNorm;
use crate::tensor::Tensor;

/// A dataset preprocessed into channel-first tensors, ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    shape: [usize; 3],
    inputs: Vec<f64>,
    labels: Vec<f64>,
    confusable: Vec<bool>,
}

impl Samples {
    pub fn new(shape: [usize; 3], inputs: Vec<f64>, labels: Vec<f64>, confusable: Vec<bool>) -> Result<Self> {
        let per: usize = shape.iter().product();
        if per == 0 || inputs.len() != per * labels.len() || confusable.len() != labels.len() {
            return Err(invalid!(
                "{} inputs, {} labels and {} flags do not fit shape {shape:?}",
                inputs.len(),
                labels.len(),
                confusable.len()
            ));
        }
        Ok(Self {
            shape,
            inputs,
            labels,
            confusable,
        })
    }

    /// Resizes every item to `target` and maps it into `[0, 1]` with the
    /// dataset's rescale factor. Items must carry a binary label.
    pub fn from_dataset(dataset: &Dataset, target: (usize, usize)) -> Result<Self> {
        let first = dataset
            .items
            .first()
            .ok_or_else(|| invalid!("cannot tensorize an empty dataset"))?;
        let shape = [first.image.channels, target.0, target.1];
        let mut inputs = Vec::with_capacity(dataset.len() * shape.iter().product::<usize>());
        let mut labels = Vec::with_capacity(dataset.len());
        let mut confusable = Vec::with_capacity(dataset.len());
        for (i, item) in dataset.items.iter().enumerate() {
            if item.image.channels != shape[0] {
                return Err(invalid!(
                    "item {i} has {} channels, expected {}",
                    item.image.channels,
                    shape[0]
                ));
            }
            let label = item
                .label
                .ok_or_else(|| invalid!("item {i} ({:?}) has no binary label", item.raw_label))?;
            inputs.extend(preprocess(&item.image, target, dataset.rescale)?.into_values());
            labels.push(f64::from(label));
            confusable.push(item.confusable);
        }
        Self::new(shape, inputs, labels, confusable)
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn item_size(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Input normalization fitted to every pixel of every item.
    pub fn pixel_norm(&self) -> InputNorm {
        InputNorm::fit(&self.inputs)
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn confusable(&self) -> &[bool] {
        &self.confusable
    }

    pub fn input(&self, i: usize) -> &[f64] {
        let n = self.item_size();
        &self.inputs[i * n..(i + 1) * n]
    }

    pub fn item_tensor(&self, i: usize) -> Tensor {
        let [c, h, w] = self.shape;
        Tensor::new(vec![c, h, w], self.input(i).to_vec()).expect("item shape")
    }

    /// Stacks the given items into `(batch, C, H, W)` inputs and `(batch, 1)`
    /// targets.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Tensor) {
        let [c, h, w] = self.shape;
        let mut x = Vec::with_capacity(indices.len() * self.item_size());
        for &i in indices {
            x.extend_from_slice(self.input(i));
        }
        let y = indices.iter().map(|&i| self.labels[i]).collect();
        (
            Tensor::new(vec![indices.len(), c, h, w], x).expect("batch shape"),
            Tensor::new(vec![indices.len(), 1], y).expect("target shape"),
        )
    }

    pub fn all(&self) -> (Tensor, Tensor) {
        self.batch(&(0..self.len()).collect::<Vec<_>>())
    }

    pub fn subset(&self, indices: &[usize]) -> Samples {
        let mut inputs = Vec::with_capacity(indices.len() * self.item_size());
        for &i in indices {
            inputs.extend_from_slice(self.input(i));
        }
        Samples {
            shape: self.shape,
            inputs,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            confusable: indices.iter().map(|&i| self.confusable[i]).collect(),
        }
    }
}
