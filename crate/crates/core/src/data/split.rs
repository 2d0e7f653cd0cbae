use rand::seq::SliceRandom;

use super::image::Dataset;
use crate::error::{invalid, Result};
use crate::rng::{stream, substream};

/// Train, validation and test shares. Must be non-negative and sum to one.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self::new(0.6, 0.2, 0.2)
    }
}

impl SplitRatios {
    pub const fn new(train: f64, val: f64, test: f64) -> Self {
        Self { train, val, test }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(invalid!("split ratios must be non-negative, got {parts:?}"));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid!("split ratios must sum to 1, got {parts:?}"));
        }
        Ok(())
    }

    fn nonzero_parts(&self) -> usize {
        [self.train, self.val, self.test].iter().filter(|r| **r > 0.0).count()
    }
}

/// Index assignment of a split, in ascending original order per part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn share(n: usize, ratio: f64) -> usize {
    // tolerance absorbs products like 1000 * 0.2 landing a hair under an integer
    ((n as f64) * ratio + 1e-9).floor() as usize
}

/// Stratified, seeded assignment of items to train/val/test. Within each
/// label the items are shuffled; validation and test take floor shares and
/// the remainder goes to training.
pub fn split_indices(dataset: &Dataset, ratios: SplitRatios, seed: u64) -> Result<SplitIndices> {
    ratios.validate()?;
    let mut strata: std::collections::BTreeMap<u8, Vec<usize>> = Default::default();
    for (i, item) in dataset.items.iter().enumerate() {
        let label = item
            .label
            .ok_or_else(|| invalid!("item {i} ({:?}) has no binary label", item.raw_label))?;
        strata.entry(label).or_default().push(i);
    }
    let needed = ratios.nonzero_parts();
    let mut out = SplitIndices {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (label, mut members) in strata {
        if members.len() < needed {
            return Err(invalid!(
                "label {label} has {} items, fewer than the {needed} non-empty split parts",
                members.len()
            ));
        }
        let mut rng = substream(seed, &[stream::SPLIT, label as u64]);
        members.shuffle(&mut rng);
        let n = members.len();
        let n_val = share(n, ratios.val);
        let n_test = share(n, ratios.test);
        out.val.extend_from_slice(&members[..n_val]);
        out.test.extend_from_slice(&members[n_val..n_val + n_test]);
        out.train.extend_from_slice(&members[n_val + n_test..]);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

pub fn split(dataset: &Dataset, ratios: SplitRatios, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let idx = split_indices(dataset, ratios, seed)?;
    Ok((
        dataset.subset(&idx.train),
        dataset.subset(&idx.val),
        dataset.subset(&idx.test),
    ))
}
