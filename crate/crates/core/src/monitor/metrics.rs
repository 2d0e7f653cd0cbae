use serde::{Deserialize, Serialize};

use crate::ensemble::classify;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Which ratios hit 0/0 and were reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UndefinedFlags {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

impl UndefinedFlags {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub undefined: UndefinedFlags,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

impl Metrics {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        let total = confusion.total();
        if total == 0 {
            return Err(invalid!("no items to score"));
        }
        let c = confusion;
        let (precision, p_undef) = ratio(c.tp as f64, (c.tp + c.fp) as f64);
        let (recall, r_undef) = ratio(c.tp as f64, (c.tp + c.fn_) as f64);
        let (f1, f_undef) = ratio(2.0 * precision * recall, precision + recall);
        Ok(Self {
            confusion,
            accuracy: (c.tp + c.tn) as f64 / total as f64,
            precision,
            recall,
            f1,
            undefined: UndefinedFlags {
                precision: p_undef,
                recall: r_undef,
                f1: f_undef,
            },
        })
    }
}

pub fn confusion(probabilities: &[f64], labels: &[f64], threshold: f64) -> Result<ConfusionMatrix> {
    if probabilities.is_empty() {
        return Err(invalid!("no items to score"));
    }
    if probabilities.len() != labels.len() {
        return Err(invalid!(
            "{} predictions for {} labels",
            probabilities.len(),
            labels.len()
        ));
    }
    let mut m = ConfusionMatrix::default();
    for (&p, &y) in probabilities.iter().zip(labels) {
        let predicted = classify(p, threshold) == 1;
        let actual = match y {
            1.0 => true,
            0.0 => false,
            other => return Err(invalid!("label {other} is not binary")),
        };
        match (predicted, actual) {
            (true, true) => m.tp += 1,
            (true, false) => m.fp += 1,
            (false, true) => m.fn_ += 1,
            (false, false) => m.tn += 1,
        }
    }
    Ok(m)
}

pub fn compute_metrics(probabilities: &[f64], labels: &[f64], threshold: f64) -> Result<Metrics> {
    Metrics::from_confusion(confusion(probabilities, labels, threshold)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let m = compute_metrics(&[0.9, 0.1, 0.8], &[1.0, 0.0, 1.0], 0.5).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        assert!(!m.undefined.any());
    }

    #[test]
    fn table_like_fixture() {
        let m = Metrics::from_confusion(ConfusionMatrix {
            tp: 98,
            fp: 1,
            fn_: 2,
            tn: 99,
        })
        .unwrap();
        let p = 98.0 / 99.0;
        let r = 0.98;
        assert!((m.precision - p).abs() < 1e-12);
        assert!((m.recall - r).abs() < 1e-12);
        assert!((m.f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
        assert!((m.precision - 0.9899).abs() < 1e-4 && (m.f1 - 0.9850).abs() < 1e-4);
    }

    #[test]
    fn zero_over_zero_is_flagged() {
        let m = compute_metrics(&[0.1, 0.2], &[0.0, 0.0], 0.5).unwrap();
        assert_eq!(m.precision, 0.0);
        assert!(m.undefined.precision && m.undefined.recall && m.undefined.f1);
        assert!(compute_metrics(&[], &[], 0.5).is_err());
        assert!(compute_metrics(&[0.5], &[0.5], 0.5).is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariance_and_f1_bounds(
            items in proptest::collection::vec((0.0f64..1.0, proptest::bool::ANY), 1..60),
            rot in 0usize..60,
        ) {
            let p: Vec<f64> = items.iter().map(|i| i.0).collect();
            let y: Vec<f64> = items.iter().map(|i| f64::from(u8::from(i.1))).collect();
            let m = compute_metrics(&p, &y, 0.5).unwrap();
            let k = rot % p.len();
            let (mut p2, mut y2) = (p.clone(), y.clone());
            p2.rotate_left(k);
            y2.rotate_left(k);
            prop_assert_eq!(m, compute_metrics(&p2, &y2, 0.5).unwrap());
            prop_assert_eq!(m.confusion.total(), p.len());
            let lo = m.precision.min(m.recall);
            let hi = m.precision.max(m.recall);
            prop_assert!(m.f1 >= lo - 1e-12 && m.f1 <= hi + 1e-12);
        }
    }
}
