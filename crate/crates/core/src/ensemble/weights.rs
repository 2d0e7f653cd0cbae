//! Loss-reciprocal weights and grid calibration of ensemble weights.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::nn::{bce_mean, sigmoid};

/// Losses below this are clamped before taking reciprocals.
pub const LOSS_FLOOR: f64 = 1e-8;

/// How member outputs are merged under a weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operand {
    /// `sigmoid(sum_i w_i * logit_i)`.
    #[default]
    Logit,
    /// `sum_i w_i * p_i`.
    Probability,
}

/// `w_i = (1 / L_i) / sum_j (1 / L_j)`.
pub fn reciprocal_weights(losses: &[f64]) -> Result<Vec<f64>> {
    if losses.is_empty() {
        return Err(invalid!("no losses to weight"));
    }
    if let Some(bad) = losses.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(invalid!("losses must be finite and non-negative, got {bad}"));
    }
    let inv: Vec<f64> = losses.iter().map(|&l| 1.0 / l.max(LOSS_FLOOR)).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|v| v / total).collect())
}

/// Combines one item's member outputs. `logits[i]` is member i's pre-sigmoid
/// output.
pub fn combine(logits: &[f64], weights: &[f64], operand: Operand) -> f64 {
    match operand {
        Operand::Logit => sigmoid(logits.iter().zip(weights).map(|(z, w)| z * w).sum()),
        Operand::Probability => logits
            .iter()
            .zip(weights)
            .map(|(&z, w)| w * sigmoid(z))
            .sum::<f64>()
            .clamp(0.0, 1.0),
    }
}

pub fn classify(probability: f64, threshold: f64) -> u8 {
    u8::from(probability >= threshold)
}

/// Number of grid steps per unit for a step size that divides 1.
pub fn grid_divisions(step: f64) -> Result<usize> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(invalid!("grid step must lie in (0, 1], got {step}"));
    }
    let m = (1.0 / step).round();
    if (m * step - 1.0).abs() > 1e-9 {
        return Err(invalid!("grid step {step} does not divide 1"));
    }
    Ok(m as usize)
}

/// All weight vectors of length `n` with entries in `{0, 1/m, ..., 1}`
/// summing to one, in lexicographic order starting from `(1, 0, ..., 0)`.
pub fn simplex_grid(n: usize, m: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, remaining: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if n == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=remaining).rev() {
            prefix.push(k);
            rec(n - 1, remaining - k, prefix, out);
            prefix.pop();
        }
    }
    if n == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    rec(n, m, &mut Vec::with_capacity(n), &mut out);
    out.into_iter()
        .map(|ks| ks.into_iter().map(|k| k as f64 / m as f64).collect())
        .collect()
}

/// Validation accuracy minus `lambda` times mean BCE of the combined output.
pub fn calibration_objective(
    member_logits: &[Vec<f64>],
    labels: &[f64],
    weights: &[f64],
    operand: Operand,
    threshold: f64,
    lambda: f64,
) -> f64 {
    let n = labels.len();
    let mut probs = Vec::with_capacity(n);
    let mut column = vec![0.0; member_logits.len()];
    let mut hits = 0usize;
    for (j, &y) in labels.iter().enumerate() {
        for (c, m) in column.iter_mut().zip(member_logits) {
            *c = m[j];
        }
        let p = combine(&column, weights, operand);
        if f64::from(classify(p, threshold)) == y {
            hits += 1;
        }
        probs.push(p);
    }
    hits as f64 / n as f64 - lambda * bce_mean(&probs, labels)
}

/// Exhaustive search over the simplex grid. Ties keep the earliest grid
/// point. Returns the weights and their objective.
pub fn calibrate_from_logits(
    member_logits: &[Vec<f64>],
    labels: &[f64],
    operand: Operand,
    threshold: f64,
    lambda: f64,
    grid_step: f64,
) -> Result<(Vec<f64>, f64)> {
    if labels.is_empty() {
        return Err(invalid!("calibration needs a non-empty validation set"));
    }
    if member_logits.is_empty() || member_logits.iter().any(|m| m.len() != labels.len()) {
        return Err(invalid!("member outputs do not line up with the labels"));
    }
    if !(lambda >= 0.0) {
        return Err(invalid!("lambda must be non-negative, got {lambda}"));
    }
    let m = grid_divisions(grid_step)?;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for w in simplex_grid(member_logits.len(), m) {
        let obj = calibration_objective(member_logits, labels, &w, operand, threshold, lambda);
        if best.as_ref().is_none_or(|(_, b)| obj > *b) {
            best = Some((w, obj));
        }
    }
    Ok(best.expect("grid is never empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_losses_give_uniform_weights() {
        let w = reciprocal_weights(&[0.2, 0.2, 0.2]).unwrap();
        for v in w {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_loss_is_clamped() {
        let w = reciprocal_weights(&[0.0, 1.0]).unwrap();
        assert!(w[0] > 0.999_999 && w.iter().all(|v| v.is_finite()));
        assert!(reciprocal_weights(&[]).is_err());
        assert!(reciprocal_weights(&[-1.0]).is_err());
    }

    #[test]
    fn threshold_boundary() {
        assert_eq!(classify(0.7, 0.5), 1);
        assert_eq!(classify(0.5, 0.5), 1);
        assert_eq!(classify(0.49999, 0.5), 0);
    }

    #[test]
    fn grid_sizes_and_order() {
        let g = simplex_grid(3, 10);
        assert_eq!(g.len(), 66);
        assert_eq!(g[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(g[1], vec![0.9, 0.1, 0.0]);
        assert_eq!(*g.last().unwrap(), vec![0.0, 0.0, 1.0]);
        assert_eq!(simplex_grid(1, 10), vec![vec![1.0]]);
        assert!(grid_divisions(0.3).is_err());
        assert_eq!(grid_divisions(0.25).unwrap(), 4);
    }

    #[test]
    fn opposite_logits_cancel() {
        assert_eq!(combine(&[1.7, -1.7], &[0.5, 0.5], Operand::Logit), 0.5);
    }

    #[test]
    fn single_member_calibrates_to_one() {
        let logits = vec![vec![0.3, -2.0, 1.0]];
        for lambda in [0.0, 1.0, 100.0] {
            let (w, _) = calibrate_from_logits(&logits, &[1.0, 0.0, 0.0], Operand::Logit, 0.5, lambda, 0.1).unwrap();
            assert_eq!(w, vec![1.0]);
        }
    }

    proptest! {
        #[test]
        fn weights_sum_to_one_and_follow_permutations(losses in proptest::collection::vec(1e-4f64..10.0, 1..8), k in 1e-3f64..1e3) {
            let w = reciprocal_weights(&losses).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let scaled: Vec<f64> = losses.iter().map(|l| l * k).collect();
            for (a, b) in w.iter().zip(reciprocal_weights(&scaled).unwrap()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let mut rev = losses.clone();
            rev.reverse();
            let wr = reciprocal_weights(&rev).unwrap();
            for (a, b) in w.iter().zip(wr.iter().rev()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
