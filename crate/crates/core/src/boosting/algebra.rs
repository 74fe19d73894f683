//! Pseudo-loss, round weight and reweighting for multi-class boosting over a
//! per-example distribution.
//!
//! Each example contributes the mean over its `K - 1` wrong labels of
//! `1 - h(x, y_true) + h(x, y)`, so a perfect member scores 0 and a member
//! that outputs `1/K` everywhere scores exactly 1/2.

use super::{BoostError, WeightDistribution};

/// Smallest pseudo-loss handed to [`beta`].
pub const MIN_PSEUDO_LOSS: f64 = 1e-4;
/// Largest pseudo-loss handed to [`beta`].
pub const MAX_PSEUDO_LOSS: f64 = 0.5 - 1e-4;

fn check(probs: &[f64], labels: &[usize], classes: usize, dist: &WeightDistribution) -> Result<(), BoostError> {
    if classes < 2 {
        return Err(BoostError::Shape(format!("need at least two classes, got {classes}")));
    }
    if probs.len() != labels.len() * classes {
        return Err(BoostError::Shape(format!(
            "{} scores for {} examples of {classes} classes",
            probs.len(),
            labels.len()
        )));
    }
    if dist.len() != labels.len() {
        return Err(BoostError::LengthMismatch { distribution: dist.len(), dataset: labels.len() });
    }
    Ok(())
}

/// Pseudo-loss of a member given its class scores on the base set.
pub fn pseudo_loss_from_scores(
    probs: &[f64],
    labels: &[usize],
    classes: usize,
    dist: &WeightDistribution,
) -> Result<f64, BoostError> {
    check(probs, labels, classes, dist)?;
    let pairs = (classes - 1) as f64;
    let mut total = 0.0;
    for ((row, &label), &d) in probs.chunks_exact(classes).zip(labels).zip(dist.weights()) {
        let truth = row[label];
        let wrong: f64 = row.iter().enumerate().filter(|&(y, _)| y != label).map(|(_, &h)| 1.0 - truth + h).sum();
        total += d * wrong / pairs;
    }
    Ok(0.5 * total)
}

/// Clamps a raw pseudo-loss into `[MIN_PSEUDO_LOSS, MAX_PSEUDO_LOSS]`.
pub fn clamp_pseudo_loss(raw: f64) -> f64 {
    raw.clamp(MIN_PSEUDO_LOSS, MAX_PSEUDO_LOSS)
}

/// `beta = eps / (1 - eps)` for an already clamped pseudo-loss.
pub fn beta(epsilon: f64) -> f64 {
    assert!(epsilon > 0.0 && epsilon < 1.0, "pseudo-loss {epsilon} must be clamped before beta");
    epsilon / (1.0 - epsilon)
}

/// Score margin against the strongest wrong class.
pub fn margin(row: &[f64], label: usize) -> f64 {
    let rival = row.iter().enumerate().filter(|&(y, _)| y != label).map(|(_, &h)| h).fold(f64::NEG_INFINITY, f64::max);
    row[label] - rival
}

/// `D'(i) ∝ D(i) * beta^((1 + margin_i) / 2)`.
pub fn update_from_scores(
    dist: &WeightDistribution,
    probs: &[f64],
    labels: &[usize],
    classes: usize,
    beta: f64,
) -> Result<WeightDistribution, BoostError> {
    check(probs, labels, classes, dist)?;
    if !(beta > 0.0 && beta < 1.0) {
        return Err(BoostError::InvalidWeights(format!("beta {beta} outside (0, 1)")));
    }
    let weights = probs
        .chunks_exact(classes)
        .zip(labels)
        .zip(dist.weights())
        .map(|((row, &label), &d)| d * beta.powf(0.5 * (1.0 + margin(row, label))))
        .collect();
    WeightDistribution::from_weights(weights)
}
