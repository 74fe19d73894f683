use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};
use crate::nn::Tensor;

/// Two-dimensional toy problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Synthetic {
    /// Two interleaved half circles; always two classes.
    TwoMoons,
    /// Isotropic Gaussian clusters with centres on a circle of radius 4.
    GaussianBlobs,
}

const BLOB_RADIUS: f64 = 4.0;

/// Generates `n` points. Class `c` receives `n / k` points (plus one for the
/// first `n % k` classes), Gaussian noise of standard deviation `noise` is
/// added, and rows are shuffled. Fully determined by `seed`.
pub fn make_synthetic(kind: Synthetic, n: usize, k: usize, noise: f64, seed: u64) -> Result<Dataset, DataError> {
    if k == 0 || n < k {
        return Err(DataError::Invalid(format!("need n >= k >= 1, got n={n}, k={k}")));
    }
    if kind == Synthetic::TwoMoons && k != 2 {
        return Err(DataError::Invalid(format!("two-moons has 2 classes, asked for {k}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(DataError::Invalid(format!("noise must be finite and non-negative, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut points = Vec::with_capacity(n);
    for class in 0..k {
        let count = n / k + usize::from(class < n % k);
        for j in 0..count {
            let (x, y) = match kind {
                Synthetic::TwoMoons => {
                    let t = if count > 1 { PI * j as f64 / (count - 1) as f64 } else { 0.0 };
                    if class == 0 {
                        (t.cos(), t.sin())
                    } else {
                        (1.0 - t.cos(), 0.5 - t.sin())
                    }
                }
                Synthetic::GaussianBlobs => {
                    let angle = 2.0 * PI * class as f64 / k as f64;
                    (BLOB_RADIUS * angle.cos(), BLOB_RADIUS * angle.sin())
                }
            };
            let (dx, dy) = if noise > 0.0 { (gauss.sample(&mut rng), gauss.sample(&mut rng)) } else { (0.0, 0.0) };
            points.push(([(x + dx) as f32, (y + dy) as f32], class));
        }
    }
    points.shuffle(&mut rng);
    let data = points.iter().flat_map(|(p, _)| *p).collect();
    let labels = points.iter().map(|&(_, c)| c).collect();
    Dataset::new(Tensor::new(vec![n, 2], data)?, labels, k)
}

/// Centres used by [`Synthetic::GaussianBlobs`].
pub fn blob_centres(k: usize) -> Vec<[f64; 2]> {
    (0..k)
        .map(|c| {
            let a = 2.0 * PI * c as f64 / k as f64;
            [BLOB_RADIUS * a.cos(), BLOB_RADIUS * a.sin()]
        })
        .collect()
}
