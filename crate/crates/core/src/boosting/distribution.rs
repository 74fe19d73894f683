use serde::{Deserialize, Serialize};

use super::BoostError;

/// Sampling distribution over the examples of the base training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightDistribution {
    weights: Vec<f64>,
}

impl WeightDistribution {
    /// `1/m` everywhere.
    pub fn uniform(m: usize) -> Result<Self, BoostError> {
        if m == 0 {
            return Err(BoostError::EmptyDistribution);
        }
        Ok(WeightDistribution { weights: vec![1.0 / m as f64; m] })
    }

    /// Normalizes non-negative finite weights with a positive total.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, BoostError> {
        if weights.is_empty() {
            return Err(BoostError::EmptyDistribution);
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(BoostError::InvalidWeights("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(BoostError::InvalidWeights(format!("weights sum to {total}")));
        }
        Ok(WeightDistribution { weights: weights.into_iter().map(|w| w / total).collect() })
    }

    /// All mass on example `i`.
    pub fn point_mass(m: usize, i: usize) -> Result<Self, BoostError> {
        let mut w = vec![0.0; m];
        *w.get_mut(i).ok_or(BoostError::EmptyDistribution)? = 1.0;
        Self::from_weights(w)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_values() {
        assert_eq!(WeightDistribution::uniform(4).unwrap().weights(), &[0.25; 4]);
        assert_eq!(WeightDistribution::uniform(1).unwrap().weights(), &[1.0]);
        assert!((WeightDistribution::uniform(3).unwrap().total() - 1.0).abs() < 1e-9);
        assert!(matches!(WeightDistribution::uniform(0), Err(BoostError::EmptyDistribution)));
    }

    #[test]
    fn from_weights_normalizes() {
        let d = WeightDistribution::from_weights(vec![1.0, 3.0]).unwrap();
        assert_eq!(d.weights(), &[0.25, 0.75]);
        assert!(WeightDistribution::from_weights(vec![0.0, 0.0]).is_err());
        assert!(WeightDistribution::from_weights(vec![-1.0, 2.0]).is_err());
        assert!(WeightDistribution::from_weights(vec![f64::NAN]).is_err());
    }
}
