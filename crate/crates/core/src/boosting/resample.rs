use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;

use super::{BoostError, WeightDistribution};
use crate::data::Dataset;
use crate::nn::EngineRng;

/// Stream of the per-round generator reserved for resampling; initialization
/// uses stream 0 and training stream 2.
pub(crate) const RESAMPLE_STREAM: u64 = 1;

/// `m` row indices drawn i.i.d. with replacement from `dist`.
pub fn resample_indices(dist: &WeightDistribution, seed: u64) -> Result<Vec<usize>, BoostError> {
    let sampler = WeightedIndex::new(dist.weights()).map_err(|e| BoostError::InvalidWeights(e.to_string()))?;
    let mut rng = EngineRng::seed_from_u64(seed);
    rng.set_stream(RESAMPLE_STREAM);
    Ok((0..dist.len()).map(|_| sampler.sample(&mut rng)).collect())
}

/// A same-size weighted bootstrap of `base`; rows keep their original ids.
pub fn resample(base: &Dataset, dist: &WeightDistribution, seed: u64) -> Result<Dataset, BoostError> {
    if base.len() != dist.len() {
        return Err(BoostError::LengthMismatch { distribution: dist.len(), dataset: base.len() });
    }
    Ok(base.subset(&resample_indices(dist, seed)?))
}
