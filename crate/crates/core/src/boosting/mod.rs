//! Boosting algebra shared by AdaBoost.M2 and DIB:
//! the sampling distribution, weighted resampling, pseudo-loss, round
//! weights, reweighting and the weighted-vote ensemble.

mod algebra;
mod distribution;
mod ensemble;
mod resample;
mod runner;

use thiserror::Error;

pub use algebra::{
    beta, clamp_pseudo_loss, margin, pseudo_loss_from_scores, update_from_scores, MAX_PSEUDO_LOSS, MIN_PSEUDO_LOSS,
};
pub use distribution::WeightDistribution;
pub use ensemble::{weighted_vote, BoostRound, Ensemble, Hypothesis, RoundSummary};
pub use resample::{resample, resample_indices};
pub use runner::{round_seed, run_adaboost_m2, run_adaboost_m2_observed, BoostOutcome, RoundEvent, RunError};

pub(crate) use runner::{run_rounds, Schedule};

use crate::data::Dataset;
use crate::nn::NnError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoostError {
    #[error("distribution over zero examples")]
    EmptyDistribution,

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("distribution has {distribution} entries but the dataset has {dataset} examples")]
    LengthMismatch { distribution: usize, dataset: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("ensemble has no members")]
    EmptyEnsemble,

    #[error("at least one boosting round is required")]
    NoRounds,
}

/// Initial distribution `D_0(i) = 1/m`.
pub fn init_distribution(m: usize) -> Result<WeightDistribution, BoostError> {
    WeightDistribution::uniform(m)
}

fn scores_for(member: &dyn Hypothesis, base: &Dataset) -> Result<Vec<f64>, crate::Error> {
    if member.classes() != base.classes() {
        return Err(NnError::ClassCount { network: member.classes(), dataset: base.classes() }.into());
    }
    Ok(member.class_scores(base)?)
}

/// Pseudo-loss of `member` on the base set under `dist` (before clamping).
pub fn pseudo_loss(member: &dyn Hypothesis, base: &Dataset, dist: &WeightDistribution) -> Result<f64, crate::Error> {
    let scores = scores_for(member, base)?;
    Ok(pseudo_loss_from_scores(&scores, base.labels(), base.classes(), dist)?)
}

/// Next-round distribution after `member` with round weight `beta`.
pub fn update_distribution(
    dist: &WeightDistribution,
    member: &dyn Hypothesis,
    base: &Dataset,
    beta: f64,
) -> Result<WeightDistribution, crate::Error> {
    let scores = scores_for(member, base)?;
    Ok(update_from_scores(dist, &scores, base.labels(), base.classes(), beta)?)
}
