use serde::{Deserialize, Serialize};

use super::BoostError;
use crate::data::Dataset;
use crate::nn::{argmax_rows, class_probabilities, Mode, Network, NnError, Scalar, Tensor, TrainReport};

/// Anything that assigns class scores to the rows of a dataset.
pub trait Hypothesis {
    fn classes(&self) -> usize;

    /// Row-major `n x classes` scores.
    fn class_scores(&self, data: &Dataset) -> Result<Vec<f64>, NnError>;
}

impl<S: Scalar> Hypothesis for Network<S> {
    fn classes(&self) -> usize {
        Network::classes(self)
    }

    fn class_scores(&self, data: &Dataset) -> Result<Vec<f64>, NnError> {
        class_probabilities(self, data)
    }
}

/// One trained member plus its boosting bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct BoostRound {
    pub member: Network<f32>,
    /// Pseudo-loss after clamping.
    pub pseudo_loss: f64,
    /// Pseudo-loss as measured, before clamping.
    pub raw_pseudo_loss: f64,
    pub beta: f64,
    /// `1 / beta`.
    pub alpha: f64,
    pub resample_seed: u64,
    /// Epochs the member was trained for in this round.
    pub epochs: usize,
    pub train_report: TrainReport,
}

impl BoostRound {
    /// Vote weight `ln(alpha) = ln(1 / beta)`.
    pub fn vote_weight(&self) -> f64 {
        -self.beta.ln()
    }
}

/// Serializable summary of a round without the member's parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub pseudo_loss: f64,
    pub raw_pseudo_loss: f64,
    pub beta: f64,
    pub alpha: f64,
    pub resample_seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub wall_time_secs: f64,
    pub layers: usize,
}

impl BoostRound {
    pub fn summary(&self, round: usize) -> RoundSummary {
        RoundSummary {
            round,
            pseudo_loss: self.pseudo_loss,
            raw_pseudo_loss: self.raw_pseudo_loss,
            beta: self.beta,
            alpha: self.alpha,
            resample_seed: self.resample_seed,
            epochs: self.epochs,
            best_epoch: self.train_report.best_epoch,
            wall_time_secs: self.train_report.wall_time_secs,
            layers: self.member.spec().layers.len(),
        }
    }
}

/// Weighted vote: `argmax_y sum_t w_t * h_t(x, y)`, lowest class on ties.
///
/// `member_scores[t]` is member `t`'s row-major `n x classes` score matrix.
pub fn weighted_vote(member_scores: &[Vec<f64>], weights: &[f64], classes: usize) -> Vec<usize> {
    argmax_rows(&vote_totals(member_scores, weights), classes)
}

fn vote_totals(member_scores: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let len = member_scores.first().map_or(0, Vec::len);
    let mut totals = vec![0.0; len];
    for (scores, &w) in member_scores.iter().zip(weights) {
        for (t, s) in totals.iter_mut().zip(scores) {
            *t += w * s;
        }
    }
    totals
}

/// Ordered boosting rounds voting with weights `ln(alpha_t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    rounds: Vec<BoostRound>,
    classes: usize,
}

impl Ensemble {
    pub fn new(rounds: Vec<BoostRound>) -> Result<Self, BoostError> {
        let first = rounds.first().ok_or(BoostError::EmptyEnsemble)?;
        let classes = first.member.classes();
        let input = first.member.input_shape().to_vec();
        for r in &rounds {
            if r.member.classes() != classes || r.member.input_shape() != input.as_slice() {
                return Err(BoostError::Shape("ensemble members disagree on input shape or classes".into()));
            }
            if !(r.beta > 0.0 && r.beta < 1.0) || (r.alpha * r.beta - 1.0).abs() > 1e-12 {
                return Err(BoostError::InvalidWeights(format!("beta {} / alpha {}", r.beta, r.alpha)));
            }
        }
        Ok(Ensemble { rounds, classes })
    }

    pub fn rounds(&self) -> &[BoostRound] {
        &self.rounds
    }

    pub fn into_rounds(self) -> Vec<BoostRound> {
        self.rounds
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input_shape(&self) -> &[usize] {
        self.rounds[0].member.input_shape()
    }

    pub fn vote_weights(&self) -> Vec<f64> {
        self.rounds.iter().map(BoostRound::vote_weight).collect()
    }

    /// Per-member probabilities on a batch `(n, input...)`.
    pub fn member_scores(&self, batch: &Tensor<f32>) -> Result<Vec<Vec<f64>>, NnError> {
        self.rounds
            .iter()
            .map(|r| Ok(r.member.forward(batch, Mode::Eval)?.data().iter().map(|&v| v as f64).collect()))
            .collect()
    }

    /// Weighted class totals `sum_t ln(alpha_t) h_t(x, y)`, row-major.
    pub fn scores(&self, batch: &Tensor<f32>) -> Result<Vec<f64>, NnError> {
        Ok(vote_totals(&self.member_scores(batch)?, &self.vote_weights()))
    }

    pub fn predict(&self, batch: &Tensor<f32>) -> Result<Vec<usize>, NnError> {
        Ok(argmax_rows(&self.scores(batch)?, self.classes))
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<usize>, NnError> {
        let members: Vec<Vec<f64>> =
            self.rounds.iter().map(|r| r.member.class_scores(data)).collect::<Result<_, _>>()?;
        Ok(weighted_vote(&members, &self.vote_weights(), self.classes))
    }

    /// Misclassification rate of the weighted vote.
    pub fn error_rate(&self, data: &Dataset) -> Result<f64, NnError> {
        if data.is_empty() {
            return Err(NnError::EmptyDataset("evaluation set"));
        }
        let predicted = self.predict_dataset(data)?;
        let wrong = predicted.iter().zip(data.labels()).filter(|(p, l)| p != l).count();
        Ok(wrong as f64 / data.len() as f64)
    }
}
