use log::{info, warn};
use thiserror::Error;

use super::algebra::{beta, clamp_pseudo_loss, pseudo_loss_from_scores, update_from_scores};
use super::{resample_indices, BoostRound, Ensemble, Hypothesis, WeightDistribution};
use crate::data::Dataset;
use crate::dib::{overlap_between, OverlapPair, OverlapReport};
use crate::nn::{train, Network, NetworkSpec, TrainConfig};
use crate::Error;

/// What a boosting run produced.
#[derive(Clone, Debug)]
pub struct BoostOutcome {
    pub ensemble: Ensemble,
    /// `D_t` used to draw each round's resample.
    pub distributions: Vec<WeightDistribution>,
    /// Original example ids of each round's resample.
    pub resamples: Vec<Vec<usize>>,
    /// Unique-id overlap of consecutive resamples.
    pub overlap: OverlapReport,
}

/// Failure partway through a run; completed rounds are kept.
#[derive(Debug, Error)]
#[error("boosting stopped in round {round}: {source}")]
pub struct RunError {
    pub round: usize,
    pub completed: Vec<BoostRound>,
    pub overlap: OverlapReport,
    #[source]
    pub source: Error,
}

impl RunError {
    pub(crate) fn before_start(source: impl Into<Error>) -> Self {
        RunError { round: 0, completed: Vec::new(), overlap: OverlapReport::default(), source: source.into() }
    }
}

/// Notification sent after every finished round.
pub struct RoundEvent<'a> {
    pub round: usize,
    pub record: &'a BoostRound,
    pub distribution: &'a WeightDistribution,
    pub resample_ids: &'a [usize],
    pub overlap: Option<&'a OverlapPair>,
}

/// Seed of round `t` for resampling, initialization and training.
pub fn round_seed(base_seed: u64, round: usize) -> u64 {
    base_seed.wrapping_add(round as u64)
}

pub(crate) struct Schedule<'a> {
    pub rounds: usize,
    pub seed: u64,
    pub train: &'a TrainConfig,
    pub first_epochs: usize,
    pub later_epochs: usize,
}

/// The shared boosting loop. `make_member(round, previous, seed)` supplies the
/// untrained network for each round.
pub(crate) fn run_rounds<F>(
    base: &Dataset,
    valid: &Dataset,
    schedule: Schedule<'_>,
    mut make_member: F,
    observer: &mut dyn FnMut(&RoundEvent<'_>),
) -> Result<BoostOutcome, RunError>
where
    F: FnMut(usize, Option<&Network>, u64) -> Result<Network, Error>,
{
    if schedule.rounds == 0 {
        return Err(RunError::before_start(super::BoostError::NoRounds));
    }
    let mut dist = WeightDistribution::uniform(base.len()).map_err(RunError::before_start)?;
    let mut rounds: Vec<BoostRound> = Vec::with_capacity(schedule.rounds);
    let mut distributions = Vec::with_capacity(schedule.rounds);
    let mut resamples: Vec<Vec<usize>> = Vec::with_capacity(schedule.rounds);
    let mut overlap = OverlapReport::default();

    for t in 0..schedule.rounds {
        let seed = round_seed(schedule.seed, t);
        let step = (|| -> Result<(BoostRound, WeightDistribution, Vec<usize>), Error> {
            let indices = resample_indices(&dist, seed)?;
            let sample = base.subset(&indices);
            let start = make_member(t, rounds.last().map(|r| &r.member), seed)?;
            let epochs = if t == 0 { schedule.first_epochs } else { schedule.later_epochs };
            let cfg = TrainConfig { epochs, seed, ..schedule.train.clone() };
            let (member, report) = train(&start, &sample, valid, &cfg)?;

            let scores = member.class_scores(base)?;
            let raw = pseudo_loss_from_scores(&scores, base.labels(), base.classes(), &dist)?;
            let eps = clamp_pseudo_loss(raw);
            if eps != raw {
                warn!("round {t}: pseudo-loss {raw:.6} clamped to {eps:.6}");
            }
            let b = beta(eps);
            let next = update_from_scores(&dist, &scores, base.labels(), base.classes(), b)?;
            info!(
                "round {t}: pseudo-loss {eps:.5}, beta {b:.5}, best epoch {}/{epochs}, {:.2}s",
                report.best_epoch, report.wall_time_secs
            );
            let record = BoostRound {
                member,
                pseudo_loss: eps,
                raw_pseudo_loss: raw,
                beta: b,
                alpha: 1.0 / b,
                resample_seed: seed,
                epochs,
                train_report: report,
            };
            Ok((record, next, sample.ids().to_vec()))
        })();
        let (record, next, ids) = match step {
            Ok(v) => v,
            Err(source) => return Err(RunError { round: t, completed: rounds, overlap, source }),
        };
        if let Some(prev) = resamples.last() {
            overlap.pairs.push(overlap_between(t - 1, prev, &ids));
        }
        observer(&RoundEvent {
            round: t,
            record: &record,
            distribution: &dist,
            resample_ids: &ids,
            overlap: if t > 0 { overlap.pairs.last() } else { None },
        });
        rounds.push(record);
        distributions.push(std::mem::replace(&mut dist, next));
        resamples.push(ids);
    }
    let ensemble = Ensemble::new(rounds).map_err(RunError::before_start)?;
    Ok(BoostOutcome { ensemble, distributions, resamples, overlap })
}

/// AdaBoost.M2 with resampling: every round trains a fresh network built
/// from `spec` for `cfg.epochs` epochs. `cfg.seed` is the base seed; round
/// `t` uses `cfg.seed + t`.
pub fn run_adaboost_m2(
    base: &Dataset,
    valid: &Dataset,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    rounds: usize,
) -> Result<BoostOutcome, RunError> {
    run_adaboost_m2_observed(base, valid, spec, cfg, rounds, &mut |_| {})
}

pub fn run_adaboost_m2_observed(
    base: &Dataset,
    valid: &Dataset,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    rounds: usize,
    observer: &mut dyn FnMut(&RoundEvent<'_>),
) -> Result<BoostOutcome, RunError> {
    cfg.validate().map_err(RunError::before_start)?;
    let schedule = Schedule { rounds, seed: cfg.seed, train: cfg, first_epochs: cfg.epochs, later_epochs: cfg.epochs };
    run_rounds(base, valid, schedule, |_, _, seed| Ok(Network::build(spec.clone(), seed)?), observer)
}
