//! DIB driver (boosting whose members grow one layer per round) and the
//! set-overlap diagnostics used to check how similar consecutive resamples
//! are.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::boosting::{run_rounds, BoostError, BoostOutcome, Hypothesis, RoundEvent, RunError, Schedule};
use crate::data::Dataset;
use crate::nn::{argmax_rows, Network, NetworkSpec, NnError, TrainConfig};
use crate::surgery::{grow, validate_policy, GrowthPolicy};

/// Round schedule for incremental boosting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DibConfig {
    pub rounds: usize,
    /// Epochs for the freshly initialized first member.
    pub first_epochs: usize,
    /// Epochs for every grown member.
    pub later_epochs: usize,
    pub growth: GrowthPolicy,
    /// Optimizer settings; `epochs` and `seed` are overridden per round.
    pub train: TrainConfig,
    /// Round `t` uses `seed + t`.
    pub seed: u64,
}

impl DibConfig {
    pub fn validate(&self) -> Result<(), BoostError> {
        if self.rounds == 0 {
            return Err(BoostError::NoRounds);
        }
        if self.first_epochs == 0 || self.later_epochs == 0 || self.later_epochs > self.first_epochs {
            return Err(BoostError::InvalidWeights(format!(
                "epoch schedule needs 1 <= M <= N, got N={} M={}",
                self.first_epochs, self.later_epochs
            )));
        }
        if 2 * self.later_epochs >= self.first_epochs && self.rounds > 1 {
            log::warn!(
                "later rounds train for {} of {} epochs; the schedule is meant to be much shorter",
                self.later_epochs,
                self.first_epochs
            );
        }
        Ok(())
    }

    /// `N + (T - 1) * M`.
    pub fn total_epochs(&self) -> usize {
        self.first_epochs + self.rounds.saturating_sub(1) * self.later_epochs
    }
}

/// Unique-id overlap between the resamples of rounds `from_round` and
/// `from_round + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapPair {
    pub from_round: usize,
    pub jaccard: f64,
    pub intersection: usize,
    pub union: usize,
    pub symmetric_difference: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub pairs: Vec<OverlapPair>,
}

/// `|A ∩ B| / |A ∪ B|` over unique ids; two empty sets count as identical.
pub fn jaccard_ids(a: &[usize], b: &[usize]) -> f64 {
    overlap_between(0, a, b).jaccard
}

pub(crate) fn overlap_between(from_round: usize, a: &[usize], b: &[usize]) -> OverlapPair {
    let a: BTreeSet<usize> = a.iter().copied().collect();
    let b: BTreeSet<usize> = b.iter().copied().collect();
    let intersection = a.intersection(&b).count();
    let union = a.len() + b.len() - intersection;
    OverlapPair {
        from_round,
        jaccard: if union == 0 { 1.0 } else { intersection as f64 / union as f64 },
        intersection,
        union,
        symmetric_difference: union - intersection,
    }
}

/// Jaccard similarity of the unique example ids of two datasets.
pub fn jaccard(a: &Dataset, b: &Dataset) -> f64 {
    jaccard_ids(a.ids(), b.ids())
}

fn predictions(member: &dyn Hypothesis, data: &Dataset) -> Result<Vec<usize>, NnError> {
    if member.classes() != data.classes() {
        return Err(NnError::ClassCount { network: member.classes(), dataset: data.classes() });
    }
    Ok(argmax_rows(&member.class_scores(data)?, member.classes()))
}

/// Rows of `data` whose argmax prediction differs from the label.
pub fn mistake_count(member: &dyn Hypothesis, data: &Dataset) -> Result<usize, NnError> {
    let predicted = predictions(member, data)?;
    Ok(predicted.iter().zip(data.labels()).filter(|(p, l)| p != l).count())
}

/// Unique ids of `data` that `member` misclassifies.
fn wrong_ids(member: &dyn Hypothesis, data: &Dataset) -> Result<(BTreeSet<usize>, BTreeSet<usize>), NnError> {
    let predicted = predictions(member, data)?;
    let mut all = BTreeSet::new();
    let mut wrong = BTreeSet::new();
    for ((&id, p), l) in data.ids().iter().zip(&predicted).zip(data.labels()) {
        all.insert(id);
        if p != l {
            wrong.insert(id);
        }
    }
    Ok((all, wrong))
}

/// Mistakes on the unique ids of `data`.
pub fn unique_mistake_count(member: &dyn Hypothesis, data: &Dataset) -> Result<usize, NnError> {
    Ok(wrong_ids(member, data)?.1.len())
}

/// Mistakes split into the shared ids of `a` and `b`, the ids only in `a`,
/// and the ids only in `b`. `common + a_only` equals
/// [`unique_mistake_count`] on `a` (likewise for `b`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MistakeSplit {
    pub common: usize,
    pub a_only: usize,
    pub b_only: usize,
}

pub fn overlap_decomposition(member: &dyn Hypothesis, a: &Dataset, b: &Dataset) -> Result<MistakeSplit, NnError> {
    let (ids_a, wrong_a) = wrong_ids(member, a)?;
    let (ids_b, wrong_b) = wrong_ids(member, b)?;
    // A shared id is the same example in both sets, so its mistake status agrees.
    Ok(MistakeSplit {
        common: wrong_a.iter().filter(|id| ids_b.contains(id)).count(),
        a_only: wrong_a.iter().filter(|id| !ids_b.contains(id)).count(),
        b_only: wrong_b.iter().filter(|id| !ids_a.contains(id)).count(),
    })
}

/// DIB: round 0 trains a fresh network for `first_epochs`; every later round resamples, grows the previous round's
/// trained network per the growth policy, and trains it for `later_epochs`.
pub fn run_dib(base: &Dataset, valid: &Dataset, spec: &NetworkSpec, cfg: &DibConfig) -> Result<BoostOutcome, RunError> {
    run_dib_observed(base, valid, spec, cfg, &mut |_| {})
}

pub fn run_dib_observed(
    base: &Dataset,
    valid: &Dataset,
    spec: &NetworkSpec,
    cfg: &DibConfig,
    observer: &mut dyn FnMut(&RoundEvent<'_>),
) -> Result<BoostOutcome, RunError> {
    cfg.validate().map_err(RunError::before_start)?;
    cfg.train.validate().map_err(RunError::before_start)?;
    validate_policy(spec, &cfg.growth, cfg.rounds).map_err(RunError::before_start)?;
    let schedule = Schedule {
        rounds: cfg.rounds,
        seed: cfg.seed,
        train: &cfg.train,
        first_epochs: cfg.first_epochs,
        later_epochs: cfg.later_epochs,
    };
    run_rounds(
        base,
        valid,
        schedule,
        |round, previous, seed| match previous {
            None => Ok(Network::build(spec.clone(), seed)?),
            Some(prev) => Ok(grow(prev, &cfg.growth, round, seed)?),
        },
        observer,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, Tensor};

    struct Constant {
        class: usize,
        classes: usize,
    }

    impl Hypothesis for Constant {
        fn classes(&self) -> usize {
            self.classes
        }

        fn class_scores(&self, data: &Dataset) -> Result<Vec<f64>, NnError> {
            let mut out = vec![0.0; data.len() * self.classes];
            for row in out.chunks_mut(self.classes) {
                row[self.class] = 1.0;
            }
            Ok(out)
        }
    }

    fn labelled(labels: Vec<usize>, ids: Vec<usize>, classes: usize) -> Dataset {
        let n = labels.len();
        let x = Tensor::new(vec![n, 1], (0..n).map(|i| i as f32).collect()).unwrap();
        Dataset::with_ids(x, labels, ids, classes).unwrap()
    }

    #[test]
    fn jaccard_cases() {
        assert_eq!(jaccard_ids(&[1, 2, 3], &[3, 2, 1, 1]), 1.0);
        assert_eq!(jaccard_ids(&[1, 2], &[3, 4]), 0.0);
        assert_eq!(jaccard_ids(&[1, 2, 3], &[2, 3, 4]), 0.5);
        let p = overlap_between(0, &[1, 2, 3], &[2, 3, 4]);
        assert_eq!((p.intersection, p.union, p.symmetric_difference), (2, 4, 2));
    }

    #[test]
    fn constant_member_on_balanced_data() {
        let d = labelled((0..12).map(|i| i % 3).collect(), (0..12).collect(), 3);
        let h = Constant { class: 1, classes: 3 };
        assert_eq!(mistake_count(&h, &d).unwrap(), 12 * 2 / 3);
    }

    #[test]
    fn decomposition_edges() {
        let h = Constant { class: 0, classes: 2 };
        let a = labelled(vec![0, 1, 1], vec![0, 1, 2], 2);
        let same = overlap_decomposition(&h, &a, &a).unwrap();
        assert_eq!(same, MistakeSplit { common: 2, a_only: 0, b_only: 0 });
        let b = labelled(vec![1, 0], vec![7, 8], 2);
        let disjoint = overlap_decomposition(&h, &a, &b).unwrap();
        assert_eq!(disjoint, MistakeSplit { common: 0, a_only: 2, b_only: 1 });
    }

    #[test]
    fn config_checks() {
        let growth = GrowthPolicy::new(LayerSpec::Relu, 0);
        let cfg =
            DibConfig { rounds: 10, first_epochs: 20, later_epochs: 5, growth, train: TrainConfig::default(), seed: 0 };
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.total_epochs(), 65);
        assert!(DibConfig { later_epochs: 21, ..cfg.clone() }.validate().is_err());
        assert!(DibConfig { rounds: 0, ..cfg.clone() }.validate().is_err());
        assert!(DibConfig { later_epochs: 0, ..cfg }.validate().is_err());
    }
}
