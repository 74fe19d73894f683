use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::network::Mode;
use super::{EngineRng, Network, NnError, Scalar, Tensor};
use crate::data::Dataset;

/// Minibatch Adam settings for one member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// The bias-corrected form's epsilon ("epsilon hat").
    pub epsilon: f64,
    pub seed: u64,
    /// Training is single-threaded with a fixed reduction order, so runs are
    /// always bit-reproducible; the flag is recorded for provenance.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            deterministic: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |msg: String| Err(NnError::Config(msg));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Validation misclassification rate after each epoch.
    pub valid_errors: Vec<f64>,
    /// Mean minibatch loss of each epoch.
    pub train_losses: Vec<f64>,
    pub best_epoch: usize,
    pub wall_time_secs: f64,
}

/// Index of the minimum, earliest on ties.
pub fn best_epoch(errors: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &e) in errors.iter().enumerate() {
        if best.is_none_or(|b| e < errors[b]) {
            best = Some(i);
        }
    }
    best
}

struct Adam<S> {
    m: Vec<Vec<Vec<S>>>,
    v: Vec<Vec<Vec<S>>>,
    step: i32,
}

impl<S: Scalar> Adam<S> {
    fn new(params: &[Vec<Tensor<S>>]) -> Self {
        let zeros: Vec<Vec<Vec<S>>> =
            params.iter().map(|p| p.iter().map(|t| vec![S::zero(); t.len()]).collect()).collect();
        Adam { m: zeros.clone(), v: zeros, step: 0 }
    }

    fn update(&mut self, params: &mut [Vec<Tensor<S>>], grads: &[Vec<Tensor<S>>], cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let rate = cfg.learning_rate * (1.0 - b2.powi(self.step)).sqrt() / (1.0 - b1.powi(self.step));
        let (rate, b1s, b2s, eps) = (S::of(rate), S::of(b1), S::of(b2), S::of(cfg.epsilon));
        let (one_b1, one_b2) = (S::one() - b1s, S::one() - b2s);
        for (j, layer) in params.iter_mut().enumerate() {
            for (t, tensor) in layer.iter_mut().enumerate() {
                let m = &mut self.m[j][t];
                let v = &mut self.v[j][t];
                let g = grads[j][t].data();
                for (((w, m), v), &g) in tensor.data_mut().iter_mut().zip(m).zip(v).zip(g) {
                    *m = b1s * *m + one_b1 * g;
                    *v = b2s * *v + one_b2 * g * g;
                    *w = *w - rate * *m / (v.sqrt() + eps);
                }
            }
        }
    }
}

const EVAL_BATCH: usize = 256;

/// Generator stream used for shuffling and dropout, distinct from the
/// initialization stream of the same seed.
const TRAIN_STREAM: u64 = 2;

/// Class probabilities for every example (row-major `n x classes`).
pub fn class_probabilities<S: Scalar>(net: &Network<S>, data: &Dataset) -> Result<Vec<f64>, NnError> {
    let mut out = Vec::with_capacity(data.len() * net.classes());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let p = net.forward(&data.batch::<S>(chunk), Mode::Eval)?;
        out.extend(p.data().iter().map(|v| v.as_f64()));
    }
    Ok(out)
}

/// Argmax of each row, lowest index on ties.
pub fn argmax_rows(values: &[f64], classes: usize) -> Vec<usize> {
    values
        .chunks_exact(classes)
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

pub fn predict_labels<S: Scalar>(net: &Network<S>, data: &Dataset) -> Result<Vec<usize>, NnError> {
    Ok(argmax_rows(&class_probabilities(net, data)?, net.classes()))
}

/// Misclassification rate of `net` on `data`.
pub fn error_rate<S: Scalar>(net: &Network<S>, data: &Dataset) -> Result<f64, NnError> {
    if data.is_empty() {
        return Err(NnError::EmptyDataset("evaluation set"));
    }
    let predicted = predict_labels(net, data)?;
    let wrong = predicted.iter().zip(data.labels()).filter(|(p, l)| p != l).count();
    Ok(wrong as f64 / data.len() as f64)
}

fn check_compatible<S: Scalar>(net: &Network<S>, data: &Dataset, what: &'static str) -> Result<(), NnError> {
    if data.is_empty() {
        return Err(NnError::EmptyDataset(what));
    }
    if data.classes() != net.classes() {
        return Err(NnError::ClassCount { network: net.classes(), dataset: data.classes() });
    }
    if data.example_shape() != net.input_shape() {
        return Err(NnError::InputShape {
            expected: net.input_shape().to_vec(),
            actual: data.example_shape().to_vec(),
        });
    }
    Ok(())
}

/// Trains a copy of `net` with minibatch Adam and returns the parameter
/// snapshot from the epoch with the lowest validation error (earliest on
/// ties), together with the per-epoch report.
pub fn train<S: Scalar>(
    net: &Network<S>,
    train_set: &Dataset,
    valid_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Network<S>, TrainReport), NnError> {
    cfg.validate()?;
    check_compatible(net, train_set, "training set")?;
    check_compatible(net, valid_set, "validation set")?;
    let start = Instant::now();
    let mut rng = EngineRng::seed_from_u64(cfg.seed);
    rng.set_stream(TRAIN_STREAM);
    let mut current = net.clone();
    let mut adam = Adam::new(current.params());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(f64, Network<S>)> = None;
    let mut report = TrainReport {
        valid_errors: Vec::with_capacity(cfg.epochs),
        train_losses: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        wall_time_secs: 0.0,
    };
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train_set.batch::<S>(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| train_set.labels()[i]).collect();
            let grads = current.grad(&batch, &labels, Mode::Train(&mut rng))?;
            loss_sum += grads.loss * chunk.len() as f64;
            adam.update(current.params_mut(), &grads.layers, cfg);
        }
        if current.params().iter().flatten().any(|t| !t.is_finite()) {
            return Err(NnError::NonFinite("parameters after update"));
        }
        let err = error_rate(&current, valid_set)?;
        log::debug!("epoch {epoch}: loss {:.5} valid error {err:.4}", loss_sum / train_set.len() as f64);
        report.train_losses.push(loss_sum / train_set.len() as f64);
        report.valid_errors.push(err);
        if best.as_ref().is_none_or(|(b, _)| err < *b) {
            best = Some((err, current.clone()));
            report.best_epoch = epoch;
        }
    }
    report.wall_time_secs = start.elapsed().as_secs_f64();
    let (_, snapshot) = best.expect("at least one epoch");
    Ok((snapshot, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, Synthetic};
    use crate::nn::{LayerSpec, NetworkSpec};

    #[test]
    fn best_epoch_is_earliest_argmin() {
        assert_eq!(best_epoch(&[0.4, 0.2, 0.3]), Some(1));
        assert_eq!(best_epoch(&[0.3, 0.1, 0.1]), Some(1));
        assert_eq!(best_epoch(&[0.5]), Some(0));
        assert_eq!(best_epoch(&[]), None);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax_rows(&[0.5, 0.5, 0.2, 0.3, 0.3], 5), vec![0]);
        assert_eq!(argmax_rows(&[0.1, 0.9, 0.7, 0.3], 2), vec![1, 0]);
    }

    fn setup() -> (Network<f32>, Dataset, Dataset) {
        let data = make_synthetic(Synthetic::GaussianBlobs, 120, 3, 1.0, 3).unwrap();
        let valid = make_synthetic(Synthetic::GaussianBlobs, 60, 3, 1.0, 4).unwrap();
        let spec =
            NetworkSpec::new(vec![2], vec![LayerSpec::dense_relu(8), LayerSpec::dense(3), LayerSpec::Softmax]).unwrap();
        (Network::build(spec, 1).unwrap(), data, valid)
    }

    #[test]
    fn single_epoch_has_best_epoch_zero() {
        let (net, data, valid) = setup();
        let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
        let (_, report) = train(&net, &data, &valid, &cfg).unwrap();
        assert_eq!(report.best_epoch, 0);
        assert_eq!(report.valid_errors.len(), 1);
    }

    #[test]
    fn returned_snapshot_has_minimum_validation_error() {
        let (net, data, valid) = setup();
        let cfg = TrainConfig { epochs: 15, batch_size: 16, learning_rate: 0.05, ..TrainConfig::default() };
        let (best, report) = train(&net, &data, &valid, &cfg).unwrap();
        let min = report.valid_errors.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(error_rate(&best, &valid).unwrap(), min);
        assert_eq!(Some(report.best_epoch), best_epoch(&report.valid_errors));
    }

    #[test]
    fn deterministic_reports() {
        let (net, data, valid) = setup();
        let cfg = TrainConfig { epochs: 4, batch_size: 10, seed: 9, ..TrainConfig::default() };
        let (a, ra) = train(&net, &data, &valid, &cfg).unwrap();
        let (b, rb) = train(&net, &data, &valid, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.valid_errors, rb.valid_errors);
        assert_eq!(ra.train_losses, rb.train_losses);
        assert_eq!(ra.best_epoch, rb.best_epoch);
    }

    #[test]
    fn rejects_empty_and_mismatched_sets() {
        let (net, data, valid) = setup();
        let empty = data.subset(&[]);
        let cfg = TrainConfig::default();
        assert!(matches!(train(&net, &empty, &valid, &cfg), Err(NnError::EmptyDataset(_))));
        assert!(matches!(train(&net, &data, &empty, &cfg), Err(NnError::EmptyDataset(_))));
        let four = make_synthetic(Synthetic::GaussianBlobs, 40, 4, 1.0, 3).unwrap();
        assert!(matches!(train(&net, &four, &valid, &cfg), Err(NnError::ClassCount { .. })));
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
            TrainConfig { beta1: 1.0, ..TrainConfig::default() },
            TrainConfig { beta2: 0.0, ..TrainConfig::default() },
            TrainConfig { epochs: 0, ..TrainConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
