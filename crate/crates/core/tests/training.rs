use dib_core::data::{make_synthetic, split, Dataset, Fractions, Synthetic};
use dib_core::nn::{error_rate, train, LayerSpec, Network, NetworkSpec, TrainConfig};

fn moons(noise: f64) -> (Dataset, Dataset) {
    let base = make_synthetic(Synthetic::TwoMoons, 1000, 2, noise, 7).unwrap();
    let (train, valid, _) = split(&base, Fractions::new(0.7, 0.2, 0.1).unwrap(), 7).unwrap();
    (train, valid)
}

fn spec(hidden: &[usize], classes: usize) -> NetworkSpec {
    let mut layers: Vec<LayerSpec> = hidden.iter().map(|&h| LayerSpec::dense_relu(h)).collect();
    layers.push(LayerSpec::dense(classes));
    layers.push(LayerSpec::Softmax);
    NetworkSpec::new(vec![2], layers).unwrap()
}

fn fit(spec: NetworkSpec, train_set: &Dataset, valid: &Dataset, epochs: usize) -> (Network, Vec<f64>, Vec<f64>) {
    let net: Network = Network::build(spec, 1).unwrap();
    let cfg = TrainConfig { epochs, batch_size: 32, learning_rate: 0.01, seed: 3, ..Default::default() };
    let (best, report) = train(&net, train_set, valid, &cfg).unwrap();
    (best, report.train_losses, report.valid_errors)
}

#[test]
fn loss_falls_on_separable_blobs() {
    let data = make_synthetic(Synthetic::GaussianBlobs, 300, 3, 0.5, 2).unwrap();
    let (_, losses, errors) = fit(spec(&[16], 3), &data, &data, 50);
    assert!(losses[49] < 0.25 * losses[0], "{} -> {}", losses[0], losses[49]);
    assert!(errors.iter().cloned().fold(f64::INFINITY, f64::min) < 0.01);
}

#[test]
fn hidden_layers_separate_noiseless_moons() {
    let (train_set, valid) = moons(0.0);
    let (linear, _, _) = fit(spec(&[], 2), &train_set, &valid, 50);
    let (deep, _, _) = fit(spec(&[32, 32], 2), &train_set, &valid, 50);
    let linear_err = error_rate(&linear, &valid).unwrap();
    let deep_err = error_rate(&deep, &valid).unwrap();
    assert!(linear_err > 0.05, "a linear boundary reached {linear_err}");
    assert!(deep_err < 0.02, "two hidden layers reached {deep_err}");
}

#[test]
fn returned_snapshot_is_the_earliest_best_epoch() {
    let (train_set, valid) = moons(0.3);
    let net: Network = Network::build(spec(&[8], 2), 4).unwrap();
    let cfg = TrainConfig { epochs: 15, batch_size: 32, learning_rate: 0.02, seed: 5, ..Default::default() };
    let (best, report) = train(&net, &train_set, &valid, &cfg).unwrap();
    let min = report.valid_errors.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(report.valid_errors.iter().position(|&e| e == min), Some(report.best_epoch));
    assert_eq!(error_rate(&best, &valid).unwrap(), min);

    // an epoch-count prefix replays the same trajectory
    let short = TrainConfig { epochs: report.best_epoch + 1, ..cfg };
    let (again, _) = train(&net, &train_set, &valid, &short).unwrap();
    assert_eq!(again, best);
}

#[test]
fn training_is_reproducible_and_seed_sensitive() {
    let (train_set, valid) = moons(0.2);
    let net: Network = Network::build(spec(&[8], 2), 0).unwrap();
    let cfg = TrainConfig { epochs: 5, batch_size: 16, seed: 11, ..Default::default() };
    let (a, ra) = train(&net, &train_set, &valid, &cfg).unwrap();
    let (b, rb) = train(&net, &train_set, &valid, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.train_losses, rb.train_losses);
    let (c, _) = train(&net, &train_set, &valid, &TrainConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn mismatched_data_is_rejected() {
    let (train_set, valid) = moons(0.1);
    let net: Network = Network::build(spec(&[4], 3), 0).unwrap();
    assert!(train(&net, &train_set, &valid, &TrainConfig::default()).is_err());
    let net: Network = Network::build(spec(&[4], 2), 0).unwrap();
    assert!(train(&net, &train_set, &valid, &TrainConfig { epochs: 0, ..Default::default() }).is_err());
}
