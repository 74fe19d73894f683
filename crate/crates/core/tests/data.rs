use std::collections::BTreeSet;
use std::path::PathBuf;

use dib_core::data::{load_idx, make_synthetic, split, write_idx, Dataset, Fractions, Synthetic};
use dib_core::nn::{EngineRng, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

/// `$DIB_MNIST_DIR`, else `data/mnist` at the workspace root.
fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("DIB_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    dir.join("train-images-idx3-ubyte").exists().then_some(dir)
}

fn check_round_trip(data: &Dataset, expected_classes: usize) {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
    write_idx(data, &img, &lab).unwrap();
    let back = load_idx(&img, &lab).unwrap();
    assert_eq!(back.labels(), data.labels());
    assert_eq!(back.classes(), expected_classes);
    assert_eq!(back.example_shape(), data.example_shape());
    let same_bits = back.examples().data().iter().zip(data.examples().data()).all(|(a, b)| a.to_bits() == b.to_bits());
    assert!(same_bits, "pixels changed in the round trip");

    let (img2, lab2) = (dir.path().join("img2"), dir.path().join("lab2"));
    write_idx(&back, &img2, &lab2).unwrap();
    assert_eq!(std::fs::read(&img).unwrap(), std::fs::read(&img2).unwrap());
    assert_eq!(std::fs::read(&lab).unwrap(), std::fs::read(&lab2).unwrap());
}

/// Partition, exact-size and per-class proportionality checks.
fn check_split(base: &Dataset, f: Fractions, seed: u64) {
    let (a, b, c) = split(base, f, seed).unwrap();
    let parts = [&a, &b, &c];
    let shares = [f.train, f.valid, f.test];
    let mut seen = BTreeSet::new();
    for part in parts {
        for &id in part.ids() {
            assert!(seen.insert(id), "id {id} appears twice");
        }
    }
    assert_eq!(seen, base.ids().iter().copied().collect::<BTreeSet<_>>());
    let n = base.len() as f64;
    for (part, share) in parts.iter().zip(shares) {
        assert!((part.len() as f64 - n * share).abs() < 1.0, "{} vs {}", part.len(), n * share);
        for (class, (&got, &total)) in part.class_counts().iter().zip(&base.class_counts()).enumerate() {
            let ideal = total as f64 * share;
            assert!((got as f64 - ideal).abs() <= 1.0, "class {class}: {got} vs {ideal}");
        }
        for (i, &id) in part.ids().iter().enumerate() {
            let source = base.ids().iter().position(|&x| x == id).unwrap();
            assert_eq!(part.labels()[i], base.labels()[source]);
            assert_eq!(part.example(i), base.example(source));
        }
    }
}

fn random_image_set(rng: &mut EngineRng) -> Dataset {
    let classes = rng.random_range(2..=12);
    let n = classes * rng.random_range(10..=30) + rng.random_range(0..classes);
    let (rows, cols) = (rng.random_range(1..=9), rng.random_range(1..=9));
    let pixels = (0..n * rows * cols).map(|_| rng.random_range(0..=255u8) as f32 / 255.0).collect();
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(rng);
    Dataset::new(Tensor::new(vec![n, 1, rows, cols], pixels).unwrap(), labels, classes).unwrap()
}

fn random_fractions(rng: &mut EngineRng) -> Fractions {
    let train = rng.random_range(0.4..0.7);
    let valid = rng.random_range(0.1..(0.9 - train));
    Fractions::new(train, valid, 1.0 - train - valid).unwrap()
}

#[test]
fn random_datasets_round_trip_and_split() {
    let mut rng = EngineRng::seed_from_u64(2024);
    for seed in 0..100 {
        let data = random_image_set(&mut rng);
        check_round_trip(&data, data.classes().max(10));
        let f = random_fractions(&mut rng);
        check_split(&data, f, seed);
        let points = make_synthetic(Synthetic::GaussianBlobs, rng.random_range(60..400), 3, 1.0, seed).unwrap();
        check_split(&points, random_fractions(&mut rng), seed);
    }
}

#[test]
fn split_is_a_function_of_its_seed() {
    let data = make_synthetic(Synthetic::TwoMoons, 300, 2, 0.1, 0).unwrap();
    let f = Fractions::new(0.6, 0.2, 0.2).unwrap();
    let (a, _, _) = split(&data, f, 5).unwrap();
    let (b, _, _) = split(&data, f, 5).unwrap();
    let (c, _, _) = split(&data, f, 6).unwrap();
    assert_eq!(a.ids(), b.ids());
    assert_ne!(a.ids(), c.ids());
}

#[test]
fn bad_inputs_are_rejected() {
    assert!(Fractions::new(0.5, 0.5, 0.0).is_err());
    assert!(Fractions::new(0.5, 0.3, 0.3).is_err());
    let data = make_synthetic(Synthetic::GaussianBlobs, 6, 3, 1.0, 0).unwrap();
    assert!(split(&data, Fractions::new(0.8, 0.1, 0.1).unwrap(), 0).is_err());
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    assert!(load_idx(&missing, &missing).is_err());
}

#[test]
fn mnist_files_load_and_split() {
    let Some(dir) = mnist_dir() else {
        eprintln!("MNIST files not found; set DIB_MNIST_DIR");
        return;
    };
    let train = load_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte")).unwrap();
    assert_eq!((train.len(), train.classes(), train.example_shape()), (60000, 10, &[1, 28, 28][..]));
    assert!(train.examples().data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    let test = load_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte")).unwrap();
    assert_eq!(test.len(), 10000);
    check_round_trip(&test, 10);

    let f = Fractions::new(2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0).unwrap();
    let (a, b, c) = split(&train, f, 0).unwrap();
    assert_eq!((a.len(), b.len(), c.len()), (40000, 10000, 10000));
    check_split(&train, f, 0);
}
