use dib_core::boosting::{
    beta, clamp_pseudo_loss, pseudo_loss_from_scores, resample_indices, update_from_scores, weighted_vote,
    WeightDistribution,
};
use dib_core::nn::{LayerSpec, Mode, Network, NetworkSpec, Tensor};
use proptest::prelude::*;

/// `n` rows of `k` non-negative scores summing to one, plus labels.
fn scored_examples() -> impl Strategy<Value = (usize, Vec<f64>, Vec<usize>, Vec<f64>)> {
    (2usize..6, 1usize..40).prop_flat_map(|(k, n)| {
        (
            Just(k),
            prop::collection::vec(0.0f64..1.0, n * k),
            prop::collection::vec(0..k, n),
            prop::collection::vec(0.01f64..1.0, n),
        )
    })
}

fn normalize_rows(raw: &[f64], k: usize) -> Vec<f64> {
    raw.chunks(k)
        .flat_map(|row| {
            let s: f64 = row.iter().sum::<f64>() + 1e-9;
            row.iter().map(move |v| (v + 1e-9 / k as f64) / s).collect::<Vec<_>>()
        })
        .collect()
}

proptest! {
    #[test]
    fn reweighting_stays_a_distribution((k, raw, labels, w) in scored_examples(), eps in 0.0f64..1.0) {
        let probs = normalize_rows(&raw, k);
        let d = WeightDistribution::from_weights(w).unwrap();
        prop_assert!((d.total() - 1.0).abs() < 1e-9);
        let loss = pseudo_loss_from_scores(&probs, &labels, k, &d).unwrap();
        prop_assert!((0.0..=1.0).contains(&loss));
        let b = beta(clamp_pseudo_loss(eps));
        let next = update_from_scores(&d, &probs, &labels, k, b).unwrap();
        prop_assert!((next.total() - 1.0).abs() < 1e-9);
        prop_assert!(next.weights().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn misclassified_examples_gain_relative_weight((k, raw, labels, w) in scored_examples()) {
        let probs = normalize_rows(&raw, k);
        let d = WeightDistribution::from_weights(w).unwrap();
        let next = update_from_scores(&d, &probs, &labels, k, 0.3).unwrap();
        let ratio = |i: usize| next.weights()[i] / d.weights()[i];
        let margin = |i: usize| {
            let row = &probs[i * k..(i + 1) * k];
            row[labels[i]] - (0..k).filter(|&y| y != labels[i]).map(|y| row[y]).fold(f64::MIN, f64::max)
        };
        for i in 0..labels.len() {
            for j in 0..labels.len() {
                if margin(i) < margin(j) - 1e-12 {
                    prop_assert!(ratio(i) > ratio(j));
                }
            }
        }
    }

    #[test]
    fn vote_ignores_a_common_positive_weight_scale(
        (k, raw, _, _) in scored_examples(),
        members in 1usize..5,
        weights in prop::collection::vec(0.0f64..5.0, 5),
        power in -20i32..20,
    ) {
        // powers of two scale every partial sum exactly
        let n = raw.len() / k;
        let scores: Vec<Vec<f64>> = (0..members).map(|t| raw.iter().map(|v| (v + t as f64 * 0.37) % 1.0).collect()).collect();
        let w = &weights[..members];
        let scaled: Vec<f64> = w.iter().map(|v| v * 2f64.powi(power)).collect();
        let votes = weighted_vote(&scores, w, k);
        prop_assert_eq!(votes.len(), n);
        prop_assert_eq!(votes, weighted_vote(&scores, &scaled, k));
    }

    #[test]
    fn resample_has_full_cardinality(w in prop::collection::vec(0.0f64..1.0, 1..200), seed in any::<u64>()) {
        prop_assume!(w.iter().any(|&v| v > 0.0));
        let d = WeightDistribution::from_weights(w.clone()).unwrap();
        let idx = resample_indices(&d, seed).unwrap();
        prop_assert_eq!(idx.len(), w.len());
        prop_assert!(idx.iter().all(|&i| w[i] > 0.0));
        prop_assert_eq!(idx, resample_indices(&d, seed).unwrap());
    }

    #[test]
    fn point_mass_resamples_one_example(m in 1usize..100, pick in 0usize..100, seed in any::<u64>()) {
        let i = pick % m;
        let idx = resample_indices(&WeightDistribution::point_mass(m, i).unwrap(), seed).unwrap();
        prop_assert!(idx.iter().all(|&j| j == i));
    }

    #[test]
    fn softmax_rows_sum_to_one(seed in any::<u64>(), inputs in prop::collection::vec(-10.0f32..10.0, 12)) {
        let spec = NetworkSpec::new(vec![4], vec![LayerSpec::dense_relu(6), LayerSpec::dense(5), LayerSpec::Softmax]).unwrap();
        let net: Network = Network::build(spec, seed).unwrap();
        let out = net.forward(&Tensor::new(vec![3, 4], inputs).unwrap(), Mode::Eval).unwrap();
        for r in 0..3 {
            let row = out.row(r);
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().map(|&p| p as f64).sum::<f64>() - 1.0).abs() < 1e-5);
        }
    }
}

#[test]
fn distributions_reject_bad_weights() {
    assert!(WeightDistribution::from_weights(vec![]).is_err());
    assert!(WeightDistribution::from_weights(vec![0.0, 0.0]).is_err());
    assert!(WeightDistribution::from_weights(vec![1.0, -0.5]).is_err());
    assert!(WeightDistribution::from_weights(vec![1.0, f64::NAN]).is_err());
}
