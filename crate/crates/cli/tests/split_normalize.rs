//! Split laws and normalization round trips.

use std::collections::BTreeSet;

use ndarray::Array2;
use proptest::prelude::*;
use wisp_cli::dataset::normalize::{to_db, Moments};
use wisp_cli::dataset::split::{stratified_split, train_count};
use wisp_core::em::PowerUnit;
use wisp_core::scene::ShapeKind;

fn labelled(counts: &[usize]) -> Vec<(u64, ShapeKind)> {
    let mut out = Vec::new();
    let mut id = 0;
    for (k, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            out.push((id, ShapeKind::ALL[k]));
            id += 1;
        }
    }
    out
}

proptest! {
    #[test]
    fn split_is_a_stratified_partition(
        counts in proptest::collection::vec(2usize..60, 4),
        ratio in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let samples = labelled(&counts);
        let s = stratified_split(&samples, ratio, seed).unwrap();
        let train: BTreeSet<u64> = s.train.iter().copied().collect();
        let eval: BTreeSet<u64> = s.eval.iter().copied().collect();
        prop_assert_eq!(train.len(), s.train.len());
        prop_assert!(train.is_disjoint(&eval));
        prop_assert_eq!(train.len() + eval.len(), samples.len());
        prop_assert!(s.train.windows(2).all(|w| w[0] < w[1]));
        for (k, &n) in counts.iter().enumerate() {
            let t = samples
                .iter()
                .filter(|(id, kind)| *kind == ShapeKind::ALL[k] && train.contains(id))
                .count();
            prop_assert_eq!(t, train_count(n, ratio));
            prop_assert!(t >= 1 && t < n);
        }
    }

    #[test]
    fn split_is_seeded_and_order_independent(
        counts in proptest::collection::vec(2usize..40, 4),
        seed in any::<u64>(),
    ) {
        let samples = labelled(&counts);
        let a = stratified_split(&samples, 0.8, seed).unwrap();
        let mut reversed = samples.clone();
        reversed.reverse();
        prop_assert_eq!(&a, &stratified_split(&reversed, 0.8, seed).unwrap());
        prop_assert_eq!(&a, &stratified_split(&samples, 0.8, seed).unwrap());
    }

    #[test]
    fn normalization_round_trips(
        values in proptest::collection::vec(-120.0f64..0.0, 2..200),
        probe in proptest::collection::vec(-150.0f64..30.0, 1..50),
    ) {
        prop_assume!(values.iter().any(|v| (v - values[0]).abs() > 1e-3));
        let n = Moments::of(values.iter().copied()).finish().unwrap();
        let x = Array2::from_shape_vec((1, probe.len()), probe).unwrap();
        let z = n.normalize(&x).unwrap();
        let back = n.denormalize(&z).unwrap();
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn normalized_training_data_is_standard(values in proptest::collection::vec(-120.0f64..0.0, 2..200)) {
        prop_assume!(values.iter().any(|v| (v - values[0]).abs() > 1e-2));
        let n = Moments::of(values.iter().copied()).finish().unwrap();
        let x = Array2::from_shape_vec((1, values.len()), values.clone()).unwrap();
        let z = n.normalize(&x).unwrap();
        let mean = z.mean().unwrap();
        let var = z.mapv(|v| (v - mean).powi(2)).mean().unwrap();
        prop_assert!(mean.abs() <= 1e-6);
        prop_assert!((var - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn different_seeds_give_different_splits() {
    let samples = labelled(&[50, 50, 50, 50]);
    let a = stratified_split(&samples, 0.8, 1).unwrap();
    let b = stratified_split(&samples, 0.8, 2).unwrap();
    assert_ne!(a, b);
}

#[test]
fn linear_storage_is_converted_to_db() {
    let x = Array2::from_shape_vec((1, 3), vec![1.0f32, 0.1, 1e-4]).unwrap();
    let db = to_db(&x, PowerUnit::LinearPower);
    for (got, want) in db.iter().zip([0.0, -10.0, -40.0]) {
        assert!((got - want).abs() < 1e-5, "{got} vs {want}");
    }
}
