mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wassopt::{DiscreteMeasure, GaussianMeasure, Measure};

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pushforward_keeps_weights(seed in any::<u64>(), n in 1usize..12, d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = weighted_measure(n, d, &mut rng);
        let a = DMatrix::from_fn(d, d, |i, j| (i + 2 * j) as f64 - 1.5);
        let pushed = mu.pushforward_affine(&a, &normal_vec(d, &mut rng)).unwrap();
        prop_assert_eq!(pushed.weights(), mu.weights());
        let total: f64 = pushed.weights().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn pushforward_moves_the_mean_affinely(seed in any::<u64>(), n in 1usize..12, d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = weighted_measure(n, d, &mut rng);
        let a = DMatrix::from_fn(d, d, |_, _| rand::Rng::random_range(&mut rng, -2.0..2.0));
        let b = normal_vec(d, &mut rng);
        let pushed = mu.pushforward_affine(&a, &b).unwrap();
        let expected = &a * mu.moments().mean + &b;
        prop_assert!((pushed.moments().mean - expected).amax() <= 1e-12 * (1.0 + a.amax() * mu.moments().mean.amax()) + 1e-12);
    }

    #[test]
    fn json_round_trip_is_bit_exact(coords in prop::collection::vec(finite(), 1..24), split in 1usize..4) {
        let d = split.min(coords.len());
        let n = coords.len() / d;
        let atoms: Vec<DVector<f64>> = (0..n).map(|i| DVector::from_column_slice(&coords[i * d..(i + 1) * d])).collect();
        let mu = DiscreteMeasure::uniform(atoms).unwrap();
        let json = serde_json::to_string(&mu).unwrap();
        let back: DiscreteMeasure = serde_json::from_str(&json).unwrap();
        for (x, y) in mu.atoms().iter().zip(back.atoms()) {
            for (a, b) in x.iter().zip(y.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        for (a, b) in mu.weights().iter().zip(back.weights()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn gaussian_json_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = random_gaussian(3, &mut rng);
    let json = serde_json::to_string(&Measure::Gaussian(g.clone())).unwrap();
    match serde_json::from_str::<Measure>(&json).unwrap() {
        Measure::Gaussian(back) => assert_eq!(back, g),
        other => panic!("wrong representation {other:?}"),
    }
    let back: GaussianMeasure = serde_json::from_str(&json).unwrap();
    assert_eq!(back, g);
}
