use proptest::prelude::*;
use rambo_core::rng::seeded;
use rambo_core::tensor::{AdamState, Tensor};
use rambo_core::utility_model::{
    rank_probability, train_epoch, EncoderConfig, EpochConfig, LossConfig, OtLossWeights,
    Provenance, RankPair, SetEncoder, UtilitySample,
};
use rand::seq::SliceRandom;
use rand::Rng as _;

fn features(seed: u64, rows: usize, dim: usize) -> Tensor {
    let mut rng = seeded(seed);
    Tensor::matrix(
        rows,
        dim,
        (0..rows * dim)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap()
}

fn ot_head_mse(enc: &SetEncoder, pairs: &[RankPair], x: &Tensor) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for p in pairs {
        for s in [&p.first, &p.second] {
            let out = enc.encode_set(&s.indices, x).unwrap().1;
            total += (out.ot_pred - s.ot_target).powi(2);
            n += 1;
        }
    }
    total / n as f64
}

#[test]
fn strong_ot_weight_fits_the_ot_head() {
    let x = features(1, 40, 4);
    let mut rng = seeded(2);
    let pairs: Vec<RankPair> = (0..32)
        .map(|_| {
            let len = rng.random_range(2..8);
            let mut draw = || {
                let mut idx: Vec<usize> = (0..40).collect();
                idx.shuffle(&mut rng);
                idx.truncate(len);
                // target grows with the first feature of the set mean
                let m = idx.iter().map(|&i| x.get(i, 0)).sum::<f64>() / len as f64;
                UtilitySample::new(idx, rng.random(), 1.0 + m, Provenance::GroundTruth).unwrap()
            };
            let (a, b) = (draw(), draw());
            RankPair::new(a, b).unwrap()
        })
        .collect();
    let mut enc = SetEncoder::new(4, &EncoderConfig::default(), 3);
    let before = ot_head_mse(&enc, &pairs, &x);
    let cfg = EpochConfig {
        batch_size: 8,
        loss: LossConfig {
            lambda_ot: 100.0,
            ot_weights: OtLossWeights::default(),
            weight_decay: 0.0,
        },
    };
    let mut adam = AdamState::new(enc.params(), 1e-3);
    let mut shuffle = seeded(4);
    for _ in 0..20 {
        train_epoch(&mut enc, &pairs, &x, &mut adam, &cfg, &mut shuffle).unwrap();
    }
    let after = ot_head_mse(&enc, &pairs, &x);
    assert!(after < before, "OT head MSE {before} -> {after}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encoding_ignores_member_order(seed in any::<u64>(), len in 1usize..12) {
        let x = features(seed, 20, 3);
        let enc = SetEncoder::new(3, &EncoderConfig::default(), seed ^ 1);
        let mut idx: Vec<usize> = (0..20).collect();
        idx.shuffle(&mut seeded(seed));
        idx.truncate(len);
        let (e1, o1) = enc.encode_set(&idx, &x).unwrap();
        idx.reverse();
        idx.shuffle(&mut seeded(seed.wrapping_add(1)));
        let (e2, o2) = enc.encode_set(&idx, &x).unwrap();
        for (a, b) in e1.iter().zip(&e2) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!((o1.score - o2.score).abs() <= 1e-12);
        prop_assert!((o1.ot_pred - o2.ot_pred).abs() <= 1e-12);
    }

    #[test]
    fn rank_probability_ignores_common_shift(s1 in -20.0f64..20.0, s2 in -20.0f64..20.0, c in -5.0f64..5.0) {
        // shifted scores only differ by rounding of the subtraction
        let d = (s1 + c) - (s2 + c);
        prop_assert_eq!(rank_probability(s1 + c, s2 + c), rank_probability(d, 0.0));
        prop_assert!((rank_probability(s1 + c, s2 + c) - rank_probability(s1, s2)).abs() < 1e-12);
    }

    #[test]
    fn best_score_wins_every_pairwise_comparison(scores in prop::collection::vec(-5.0f64..5.0, 2..10)) {
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for &s in &scores {
            prop_assert!(rank_probability(best, s) >= 0.5);
        }
    }
}
