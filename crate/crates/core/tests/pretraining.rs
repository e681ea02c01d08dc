use std::collections::HashSet;
use std::sync::Arc;

use proptest::prelude::*;
use rambo_core::acquisition::run_acquisition;
use rambo_core::classifier::TrainConfig;
use rambo_core::config::RamboConfig;
use rambo_core::datasets::{gen_gaussian_blobs, make_split, ActivePool};
use rambo_core::pretraining::{
    build_rank_pairs, interpolate_utility, run_pretraining, sample_pair, SampleStore,
};
use rambo_core::rng::seeded;
use rambo_core::utility_model::{Provenance, UtilitySample};

proptest! {
    #[test]
    fn sampled_pairs_are_equal_sized_duplicate_free_subsets(
        size in 2usize..40,
        min_len in 0usize..50,
        seed in any::<u64>(),
    ) {
        let set: Vec<usize> = (0..size).map(|i| 7 * i + 3).collect();
        let (a, b) = sample_pair(&set, min_len, &mut seeded(seed)).unwrap();
        prop_assert_eq!(a.len(), b.len());
        prop_assert!(a.len() >= min_len.max(2).min(size) && a.len() <= size);
        for s in [&a, &b] {
            let unique: HashSet<&usize> = s.iter().collect();
            prop_assert_eq!(unique.len(), s.len());
            prop_assert!(s.iter().all(|i| set.contains(i)));
        }
    }

    #[test]
    fn interpolation_stays_between_neighbours(
        d_prev in 0.0f64..10.0,
        d_next in 0.0f64..10.0,
        acc_prev in 0.0f64..=1.0,
        acc_next in 0.0f64..=1.0,
    ) {
        let (alpha, u) = interpolate_utility(d_prev, d_next, acc_prev, acc_next);
        prop_assert!((0.0..=1.0).contains(&alpha));
        prop_assert!(u >= acc_prev.min(acc_next) && u <= acc_prev.max(acc_next));
    }

    #[test]
    fn rank_pairs_always_match_lengths(
        lens in prop::collection::vec(1usize..6, 2..30),
        utils in prop::collection::vec(0.0f64..=1.0, 30),
        seed in any::<u64>(),
    ) {
        let mut store = SampleStore::new();
        for (i, (&len, &u)) in lens.iter().zip(&utils).enumerate() {
            let s = UtilitySample::new((i..i + len).collect(), u, 0.0, Provenance::GroundTruth).unwrap();
            store.push(s, 0).unwrap();
        }
        if let Ok(pairs) = build_rank_pairs(&store, 50, &mut seeded(seed)) {
            for p in &pairs {
                prop_assert_eq!(p.first.len(), p.second.len());
                let expected = if p.first.utility > p.second.utility {
                    1.0
                } else if p.first.utility < p.second.utility {
                    0.0
                } else {
                    0.5
                };
                prop_assert_eq!(p.target, expected);
            }
        } else {
            let unique: HashSet<&usize> = lens.iter().collect();
            prop_assert_eq!(unique.len(), lens.len());
        }
    }

    #[test]
    fn short_partition_never_outgrows_long_partition(lens in prop::collection::vec(1usize..20, 1..40)) {
        let mut store = SampleStore::new();
        for (i, &len) in lens.iter().enumerate() {
            store.push(UtilitySample::new((i..i + len).collect(), 0.5, 0.0, Provenance::GroundTruth).unwrap(), 0).unwrap();
        }
        let (short, long) = store.partition();
        prop_assert_eq!(short.len() + long.len(), lens.len());
        let max_short = short.iter().map(|&i| lens[i]).max().unwrap_or(0);
        let min_long = long.iter().map(|&i| lens[i]).min().unwrap_or(usize::MAX);
        prop_assert!(max_short <= min_long);
    }
}

#[test]
fn sampled_sizes_cover_the_admissible_range() {
    let set: Vec<usize> = (0..30).collect();
    let mut rng = seeded(4);
    let mut seen = HashSet::new();
    for _ in 0..10_000 {
        seen.insert(sample_pair(&set, 5, &mut rng).unwrap().0.len());
    }
    assert_eq!(seen, (5..=30).collect());
}

#[test]
fn two_element_set_yields_the_whole_set_twice() {
    let (a, b) = sample_pair(&[4, 9], 10, &mut seeded(0)).unwrap();
    let whole: HashSet<usize> = [4, 9].into();
    assert_eq!(a.iter().copied().collect::<HashSet<_>>(), whole);
    assert_eq!(b.iter().copied().collect::<HashSet<_>>(), whole);
}

fn tiny_config() -> RamboConfig {
    RamboConfig {
        k: 30,
        k1: 10,
        b: 10,
        budget: 20,
        n: 6,
        inner_epochs: 3,
        classifier: TrainConfig {
            max_epochs: 15,
            ..TrainConfig::default()
        },
        ..RamboConfig::default()
    }
}

#[test]
fn pretraining_and_acquisition_are_deterministic_and_spend_the_budget() {
    let data = Arc::new(gen_gaussian_blobs(3, 60, 3, 1.5, 1).unwrap());
    let cfg = tiny_config();
    let run = |seed: u64| {
        let split = make_split(&data, cfg.k, 40, 20, seed).unwrap();
        let mut pool = ActivePool::new(data.clone(), split.clone()).unwrap();
        let pre = run_pretraining(&pool, &split, &cfg, seed).unwrap();
        let out = run_acquisition(&pre.encoder, &mut pool, &cfg, seed).unwrap();
        (
            pre.encoder.params().clone(),
            pre.store,
            out.labeled,
            pool.queries(),
            split,
        )
    };
    for seed in [0, 1] {
        let a = run(seed);
        let b = run(seed);
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
        let (labeled, queries, split) = (&a.2, a.3, &a.4);
        assert_eq!(labeled.len(), cfg.k + cfg.budget);
        assert_eq!(queries, cfg.budget);
        let unique: HashSet<&usize> = labeled.iter().collect();
        assert_eq!(unique.len(), labeled.len());
        assert!(split.pretrain.iter().all(|i| labeled.contains(i)));
        assert!(labeled
            .iter()
            .all(|i| !split.val.contains(i) && !split.test.contains(i)));
    }
}
