use std::path::PathBuf;

use rambo_core::classifier::{train, utility, TrainConfig};
use rambo_core::datasets::{gen_gaussian_blobs, gen_two_moons, make_split, Dataset};
use rambo_core::rng::seeded;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
struct Reference {
    description: String,
    seeds: Vec<u64>,
    val_accuracy: Vec<f64>,
}

fn reference_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/moons_reference.json")
}

fn moons_accuracy(seed: u64) -> f64 {
    let data = gen_two_moons(1200, 0.1, 0).unwrap();
    let split = make_split(&data, 200, 500, 500, seed).unwrap();
    utility(
        &split.pretrain,
        &data,
        &split,
        seed,
        &TrainConfig::default(),
    )
    .unwrap()
}

/// Set `RAMBO_WRITE_REFERENCE=1` to re-record the band after an intended
/// change to training.
#[test]
fn two_moons_accuracy_stays_in_the_recorded_band() {
    let seeds: Vec<u64> = (0..10).collect();
    let acc: Vec<f64> = seeds.iter().map(|&s| moons_accuracy(s)).collect();
    if std::env::var_os("RAMBO_WRITE_REFERENCE").is_some() {
        let r = Reference {
            description:
                "two moons, 1200 points, noise 0.1; 200 labels, 500 validation; default classifier"
                    .into(),
            seeds,
            val_accuracy: acc,
        };
        std::fs::write(
            reference_path(),
            serde_json::to_string_pretty(&r).unwrap() + "\n",
        )
        .unwrap();
        return;
    }
    let r: Reference =
        serde_json::from_str(&std::fs::read_to_string(reference_path()).unwrap()).unwrap();
    assert_eq!(r.seeds, seeds);
    let lo = r.val_accuracy.iter().copied().fold(f64::INFINITY, f64::min) - 0.02;
    let hi = r
        .val_accuracy
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        + 0.02;
    for (s, a) in seeds.iter().zip(&acc) {
        assert!((lo..=hi).contains(a), "seed {s}: {a} outside [{lo}, {hi}]");
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean(&acc) - mean(&r.val_accuracy)).abs() < 0.01);
}

fn shuffled_labels(data: &Dataset, seed: u64) -> Dataset {
    let mut labels = data.labels().to_vec();
    labels.shuffle(&mut seeded(seed));
    data.with_labels(labels).unwrap()
}

#[test]
fn shuffled_labels_fall_to_chance() {
    let data = gen_gaussian_blobs(4, 300, 5, 1.0, 21).unwrap();
    let cfg = TrainConfig {
        max_epochs: 30,
        ..TrainConfig::default()
    };
    let mut total = 0.0;
    for seed in 0..10 {
        let noisy = shuffled_labels(&data, seed);
        let split = make_split(&noisy, 300, 400, 100, seed).unwrap();
        total += utility(&split.pretrain, &noisy, &split, seed, &cfg).unwrap();
    }
    let mean = total / 10.0;
    assert!((mean - 0.25).abs() <= 0.05, "mean accuracy {mean}");
}

#[test]
fn more_labels_help_on_average() {
    let data = gen_gaussian_blobs(5, 200, 6, 2.5, 4).unwrap();
    let cfg = TrainConfig {
        max_epochs: 50,
        ..TrainConfig::default()
    };
    let (mut small, mut large) = (0.0, 0.0);
    for seed in 0..10 {
        let split = make_split(&data, 15, 300, 100, seed).unwrap();
        let mut bigger = split.pretrain.clone();
        bigger.extend_from_slice(&split.unlabeled[..60]);
        small += utility(&split.pretrain, &data, &split, seed, &cfg).unwrap();
        large += utility(&bigger, &data, &split, seed, &cfg).unwrap();
    }
    assert!(large >= small, "{large} < {small}");
}

#[test]
fn utility_is_a_probability_and_reproducible() {
    let data = gen_gaussian_blobs(3, 50, 2, 1.5, 8).unwrap();
    let split = make_split(&data, 30, 50, 20, 2).unwrap();
    let cfg = TrainConfig {
        max_epochs: 20,
        ..TrainConfig::default()
    };
    let u = utility(&split.pretrain, &data, &split, 9, &cfg).unwrap();
    assert!((0.0..=1.0).contains(&u));
    assert_eq!(u, utility(&split.pretrain, &data, &split, 9, &cfg).unwrap());
    let (a, _) = train(&split.pretrain, &data, 5, &cfg).unwrap();
    let (b, _) = train(&split.pretrain, &data, 5, &cfg).unwrap();
    assert_eq!(a.params(), b.params());
}
