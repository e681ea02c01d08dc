use std::collections::HashSet;

use proptest::prelude::*;
use rambo_core::datasets::{
    encode_idx_images, encode_idx_labels, feature_map, gen_gaussian_blobs, gen_two_moons, load_idx,
    make_split, parse_idx_images, parse_idx_labels, write_idx, DataError, FeatureMap, IdxImages,
    IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};

fn image_pair(count: usize, seed: u8) -> (Vec<u8>, Vec<u8>) {
    let pixels = (0..count * 28 * 28)
        .map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed))
        .collect();
    let images = IdxImages {
        count,
        rows: 28,
        cols: 28,
        pixels,
    };
    let labels: Vec<u8> = (0..count).map(|i| (i % 10) as u8).collect();
    (encode_idx_images(&images), encode_idx_labels(&labels))
}

#[test]
fn idx_files_round_trip_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = image_pair(5, 3);
    let (ip, lp) = (dir.path().join("img.idx"), dir.path().join("lab.idx"));
    std::fs::write(&ip, &img).unwrap();
    std::fs::write(&lp, &lab).unwrap();

    let data = load_idx(&ip, &lp).unwrap();
    assert_eq!((data.len(), data.dim()), (5, 784));
    assert!(data
        .features()
        .data()
        .iter()
        .all(|v| (0.0..=1.0).contains(v)));
    // first pixel of the second image
    assert_eq!(data.features().get(1, 0), img[16 + 784] as f64 / 255.0);

    let (ip2, lp2) = (dir.path().join("img2.idx"), dir.path().join("lab2.idx"));
    write_idx(&data, 28, 28, &ip2, &lp2).unwrap();
    assert_eq!(std::fs::read(ip2).unwrap(), img);
    assert_eq!(std::fs::read(lp2).unwrap(), lab);
}

#[test]
fn image_and_label_counts_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _) = image_pair(3, 0);
    let (_, lab) = image_pair(4, 0);
    let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
    std::fs::write(&ip, img).unwrap();
    std::fs::write(&lp, lab).unwrap();
    assert!(matches!(
        load_idx(&ip, &lp),
        Err(DataError::CountMismatch {
            images: 3,
            labels: 4
        })
    ));
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_idx(dir.path().join("nope"), dir.path().join("nope2")).unwrap_err();
    assert!(matches!(err, DataError::Io { .. }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn any_corrupted_magic_is_rejected(byte in 0usize..4, flip in 1u8..=255) {
        let (mut img, mut lab) = image_pair(2, 1);
        img[byte] ^= flip;
        lab[byte] ^= flip;
        let bad_img = matches!(parse_idx_images(&img), Err(DataError::BadMagic { expected, .. }) if expected == IDX_IMAGES_MAGIC);
        let bad_lab = matches!(parse_idx_labels(&lab), Err(DataError::BadMagic { expected, .. }) if expected == IDX_LABELS_MAGIC);
        prop_assert!(bad_img);
        prop_assert!(bad_lab);
    }

    #[test]
    fn any_truncation_is_rejected(cut in 1usize..200) {
        let (img, lab) = image_pair(2, 1);
        prop_assert!(parse_idx_images(&img[..img.len() - cut]).is_err());
        let keep = lab.len().saturating_sub(cut.min(lab.len()));
        prop_assert!(parse_idx_labels(&lab[..keep]).is_err());
    }

    #[test]
    fn splits_are_disjoint_and_complete(seed in any::<u64>(), k in 0usize..40, val in 0usize..40, test in 0usize..40) {
        let data = gen_gaussian_blobs(3, 40, 2, 1.0, 5).unwrap();
        let s = make_split(&data, k, val, test, seed).unwrap();
        prop_assert_eq!((s.pretrain.len(), s.val.len(), s.test.len()), (k, val, test));
        let mut all: Vec<usize> = [&s.pretrain, &s.unlabeled, &s.val, &s.test].into_iter().flatten().copied().collect();
        let unique: HashSet<usize> = all.iter().copied().collect();
        prop_assert_eq!(unique.len(), all.len());
        all.sort_unstable();
        prop_assert_eq!(all, (0..120).collect::<Vec<_>>());
        prop_assert_eq!(s, make_split(&data, k, val, test, seed).unwrap());
    }
}

#[test]
fn disjointness_over_a_thousand_seeds() {
    let data = gen_two_moons(100, 0.1, 0).unwrap();
    for seed in 0..1000 {
        let s = make_split(&data, 20, 30, 10, seed).unwrap();
        let mut seen = HashSet::new();
        for i in s
            .pretrain
            .iter()
            .chain(&s.unlabeled)
            .chain(&s.val)
            .chain(&s.test)
        {
            assert!(seen.insert(*i), "seed {seed}: index {i} appears twice");
        }
        assert_eq!(seen.len(), 100);
    }
}

#[test]
fn oversized_split_is_refused() {
    let data = gen_two_moons(50, 0.1, 0).unwrap();
    assert!(matches!(
        make_split(&data, 30, 20, 1, 0),
        Err(DataError::InsufficientPoints {
            needed: 51,
            available: 50
        })
    ));
}

#[test]
fn moons_are_balanced_and_noise_scales_distance_to_the_arcs() {
    let arc_gap = |noise: f64| {
        let d = gen_two_moons(400, noise, 11).unwrap();
        assert_eq!(d.class_counts(), vec![200, 200]);
        let mut total = 0.0;
        for i in 0..d.len() {
            let (x, y) = (d.features().get(i, 0), d.features().get(i, 1));
            let (cx, cy) = if d.labels()[i] == 0 {
                (0.0, 0.0)
            } else {
                (1.0, 0.5)
            };
            total += (((x - cx).powi(2) + (y - cy).powi(2)).sqrt() - 1.0).abs();
        }
        total / d.len() as f64
    };
    let (low, high) = (arc_gap(0.05), arc_gap(0.2));
    assert!(low < high, "{low} vs {high}");
    // radial deviation of a 2-d Gaussian offset is about sigma * sqrt(2/pi)
    assert!(
        (high / 0.2 - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.15,
        "{high}"
    );
}

#[test]
fn blobs_have_requested_counts_and_spread() {
    let d = gen_gaussian_blobs(4, 250, 3, 0.5, 2).unwrap();
    assert_eq!(d.class_counts(), vec![250; 4]);
    for c in 0..4 {
        let rows: Vec<usize> = (0..d.len()).filter(|&i| d.labels()[i] == c).collect();
        for j in 0..3 {
            let vals: Vec<f64> = rows.iter().map(|&i| d.features().get(i, j)).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var =
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
            assert!(
                (var.sqrt() - 0.5).abs() < 0.06,
                "class {c} dim {j}: sd {}",
                var.sqrt()
            );
        }
    }
}

#[test]
fn raw_map_is_identity_and_fourier_is_seeded() {
    let d = gen_gaussian_blobs(2, 20, 3, 1.0, 0).unwrap();
    assert_eq!(feature_map(&d, FeatureMap::Raw).unwrap(), d);
    let kind = |seed| FeatureMap::RandomFourier {
        dim_out: 16,
        bandwidth: 2.0,
        seed,
    };
    let a = feature_map(&d, kind(1)).unwrap();
    assert_eq!(a, feature_map(&d, kind(1)).unwrap());
    assert_ne!(a.features(), feature_map(&d, kind(2)).unwrap().features());
    assert_eq!(a.dim(), 16);
    assert_eq!(a.labels(), d.labels());
    assert!(feature_map(
        &d,
        FeatureMap::RandomFourier {
            dim_out: 4,
            bandwidth: 0.0,
            seed: 0
        }
    )
    .is_err());
}
