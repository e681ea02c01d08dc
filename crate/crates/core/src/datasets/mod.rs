//! Labeled data sources, feature maps, pool splits and the label query gate.

mod idx;
mod pool;

pub use idx::{
    encode_idx_images, encode_idx_labels, load_idx, parse_idx_images, parse_idx_labels, write_idx,
    IdxImages, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use pool::{ActivePool, LabelSource};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad IDX magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },
    #[error("IDX data truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("split needs {needed} points but the dataset has {available}")]
    InsufficientPoints { needed: usize, available: usize },
    #[error("label of index {0} has not been queried")]
    LabelHidden(usize),
    #[error("index {0} is not in the unlabeled pool")]
    NotInPool(usize),
    #[error("index {0} was already queried")]
    AlreadyQueried(usize),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Feature matrix with one integer class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let (rows, _) = features
            .dims()
            .map_err(|e| DataError::Invalid(e.to_string()))?;
        if rows != labels.len() {
            return Err(DataError::Invalid(format!(
                "{rows} feature rows but {} labels",
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(DataError::Invalid(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(DataError::Invalid(format!(
                "label {l} >= {num_classes} classes"
            )));
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
            num_classes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Same features, labels replaced (used for shuffled-label controls).
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.features.clone(),
            labels,
            self.num_classes,
        )
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

const CENTER_BOX: f64 = 6.0;
const MIN_CENTER_SEPARATION: f64 = 4.0;

fn blob_centers(num_classes: usize, dim: usize, rng: &mut rng::Rng) -> Vec<Vec<f64>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
    while centers.len() < num_classes {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..1000 {
            let c: Vec<f64> = (0..dim)
                .map(|_| rng.random_range(-CENTER_BOX..CENTER_BOX))
                .collect();
            let sep = centers
                .iter()
                .map(|o| {
                    o.iter()
                        .zip(&c)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            if sep >= MIN_CENTER_SEPARATION {
                best = Some((sep, c));
                break;
            }
            if best.as_ref().is_none_or(|(s, _)| sep > *s) {
                best = Some((sep, c));
            }
        }
        centers.push(best.expect("at least one candidate").1);
    }
    centers
}

/// Isotropic Gaussian blobs, `points_per_class` points per class.
pub fn gen_gaussian_blobs(
    num_classes: usize,
    points_per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    gen_imbalanced_blobs(&vec![points_per_class; num_classes], dim, spread, seed)
}

/// Gaussian blobs with an explicit point count per class. Class centers are
/// drawn from a box with a minimum pairwise separation; rows are shuffled.
pub fn gen_imbalanced_blobs(
    class_counts: &[usize],
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if class_counts.len() < 2 {
        return Err(DataError::Invalid("blobs need at least 2 classes".into()));
    }
    if !(spread > 0.0) || dim == 0 {
        return Err(DataError::Invalid(format!(
            "bad blob parameters: dim={dim}, spread={spread}"
        )));
    }
    let mut rng = rng::seeded(seed);
    let centers = blob_centers(class_counts.len(), dim, &mut rng);
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::new();
    for (class, (&count, center)) in class_counts.iter().zip(&centers).enumerate() {
        for _ in 0..count {
            let x = center
                .iter()
                .map(|c| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    c + spread * z
                })
                .collect();
            rows.push((x, class));
        }
    }
    rows.shuffle(&mut rng);
    let labels = rows.iter().map(|r| r.1).collect();
    let data = rows.into_iter().flat_map(|r| r.0).collect::<Vec<_>>();
    let n = data.len() / dim;
    let features = Tensor::matrix(n, dim, data).map_err(|e| DataError::Invalid(e.to_string()))?;
    Dataset::new(
        format!("blobs-{}c-{dim}d", class_counts.len()),
        features,
        labels,
        class_counts.len(),
    )
}

/// Two interleaved unit half circles; class 0 is the upper arc centered at
/// the origin, class 1 the lower arc centered at `(1, 0.5)`.
pub fn gen_two_moons(points: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if points < 2 || noise < 0.0 {
        return Err(DataError::Invalid(format!(
            "bad moons parameters: points={points}, noise={noise}"
        )));
    }
    let mut rng = rng::seeded(seed);
    let n_outer = points / 2;
    let n_inner = points - n_outer;
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid std");
    let arc = |i: usize, n: usize| {
        if n <= 1 {
            0.0
        } else {
            std::f64::consts::PI * i as f64 / (n - 1) as f64
        }
    };
    let mut rows = Vec::with_capacity(points);
    for i in 0..n_outer {
        let t = arc(i, n_outer);
        rows.push(([t.cos(), t.sin()], 0usize));
    }
    for i in 0..n_inner {
        let t = arc(i, n_inner);
        rows.push(([1.0 - t.cos(), 0.5 - t.sin()], 1usize));
    }
    if noise > 0.0 {
        for (p, _) in rows.iter_mut() {
            p[0] += normal.sample(&mut rng);
            p[1] += normal.sample(&mut rng);
        }
    }
    rows.shuffle(&mut rng);
    let labels = rows.iter().map(|r| r.1).collect();
    let data = rows.iter().flat_map(|r| r.0).collect();
    let features =
        Tensor::matrix(points, 2, data).map_err(|e| DataError::Invalid(e.to_string()))?;
    Dataset::new("two-moons", features, labels, 2)
}

/// Disjoint index sets of one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSplit {
    /// Initial labeled set, size `k`.
    pub pretrain: Vec<usize>,
    /// Unlabeled pool available to acquisition.
    pub unlabeled: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Uniformly random disjoint split. Whatever is not pretrain, validation or
/// test becomes the unlabeled pool.
pub fn make_split(
    dataset: &Dataset,
    k: usize,
    val_size: usize,
    test_size: usize,
    seed: u64,
) -> Result<PoolSplit> {
    let needed = k + val_size + test_size;
    if needed > dataset.len() {
        return Err(DataError::InsufficientPoints {
            needed,
            available: dataset.len(),
        });
    }
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let val = idx[..val_size].to_vec();
    let test = idx[val_size..val_size + test_size].to_vec();
    let pretrain = idx[val_size + test_size..needed].to_vec();
    let unlabeled = idx[needed..].to_vec();
    Ok(PoolSplit {
        pretrain,
        unlabeled,
        val,
        test,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    Raw,
    RandomFourier {
        dim_out: usize,
        bandwidth: f64,
        seed: u64,
    },
}

/// Applies a fixed feature map. Random Fourier features are
/// `cos(x W + b)` with `W ~ N(0, 1/bandwidth^2)` and `b ~ U[0, 2 pi)`.
pub fn feature_map(dataset: &Dataset, kind: FeatureMap) -> Result<Dataset> {
    match kind {
        FeatureMap::Raw => Ok(dataset.clone()),
        FeatureMap::RandomFourier {
            dim_out,
            bandwidth,
            seed,
        } => {
            if !(bandwidth > 0.0) || dim_out == 0 {
                return Err(DataError::Invalid(format!(
                    "random fourier needs bandwidth > 0 and dim_out > 0, got {bandwidth}, {dim_out}"
                )));
            }
            let d = dataset.dim();
            let mut rng = rng::seeded(seed);
            let normal = Normal::new(0.0, 1.0 / bandwidth).expect("valid std");
            let w: Vec<f64> = (0..d * dim_out).map(|_| normal.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..dim_out)
                .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                .collect();
            let w = Tensor::matrix(d, dim_out, w).map_err(|e| DataError::Invalid(e.to_string()))?;
            let mut z = dataset
                .features()
                .matmul(&w)
                .map_err(|e| DataError::Invalid(e.to_string()))?;
            for row in z.data_mut().chunks_mut(dim_out) {
                row.iter_mut()
                    .zip(&b)
                    .for_each(|(v, bj)| *v = (*v + bj).cos());
            }
            Dataset::new(
                format!("{}+rff{dim_out}", dataset.name()),
                z,
                dataset.labels().to_vec(),
                dataset.num_classes(),
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_deterministic_per_seed() {
        let a = gen_gaussian_blobs(3, 20, 4, 0.5, 11).unwrap();
        let b = gen_gaussian_blobs(3, 20, 4, 0.5, 11).unwrap();
        let c = gen_gaussian_blobs(3, 20, 4, 0.5, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.class_counts(), vec![20, 20, 20]);
    }

    #[test]
    fn tiny_spread_blobs_are_separable_by_nearest_center() {
        let ds = gen_gaussian_blobs(5, 40, 3, 1e-6, 4).unwrap();
        let mut centers = vec![vec![0.0; 3]; 5];
        for (i, &l) in ds.labels().iter().enumerate() {
            for (c, v) in centers[l].iter_mut().zip(ds.features().row_slice(i)) {
                *c += v / 40.0;
            }
        }
        let correct = (0..ds.len())
            .filter(|&i| {
                let x = ds.features().row_slice(i);
                let nearest = (0..5)
                    .min_by(|&a, &b| {
                        let da: f64 = centers[a].iter().zip(x).map(|(c, v)| (c - v).powi(2)).sum();
                        let db: f64 = centers[b].iter().zip(x).map(|(c, v)| (c - v).powi(2)).sum();
                        da.total_cmp(&db)
                    })
                    .unwrap();
                nearest == ds.labels()[i]
            })
            .count();
        assert_eq!(correct, ds.len());
    }

    #[test]
    fn noiseless_moons_lie_on_unit_half_circles() {
        let ds = gen_two_moons(200, 0.0, 1).unwrap();
        for i in 0..ds.len() {
            let p = ds.features().row_slice(i);
            let r = if ds.labels()[i] == 0 {
                (p[0].powi(2) + p[1].powi(2)).sqrt()
            } else {
                ((p[0] - 1.0).powi(2) + (p[1] - 0.5).powi(2)).sqrt()
            };
            assert!((r - 1.0).abs() < 1e-12);
        }
        assert_eq!(ds.class_counts(), vec![100, 100]);
    }

    #[test]
    fn split_covers_everything_disjointly() {
        let ds = gen_gaussian_blobs(2, 50, 2, 1.0, 0).unwrap();
        let s = make_split(&ds, 10, 20, 30, 5).unwrap();
        assert_eq!(s.pretrain.len(), 10);
        assert_eq!(s.val.len(), 20);
        assert_eq!(s.test.len(), 30);
        assert_eq!(s.unlabeled.len(), 40);
        let mut all: Vec<usize> = [&s.pretrain, &s.unlabeled, &s.val, &s.test]
            .iter()
            .flat_map(|v| v.iter().copied())
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn split_with_no_leftover_has_empty_pool() {
        let ds = gen_gaussian_blobs(2, 50, 2, 1.0, 0).unwrap();
        let s = make_split(&ds, 40, 30, 30, 5).unwrap();
        assert!(s.unlabeled.is_empty());
        assert!(matches!(
            make_split(&ds, 41, 30, 30, 5),
            Err(DataError::InsufficientPoints {
                needed: 101,
                available: 100
            })
        ));
    }

    #[test]
    fn random_fourier_is_bounded_and_seeded() {
        let ds = gen_two_moons(50, 0.1, 2).unwrap();
        let map = FeatureMap::RandomFourier {
            dim_out: 16,
            bandwidth: 0.5,
            seed: 9,
        };
        let a = feature_map(&ds, map).unwrap();
        let b = feature_map(&ds, map).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 16);
        assert!(a.features().data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(feature_map(&ds, FeatureMap::Raw).unwrap(), ds);
        assert!(feature_map(
            &ds,
            FeatureMap::RandomFourier {
                dim_out: 4,
                bandwidth: 0.0,
                seed: 0
            }
        )
        .is_err());
    }
}
