//! Reference selection strategies: uniform random, lowest margin, greedy
//! k-center on penultimate activations, and k-means++ seeding on
//! hallucinated-gradient embeddings.

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{margin_of, ClassifierError, MlpClassifier};
use crate::rng::Rng;
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("pool has {available} points, {requested} requested")]
    PoolTooSmall { requested: usize, available: usize },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, BaselineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    Margin,
    Coreset,
    BadgeLite,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Random,
        Strategy::Margin,
        Strategy::Coreset,
        Strategy::BadgeLite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Margin => "margin",
            Strategy::Coreset => "coreset",
            Strategy::BadgeLite => "badge_lite",
        }
    }
}

fn check_size(pool: &[usize], budget: usize) -> Result<()> {
    if pool.len() < budget {
        return Err(BaselineError::PoolTooSmall {
            requested: budget,
            available: pool.len(),
        });
    }
    Ok(())
}

/// Runs `strategy` with a trained classifier; never reads labels.
pub fn select(
    strategy: Strategy,
    clf: &MlpClassifier,
    features: &Tensor,
    pool: &[usize],
    labeled: &[usize],
    budget: usize,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    match strategy {
        Strategy::Random => select_random(pool, budget, rng),
        Strategy::Margin => select_margin(clf, features, pool, budget),
        Strategy::Coreset => select_coreset(clf, features, pool, labeled, budget),
        Strategy::BadgeLite => select_badge_lite(clf, features, pool, budget, rng),
    }
}

/// `budget` pool points uniformly without replacement.
pub fn select_random(pool: &[usize], budget: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    check_size(pool, budget)?;
    Ok(index::sample(rng, pool.len(), budget)
        .into_iter()
        .map(|p| pool[p])
        .collect())
}

/// The `budget` points with the smallest margin given per-point margins;
/// ties go to the smaller index.
pub fn lowest_margins(pool: &[usize], margins: &[f64], budget: usize) -> Result<Vec<usize>> {
    check_size(pool, budget)?;
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        margins[a]
            .total_cmp(&margins[b])
            .then(pool[a].cmp(&pool[b]))
    });
    Ok(order[..budget].iter().map(|&p| pool[p]).collect())
}

pub fn select_margin(
    clf: &MlpClassifier,
    features: &Tensor,
    pool: &[usize],
    budget: usize,
) -> Result<Vec<usize>> {
    check_size(pool, budget)?;
    let margins = crate::classifier::margin_scores(clf, pool, features)?;
    lowest_margins(pool, &margins, budget)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy k-center: repeatedly takes the candidate row farthest from its
/// nearest center (existing `centers` rows or earlier picks). Returns row
/// positions into `candidates`; ties go to the earlier row.
pub fn kcenter_greedy(candidates: &Tensor, centers: &Tensor, budget: usize) -> Vec<usize> {
    let n = candidates.rows();
    let mut nearest = vec![f64::INFINITY; n];
    for (i, d) in nearest.iter_mut().enumerate() {
        let x = candidates.row_slice(i);
        for c in 0..centers.rows() {
            *d = d.min(sq_dist(x, centers.row_slice(c)));
        }
    }
    let mut taken = vec![false; n];
    let mut picks = Vec::with_capacity(budget);
    for _ in 0..budget.min(n) {
        let mut best = None;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            if best.is_none_or(|b: usize| nearest[i] > nearest[b]) {
                best = Some(i);
            }
        }
        let Some(p) = best else { break };
        taken[p] = true;
        picks.push(p);
        let xp = candidates.row_slice(p).to_vec();
        for i in 0..n {
            if !taken[i] {
                nearest[i] = nearest[i].min(sq_dist(candidates.row_slice(i), &xp));
            }
        }
    }
    picks
}

/// Largest distance from any row to its nearest chosen row or center.
pub fn covering_radius(points: &Tensor, centers: &Tensor, chosen: &[usize]) -> f64 {
    let mut radius: f64 = 0.0;
    for i in 0..points.rows() {
        let x = points.row_slice(i);
        let mut d = f64::INFINITY;
        for c in 0..centers.rows() {
            d = d.min(sq_dist(x, centers.row_slice(c)));
        }
        for &c in chosen {
            d = d.min(sq_dist(x, points.row_slice(c)));
        }
        radius = radius.max(d);
    }
    radius.sqrt()
}

pub fn select_coreset(
    clf: &MlpClassifier,
    features: &Tensor,
    pool: &[usize],
    labeled: &[usize],
    budget: usize,
) -> Result<Vec<usize>> {
    check_size(pool, budget)?;
    let cand = clf.penultimate(&features.select_rows(pool))?;
    let centers = if labeled.is_empty() {
        Tensor::zeros(&[0, cand.cols()])
    } else {
        clf.penultimate(&features.select_rows(labeled))?
    };
    Ok(kcenter_greedy(&cand, &centers, budget)
        .into_iter()
        .map(|p| pool[p])
        .collect())
}

/// Outer product `(p - onehot(argmax p)) x h` per row: the last-layer
/// gradient of cross entropy under the predicted label.
pub fn gradient_embeddings(hidden: &Tensor, probs: &Tensor) -> Tensor {
    let (n, h, c) = (hidden.rows(), hidden.cols(), probs.cols());
    let mut out = Vec::with_capacity(n * h * c);
    for r in 0..n {
        let p = probs.row_slice(r);
        let top = (0..c).fold(0, |best, j| if p[j] > p[best] { j } else { best });
        let hr = hidden.row_slice(r);
        for (j, &pj) in p.iter().enumerate() {
            let g = pj - if j == top { 1.0 } else { 0.0 };
            out.extend(hr.iter().map(|v| g * v));
        }
    }
    Tensor::matrix(n, h * c, out).expect("finite embeddings")
}

/// k-means++ seeding: a uniform first pick, then each pick with probability
/// proportional to the squared distance to the nearest earlier pick. When
/// every remaining distance is zero, the pick is uniform over the rest.
pub fn kmeanspp_seeding(points: &Tensor, budget: usize, rng: &mut Rng) -> Vec<usize> {
    let n = points.rows();
    let budget = budget.min(n);
    if budget == 0 {
        return Vec::new();
    }
    let mut taken = vec![false; n];
    let mut nearest = vec![f64::INFINITY; n];
    let mut picks = Vec::with_capacity(budget);
    let mut next = rng.random_range(0..n);
    loop {
        taken[next] = true;
        picks.push(next);
        if picks.len() == budget {
            break;
        }
        let xp = points.row_slice(next).to_vec();
        let mut total = 0.0;
        for i in 0..n {
            if taken[i] {
                nearest[i] = 0.0;
            } else {
                nearest[i] = nearest[i].min(sq_dist(points.row_slice(i), &xp));
                total += nearest[i];
            }
        }
        next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for i in 0..n {
                if taken[i] || nearest[i] == 0.0 {
                    continue;
                }
                acc += nearest[i];
                chosen = Some(i);
                if acc > target {
                    break;
                }
            }
            chosen.expect("positive mass")
        } else {
            let rest: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            rest[rng.random_range(0..rest.len())]
        };
    }
    picks
}

pub fn select_badge_lite(
    clf: &MlpClassifier,
    features: &Tensor,
    pool: &[usize],
    budget: usize,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    check_size(pool, budget)?;
    let (hidden, probs) = clf.embed_and_predict(&features.select_rows(pool))?;
    let emb = gradient_embeddings(&hidden, &probs);
    Ok(kmeanspp_seeding(&emb, budget, rng)
        .into_iter()
        .map(|p| pool[p])
        .collect())
}

/// Margins of a probability table, one per row.
pub fn margins_of_table(probs: &Tensor) -> Vec<f64> {
    (0..probs.rows())
        .map(|r| margin_of(probs.row_slice(r)))
        .collect()
}
