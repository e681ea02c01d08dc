//! The acquisition stage: repeatedly filter the most uncertain pool points
//! by margin, split them at random into candidate batches, and query the
//! batch whose union with the labeled set the utility model scores highest.

use std::io::Write;

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{self, ClassifierError, MlpClassifier, TrainConfig};
use crate::config::{ConfigError, RamboConfig};
use crate::datasets::{ActivePool, DataError, LabelSource};
use crate::rng::{self, Rng};
use crate::utility_model::{CachedScorer, SetEncoder, SetScorer, UtilityError};

#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("pool has {available} points left, a step needs {needed}")]
    PoolExhausted { needed: usize, available: usize },
    #[error("candidate count M = {m} is below the batch size {b}")]
    CandidatesBelowBatch { m: usize, b: usize },
    #[error("{margins} margins given for {pool} pool points")]
    MarginCount { margins: usize, pool: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Utility(#[from] UtilityError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T> = std::result::Result<T, AcquisitionError>;

/// Labeled set, remaining pool and budget of one acquisition run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolState {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub budget_used: usize,
    pub budget: usize,
    pub b: usize,
    pub m: usize,
}

impl PoolState {
    pub fn new(
        labeled: Vec<usize>,
        unlabeled: Vec<usize>,
        budget: usize,
        b: usize,
        m: usize,
    ) -> Self {
        Self {
            labeled,
            unlabeled,
            budget_used: 0,
            budget,
            b,
            m,
        }
    }

    /// Size of the next batch: `b`, or what is left of the budget.
    pub fn next_batch_size(&self) -> usize {
        self.b.min(self.budget - self.budget_used)
    }

    pub fn steps(&self) -> usize {
        if self.b == 0 {
            0
        } else {
            self.budget.div_ceil(self.b)
        }
    }
}

/// Outcome of choosing a batch, before any label is bought.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchChoice {
    /// Candidate batches in partition order.
    pub candidates: Vec<Vec<usize>>,
    pub scores: Vec<f64>,
    pub chosen: usize,
    /// Largest margin admitted by the filter.
    pub margin_threshold: f64,
}

impl BatchChoice {
    pub fn batch(&self) -> &[usize] {
        &self.candidates[self.chosen]
    }
}

/// One JSON-lines record per acquisition step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub iteration: usize,
    pub candidate_scores: Vec<f64>,
    pub chosen: Vec<usize>,
    pub margin_threshold: f64,
}

/// The `m` lowest-margin pool points (ties by index), randomly split into
/// `floor(|R| / batch)` batches; returns the batch maximizing the score of
/// `labeled` joined with it (the first one on ties).
///
/// `margins[i]` belongs to `unlabeled[i]`. Nothing here reads labels.
pub fn select_batch<S: SetScorer + ?Sized>(
    scorer: &S,
    labeled: &[usize],
    unlabeled: &[usize],
    margins: &[f64],
    m: usize,
    batch: usize,
    rng: &mut Rng,
) -> Result<BatchChoice> {
    if margins.len() != unlabeled.len() {
        return Err(AcquisitionError::MarginCount {
            margins: margins.len(),
            pool: unlabeled.len(),
        });
    }
    if m < batch {
        return Err(AcquisitionError::CandidatesBelowBatch { m, b: batch });
    }
    if unlabeled.len() < batch || batch == 0 {
        return Err(AcquisitionError::PoolExhausted {
            needed: batch.max(1),
            available: unlabeled.len(),
        });
    }
    let mut ranked: Vec<usize> = (0..unlabeled.len()).collect();
    ranked.sort_by(|&a, &b| {
        margins[a]
            .total_cmp(&margins[b])
            .then(unlabeled[a].cmp(&unlabeled[b]))
    });
    ranked.truncate(m);
    let margin_threshold = ranked.last().map_or(0.0, |&p| margins[p]);
    let mut filtered: Vec<usize> = ranked.iter().map(|&p| unlabeled[p]).collect();
    filtered.shuffle(rng);
    let candidates: Vec<Vec<usize>> = filtered
        .chunks_exact(batch)
        .map(<[usize]>::to_vec)
        .collect();

    let mut scores = Vec::with_capacity(candidates.len());
    let mut union = Vec::with_capacity(labeled.len() + batch);
    for c in &candidates {
        union.clear();
        union.extend_from_slice(labeled);
        union.extend_from_slice(c);
        scores.push(scorer.score_set(&union)?);
    }
    let mut chosen = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[chosen] {
            chosen = i;
        }
    }
    debug_assert!(scores.iter().all(|s| *s <= scores[chosen]));
    Ok(BatchChoice {
        candidates,
        scores,
        chosen,
        margin_threshold,
    })
}

/// One greedy step: margins from `clf`, batch choice, label purchase.
pub fn greedy_margin_step<S: SetScorer + ?Sized>(
    scorer: &S,
    clf: &MlpClassifier,
    state: &mut PoolState,
    pool: &mut ActivePool,
    iteration: usize,
    rng: &mut Rng,
) -> Result<StepLog> {
    let batch = state.next_batch_size();
    let margins = classifier::margin_scores(clf, &state.unlabeled, pool.features())?;
    let choice = select_batch(
        scorer,
        &state.labeled,
        &state.unlabeled,
        &margins,
        state.m,
        batch,
        rng,
    )?;
    let chosen = choice.batch().to_vec();
    pool.query_batch(&chosen)?;
    state.labeled.extend_from_slice(&chosen);
    state.unlabeled.retain(|i| !chosen.contains(i));
    state.budget_used += chosen.len();
    Ok(StepLog {
        iteration,
        candidate_scores: choice.scores,
        chosen,
        margin_threshold: choice.margin_threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionOutcome {
    pub labeled: Vec<usize>,
    pub logs: Vec<StepLog>,
}

/// Runs every acquisition step from the initial labeled pool of `pool`,
/// buying exactly `cfg.budget` labels.
pub fn run_acquisition(
    encoder: &SetEncoder,
    pool: &mut ActivePool,
    cfg: &RamboConfig,
    seed: u64,
) -> Result<AcquisitionOutcome> {
    cfg.validate()?;
    let split = pool.split().clone();
    let mut state = PoolState::new(
        split.pretrain.clone(),
        pool.remaining_pool(),
        cfg.budget,
        cfg.b,
        cfg.candidates(),
    );
    let rows: Vec<usize> = state
        .labeled
        .iter()
        .chain(&state.unlabeled)
        .copied()
        .collect();
    let scorer = CachedScorer::new(encoder, pool.features(), &rows)?;
    let cls_seed = rng::derive(seed, rng::tag("acquisition-classifier"));
    let mut partition_rng = rng::stream(seed, rng::tag("acquisition-partition"));
    let frozen = if cfg.frozen_classifier {
        Some(train_on(&state.labeled, pool, cls_seed, &cfg.classifier)?)
    } else {
        None
    };
    let mut logs = Vec::with_capacity(state.steps());
    for j in 0..state.steps() {
        let fresh;
        let clf = match &frozen {
            Some(c) => c,
            None => {
                fresh = train_on(&state.labeled, pool, cls_seed, &cfg.classifier)?;
                &fresh
            }
        };
        let log = greedy_margin_step(&scorer, clf, &mut state, pool, j, &mut partition_rng)?;
        info!(
            "acquisition step {j}: picked candidate scoring {:?}",
            log.candidate_scores
        );
        logs.push(log);
    }
    Ok(AcquisitionOutcome {
        labeled: state.labeled,
        logs,
    })
}

fn train_on<D: LabelSource>(
    labeled: &[usize],
    data: &D,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<MlpClassifier> {
    Ok(classifier::train(labeled, data, classifier::init_seed(seed, labeled), cfg)?.0)
}

pub fn write_step_logs(logs: &[StepLog], mut out: impl Write) -> Result<()> {
    for l in logs {
        serde_json::to_writer(&mut out, l)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use std::collections::HashMap;

    /// Score of a set = sum of per-point weights.
    struct Additive(HashMap<usize, f64>);

    impl SetScorer for Additive {
        fn score_set(&self, indices: &[usize]) -> crate::utility_model::Result<f64> {
            Ok(indices
                .iter()
                .map(|i| self.0.get(i).copied().unwrap_or(0.0))
                .sum())
        }
    }

    #[test]
    fn single_candidate_reduces_to_margin_sampling() {
        let unlabeled: Vec<usize> = (10..20).collect();
        let margins: Vec<f64> = (0..10).map(|i| ((i * 7) % 10) as f64 / 10.0).collect();
        let scorer = Additive(HashMap::new());
        let c = select_batch(&scorer, &[0, 1], &unlabeled, &margins, 3, 3, &mut seeded(0)).unwrap();
        assert_eq!(c.candidates.len(), 1);
        let mut got = c.batch().to_vec();
        got.sort();
        // margins 0.0, 0.1, 0.2 sit at positions 0, 3, 6
        assert_eq!(got, vec![10, 13, 16]);
        assert_eq!(c.margin_threshold, 0.2);
    }

    #[test]
    fn picks_the_best_candidate_and_discards_remainder() {
        let unlabeled: Vec<usize> = (0..11).collect();
        let margins = vec![0.5; 11];
        let weights: HashMap<usize, f64> = (0..11).map(|i| (i, i as f64)).collect();
        let c = select_batch(
            &Additive(weights),
            &[],
            &unlabeled,
            &margins,
            11,
            3,
            &mut seeded(4),
        )
        .unwrap();
        assert_eq!(c.candidates.len(), 3);
        assert!(c.candidates.iter().all(|b| b.len() == 3));
        let best = c.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(c.scores[c.chosen], best);
    }

    #[test]
    fn errors_on_small_pool_or_candidate_count() {
        let s = Additive(HashMap::new());
        assert!(matches!(
            select_batch(&s, &[], &[1, 2], &[0.1, 0.2], 4, 3, &mut seeded(0)),
            Err(AcquisitionError::PoolExhausted { .. })
        ));
        assert!(matches!(
            select_batch(&s, &[], &[1, 2, 3], &[0.1, 0.2, 0.3], 2, 3, &mut seeded(0)),
            Err(AcquisitionError::CandidatesBelowBatch { m: 2, b: 3 })
        ));
    }

    #[test]
    fn same_seed_same_batch() {
        let unlabeled: Vec<usize> = (0..40).collect();
        let margins: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let weights: HashMap<usize, f64> = (0..40).map(|i| (i, (i as f64 * 1.3).cos())).collect();
        let s = Additive(weights);
        let a = select_batch(&s, &[50], &unlabeled, &margins, 20, 5, &mut seeded(9)).unwrap();
        let b = select_batch(&s, &[50], &unlabeled, &margins, 20, 5, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn remainder_budget_shrinks_last_batch() {
        let mut st = PoolState::new(vec![0], (1..30).collect(), 7, 3, 12);
        assert_eq!(st.steps(), 3);
        st.budget_used = 6;
        assert_eq!(st.next_batch_size(), 1);
    }
}
