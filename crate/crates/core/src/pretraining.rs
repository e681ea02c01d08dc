//! The pretraining stage: grow the labeled prefix chunk by chunk, record the
//! validation accuracy of each prefix, augment utility samples by
//! interpolating between consecutive accuracies, and refit the utility model
//! on the accumulated store with a length-split bilevel search over the
//! weight penalty.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use log::{info, warn};
use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{self, ClassifierError};
use crate::config::{ConfigError, InitMode, OtTargetConfig, RamboConfig};
use crate::datasets::{DataError, LabelSource, PoolSplit};
use crate::ot::{self, OtError, OtProblem};
use crate::rng::{self, Rng};
use crate::tensor::{AdamState, Tensor};
use crate::utility_model::{
    train_epoch, EpochConfig, LossConfig, Provenance, RankPair, SetEncoder, UtilityError,
    UtilitySample,
};

#[derive(Debug, Error)]
pub enum PretrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("initial pool has {actual} points, config expects k = {expected}")]
    PoolSize { expected: usize, actual: usize },
    #[error("sampling needs a set of at least 2 points, got {0}")]
    SetTooSmall(usize),
    #[error("no two samples share a length; available lengths {0:?}")]
    NoEqualLengthPair(Vec<usize>),
    #[error("the sample store is empty")]
    EmptyStore,
    #[error("warm-start checkpoint expects input dim {expected}, data has {actual}")]
    CheckpointDim { expected: usize, actual: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Utility(#[from] UtilityError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ot(#[from] OtError),
}

pub type Result<T> = std::result::Result<T, PretrainError>;

/// Interpolation weight and utility of a set at distances `d_prev` from the
/// previous prefix and `d_next` from the current one.
///
/// `alpha = d_next / (d_next + d_prev)`, with `alpha = 0.5` when both
/// distances vanish; the utility is `alpha * acc_prev + (1 - alpha) * acc_next`.
pub fn interpolate_utility(d_prev: f64, d_next: f64, acc_prev: f64, acc_next: f64) -> (f64, f64) {
    let denom = d_next + d_prev;
    let alpha = if denom > 0.0 {
        (d_next / denom).clamp(0.0, 1.0)
    } else {
        0.5
    };
    let u = alpha * acc_prev + (1.0 - alpha) * acc_next;
    (
        alpha,
        u.clamp(acc_prev.min(acc_next), acc_prev.max(acc_next)),
    )
}

/// Two independent uniform subsets of `set` of a common size drawn uniformly
/// from `[max(2, min_len), |set|]`.
pub fn sample_pair(
    set: &[usize],
    min_len: usize,
    rng: &mut Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if set.len() < 2 {
        return Err(PretrainError::SetTooSmall(set.len()));
    }
    let lo = min_len.max(2).min(set.len());
    let len = rng.random_range(lo..=set.len());
    let draw = |rng: &mut Rng| -> Vec<usize> {
        index::sample(rng, set.len(), len)
            .into_iter()
            .map(|p| set[p])
            .collect()
    };
    let a = draw(rng);
    let b = draw(rng);
    Ok((a, b))
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSample {
    #[serde(flatten)]
    pub sample: UtilitySample,
    pub iteration: usize,
}

/// Accumulated utility samples, split by length for bilevel fitting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleStore {
    records: Vec<StoredSample>,
}

impl SampleStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, sample: UtilitySample, iteration: usize) -> Result<()> {
        sample.validate()?;
        self.records.push(StoredSample { sample, iteration });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[StoredSample] {
        &self.records
    }

    pub fn samples(&self) -> impl Iterator<Item = &UtilitySample> {
        self.records.iter().map(|r| &r.sample)
    }

    pub fn median_length(&self) -> Option<f64> {
        if self.records.is_empty() {
            return None;
        }
        let mut lens: Vec<usize> = self.records.iter().map(|r| r.sample.len()).collect();
        lens.sort_unstable();
        let n = lens.len();
        Some(if n % 2 == 1 {
            lens[n / 2] as f64
        } else {
            (lens[n / 2 - 1] + lens[n / 2]) as f64 / 2.0
        })
    }

    /// Positions of samples no longer than the median length, and of the
    /// longer ones.
    pub fn partition(&self) -> (Vec<usize>, Vec<usize>) {
        let Some(median) = self.median_length() else {
            return (Vec::new(), Vec::new());
        };
        (0..self.records.len()).partition(|&i| self.records[i].sample.len() as f64 <= median)
    }

    pub fn subset(&self, positions: &[usize]) -> SampleStore {
        SampleStore {
            records: positions.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    /// One JSON object per line.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n").map_err(|source| PretrainError::Io {
                path: "<writer>".into(),
                source,
            })?;
        }
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self> {
        let mut store = SampleStore::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|source| PretrainError::Io {
                path: "<reader>".into(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let r: StoredSample =
                serde_json::from_str(&line).map_err(|source| PretrainError::Parse {
                    line: n + 1,
                    source,
                })?;
            store.push(r.sample, r.iteration)?;
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |source| PretrainError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        self.write_jsonl(&mut f)?;
        f.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|source| PretrainError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }
}

/// Up to `num_pairs` distinct pairs of equal-length samples, drawn uniformly
/// among all such pairs.
pub fn build_rank_pairs(
    store: &SampleStore,
    num_pairs: usize,
    rng: &mut Rng,
) -> Result<Vec<RankPair>> {
    let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in store.samples().enumerate() {
        by_len.entry(s.len()).or_default().push(i);
    }
    let mut candidates = Vec::new();
    for members in by_len.values() {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                candidates.push((i, j));
            }
        }
    }
    if candidates.is_empty() {
        return Err(PretrainError::NoEqualLengthPair(
            by_len.keys().copied().collect(),
        ));
    }
    let take = num_pairs.min(candidates.len());
    let mut chosen: Vec<usize> = index::sample(rng, candidates.len(), take).into_vec();
    chosen.sort_unstable();
    let records = store.records();
    chosen
        .into_iter()
        .map(|c| {
            let (i, j) = candidates[c];
            Ok(RankPair::new(
                records[i].sample.clone(),
                records[j].sample.clone(),
            )?)
        })
        .collect()
}

/// Settings of one utility-model fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub loss: LossConfig,
    pub max_pairs: usize,
    pub grid: Vec<f64>,
}

impl FitConfig {
    pub fn from_rambo(cfg: &RamboConfig) -> Self {
        Self {
            epochs: cfg.inner_epochs,
            lr: cfg.utility_lr,
            batch_size: cfg.utility_batch_size,
            loss: cfg.epoch_config(0.0).loss,
            max_pairs: cfg.max_pairs,
            grid: cfg.effective_grid(),
        }
    }
}

/// Trains a copy of `encoder` with a fresh Adam for `cfg.epochs` passes over
/// `pairs`, penalizing `weight_decay * ||w||^2`.
pub fn fit_pairs(
    encoder: &SetEncoder,
    pairs: &[RankPair],
    features: &Tensor,
    cfg: &FitConfig,
    weight_decay: f64,
    seed: u64,
) -> Result<SetEncoder> {
    let mut enc = encoder.clone();
    let mut adam = AdamState::new(enc.params(), cfg.lr);
    let mut shuffle = rng::stream(seed, rng::tag("fit-shuffle"));
    let epoch = EpochConfig {
        batch_size: cfg.batch_size,
        loss: LossConfig {
            weight_decay,
            ..cfg.loss
        },
    };
    for _ in 0..cfg.epochs {
        train_epoch(&mut enc, pairs, features, &mut adam, &epoch, &mut shuffle)?;
    }
    Ok(enc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilevelOutcome {
    pub encoder: SetEncoder,
    pub lambda: f64,
    /// Outer loss of every candidate, in grid order.
    pub candidates: Vec<(f64, f64)>,
    /// True when one partition had no usable pairs and the whole store was
    /// used for a single plain fit.
    pub fallback: bool,
}

const EVAL_CHUNK: usize = 64;

/// Pairs for the inner (short samples) and outer (long samples) objectives,
/// or `None` when either side has no equal-length pair.
pub fn bilevel_pairs(
    store: &SampleStore,
    max_pairs: usize,
    seed: u64,
) -> Option<(Vec<RankPair>, Vec<RankPair>)> {
    let (tr, val) = store.partition();
    let mut r = rng::stream(seed, rng::tag("bilevel-pairs"));
    let inner = build_rank_pairs(&store.subset(&tr), max_pairs, &mut r).ok()?;
    let outer = build_rank_pairs(&store.subset(&val), max_pairs, &mut r).ok()?;
    Some((inner, outer))
}

/// For each penalty strength in the grid, trains from `encoder` on the short
/// samples and scores the result on the long ones; keeps the candidate with
/// the lowest outer loss (the first on ties).
pub fn bilevel_train(
    store: &SampleStore,
    encoder: &SetEncoder,
    features: &Tensor,
    cfg: &FitConfig,
    seed: u64,
) -> Result<BilevelOutcome> {
    if store.is_empty() {
        return Err(PretrainError::EmptyStore);
    }
    let Some((inner, outer)) = bilevel_pairs(store, cfg.max_pairs, seed) else {
        info!("length split leaves a partition without pairs; fitting on the whole store");
        let mut r = rng::stream(seed, rng::tag("bilevel-pairs"));
        let pairs = build_rank_pairs(store, cfg.max_pairs, &mut r)?;
        let enc = fit_pairs(encoder, &pairs, features, cfg, 0.0, seed)?;
        return Ok(BilevelOutcome {
            encoder: enc,
            lambda: 0.0,
            candidates: Vec::new(),
            fallback: true,
        });
    };
    let mut best: Option<(SetEncoder, f64, f64)> = None;
    let mut candidates = Vec::with_capacity(cfg.grid.len());
    for &lambda in &cfg.grid {
        let enc = fit_pairs(encoder, &inner, features, cfg, lambda, seed)?;
        let e = enc.mean_total_loss(&outer, features, &cfg.loss, EVAL_CHUNK)?;
        candidates.push((lambda, e));
        if best.as_ref().is_none_or(|(_, _, be)| e < *be) {
            best = Some((enc, lambda, e));
        }
    }
    let (enc, lambda, e) =
        best.ok_or_else(|| UtilityError::BadWeight("empty bilevel grid".into()))?;
    debug_assert!(candidates.iter().all(|(_, c)| e <= *c));
    Ok(BilevelOutcome {
        encoder: enc,
        lambda,
        candidates,
        fallback: false,
    })
}

/// OT supervision against a fixed validation reference cloud.
#[derive(Debug, Clone)]
pub struct OtTargets {
    reference: Tensor,
    normalizer: f64,
    cfg: OtTargetConfig,
}

impl OtTargets {
    pub fn new(features: &Tensor, val: &[usize], cfg: OtTargetConfig, seed: u64) -> Result<Self> {
        if val.is_empty() {
            return Err(OtError::Empty.into());
        }
        let rows: Vec<usize> = if cfg.reference_size == 0 || cfg.reference_size >= val.len() {
            val.to_vec()
        } else {
            let mut r = rng::stream(seed, rng::tag("ot-reference"));
            let mut pick: Vec<usize> = index::sample(&mut r, val.len(), cfg.reference_size)
                .into_iter()
                .map(|p| val[p])
                .collect();
            pick.sort_unstable();
            pick
        };
        let reference = features.select_rows(&rows);
        let median = ot::median_pairwise_cost(&reference);
        Ok(Self {
            reference,
            normalizer: if median > 0.0 { median } else { 1.0 },
            cfg,
        })
    }

    /// OT cost from the given rows to the reference, over the reference's
    /// median pairwise cost.
    pub fn target(&self, features: &Tensor, indices: &[usize]) -> Result<f64> {
        let p = OtProblem::uniform(features.select_rows(indices), self.reference.clone())?;
        let eps = p.epsilon / crate::ot::DEFAULT_EPSILON_SCALE * self.cfg.epsilon_scale;
        let p = p
            .with_epsilon(eps)
            .with_max_iterations(self.cfg.max_iterations)
            .with_tolerance(self.cfg.tolerance);
        let r = ot::sinkhorn_distance(&p)?;
        if !r.converged {
            warn!(
                "sinkhorn stopped after {} iterations with marginal error {:.2e}",
                r.iterations, r.marginal_error
            );
        }
        Ok(r.cost / self.normalizer)
    }
}

/// Interpolated versus retrained utility of an audited sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub iteration: usize,
    pub interpolated: f64,
    pub actual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainTrace {
    /// `S_0, S_1, ..., S_tau1`.
    pub prefixes: Vec<Vec<usize>>,
    pub accuracies: Vec<f64>,
    /// Pooled embedding of each prefix under the encoder snapshot used when
    /// it was first needed for interpolation.
    pub prefix_embeddings: Vec<Vec<f64>>,
    /// Penalty chosen by the bilevel search at each iteration.
    pub lambdas: Vec<f64>,
    pub fallbacks: Vec<bool>,
    pub audits: Vec<AuditRecord>,
    pub init: String,
}

/// Everything needed to sample one iteration's pairs.
pub struct Augmentation<'a> {
    pub prev: &'a [usize],
    pub next: &'a [usize],
    pub n: usize,
    pub acc_prev: f64,
    pub acc_next: f64,
    pub min_len: usize,
    pub iteration: usize,
}

/// Draws `n` equal-size pairs from the previous prefix and stores both
/// members with interpolated utilities (and OT targets when requested).
/// Returns the embeddings of the two prefixes.
pub fn augment_samples(
    aug: &Augmentation<'_>,
    store: &mut SampleStore,
    encoder: &SetEncoder,
    features: &Tensor,
    ot_targets: Option<&OtTargets>,
    rng: &mut Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let emb_prev = encoder.embed_set(aug.prev, features)?;
    let emb_next = encoder.embed_set(aug.next, features)?;
    for _ in 0..aug.n {
        let (a, b) = sample_pair(aug.prev, aug.min_len, rng)?;
        for xi in [a, b] {
            let e = encoder.embed_set(&xi, features)?;
            let (_, u) = interpolate_utility(
                l2(&e, &emb_prev),
                l2(&e, &emb_next),
                aug.acc_prev,
                aug.acc_next,
            );
            let ot_target = match ot_targets {
                Some(t) => t.target(features, &xi)?,
                None => 0.0,
            };
            store.push(
                UtilitySample::new(xi, u, ot_target, Provenance::Interpolated)?,
                aug.iteration,
            )?;
        }
    }
    Ok((emb_prev, emb_next))
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub trace: PretrainTrace,
    pub store: SampleStore,
    pub encoder: SetEncoder,
}

/// Runs the full pretraining stage on the labeled pool of `split`.
pub fn run_pretraining<D: LabelSource>(
    data: &D,
    split: &PoolSplit,
    cfg: &RamboConfig,
    seed: u64,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let tau1 = cfg.tau1()?;
    if split.pretrain.len() != cfg.k {
        return Err(PretrainError::PoolSize {
            expected: cfg.k,
            actual: split.pretrain.len(),
        });
    }
    let features = data.features();
    let mut order = split.pretrain.clone();
    order.shuffle(&mut rng::stream(seed, rng::tag("pretrain-chunks")));

    let enc_cfg = cfg.encoder_config();
    let (mut encoder, init) = match &cfg.init {
        InitMode::Random => (
            SetEncoder::new(
                features.cols(),
                &enc_cfg,
                rng::derive(seed, rng::tag("encoder")),
            ),
            "random".to_string(),
        ),
        InitMode::WarmStart { path } => {
            let enc = SetEncoder::load(path)?;
            if enc.input_dim() != features.cols() {
                return Err(PretrainError::CheckpointDim {
                    expected: enc.input_dim(),
                    actual: features.cols(),
                });
            }
            (enc, format!("warm_start:{}", path.display()))
        }
    };

    let cls_seed = rng::derive(seed, rng::tag("classifier"));
    let mut prefix: Vec<usize> = order[..cfg.k1].to_vec();
    let acc0 = classifier::utility(&prefix, data, split, cls_seed, &cfg.classifier)?;
    let ot_targets = if cfg.effective_lambda_ot() > 0.0 {
        Some(OtTargets::new(features, &split.val, cfg.ot_target, seed)?)
    } else {
        None
    };
    let fit = FitConfig::from_rambo(cfg);
    let mut trace = PretrainTrace {
        prefixes: vec![prefix.clone()],
        accuracies: vec![acc0],
        prefix_embeddings: Vec::new(),
        lambdas: Vec::new(),
        fallbacks: Vec::new(),
        audits: Vec::new(),
        init,
    };
    let mut store = SampleStore::new();
    let mut aug_rng = rng::stream(seed, rng::tag("augment"));
    let mut audit_rng = rng::stream(seed, rng::tag("audit"));

    for i in 0..tau1 {
        let chunk = &order[cfg.k1 + i * cfg.b..cfg.k1 + (i + 1) * cfg.b];
        let mut next = prefix.clone();
        next.extend_from_slice(chunk);
        let acc_next = classifier::utility(&next, data, split, cls_seed, &cfg.classifier)?;
        let before = store.len();
        let aug = Augmentation {
            prev: &prefix,
            next: &next,
            n: cfg.n,
            acc_prev: trace.accuracies[i],
            acc_next,
            min_len: cfg.b,
            iteration: i,
        };
        let (emb_prev, emb_next) = augment_samples(
            &aug,
            &mut store,
            &encoder,
            features,
            ot_targets.as_ref(),
            &mut aug_rng,
        )?;
        if trace.prefix_embeddings.is_empty() {
            trace.prefix_embeddings.push(emb_prev);
        }
        trace.prefix_embeddings.push(emb_next);

        if cfg.audit_fraction > 0.0 {
            for r in &store.records()[before..] {
                if audit_rng.random::<f64>() < cfg.audit_fraction {
                    let actual = classifier::utility(
                        &r.sample.indices,
                        data,
                        split,
                        cls_seed,
                        &cfg.classifier,
                    )?;
                    trace.audits.push(AuditRecord {
                        iteration: i,
                        interpolated: r.sample.utility,
                        actual,
                    });
                }
            }
        }

        if !store.is_empty() {
            let out = bilevel_train(
                &store,
                &encoder,
                features,
                &fit,
                rng::derive(seed, i as u64),
            )?;
            info!(
                "pretraining iteration {i}: acc {acc_next:.4}, lambda {}, fallback {}",
                out.lambda, out.fallback
            );
            encoder = out.encoder;
            trace.lambdas.push(out.lambda);
            trace.fallbacks.push(out.fallback);
        }
        trace.accuracies.push(acc_next);
        trace.prefixes.push(next.clone());
        prefix = next;
    }
    Ok(PretrainOutcome {
        trace,
        store,
        encoder,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::utility_model::EncoderConfig;

    fn s(idx: &[usize], u: f64) -> UtilitySample {
        UtilitySample::new(idx.to_vec(), u, 0.0, Provenance::Interpolated).unwrap()
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        assert_eq!(interpolate_utility(0.0, 2.0, 0.6, 0.8), (1.0, 0.6));
        assert_eq!(interpolate_utility(3.0, 0.0, 0.6, 0.8), (0.0, 0.8));
        let (a, u) = interpolate_utility(1.5, 1.5, 0.6, 0.8);
        assert_eq!(a, 0.5);
        assert!((u - 0.7).abs() < 1e-15);
        assert_eq!(interpolate_utility(0.0, 0.0, 0.2, 0.4).0, 0.5);
    }

    #[test]
    fn two_point_set_gives_full_subsets() {
        let mut r = seeded(0);
        let (a, b) = sample_pair(&[4, 9], 50, &mut r).unwrap();
        let mut a = a;
        let mut b = b;
        a.sort();
        b.sort();
        assert_eq!(a, vec![4, 9]);
        assert_eq!(b, vec![4, 9]);
        assert!(matches!(
            sample_pair(&[1], 1, &mut r),
            Err(PretrainError::SetTooSmall(1))
        ));
    }

    #[test]
    fn store_partition_by_median_length() {
        let mut st = SampleStore::new();
        for (len, u) in [(2, 0.1), (5, 0.2), (3, 0.3), (5, 0.4), (2, 0.5)] {
            st.push(s(&(0..len).collect::<Vec<_>>(), u), 0).unwrap();
        }
        assert_eq!(st.median_length(), Some(3.0));
        let (tr, val) = st.partition();
        assert_eq!(tr, vec![0, 2, 4]);
        assert_eq!(val, vec![1, 3]);
    }

    #[test]
    fn two_sample_store_yields_one_pair() {
        let mut st = SampleStore::new();
        st.push(s(&[0, 1], 0.9), 0).unwrap();
        st.push(s(&[2, 3], 0.4), 0).unwrap();
        let pairs = build_rank_pairs(&st, 10, &mut seeded(1)).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].target, 1.0);

        let mut tie = SampleStore::new();
        tie.push(s(&[0, 1], 0.4), 0).unwrap();
        tie.push(s(&[2, 3], 0.4), 0).unwrap();
        assert_eq!(
            build_rank_pairs(&tie, 10, &mut seeded(1)).unwrap()[0].target,
            0.5
        );
    }

    #[test]
    fn mismatched_lengths_report_available_lengths() {
        let mut st = SampleStore::new();
        st.push(s(&[0, 1], 0.9), 0).unwrap();
        st.push(s(&[2, 3, 4], 0.4), 0).unwrap();
        match build_rank_pairs(&st, 10, &mut seeded(1)) {
            Err(PretrainError::NoEqualLengthPair(lens)) => assert_eq!(lens, vec![2, 3]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let mut st = SampleStore::new();
        st.push(s(&[3, 1], 0.25), 0).unwrap();
        st.push(
            UtilitySample::new(vec![7], 1.0, 0.125, Provenance::GroundTruth).unwrap(),
            2,
        )
        .unwrap();
        let mut buf = Vec::new();
        st.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("\"provenance\":\"interpolated\""));
        assert!(text.contains("\"iteration\":2"));
        assert_eq!(SampleStore::read_jsonl(&buf[..]).unwrap(), st);
    }

    #[test]
    fn empty_store_is_an_error() {
        let enc = SetEncoder::new(2, &EncoderConfig::default(), 0);
        let f = Tensor::zeros(&[3, 2]);
        let cfg = FitConfig::from_rambo(&RamboConfig::default());
        assert!(matches!(
            bilevel_train(&SampleStore::new(), &enc, &f, &cfg, 0),
            Err(PretrainError::EmptyStore)
        ));
    }
}
