//! The downstream classifier: a small ReLU MLP trained from scratch with Adam
//! on cross entropy until training accuracy exceeds a threshold.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::{DataError, LabelSource, PoolSplit};
use crate::nn::{Activation, Mlp};
use crate::rng;
use crate::tensor::{softmax_rows, AdamState, Graph, ParamStore, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("cannot train on an empty labeled set")]
    EmptyLabeledSet,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, ClassifierError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub max_epochs: usize,
    /// Training stops once training accuracy is strictly above this.
    pub target_train_accuracy: f64,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            max_epochs: 100,
            target_train_accuracy: 0.99,
            lr: 0.001,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpClassifier {
    params: ParamStore,
    mlp: Mlp,
    num_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub final_train_accuracy: f64,
    /// Filled by [`utility`]; `None` straight out of [`train`].
    pub val_accuracy: Option<f64>,
    pub seed: u64,
}

impl MlpClassifier {
    pub fn new(dim: usize, num_classes: usize, hidden: &[usize], seed: u64) -> Self {
        let mut params = ParamStore::new();
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(dim);
        widths.extend_from_slice(hidden);
        widths.push(num_classes);
        let mlp = Mlp::new(
            &mut params,
            "clf",
            &widths,
            Activation::Identity,
            &mut rng::stream(seed, rng::tag("classifier-init")),
        );
        Self {
            params,
            mlp,
            num_classes,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Class probabilities, one row per input row.
    pub fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        Ok(softmax_rows(&self.mlp.apply(&self.params, x)?))
    }

    pub fn predict_proba_rows(&self, features: &Tensor, indices: &[usize]) -> Result<Tensor> {
        self.predict_proba(&features.select_rows(indices))
    }

    /// Last hidden activation, used as the representation for diversity
    /// baselines.
    pub fn penultimate(&self, x: &Tensor) -> Result<Tensor> {
        let mut outs = self.mlp.apply_all(&self.params, x)?;
        outs.pop();
        Ok(outs.pop().unwrap_or_else(|| x.clone()))
    }

    /// Penultimate activations and class probabilities in one pass.
    pub fn embed_and_predict(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut outs = self.mlp.apply_all(&self.params, x)?;
        let logits = outs.pop().expect("at least one layer");
        let hidden = outs.pop().unwrap_or_else(|| x.clone());
        Ok((hidden, softmax_rows(&logits)))
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok((0..p.rows()).map(|r| argmax(p.row_slice(r))).collect())
    }

    /// Fraction of `indices` whose label (as visible through `data`) is
    /// predicted correctly.
    pub fn accuracy<D: LabelSource>(&self, data: &D, indices: &[usize]) -> Result<f64> {
        if indices.is_empty() {
            return Ok(0.0);
        }
        let preds = self.predict(&data.features().select_rows(indices))?;
        let mut correct = 0usize;
        for (&i, p) in indices.iter().zip(preds) {
            if data.label(i)? == p {
                correct += 1;
            }
        }
        Ok(correct as f64 / indices.len() as f64)
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = j;
        }
    }
    best
}

/// Trains a freshly initialized classifier on `labeled`.
pub fn train<D: LabelSource>(
    labeled: &[usize],
    data: &D,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<(MlpClassifier, TrainReport)> {
    if labeled.is_empty() {
        return Err(ClassifierError::EmptyLabeledSet);
    }
    let features = data.features();
    let labels = labeled
        .iter()
        .map(|&i| data.label(i))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut clf = MlpClassifier::new(features.cols(), data.num_classes(), &cfg.hidden, seed);
    let mut adam = AdamState::new(&clf.params, cfg.lr);
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    let mut shuffle_rng = rng::stream(seed, rng::tag("classifier-batches"));
    let x_all = features.select_rows(labeled);
    let batch = cfg.batch_size.max(1);

    let mut epochs_run = 0;
    let mut train_acc = 0.0;
    for _ in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(batch) {
            let rows: Vec<usize> = chunk.iter().map(|&p| labeled[p]).collect();
            let y: Vec<usize> = chunk.iter().map(|&p| labels[p]).collect();
            let mut g = Graph::new();
            let bound = clf.mlp.bind(&mut g, &clf.params)?;
            let x = g.input(features.select_rows(&rows))?;
            let logits = bound.forward(&mut g, x)?;
            let loss = g.cross_entropy(logits, &y)?;
            let grads = g.backward(loss)?.for_params(&clf.params);
            adam.step(&mut clf.params, &grads)?;
        }
        epochs_run += 1;
        let preds = clf.predict(&x_all)?;
        train_acc =
            preds.iter().zip(&labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64;
        if train_acc > cfg.target_train_accuracy {
            break;
        }
    }
    Ok((
        clf,
        TrainReport {
            epochs_run,
            final_train_accuracy: train_acc,
            val_accuracy: None,
            seed,
        },
    ))
}

/// Initialization seed for training on `labeled` within run `run_seed`;
/// identical sets map to identical seeds regardless of order.
pub fn init_seed(run_seed: u64, labeled: &[usize]) -> u64 {
    rng::derive(run_seed, rng::hash_indices(labeled))
}

/// Ground-truth utility of a labeled set: validation accuracy of a classifier
/// trained on it from a fresh initialization.
pub fn utility<D: LabelSource>(
    labeled: &[usize],
    data: &D,
    split: &PoolSplit,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<f64> {
    Ok(utility_report(labeled, data, split, seed, cfg)?
        .1
        .val_accuracy
        .unwrap_or(0.0))
}

/// Like [`utility`] but also returns the trained model and its report.
pub fn utility_report<D: LabelSource>(
    labeled: &[usize],
    data: &D,
    split: &PoolSplit,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<(MlpClassifier, TrainReport)> {
    let (clf, mut report) = train(labeled, data, init_seed(seed, labeled), cfg)?;
    report.val_accuracy = Some(clf.accuracy(data, &split.val)?);
    Ok((clf, report))
}

/// Top-1 minus top-2 probability of one probability row.
pub fn margin_of(probs: &[f64]) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in probs {
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    if second == f64::NEG_INFINITY {
        return 1.0;
    }
    (first - second).clamp(0.0, 1.0)
}

/// Margin score for every listed row of `features`.
pub fn margin_scores(
    clf: &MlpClassifier,
    indices: &[usize],
    features: &Tensor,
) -> Result<Vec<f64>> {
    if indices.is_empty() {
        return Ok(Vec::new());
    }
    let p = clf.predict_proba_rows(features, indices)?;
    Ok((0..p.rows()).map(|r| margin_of(p.row_slice(r))).collect())
}
