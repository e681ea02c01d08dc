//! The set utility model: a Deep-Sets encoder `rho(mean(phi(x)))` with a
//! scalar score head for pairwise ranking (or utility regression) and an
//! auxiliary head regressing the OT distance to the validation set.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Activation, BoundMlp, Mlp};
use crate::rng::{self, Rng};
use crate::tensor::{sigmoid, AdamState, Graph, ParamStore, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum UtilityError {
    #[error("a utility sample needs at least one index")]
    EmptySet,
    #[error("index {0} appears twice in one sample")]
    DuplicateIndex(usize),
    #[error("index {index} out of range for {rows} feature rows")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("utility {0} outside [0, 1]")]
    UtilityOutOfRange(f64),
    #[error("OT target {0} must be finite and nonnegative")]
    BadOtTarget(f64),
    #[error("pair members differ in length: {0} vs {1}")]
    UnequalLengths(usize, usize),
    #[error("no pairs to train or evaluate on")]
    NoPairs,
    #[error("invalid loss weight: {0}")]
    BadWeight(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, UtilityError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    GroundTruth,
    Interpolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilitySample {
    pub indices: Vec<usize>,
    pub utility: f64,
    /// Normalized OT distance to the validation set; `0` when not computed.
    pub ot_target: f64,
    pub provenance: Provenance,
}

impl UtilitySample {
    pub fn new(
        indices: Vec<usize>,
        utility: f64,
        ot_target: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        let s = Self {
            indices,
            utility,
            ot_target,
            provenance,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.indices.is_empty() {
            return Err(UtilityError::EmptySet);
        }
        let mut sorted = self.indices.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(UtilityError::DuplicateIndex(w[0]));
        }
        if !(0.0..=1.0).contains(&self.utility) {
            return Err(UtilityError::UtilityOutOfRange(self.utility));
        }
        if !(self.ot_target >= 0.0) || !self.ot_target.is_finite() {
            return Err(UtilityError::BadOtTarget(self.ot_target));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankPair {
    pub first: UtilitySample,
    pub second: UtilitySample,
    /// Target probability that `first` beats `second`.
    pub target: f64,
}

impl RankPair {
    /// Target is 1, 0 or 0.5 for a win, loss or tie of `first`.
    pub fn new(first: UtilitySample, second: UtilitySample) -> Result<Self> {
        if first.len() != second.len() {
            return Err(UtilityError::UnequalLengths(first.len(), second.len()));
        }
        let target = preference_target(first.utility, second.utility);
        Ok(Self {
            first,
            second,
            target,
        })
    }
}

pub fn preference_target(u1: f64, u2: f64) -> f64 {
    let diff = u1 - u2;
    if diff > 0.0 {
        1.0
    } else if diff < 0.0 {
        0.0
    } else {
        0.5
    }
}

/// Modeled probability that a set scored `s1` beats one scored `s2`.
///
/// Evaluated so that `p(a, b) + p(b, a) == 1` holds exactly in floating point.
pub fn rank_probability(s1: f64, s2: f64) -> f64 {
    let d = s1 - s2;
    if d >= 0.0 {
        sigmoid(d)
    } else {
        1.0 - sigmoid(-d)
    }
}

/// Binary cross entropy of a modeled probability against a target.
pub fn bce(p: f64, target: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    -target * p.ln() - (1.0 - target) * (1.0 - p).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OtLossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for OtLossWeights {
    fn default() -> Self {
        Self {
            lambda1: 0.5,
            lambda2: 0.5,
            lambda3: 1.0,
        }
    }
}

/// Squared errors on both OT predictions plus a penalty on negative
/// predictions (the penalty term is itself nonnegative).
pub fn ot_loss(pred1: f64, pred2: f64, target1: f64, target2: f64, w: &OtLossWeights) -> f64 {
    w.lambda1 * (pred1 - target1).powi(2) + w.lambda2 * (pred2 - target2).powi(2)
        - w.lambda3 * (pred1.min(0.0) + pred2.min(0.0))
}

/// How the score head is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Linear score, pairwise BCE on `sigmoid(s1 - s2)`.
    RankNet,
    /// Sigmoid-bounded small MLP regressing the utility with MSE.
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Hidden and output widths of `phi`, after the input width.
    pub phi_widths: Vec<usize>,
    /// Widths of `rho` after the pooled input; the last is the embedding size.
    pub rho_widths: Vec<usize>,
    pub ot_hidden: usize,
    pub regression_hidden: usize,
    pub objective: Objective,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            phi_widths: vec![64, 64],
            rho_widths: vec![64, 32],
            ot_hidden: 16,
            regression_hidden: 16,
            objective: Objective::RankNet,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_ot: f64,
    pub ot_weights: OtLossWeights,
    /// Strength of the `lambda * ||w||^2` penalty.
    pub weight_decay: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_ot: 1.0,
            ot_weights: OtLossWeights::default(),
            weight_decay: 0.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.ot_weights;
        for (name, v) in [
            ("lambda_ot", self.lambda_ot),
            ("lambda1", w.lambda1),
            ("lambda2", w.lambda2),
            ("lambda3", w.lambda3),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(UtilityError::BadWeight(format!("{name} = {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetOutput {
    pub score: f64,
    pub ot_pred: f64,
}

/// Mean loss components over a set of pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub rank: f64,
    /// `None` when `lambda_ot == 0`, in which case the OT head is not evaluated.
    pub ot: Option<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetEncoder {
    params: ParamStore,
    phi: Mlp,
    rho: Mlp,
    score_head: Mlp,
    ot_head: Mlp,
    input_dim: usize,
    config: EncoderConfig,
}

struct Bound {
    phi: BoundMlp,
    rho: BoundMlp,
    score: BoundMlp,
    ot: BoundMlp,
}

struct BatchVars {
    rank: Var,
    ot: Option<Var>,
    total: Var,
}

impl SetEncoder {
    pub fn new(input_dim: usize, config: &EncoderConfig, seed: u64) -> Self {
        let mut params = ParamStore::new();
        let mut r = rng::stream(seed, rng::tag("set-encoder-init"));
        let mut phi_w = vec![input_dim];
        phi_w.extend_from_slice(&config.phi_widths);
        let phi = Mlp::new(&mut params, "phi", &phi_w, Activation::Relu, &mut r);
        let mut rho_w = vec![phi.out_dim()];
        rho_w.extend_from_slice(&config.rho_widths);
        let rho = Mlp::new(&mut params, "rho", &rho_w, Activation::Sigmoid, &mut r);
        let emb = rho.out_dim();
        let score_head = match config.objective {
            Objective::RankNet => Mlp::new(
                &mut params,
                "score",
                &[emb, 1],
                Activation::Identity,
                &mut r,
            ),
            Objective::Regression => Mlp::new(
                &mut params,
                "score",
                &[emb, config.regression_hidden, 1],
                Activation::Sigmoid,
                &mut r,
            ),
        };
        let ot_head = Mlp::new(
            &mut params,
            "ot",
            &[emb, config.ot_hidden, 1],
            Activation::Identity,
            &mut r,
        );
        Self {
            params,
            phi,
            rho,
            score_head,
            ot_head,
            input_dim,
            config: config.clone(),
        }
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn embedding_dim(&self) -> usize {
        self.rho.out_dim()
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn objective(&self) -> Objective {
        self.config.objective
    }

    fn check_set(&self, indices: &[usize], features: &Tensor) -> Result<()> {
        if indices.is_empty() {
            return Err(UtilityError::EmptySet);
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= features.rows()) {
            return Err(UtilityError::IndexOutOfRange {
                index: bad,
                rows: features.rows(),
            });
        }
        if features.cols() != self.input_dim {
            return Err(TensorError::ShapeMismatch {
                op: "encode_set",
                lhs: vec![features.rows(), features.cols()],
                rhs: vec![self.input_dim],
            }
            .into());
        }
        Ok(())
    }

    /// `phi` of the given feature rows.
    pub fn phi_rows(&self, features: &Tensor, rows: &[usize]) -> Result<Tensor> {
        Ok(self.phi.apply(&self.params, &features.select_rows(rows))?)
    }

    /// Embedding of a pooled `phi` vector.
    pub fn embed_pooled(&self, pooled: &[f64]) -> Result<Vec<f64>> {
        let x = Tensor::row(pooled.to_vec())?;
        Ok(self.rho.apply(&self.params, &x)?.into_data())
    }

    pub fn heads(&self, embedding: &[f64]) -> Result<SetOutput> {
        let e = Tensor::row(embedding.to_vec())?;
        Ok(SetOutput {
            score: self.score_head.apply(&self.params, &e)?.data()[0],
            ot_pred: self.ot_head.apply(&self.params, &e)?.data()[0],
        })
    }

    pub fn score_embedding(&self, embedding: &[f64]) -> Result<f64> {
        let e = Tensor::row(embedding.to_vec())?;
        Ok(self.score_head.apply(&self.params, &e)?.data()[0])
    }

    /// Pooled embedding of a set of feature rows.
    pub fn embed_set(&self, indices: &[usize], features: &Tensor) -> Result<Vec<f64>> {
        self.check_set(indices, features)?;
        let (rows, weights) = pooling_weights(indices);
        let phi = self.phi_rows(features, &rows)?;
        self.embed_pooled(&weighted_row_sum(&phi, &weights))
    }

    /// Embedding, score and OT prediction of a set. Invariant to the order of
    /// `indices`.
    pub fn encode_set(
        &self,
        indices: &[usize],
        features: &Tensor,
    ) -> Result<(Vec<f64>, SetOutput)> {
        let emb = self.embed_set(indices, features)?;
        let out = self.heads(&emb)?;
        Ok((emb, out))
    }

    fn bind(&self, g: &mut Graph) -> Result<Bound> {
        Ok(Bound {
            phi: self.phi.bind(g, &self.params)?,
            rho: self.rho.bind(g, &self.params)?,
            score: self.score_head.bind(g, &self.params)?,
            ot: self.ot_head.bind(g, &self.params)?,
        })
    }

    /// Records the mean losses of `pairs` on `g`.
    ///
    /// `phi` is evaluated once on the union of member rows; each set's mean
    /// pool is then a row of a constant averaging matrix times that block.
    fn record_batch(
        &self,
        g: &mut Graph,
        b: &Bound,
        pairs: &[&RankPair],
        features: &Tensor,
        loss: &LossConfig,
    ) -> Result<BatchVars> {
        let p = pairs.len();
        if p == 0 {
            return Err(UtilityError::NoPairs);
        }
        let sets: Vec<&UtilitySample> = pairs
            .iter()
            .map(|pr| &pr.first)
            .chain(pairs.iter().map(|pr| &pr.second))
            .collect();
        for s in &sets {
            self.check_set(&s.indices, features)?;
        }
        let mut union: Vec<usize> = sets
            .iter()
            .flat_map(|s| s.indices.iter().copied())
            .collect();
        union.sort_unstable();
        union.dedup();
        let u = union.len();
        let mut avg = vec![0.0; 2 * p * u];
        for (r, s) in sets.iter().enumerate() {
            let w = 1.0 / s.len() as f64;
            for &i in &s.indices {
                let pos = union.binary_search(&i).expect("member of union");
                avg[r * u + pos] += w;
            }
        }
        let x = g.input(features.select_rows(&union))?;
        let phi = b.phi.forward(g, x)?;
        let a = g.input(Tensor::matrix(2 * p, u, avg)?)?;
        let pooled = g.matmul(a, phi)?;
        let emb = b.rho.forward(g, pooled)?;
        let score = b.score.forward(g, emb)?;

        let rank = match self.config.objective {
            Objective::RankNet => {
                let mut d = vec![0.0; p * 2 * p];
                for k in 0..p {
                    d[k * 2 * p + k] = 1.0;
                    d[k * 2 * p + p + k] = -1.0;
                }
                let d = g.input(Tensor::matrix(p, 2 * p, d)?)?;
                let diff = g.matmul(d, score)?;
                let prob = g.sigmoid(diff)?;
                let t = g.input(Tensor::matrix(
                    p,
                    1,
                    pairs.iter().map(|pr| pr.target).collect(),
                )?)?;
                g.bce(prob, t)?
            }
            Objective::Regression => {
                let t = g.input(Tensor::matrix(
                    2 * p,
                    1,
                    sets.iter().map(|s| s.utility).collect(),
                )?)?;
                g.mse(score, t)?
            }
        };

        if loss.lambda_ot == 0.0 {
            return Ok(BatchVars {
                rank,
                ot: None,
                total: rank,
            });
        }
        let w = &loss.ot_weights;
        let ot = b.ot.forward(g, emb)?;
        let select = |g: &mut Graph, offset: usize| -> Result<Var> {
            let mut e = vec![0.0; p * 2 * p];
            for k in 0..p {
                e[k * 2 * p + offset + k] = 1.0;
            }
            Ok(g.input(Tensor::matrix(p, 2 * p, e)?)?)
        };
        let e1 = select(g, 0)?;
        let e2 = select(g, p)?;
        let o1 = g.matmul(e1, ot)?;
        let o2 = g.matmul(e2, ot)?;
        let t1 = g.input(Tensor::matrix(
            p,
            1,
            pairs.iter().map(|pr| pr.first.ot_target).collect(),
        )?)?;
        let t2 = g.input(Tensor::matrix(
            p,
            1,
            pairs.iter().map(|pr| pr.second.ot_target).collect(),
        )?)?;
        let m1 = g.mse(o1, t1)?;
        let m1 = g.scale(m1, w.lambda1)?;
        let m2 = g.mse(o2, t2)?;
        let m2 = g.scale(m2, w.lambda2)?;
        let n1 = g.neg_part(o1)?;
        let n1 = g.sum(n1)?;
        let n2 = g.neg_part(o2)?;
        let n2 = g.sum(n2)?;
        let neg = g.add(n1, n2)?;
        let neg = g.scale(neg, -w.lambda3 / p as f64)?;
        let sq = g.add(m1, m2)?;
        let ot_loss = g.add(sq, neg)?;
        let weighted = g.scale(ot_loss, loss.lambda_ot)?;
        let total = g.add(rank, weighted)?;
        Ok(BatchVars {
            rank,
            ot: Some(ot_loss),
            total,
        })
    }

    /// Mean loss components over `pairs`, without the weight penalty.
    pub fn batch_loss(
        &self,
        pairs: &[&RankPair],
        features: &Tensor,
        loss: &LossConfig,
    ) -> Result<LossBreakdown> {
        loss.validate()?;
        let mut g = Graph::new();
        let b = self.bind(&mut g)?;
        let v = self.record_batch(&mut g, &b, pairs, features, loss)?;
        Ok(LossBreakdown {
            rank: g.value(v.rank).item()?,
            ot: v.ot.map(|o| g.value(o).item()).transpose()?,
            total: g.value(v.total).item()?,
        })
    }

    /// Training objective (mean total loss plus `weight_decay * ||w||^2`) and
    /// its gradient for every parameter.
    pub fn objective_and_grads(
        &self,
        pairs: &[&RankPair],
        features: &Tensor,
        loss: &LossConfig,
    ) -> Result<(f64, Vec<Tensor>)> {
        loss.validate()?;
        let mut g = Graph::new();
        let b = self.bind(&mut g)?;
        let v = self.record_batch(&mut g, &b, pairs, features, loss)?;
        let mut value = g.value(v.total).item()?;
        let mut grads = g.backward(v.total)?.for_params(&self.params);
        if loss.weight_decay > 0.0 {
            value += loss.weight_decay * self.params.sq_norm();
            for (gt, w) in grads.iter_mut().zip(self.params.tensors()) {
                for (gv, wv) in gt.data_mut().iter_mut().zip(w.data()) {
                    *gv += 2.0 * loss.weight_decay * wv;
                }
            }
        }
        Ok((value, grads))
    }

    /// Mean total loss over all `pairs`, evaluated in chunks.
    pub fn mean_total_loss(
        &self,
        pairs: &[RankPair],
        features: &Tensor,
        loss: &LossConfig,
        chunk: usize,
    ) -> Result<f64> {
        if pairs.is_empty() {
            return Err(UtilityError::NoPairs);
        }
        let mut sum = 0.0;
        for c in pairs.chunks(chunk.max(1)) {
            let refs: Vec<&RankPair> = c.iter().collect();
            sum += self.batch_loss(&refs, features, loss)?.total * c.len() as f64;
        }
        Ok(sum / pairs.len() as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            input_dim: self.input_dim,
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|(name, t)| CheckpointTensor {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(UtilityError::Checkpoint(format!(
                "unsupported format version {} (expected {CHECKPOINT_VERSION})",
                ck.format_version
            )));
        }
        let mut enc = Self::new(ck.input_dim, &ck.config, 0);
        if ck.params.len() != enc.params.len() {
            return Err(UtilityError::Checkpoint(format!(
                "expected {} tensors, found {}",
                enc.params.len(),
                ck.params.len()
            )));
        }
        let mut values = Vec::with_capacity(ck.params.len());
        for (id, t) in enc.params.ids().zip(&ck.params) {
            if enc.params.name(id) != t.name {
                return Err(UtilityError::Checkpoint(format!(
                    "expected tensor {}, found {}",
                    enc.params.name(id),
                    t.name
                )));
            }
            values.push(Tensor::new(t.shape.clone(), t.data.clone())?);
        }
        enc.params.load(values)?;
        Ok(enc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, json).map_err(|source| UtilityError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| UtilityError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_checkpoint(&serde_json::from_str(&text)?)
    }
}

/// Sorted distinct rows of a multiset and the pooling weight of each.
fn pooling_weights(indices: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let w = 1.0 / indices.len() as f64;
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for &i in indices {
        *counts.entry(i).or_insert(0.0) += w;
    }
    counts.into_iter().unzip()
}

fn weighted_row_sum(rows: &Tensor, weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows.cols()];
    for (r, &w) in weights.iter().enumerate() {
        for (o, v) in out.iter_mut().zip(rows.row_slice(r)) {
            *o += w * v;
        }
    }
    out
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Versioned JSON snapshot of an encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub input_dim: usize,
    pub config: EncoderConfig,
    pub params: Vec<CheckpointTensor>,
}

/// Mean rank loss of a single pair.
pub fn rank_loss(encoder: &SetEncoder, pair: &RankPair, features: &Tensor) -> Result<f64> {
    let loss = LossConfig {
        lambda_ot: 0.0,
        ..LossConfig::default()
    };
    Ok(encoder.batch_loss(&[pair], features, &loss)?.rank)
}

/// Total loss of a single pair: rank loss plus `lambda_ot` times the OT loss.
pub fn total_loss(
    encoder: &SetEncoder,
    pair: &RankPair,
    features: &Tensor,
    lambda_ot: f64,
    ot_weights: &OtLossWeights,
) -> Result<f64> {
    let loss = LossConfig {
        lambda_ot,
        ot_weights: *ot_weights,
        weight_decay: 0.0,
    };
    Ok(encoder.batch_loss(&[pair], features, &loss)?.total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpochConfig {
    pub batch_size: usize,
    pub loss: LossConfig,
}

impl Default for EpochConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            loss: LossConfig::default(),
        }
    }
}

/// One shuffled pass of minibatched Adam over `pairs`. Returns the mean
/// training objective over the minibatches, weighted by their size.
pub fn train_epoch(
    encoder: &mut SetEncoder,
    pairs: &[RankPair],
    features: &Tensor,
    adam: &mut AdamState,
    cfg: &EpochConfig,
    rng: &mut Rng,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(UtilityError::NoPairs);
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(rng);
    let mut sum = 0.0;
    for chunk in order.chunks(cfg.batch_size.max(1)) {
        let batch: Vec<&RankPair> = chunk.iter().map(|&i| &pairs[i]).collect();
        let (value, grads) = encoder.objective_and_grads(&batch, features, &cfg.loss)?;
        adam.step(&mut encoder.params, &grads)?;
        sum += value * chunk.len() as f64;
    }
    Ok(sum / pairs.len() as f64)
}

/// Scores candidate sets with a frozen utility model.
pub trait SetScorer {
    fn score_set(&self, indices: &[usize]) -> Result<f64>;
}

/// [`SetScorer`] over a frozen encoder with `phi` precomputed for a fixed
/// universe of rows, so scoring a set costs one pooled sum plus `rho`.
#[derive(Debug, Clone)]
pub struct CachedScorer<'a> {
    encoder: &'a SetEncoder,
    slot: Vec<Option<usize>>,
    phi: Tensor,
}

impl<'a> CachedScorer<'a> {
    pub fn new(encoder: &'a SetEncoder, features: &Tensor, rows: &[usize]) -> Result<Self> {
        let mut distinct = rows.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        if let Some(&bad) = distinct.iter().find(|&&i| i >= features.rows()) {
            return Err(UtilityError::IndexOutOfRange {
                index: bad,
                rows: features.rows(),
            });
        }
        if features.cols() != encoder.input_dim {
            return Err(TensorError::ShapeMismatch {
                op: "cached_scorer",
                lhs: vec![features.rows(), features.cols()],
                rhs: vec![encoder.input_dim],
            }
            .into());
        }
        let mut slot = vec![None; features.rows()];
        for (k, &i) in distinct.iter().enumerate() {
            slot[i] = Some(k);
        }
        let phi = if distinct.is_empty() {
            Tensor::zeros(&[0, encoder.phi.out_dim()])
        } else {
            encoder.phi_rows(features, &distinct)?
        };
        Ok(Self { encoder, slot, phi })
    }
}

impl SetScorer for CachedScorer<'_> {
    fn score_set(&self, indices: &[usize]) -> Result<f64> {
        if indices.is_empty() {
            return Err(UtilityError::EmptySet);
        }
        let (rows, weights) = pooling_weights(indices);
        let mut pooled = vec![0.0; self.phi.cols()];
        for (&i, &w) in rows.iter().zip(&weights) {
            let k = self
                .slot
                .get(i)
                .copied()
                .flatten()
                .ok_or(UtilityError::IndexOutOfRange {
                    index: i,
                    rows: self.slot.len(),
                })?;
            pooled
                .iter_mut()
                .zip(self.phi.row_slice(k))
                .for_each(|(o, v)| *o += w * v);
        }
        let emb = self.encoder.embed_pooled(&pooled)?;
        self.encoder.score_embedding(&emb)
    }
}

impl SetScorer for (&SetEncoder, &Tensor) {
    fn score_set(&self, indices: &[usize]) -> Result<f64> {
        Ok(self.0.encode_set(indices, self.1)?.1.score)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng as _;

    fn features(n: usize, d: usize, seed: u64) -> Tensor {
        let mut r = seeded(seed);
        Tensor::matrix(
            n,
            d,
            (0..n * d).map(|_| r.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn sample(idx: &[usize], u: f64, ot: f64) -> UtilitySample {
        UtilitySample::new(idx.to_vec(), u, ot, Provenance::GroundTruth).unwrap()
    }

    #[test]
    fn sample_validation() {
        assert!(matches!(
            UtilitySample::new(vec![], 0.5, 0.0, Provenance::GroundTruth),
            Err(UtilityError::EmptySet)
        ));
        assert!(matches!(
            UtilitySample::new(vec![1, 2, 1], 0.5, 0.0, Provenance::GroundTruth),
            Err(UtilityError::DuplicateIndex(1))
        ));
        assert!(UtilitySample::new(vec![1], 1.5, 0.0, Provenance::GroundTruth).is_err());
        assert!(UtilitySample::new(vec![1], 0.5, -0.1, Provenance::GroundTruth).is_err());
    }

    #[test]
    fn pair_targets_follow_utilities() {
        let p = RankPair::new(sample(&[0], 0.9, 0.0), sample(&[1], 0.1, 0.0)).unwrap();
        assert_eq!(p.target, 1.0);
        let p = RankPair::new(sample(&[0], 0.1, 0.0), sample(&[1], 0.9, 0.0)).unwrap();
        assert_eq!(p.target, 0.0);
        let p = RankPair::new(sample(&[0], 0.4, 0.0), sample(&[1], 0.4, 0.0)).unwrap();
        assert_eq!(p.target, 0.5);
        assert!(matches!(
            RankPair::new(sample(&[0], 0.4, 0.0), sample(&[1, 2], 0.4, 0.0)),
            Err(UtilityError::UnequalLengths(1, 2))
        ));
    }

    #[test]
    fn rank_probability_examples() {
        assert_eq!(rank_probability(0.3, 0.3), 0.5);
        assert!(rank_probability(10.0, 0.0) > 0.9999);
        for (a, b) in [(0.1, 0.7), (-3.3, 2.2), (1e-9, 0.0), (40.0, -2.0)] {
            assert_eq!(rank_probability(a, b) + rank_probability(b, a), 1.0);
        }
    }

    #[test]
    fn ot_loss_examples() {
        let w = OtLossWeights::default();
        assert_eq!(ot_loss(0.3, 0.7, 0.3, 0.7, &w), 0.0);
        assert_eq!(ot_loss(-1.0, 0.5, 0.0, 0.5, &w), 1.5);
    }

    #[test]
    fn empty_set_is_rejected() {
        let enc = SetEncoder::new(3, &EncoderConfig::default(), 0);
        assert!(matches!(
            enc.encode_set(&[], &features(4, 3, 0)),
            Err(UtilityError::EmptySet)
        ));
    }

    #[test]
    fn duplicated_rows_pool_like_one() {
        let enc = SetEncoder::new(3, &EncoderConfig::default(), 1);
        let mut f = features(3, 3, 1);
        let row: Vec<f64> = f.row_slice(0).to_vec();
        f.data_mut()[3..6].copy_from_slice(&row);
        let (e1, o1) = enc.encode_set(&[0], &f).unwrap();
        let (e2, o2) = enc.encode_set(&[0, 1], &f).unwrap();
        for (a, b) in e1.iter().zip(&e2) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((o1.score - o2.score).abs() < 1e-12);
    }

    #[test]
    fn embedding_has_configured_width_and_sigmoid_range() {
        let enc = SetEncoder::new(4, &EncoderConfig::default(), 2);
        let (e, _) = enc.encode_set(&[0, 2, 3], &features(5, 4, 2)).unwrap();
        assert_eq!(e.len(), 32);
        assert!(e.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn batched_graph_agrees_with_plain_encoding() {
        let f = features(12, 3, 3);
        let enc = SetEncoder::new(3, &EncoderConfig::default(), 3);
        let pair =
            RankPair::new(sample(&[0, 4, 7], 0.8, 0.3), sample(&[2, 4, 9], 0.6, 0.1)).unwrap();
        let (_, a) = enc.encode_set(&pair.first.indices, &f).unwrap();
        let (_, b) = enc.encode_set(&pair.second.indices, &f).unwrap();
        let expected = bce(rank_probability(a.score, b.score), 1.0);
        let got = rank_loss(&enc, &pair, &f).unwrap();
        assert!((got - expected).abs() < 1e-12);
        let w = OtLossWeights::default();
        let expected_total = expected + 2.0 * ot_loss(a.ot_pred, b.ot_pred, 0.3, 0.1, &w);
        let got_total = total_loss(&enc, &pair, &f, 2.0, &w).unwrap();
        assert!((got_total - expected_total).abs() < 1e-12);
    }

    #[test]
    fn zero_lambda_ot_total_is_rank_loss_bitwise() {
        let f = features(8, 2, 4);
        let enc = SetEncoder::new(2, &EncoderConfig::default(), 4);
        let pair = RankPair::new(sample(&[0, 1], 0.2, 0.5), sample(&[2, 5], 0.7, 0.9)).unwrap();
        let r = rank_loss(&enc, &pair, &f).unwrap();
        let t = total_loss(&enc, &pair, &f, 0.0, &OtLossWeights::default()).unwrap();
        assert_eq!(r.to_bits(), t.to_bits());
    }

    #[test]
    fn single_pair_is_learned() {
        let f = features(10, 3, 5);
        let mut enc = SetEncoder::new(3, &EncoderConfig::default(), 5);
        let pair =
            RankPair::new(sample(&[0, 1, 2], 0.9, 0.2), sample(&[5, 6, 7], 0.3, 0.4)).unwrap();
        let mut adam = AdamState::new(enc.params(), 1e-3);
        let cfg = EpochConfig::default();
        let mut r = seeded(0);
        let pairs = vec![pair.clone()];
        for _ in 0..200 {
            let l = train_epoch(&mut enc, &pairs, &f, &mut adam, &cfg, &mut r).unwrap();
            assert!(l.is_finite());
        }
        assert!(rank_loss(&enc, &pair, &f).unwrap() < 0.1);
    }

    #[test]
    fn cached_scorer_matches_direct_encoding() {
        let f = features(20, 3, 6);
        let enc = SetEncoder::new(3, &EncoderConfig::default(), 6);
        let cached = CachedScorer::new(&enc, &f, &(0..15).collect::<Vec<_>>()).unwrap();
        for set in [vec![1, 5, 9], vec![14, 2], vec![3, 11, 13, 0]] {
            let direct = (&enc, &f).score_set(&set).unwrap();
            assert!((cached.score_set(&set).unwrap() - direct).abs() < 1e-12);
        }
        assert!(matches!(
            cached.score_set(&[1, 16]),
            Err(UtilityError::IndexOutOfRange { index: 16, .. })
        ));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.json");
        let cfg = EncoderConfig {
            objective: Objective::Regression,
            ..EncoderConfig::default()
        };
        let enc = SetEncoder::new(5, &cfg, 9);
        enc.save(&path).unwrap();
        let back = SetEncoder::load(&path).unwrap();
        assert_eq!(back, enc);
        let mut ck = enc.to_checkpoint();
        ck.format_version = 99;
        assert!(matches!(
            SetEncoder::from_checkpoint(&ck),
            Err(UtilityError::Checkpoint(_))
        ));
    }
}
