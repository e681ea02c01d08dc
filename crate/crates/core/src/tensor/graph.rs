//! Tape-based reverse-mode automatic differentiation.
//!
//! Every op appends a node holding its forward value. Nodes are created in
//! topological order by construction, so the backward pass is a single
//! reverse sweep over the node list.

use super::params::{ParamId, ParamStore};
use super::{matmul_nn, matmul_nt, matmul_tn, sigmoid, softmax_rows, Result, Tensor, TensorError};

const BCE_CLAMP: f64 = 1e-12;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    MeanPool(Var),
    Concat(Vec<Var>),
    Mse(Var, Var),
    Bce(Var, Var),
    CrossEntropy(Var, Vec<usize>),
    Sum(Var),
    NegPart(Var),
    SumSquares(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn check_finite(op: &'static str, t: Tensor) -> Result<Tensor> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(TensorError::NonFinite { op })
    }
}

fn matrix_dims(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    t.dims().map_err(|_| TensorError::NotMatrix {
        op,
        shape: t.shape().to_vec(),
    })
}

/// How the right operand of `add` is broadcast.
#[derive(Clone, Copy, PartialEq)]
enum Broadcast {
    Same,
    Row,
    Scalar,
}

fn add_broadcast(a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        return Ok(Broadcast::Same);
    }
    if b.numel() == 1 {
        return Ok(Broadcast::Scalar);
    }
    if let (Ok((_, ac)), Ok((1, bc))) = (a.dims(), b.dims()) {
        if ac == bc {
            return Ok(Broadcast::Row);
        }
    }
    Err(mismatch("add", a, b))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// A constant leaf; no gradient is propagated into it.
    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        let t = check_finite("input", t)?;
        Ok(self.push(t, Op::Input, false))
    }

    /// A leaf tracking gradients for parameter `id` of `store`.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        let t = check_finite("param", store.get(id).clone())?;
        Ok(self.push(t, Op::Param(id), true))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = matrix_dims("matmul", ta)?;
        let (k2, n) = matrix_dims("matmul", tb)?;
        if k != k2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        matmul_nn(ta.data(), tb.data(), &mut out, m, k, n);
        let t = check_finite("matmul", Tensor::raw(vec![m, n], out))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::MatMul(a, b), rg))
    }

    /// Elementwise sum; `b` may also be a `1 x n` row (added to every row of
    /// `a`) or a single value.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let mode = add_broadcast(ta, tb)?;
        let mut out = ta.data().to_vec();
        match mode {
            Broadcast::Same => out.iter_mut().zip(tb.data()).for_each(|(o, v)| *o += v),
            Broadcast::Scalar => {
                let s = tb.data()[0];
                out.iter_mut().for_each(|o| *o += s);
            }
            Broadcast::Row => {
                let c = tb.numel();
                for row in out.chunks_mut(c) {
                    row.iter_mut().zip(tb.data()).for_each(|(o, v)| *o += v);
                }
            }
        }
        let t = check_finite("add", Tensor::raw(ta.shape().to_vec(), out))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    fn zip_same(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta, tb));
        }
        let out = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        check_finite(op, Tensor::raw(ta.shape().to_vec(), out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("sub", a, b, |x, y| x - y)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("mul", a, b, |x, y| x * y)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    fn map(&mut self, op: &'static str, a: Var, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        let ta = self.value(a);
        let out = ta.data().iter().map(|x| f(*x)).collect();
        check_finite(op, Tensor::raw(ta.shape().to_vec(), out))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let t = self.map("scale", a, |x| c * x)?;
        let rg = self.needs(a);
        Ok(self.push(t, Op::Scale(a, c), rg))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let t = self.map("relu", a, |x| x.max(0.0))?;
        let rg = self.needs(a);
        Ok(self.push(t, Op::Relu(a), rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let t = self.map("sigmoid", a, sigmoid)?;
        let rg = self.needs(a);
        Ok(self.push(t, Op::Sigmoid(a), rg))
    }

    /// `min(x, 0)` elementwise.
    pub fn neg_part(&mut self, a: Var) -> Result<Var> {
        let t = self.map("neg_part", a, |x| x.min(0.0))?;
        let rg = self.needs(a);
        Ok(self.push(t, Op::NegPart(a), rg))
    }

    /// Row-wise softmax of a matrix.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        matrix_dims("softmax", ta)?;
        let t = check_finite("softmax", softmax_rows(ta))?;
        let rg = self.needs(a);
        Ok(self.push(t, Op::Softmax(a), rg))
    }

    /// Mean over rows: `n x m -> 1 x m`.
    pub fn mean_pool(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let (n, m) = matrix_dims("mean_pool", ta)?;
        if n == 0 {
            return Err(TensorError::Invalid("mean_pool over zero rows".into()));
        }
        let mut out = vec![0.0; m];
        for row in ta.data().chunks(m) {
            out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
        }
        let inv = 1.0 / n as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        let t = check_finite("mean_pool", Tensor::raw(vec![1, m], out))?;
        let rg = self.needs(a);
        Ok(self.push(t, Op::MeanPool(a), rg))
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Invalid("concat of nothing".into()))?;
        let (rows, _) = matrix_dims("concat", self.value(*first))?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let t = self.value(*p);
            let (r, c) = matrix_dims("concat", t)?;
            if r != rows {
                return Err(mismatch("concat", self.value(*first), t));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                out.extend_from_slice(self.value(*p).row_slice(r));
            }
        }
        let rg = parts.iter().any(|p| self.needs(*p));
        Ok(self.push(
            Tensor::raw(vec![rows, total], out),
            Op::Concat(parts.to_vec()),
            rg,
        ))
    }

    /// Mean squared error between equally shaped tensors, as a scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.zip_same("mse", a, b, |x, y| x - y)?;
        let n = d.numel().max(1) as f64;
        let v = d.data().iter().map(|x| x * x).sum::<f64>() / n;
        let t = check_finite("mse", Tensor::raw(vec![1, 1], vec![v]))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Mse(a, b), rg))
    }

    /// Mean binary cross entropy of probabilities `p` against targets `t`.
    /// Probabilities are clamped to `[1e-12, 1 - 1e-12]`.
    pub fn bce(&mut self, p: Var, target: Var) -> Result<Var> {
        let (tp, tt) = (self.value(p), self.value(target));
        if tp.shape() != tt.shape() {
            return Err(mismatch("bce", tp, tt));
        }
        let n = tp.numel().max(1) as f64;
        let v = tp
            .data()
            .iter()
            .zip(tt.data())
            .map(|(&p, &t)| {
                let pc = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                -t * pc.ln() - (1.0 - t) * (1.0 - pc).ln()
            })
            .sum::<f64>()
            / n;
        let t = check_finite("bce", Tensor::raw(vec![1, 1], vec![v]))?;
        let rg = self.needs(p) || self.needs(target);
        Ok(self.push(t, Op::Bce(p, target), rg))
    }

    /// Mean softmax cross entropy of `logits` (`n x C`) against class labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let tl = self.value(logits);
        let (n, c) = matrix_dims("cross_entropy", tl)?;
        if labels.len() != n {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: tl.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(TensorError::LabelOutOfRange {
                label: bad,
                classes: c,
            });
        }
        let mut total = 0.0;
        for (row, &l) in tl.data().chunks(c).zip(labels) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[l];
        }
        let t = check_finite(
            "cross_entropy",
            Tensor::raw(vec![1, 1], vec![total / n.max(1) as f64]),
        )?;
        let rg = self.needs(logits);
        Ok(self.push(t, Op::CrossEntropy(logits, labels.to_vec()), rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).data().iter().sum::<f64>();
        let t = check_finite("sum", Tensor::raw(vec![1, 1], vec![v]))?;
        let rg = self.needs(a);
        Ok(self.push(t, Op::Sum(a), rg))
    }

    pub fn sum_squares(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).sq_norm();
        let t = check_finite("sum_squares", Tensor::raw(vec![1, 1], vec![v]))?;
        let rg = self.needs(a);
        Ok(self.push(t, Op::SumSquares(a), rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(TensorError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let mut per_param = Vec::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                let g = grads[idx]
                    .clone()
                    .unwrap_or_else(|| vec![0.0; node.value.numel()]);
                per_param.push((id, Tensor::raw(node.value.shape().to_vec(), g)));
            }
        }
        if per_param
            .iter()
            .any(|(_, g)| g.data().iter().any(|v| !v.is_finite()))
        {
            return Err(TensorError::NonFinite { op: "backward" });
        }
        Ok(Gradients {
            nodes: grads,
            per_param,
        })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.needs(v) {
            return;
        }
        let n = self.value(v).numel();
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
        f(slot);
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = node.value.data();
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.rows(), ta.cols());
                let n = tb.cols();
                self.accumulate(grads, *a, |da| matmul_nt(g, tb.data(), da, m, k, n));
                self.accumulate(grads, *b, |db| matmul_tn(ta.data(), g, db, m, k, n));
            }
            Op::Add(a, b) => {
                let mode =
                    add_broadcast(self.value(*a), self.value(*b)).expect("checked in forward");
                self.accumulate(grads, *a, |da| {
                    da.iter_mut().zip(g).for_each(|(d, v)| *d += v)
                });
                self.accumulate(grads, *b, |db| match mode {
                    Broadcast::Same => db.iter_mut().zip(g).for_each(|(d, v)| *d += v),
                    Broadcast::Scalar => db[0] += g.iter().sum::<f64>(),
                    Broadcast::Row => {
                        let c = db.len();
                        for row in g.chunks(c) {
                            db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                        }
                    }
                });
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |da| {
                    da.iter_mut().zip(g).for_each(|(d, v)| *d += v)
                });
                self.accumulate(grads, *b, |db| {
                    db.iter_mut().zip(g).for_each(|(d, v)| *d -= v)
                });
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |da| {
                    for i in 0..da.len() {
                        da[i] += g[i] * tb[i];
                    }
                });
                self.accumulate(grads, *b, |db| {
                    for i in 0..db.len() {
                        db[i] += g[i] * ta[i];
                    }
                });
            }
            Op::Scale(a, c) => {
                self.accumulate(grads, *a, |da| {
                    da.iter_mut().zip(g).for_each(|(d, v)| *d += c * v)
                });
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                self.accumulate(grads, *a, |da| {
                    for i in 0..da.len() {
                        if x[i] > 0.0 {
                            da[i] += g[i];
                        }
                    }
                });
            }
            Op::NegPart(a) => {
                let x = self.value(*a).data();
                self.accumulate(grads, *a, |da| {
                    for i in 0..da.len() {
                        if x[i] < 0.0 {
                            da[i] += g[i];
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                self.accumulate(grads, *a, |da| {
                    for i in 0..da.len() {
                        da[i] += g[i] * out[i] * (1.0 - out[i]);
                    }
                });
            }
            Op::Softmax(a) => {
                let c = node.value.cols();
                self.accumulate(grads, *a, |da| {
                    for ((drow, grow), yrow) in da.chunks_mut(c).zip(g.chunks(c)).zip(out.chunks(c))
                    {
                        let dot: f64 = grow.iter().zip(yrow).map(|(x, y)| x * y).sum();
                        for j in 0..c {
                            drow[j] += yrow[j] * (grow[j] - dot);
                        }
                    }
                });
            }
            Op::MeanPool(a) => {
                let n = self.value(*a).rows() as f64;
                self.accumulate(grads, *a, |da| {
                    let m = g.len();
                    for row in da.chunks_mut(m) {
                        row.iter_mut().zip(g).for_each(|(d, v)| *d += v / n);
                    }
                });
            }
            Op::Concat(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    self.accumulate(grads, *p, |dp| {
                        for (r, drow) in dp.chunks_mut(w).enumerate() {
                            let src = &g[r * total + offset..r * total + offset + w];
                            drow.iter_mut().zip(src).for_each(|(d, v)| *d += v);
                        }
                    });
                    offset += w;
                }
            }
            Op::Mse(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                let scale = 2.0 * g[0] / ta.len().max(1) as f64;
                self.accumulate(grads, *a, |da| {
                    for i in 0..da.len() {
                        da[i] += scale * (ta[i] - tb[i]);
                    }
                });
                self.accumulate(grads, *b, |db| {
                    for i in 0..db.len() {
                        db[i] -= scale * (ta[i] - tb[i]);
                    }
                });
            }
            Op::Bce(p, t) => {
                let (tp, tt) = (self.value(*p).data(), self.value(*t).data());
                let scale = g[0] / tp.len().max(1) as f64;
                self.accumulate(grads, *p, |dp| {
                    for i in 0..dp.len() {
                        let pc = tp[i];
                        if pc > BCE_CLAMP && pc < 1.0 - BCE_CLAMP {
                            dp[i] += scale * (-tt[i] / pc + (1.0 - tt[i]) / (1.0 - pc));
                        }
                    }
                });
                self.accumulate(grads, *t, |dt| {
                    for i in 0..dt.len() {
                        let pc = tp[i].clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                        dt[i] += scale * ((1.0 - pc).ln() - pc.ln());
                    }
                });
            }
            Op::CrossEntropy(logits, labels) => {
                let tl = self.value(*logits);
                let c = tl.cols();
                let probs = softmax_rows(tl);
                let scale = g[0] / labels.len().max(1) as f64;
                self.accumulate(grads, *logits, |dl| {
                    for (r, (drow, prow)) in
                        dl.chunks_mut(c).zip(probs.data().chunks(c)).enumerate()
                    {
                        for j in 0..c {
                            let onehot = if j == labels[r] { 1.0 } else { 0.0 };
                            drow[j] += scale * (prow[j] - onehot);
                        }
                    }
                });
            }
            Op::Sum(a) => {
                self.accumulate(grads, *a, |da| da.iter_mut().for_each(|d| *d += g[0]));
            }
            Op::SumSquares(a) => {
                let x = self.value(*a).data();
                self.accumulate(grads, *a, |da| {
                    for i in 0..da.len() {
                        da[i] += 2.0 * g[0] * x[i];
                    }
                });
            }
        }
    }
}

/// Result of [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Vec<f64>>>,
    per_param: Vec<(ParamId, Tensor)>,
}

impl Gradients {
    /// Gradient with respect to any node that required one.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.nodes.get(v.0).and_then(|g| g.as_deref())
    }

    /// One gradient per parameter of `store`, in store order. Parameters that
    /// were never placed on the graph, or are unreachable from the loss, get
    /// zeros.
    pub fn for_params(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = store
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        for (id, g) in &self.per_param {
            let dst = out[id.index()].data_mut();
            dst.iter_mut().zip(g.data()).for_each(|(d, v)| *d += v);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn forward_examples() {
        let mut g = Graph::new();
        let eye = g.input(t(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        let x = g.input(t(2, 1, &[3.0, 4.0])).unwrap();
        let y = g.matmul(eye, x).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 4.0]);

        let r = g.input(Tensor::row(vec![-1.0, 0.0, 2.0]).unwrap()).unwrap();
        let r = g.relu(r).unwrap();
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);

        let z = g.input(Tensor::row(vec![0.0, 0.0]).unwrap()).unwrap();
        let s = g.softmax(z).unwrap();
        assert_eq!(g.value(s).data(), &[0.5, 0.5]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.input(Tensor::zeros(&[2, 3])).unwrap();
        let b = g.input(Tensor::zeros(&[2, 3])).unwrap();
        let err = g.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            TensorError::ShapeMismatch {
                op: "matmul",
                lhs: vec![2, 3],
                rhs: vec![2, 3]
            }
        );
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut g = Graph::new();
        let bad = Tensor::raw(vec![1, 1], vec![f64::INFINITY]);
        assert!(matches!(g.input(bad), Err(TensorError::NonFinite { .. })));
    }

    #[test]
    fn square_derivative() {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::scalar(3.0).unwrap());
        let mut g = Graph::new();
        let x = g.param(&store, id).unwrap();
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.for_params(&store)[0].data(), &[6.0]);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::row(vec![1.0, 2.0]).unwrap());
        let mut g = Graph::new();
        let c = g.input(Tensor::scalar(5.0).unwrap()).unwrap();
        let grads = g.backward(c).unwrap();
        assert_eq!(grads.for_params(&store)[0].data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_is_an_error() {
        let g = {
            let mut g = Graph::new();
            g.input(Tensor::zeros(&[1, 2])).unwrap();
            g
        };
        assert!(matches!(
            g.backward(Var(0)),
            Err(TensorError::NonScalarLoss(_))
        ));
    }

    #[test]
    fn bce_of_half_is_ln2() {
        let mut g = Graph::new();
        let p = g.input(Tensor::scalar(0.5).unwrap()).unwrap();
        let t = g.input(Tensor::scalar(1.0).unwrap()).unwrap();
        let l = g.bce(p, t).unwrap();
        assert!((g.value(l).item().unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn mean_pool_of_duplicated_rows_equals_row() {
        let mut g = Graph::new();
        let a = g.input(t(1, 3, &[0.1, 0.2, 0.3])).unwrap();
        let b = g.input(t(2, 3, &[0.1, 0.2, 0.3, 0.1, 0.2, 0.3])).unwrap();
        let pa = g.mean_pool(a).unwrap();
        let pb = g.mean_pool(b).unwrap();
        assert_eq!(g.value(pa), g.value(pb));
    }
}
