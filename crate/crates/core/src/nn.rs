//! Fully connected building blocks on top of [`crate::tensor`].

use rand::Rng as _;

use crate::rng::Rng;
use crate::tensor::{Graph, ParamId, ParamStore, Result, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply_graph(self, g: &mut Graph, x: Var) -> Result<Var> {
        match self {
            Activation::Identity => Ok(x),
            Activation::Relu => g.relu(x),
            Activation::Sigmoid => g.sigmoid(x),
        }
    }

    fn apply_in_place(self, data: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => data.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => data
                .iter_mut()
                .for_each(|v| *v = crate::tensor::sigmoid(*v)),
        }
    }
}

/// Affine layer `x W + b` with `W: fan_in x fan_out`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// He-uniform weights, zero bias.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut Rng,
    ) -> Self {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let weight = store.add(
            format!("{name}.weight"),
            Tensor::matrix(fan_in, fan_out, w).expect("finite init"),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[1, fan_out]));
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    /// Non-recorded forward pass.
    pub fn apply(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let mut out = x.matmul(store.get(self.weight))?;
        let b = store.get(self.bias).data();
        for row in out.data_mut().chunks_mut(self.fan_out) {
            row.iter_mut().zip(b).for_each(|(o, v)| *o += v);
        }
        Ok(out)
    }
}

/// Stack of linear layers with ReLU between them and a configurable output
/// activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub output: Activation,
}

/// An [`Mlp`] whose parameters have been placed on a particular graph.
#[derive(Debug, Clone)]
pub struct BoundMlp {
    layers: Vec<(Var, Var)>,
    output: Activation,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        output: Activation,
        rng: &mut Rng,
    ) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers, output }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> Result<BoundMlp> {
        let layers = self
            .layers
            .iter()
            .map(|l| Ok((g.param(store, l.weight)?, g.param(store, l.bias)?)))
            .collect::<Result<_>>()?;
        Ok(BoundMlp {
            layers,
            output: self.output,
        })
    }

    pub fn apply(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(store, &h)?;
            let act = if i + 1 == self.layers.len() {
                self.output
            } else {
                Activation::Relu
            };
            act.apply_in_place(h.data_mut());
        }
        Ok(h)
    }

    /// Output of every hidden layer followed by the final output.
    pub fn apply_all(&self, store: &ParamStore, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut outs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(store, &h)?;
            let act = if i + 1 == self.layers.len() {
                self.output
            } else {
                Activation::Relu
            };
            act.apply_in_place(h.data_mut());
            outs.push(h.clone());
        }
        Ok(outs)
    }
}

impl BoundMlp {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = g.matmul(h, w)?;
            h = g.add(h, b)?;
            let act = if i + 1 == self.layers.len() {
                self.output
            } else {
                Activation::Relu
            };
            h = act.apply_graph(g, h)?;
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn graph_and_plain_forward_agree() {
        let mut store = ParamStore::new();
        let mut rng = seeded(3);
        let mlp = Mlp::new(&mut store, "m", &[3, 5, 2], Activation::Sigmoid, &mut rng);
        let x = Tensor::matrix(2, 3, vec![0.1, -0.2, 0.3, 0.5, 0.0, -1.0]).unwrap();
        let plain = mlp.apply(&store, &x).unwrap();
        let mut g = Graph::new();
        let bound = mlp.bind(&mut g, &store).unwrap();
        let xv = g.input(x).unwrap();
        let y = bound.forward(&mut g, xv).unwrap();
        assert_eq!(g.value(y), &plain);
    }
}
