use rand::Rng;

use super::graph::{Graph, NodeId};
use super::store::{ParamId, ParamStore};
use super::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

fn uniform_init(rng: &mut impl Rng, rows: usize, cols: usize, bound: f64) -> Tensor {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(rows, cols, data)
}

/// Affine layer y = x W + b with W stored as [in, out].
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self::new_scaled(store, name, in_dim, out_dim, rng, 1.0)
    }

    /// Fan-in uniform init with the whole layer multiplied by `scale`.
    pub fn new_scaled(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
        scale: f64,
    ) -> Self {
        let bound = scale / (in_dim as f64).sqrt();
        let w = store.add_param(&format!("{name}.w"), uniform_init(rng, in_dim, out_dim, bound));
        let b = store.add_param(&format!("{name}.b"), uniform_init(rng, 1, out_dim, bound));
        Linear { w, b }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> NodeId {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let xw = g.matmul(x, w);
        g.add_row(xw, b)
    }

    pub fn apply(&self, store: &ParamStore, x: &Tensor) -> Tensor {
        x.matmul(store.get(self.w)).add_row(store.get(self.b))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputActivation {
    None,
    Tanh,
}

/// ReLU network with an optional tanh on the output layer.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub out_act: OutputActivation,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        out_act: OutputActivation,
        rng: &mut impl Rng,
    ) -> Self {
        Self::new_scaled(store, name, in_dim, hidden, out_dim, out_act, rng, 1.0)
    }

    /// `final_scale` shrinks only the output layer's init.
    #[allow(clippy::too_many_arguments)]
    pub fn new_scaled(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        out_act: OutputActivation,
        rng: &mut impl Rng,
        final_scale: f64,
    ) -> Self {
        let mut layers = Vec::new();
        let mut prev = in_dim;
        for (i, &h) in hidden.iter().enumerate() {
            layers.push(Linear::new(store, &format!("{name}.l{i}"), prev, h, rng));
            prev = h;
        }
        layers.push(Linear::new_scaled(
            store,
            &format!("{name}.l{}", hidden.len()),
            prev,
            out_dim,
            rng,
            final_scale,
        ));
        Mlp { layers, out_act }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> NodeId {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, store, h);
            if i < last {
                h = g.relu(h);
            } else if self.out_act == OutputActivation::Tanh {
                h = g.tanh(h);
            }
        }
        h
    }

    pub fn apply(&self, store: &ParamStore, x: &Tensor) -> Tensor {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(store, &h);
            if i < last {
                h = h.map(|v| v.max(0.0));
            } else if self.out_act == OutputActivation::Tanh {
                h = h.map(f64::tanh);
            }
        }
        h
    }
}

/// Batch normalization over feature columns. Training uses batch
/// statistics and folds them into running buffers; evaluation and
/// single-row batches use the running buffers.
#[derive(Clone, Copy, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        BatchNorm {
            gamma: store.add_param(&format!("{name}.gamma"), Tensor::full(1, dim, 1.0)),
            beta: store.add_param(&format!("{name}.beta"), Tensor::zeros(1, dim)),
            running_mean: store.add_buffer(&format!("{name}.running_mean"), Tensor::zeros(1, dim)),
            running_var: store.add_buffer(&format!("{name}.running_var"), Tensor::full(1, dim, 1.0)),
        }
    }

    pub fn forward_train(&self, g: &mut Graph, store: &mut ParamStore, x: NodeId) -> NodeId {
        let (m, n) = g.value(x).shape();
        if m < 2 {
            return self.normalize_with_running(g, store, x);
        }
        // fold biased batch statistics into the running buffers
        let xv = g.value(x);
        let mut mean = vec![0.0; n];
        for r in 0..m {
            for (c, mv) in mean.iter_mut().enumerate() {
                *mv += xv.get(r, c);
            }
        }
        for mv in &mut mean {
            *mv /= m as f64;
        }
        let mut var = vec![0.0; n];
        for r in 0..m {
            for (c, vv) in var.iter_mut().enumerate() {
                let d = xv.get(r, c) - mean[c];
                *vv += d * d;
            }
        }
        for vv in &mut var {
            *vv /= m as f64;
        }
        let mut rm = store.get(self.running_mean).clone();
        let mut rv = store.get(self.running_var).clone();
        for c in 0..n {
            rm.data_mut()[c] = (1.0 - BN_MOMENTUM) * rm.data()[c] + BN_MOMENTUM * mean[c];
            rv.data_mut()[c] = (1.0 - BN_MOMENTUM) * rv.data()[c] + BN_MOMENTUM * var[c];
        }
        store.set(self.running_mean, rm);
        store.set(self.running_var, rv);

        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        g.batch_norm_train(x, gamma, beta, BN_EPS)
    }

    /// In-graph normalization from the running buffers (evaluation mode).
    pub fn forward_eval(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> NodeId {
        self.normalize_with_running(g, store, x)
    }

    fn normalize_with_running(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> NodeId {
        let rm = g.constant(store.get(self.running_mean).clone());
        let invstd = store.get(self.running_var).map(|v| 1.0 / (v + BN_EPS).sqrt());
        let invstd = g.constant(invstd);
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        let nrm = g.neg(rm);
        let centered = g.add_row(x, nrm);
        let xhat = g.mul_row(centered, invstd);
        let scaled = g.mul_row(xhat, gamma);
        g.add_row(scaled, beta)
    }

    pub fn apply_eval(&self, store: &ParamStore, x: &Tensor) -> Tensor {
        let rm = store.get(self.running_mean);
        let rv = store.get(self.running_var);
        let gamma = store.get(self.gamma);
        let beta = store.get(self.beta);
        let (m, n) = x.shape();
        let mut out = Tensor::zeros(m, n);
        for r in 0..m {
            for c in 0..n {
                let invstd = 1.0 / (rv.get(0, c) + BN_EPS).sqrt();
                let xhat = (x.get(r, c) - rm.get(0, c)) * invstd;
                out.set(r, c, xhat * gamma.get(0, c) + beta.get(0, c));
            }
        }
        out
    }
}
