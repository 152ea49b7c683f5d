use super::store::{ParamId, ParamStore};
use super::tensor::Tensor;

/// Index of a node in a [`Graph`]. Nodes only ever reference earlier
/// nodes, so the insertion order is already a topological order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf { param: Option<ParamId> },
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Clamp(NodeId, f64, f64),
    SoftmaxRows(NodeId),
    SumAll(NodeId),
    RowSum(NodeId),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SliceCols { x: NodeId, start: usize },
    SliceRows { x: NodeId, start: usize },
    Transpose(NodeId),
    BatchNormTrain { x: NodeId, gamma: NodeId, beta: NodeId },
}

struct BnCache {
    xhat: Tensor,
    invstd: Tensor,
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
    requires_grad: bool,
    bn: Option<BnCache>,
}

/// A single-use reverse-mode differentiation tape over [`Tensor`] values.
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        debug_assert!(value.is_finite(), "non-finite forward value");
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, grad: None, op, requires_grad, bn: None });
        id
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf { param: None }, false)
    }

    /// Leaf tied to a store parameter; its gradient is pushed back into the
    /// store by [`Graph::apply_grads`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(store.get(id).clone(), Op::Leaf { param: Some(id) }, true)
    }

    /// Copy of a node's value with the gradient path cut.
    pub fn detach(&mut self, id: NodeId) -> NodeId {
        let v = self.nodes[id.0].value.clone();
        self.constant(v)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).add(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).sub(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).mul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Mul(a, b), rg)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip(self.value(b), |x, y| x / y);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Div(a, b), rg)
    }

    /// Broadcast-add a 1 x n row vector over every row of a.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let v = self.value(a).add_row(self.value(row));
        let rg = self.rg(a) || self.rg(row);
        self.push(v, Op::AddRow(a, row), rg)
    }

    pub fn mul_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let v = self.value(a).mul_row(self.value(row));
        let rg = self.rg(a) || self.rg(row);
        self.push(v, Op::MulRow(a, row), rg)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(v, Op::Tanh(a), rg)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(v, Op::Relu(a), rg)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        let rg = self.rg(a);
        self.push(v, Op::Exp(a), rg)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::ln);
        let rg = self.rg(a);
        self.push(v, Op::Ln(a), rg)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).scale(c);
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x + c);
        let rg = self.rg(a);
        self.push(v, Op::AddScalar(a), rg)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.scale(a, -1.0)
    }

    /// Clamp with zero gradient outside [lo, hi].
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        let rg = self.rg(a);
        self.push(v, Op::Clamp(a, lo, hi), rg)
    }

    /// Row-wise softmax with max subtraction. With `causal` set, the input
    /// must be square and entry (i, j) for j > i is masked to weight zero.
    pub fn softmax_rows(&mut self, x: NodeId, causal: bool) -> NodeId {
        let input = self.value(x);
        if causal {
            assert_eq!(input.rows(), input.cols(), "causal softmax expects a square matrix");
        }
        let v = softmax_rows_value(input, causal);
        let rg = self.rg(x);
        self.push(v, Op::SoftmaxRows(x), rg)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(v, Op::SumAll(a), rg)
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Per-row sum: [m, n] -> [m, 1].
    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let input = self.value(a);
        let data: Vec<f64> = (0..input.rows())
            .map(|r| input.row_slice(r).iter().sum())
            .collect();
        let v = Tensor::new(input.rows(), 1, data);
        let rg = self.rg(a);
        self.push(v, Op::RowSum(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Tensor::concat_cols(&tensors);
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(v, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Tensor::concat_rows(&tensors);
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(v, Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(x).slice_cols(start, len);
        let rg = self.rg(x);
        self.push(v, Op::SliceCols { x, start }, rg)
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(x).slice_rows(start, len);
        let rg = self.rg(x);
        self.push(v, Op::SliceRows { x, start }, rg)
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).transpose();
        let rg = self.rg(x);
        self.push(v, Op::Transpose(x), rg)
    }

    /// Batch normalization over rows using batch statistics. gamma and
    /// beta are 1 x n row vectors. Gradients flow through the statistics.
    pub fn batch_norm_train(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    ) -> NodeId {
        let input = self.value(x);
        let (m, n) = input.shape();
        assert!(m >= 2, "batch_norm_train needs a batch of at least 2 rows");
        let mut mean = vec![0.0; n];
        for r in 0..m {
            for (c, mv) in mean.iter_mut().enumerate() {
                *mv += input.get(r, c);
            }
        }
        for mv in &mut mean {
            *mv /= m as f64;
        }
        let mut var = vec![0.0; n];
        for r in 0..m {
            for (c, vv) in var.iter_mut().enumerate() {
                let d = input.get(r, c) - mean[c];
                *vv += d * d;
            }
        }
        for vv in &mut var {
            *vv /= m as f64;
        }
        let invstd: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = Tensor::zeros(m, n);
        for r in 0..m {
            for c in 0..n {
                xhat.set(r, c, (input.get(r, c) - mean[c]) * invstd[c]);
            }
        }
        let g = self.value(gamma);
        let b = self.value(beta);
        let out = xhat.mul_row(g).add_row(b);
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let id = self.push(out, Op::BatchNormTrain { x, gamma, beta }, rg);
        self.nodes[id.0].bn = Some(BnCache { xhat, invstd: Tensor::row(&invstd) });
        id
    }

    fn acc(&mut self, id: NodeId, grad: Tensor) {
        if !self.rg(id) {
            return;
        }
        let node = &mut self.nodes[id.0];
        debug_assert_eq!(node.value.shape(), grad.shape());
        match &mut node.grad {
            Some(g) => g.axpy(1.0, &grad),
            None => node.grad = Some(grad),
        }
    }

    /// Reverse pass from a scalar root. Each node is visited exactly once
    /// and gradients accumulate across shared subexpressions.
    pub fn backward(&mut self, root: NodeId) {
        assert_eq!(
            self.value(root).shape(),
            (1, 1),
            "backward root must be scalar-valued"
        );
        self.nodes[root.0].grad = Some(Tensor::scalar(1.0));
        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.clone() else { continue };
            // ops with per-node caches are handled before the generic match
            match &self.nodes[i].op {
                Op::Leaf { .. } => {}
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.rg(a) {
                        let bt = self.value(b).transpose();
                        let da = g.matmul(&bt);
                        self.acc(a, da);
                    }
                    if self.rg(b) {
                        let at = self.value(a).transpose();
                        let db = at.matmul(&g);
                        self.acc(b, db);
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    self.acc(a, g.clone());
                    self.acc(b, g);
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    self.acc(a, g.clone());
                    self.acc(b, g.scale(-1.0));
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.rg(a) {
                        let da = g.mul(self.value(b));
                        self.acc(a, da);
                    }
                    if self.rg(b) {
                        let db = g.mul(self.value(a));
                        self.acc(b, db);
                    }
                }
                Op::Div(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.rg(a) {
                        let da = g.zip(self.value(b), |gv, bv| gv / bv);
                        self.acc(a, da);
                    }
                    if self.rg(b) {
                        let av = self.value(a);
                        let bv = self.value(b);
                        let mut db = g.clone();
                        for k in 0..db.len() {
                            db.data_mut()[k] *= -av.data()[k] / (bv.data()[k] * bv.data()[k]);
                        }
                        self.acc(b, db);
                    }
                }
                Op::AddRow(a, row) => {
                    let (a, row) = (*a, *row);
                    if self.rg(row) {
                        let mut dr = Tensor::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            dr.axpy(1.0, &Tensor::row(g.row_slice(r)));
                        }
                        self.acc(row, dr);
                    }
                    self.acc(a, g);
                }
                Op::MulRow(a, row) => {
                    let (a, row) = (*a, *row);
                    if self.rg(row) {
                        let av = self.value(a);
                        let mut dr = Tensor::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for c in 0..g.cols() {
                                dr.data_mut()[c] += g.get(r, c) * av.get(r, c);
                            }
                        }
                        self.acc(row, dr);
                    }
                    if self.rg(a) {
                        let da = g.mul_row(self.value(row));
                        self.acc(a, da);
                    }
                }
                Op::Tanh(a) => {
                    let a = *a;
                    let y = &self.nodes[i].value;
                    let da = g.zip(y, |gv, yv| gv * (1.0 - yv * yv));
                    self.acc(a, da);
                }
                Op::Relu(a) => {
                    let a = *a;
                    let da = g.zip(self.value(a), |gv, xv| if xv > 0.0 { gv } else { 0.0 });
                    self.acc(a, da);
                }
                Op::Exp(a) => {
                    let a = *a;
                    let y = &self.nodes[i].value;
                    let da = g.mul(y);
                    self.acc(a, da);
                }
                Op::Ln(a) => {
                    let a = *a;
                    let da = g.zip(self.value(a), |gv, xv| gv / xv);
                    self.acc(a, da);
                }
                Op::Scale(a, c) => {
                    let (a, c) = (*a, *c);
                    self.acc(a, g.scale(c));
                }
                Op::AddScalar(a) => {
                    let a = *a;
                    self.acc(a, g);
                }
                Op::Clamp(a, lo, hi) => {
                    let (a, lo, hi) = (*a, *lo, *hi);
                    let da = g.zip(self.value(a), |gv, xv| {
                        if xv >= lo && xv <= hi {
                            gv
                        } else {
                            0.0
                        }
                    });
                    self.acc(a, da);
                }
                Op::SoftmaxRows(x) => {
                    let x = *x;
                    let y = self.nodes[i].value.clone();
                    let mut dx = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = (0..y.cols()).map(|c| g.get(r, c) * y.get(r, c)).sum();
                        for c in 0..y.cols() {
                            dx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    self.acc(x, dx);
                }
                Op::SumAll(a) => {
                    let a = *a;
                    let (r, c) = self.value(a).shape();
                    self.acc(a, Tensor::full(r, c, g.item()));
                }
                Op::RowSum(a) => {
                    let a = *a;
                    let (r, c) = self.value(a).shape();
                    let mut da = Tensor::zeros(r, c);
                    for rr in 0..r {
                        let gv = g.get(rr, 0);
                        for cc in 0..c {
                            da.set(rr, cc, gv);
                        }
                    }
                    self.acc(a, da);
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let w = self.value(p).cols();
                        let dp = g.slice_cols(off, w);
                        off += w;
                        self.acc(p, dp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let h = self.value(p).rows();
                        let dp = g.slice_rows(off, h);
                        off += h;
                        self.acc(p, dp);
                    }
                }
                Op::SliceCols { x, start } => {
                    let (x, start) = (*x, *start);
                    let (r, c) = self.value(x).shape();
                    let mut dx = Tensor::zeros(r, c);
                    for rr in 0..g.rows() {
                        for cc in 0..g.cols() {
                            dx.set(rr, start + cc, g.get(rr, cc));
                        }
                    }
                    self.acc(x, dx);
                }
                Op::SliceRows { x, start } => {
                    let (x, start) = (*x, *start);
                    let (r, c) = self.value(x).shape();
                    let mut dx = Tensor::zeros(r, c);
                    for rr in 0..g.rows() {
                        for cc in 0..g.cols() {
                            dx.set(start + rr, cc, g.get(rr, cc));
                        }
                    }
                    self.acc(x, dx);
                }
                Op::Transpose(x) => {
                    let x = *x;
                    self.acc(x, g.transpose());
                }
                Op::BatchNormTrain { x, gamma, beta } => {
                    let (x, gamma, beta) = (*x, *gamma, *beta);
                    let cache = self.nodes[i].bn.as_ref().expect("missing batchnorm cache");
                    let xhat = cache.xhat.clone();
                    let invstd = cache.invstd.clone();
                    let (m, n) = xhat.shape();
                    if self.rg(beta) {
                        let mut db = Tensor::zeros(1, n);
                        for r in 0..m {
                            db.axpy(1.0, &Tensor::row(g.row_slice(r)));
                        }
                        self.acc(beta, db);
                    }
                    if self.rg(gamma) {
                        let mut dg = Tensor::zeros(1, n);
                        for r in 0..m {
                            for c in 0..n {
                                dg.data_mut()[c] += g.get(r, c) * xhat.get(r, c);
                            }
                        }
                        self.acc(gamma, dg);
                    }
                    if self.rg(x) {
                        let dxhat = g.mul_row(self.value(gamma));
                        let mut sum_d = vec![0.0; n];
                        let mut sum_dx = vec![0.0; n];
                        for r in 0..m {
                            for c in 0..n {
                                sum_d[c] += dxhat.get(r, c);
                                sum_dx[c] += dxhat.get(r, c) * xhat.get(r, c);
                            }
                        }
                        let mf = m as f64;
                        let mut dx = Tensor::zeros(m, n);
                        for r in 0..m {
                            for c in 0..n {
                                let v = invstd.get(0, c) / mf
                                    * (mf * dxhat.get(r, c)
                                        - sum_d[c]
                                        - xhat.get(r, c) * sum_dx[c]);
                                dx.set(r, c, v);
                            }
                        }
                        self.acc(x, dx);
                    }
                }
            }
        }
    }

    /// Push leaf gradients back into the parameter store.
    pub fn apply_grads(&self, store: &mut ParamStore) {
        for node in &self.nodes {
            if let Op::Leaf { param: Some(id) } = node.op {
                if let Some(g) = &node.grad {
                    store.accumulate_grad(id, g);
                }
            }
        }
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

/// Forward-only row softmax shared by the graph op and the no-grad paths.
pub fn softmax_rows_value(x: &Tensor, causal: bool) -> Tensor {
    let (m, n) = x.shape();
    let mut out = Tensor::zeros(m, n);
    for r in 0..m {
        let limit = if causal { (r + 1).min(n) } else { n };
        let row = x.row_slice(r);
        let max = row[..limit].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for c in 0..limit {
            denom += (row[c] - max).exp();
        }
        for c in 0..limit {
            out.set(r, c, (row[c] - max).exp() / denom);
        }
    }
    out
}
