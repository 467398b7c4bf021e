//! Define-by-run reverse-mode differentiation over matrix primitives.
//!
//! Each training step records its forward computation on a fresh [`Tape`];
//! [`Tape::backward`] then walks the nodes in reverse insertion order, which
//! is a valid reverse topological order because every node's inputs were
//! recorded before it.

use crate::error::{Error, Result};
use crate::numeric::matrix::{gemm_nt, gemm_tn, Matrix};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    MatMul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    ConcatCols(NodeId, NodeId),
    Gather(NodeId, Vec<usize>),
    Sum(NodeId),
    Mse {
        pred: NodeId,
        target: Matrix,
    },
    L1 {
        pred: NodeId,
        target: Matrix,
        row_weights: Vec<f64>,
    },
    /// `probs` caches the row softmax of the adjusted logits.
    CrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        row_weights: Vec<f64>,
        probs: Matrix,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
    needs_grad: bool,
}

/// A single-writer computation record.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the output with respect to `node`; `None` when the node
    /// does not influence the output or was recorded as a constant.
    pub fn get(&self, node: NodeId) -> Option<&Matrix> {
        self.adjoints.get(node.0).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`] but returns zeros shaped like `like` when absent.
    pub fn get_or_zeros(&self, node: NodeId, like: &Matrix) -> Matrix {
        self.get(node)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(like.rows(), like.cols()))
    }

    pub fn take(&mut self, node: NodeId) -> Option<Matrix> {
        self.adjoints.get_mut(node.0).and_then(Option::take)
    }
}

fn shape_err(what: &str, a: &Matrix, b: &Matrix) -> Error {
    Error::Shape(format!(
        "{what}: {}x{} vs {}x{}",
        a.rows(),
        a.cols(),
        b.rows(),
        b.cols()
    ))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Matrix, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn grad1(&self, a: NodeId) -> bool {
        self.nodes[a.0].needs_grad
    }

    fn grad2(&self, a: NodeId, b: NodeId) -> bool {
        self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad
    }

    /// A differentiable input.
    pub fn var(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    fn same_shape(&self, what: &str, a: NodeId, b: NodeId) -> Result<()> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(what, va, vb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).add(self.value(b))?;
        let g = self.grad2(a, b);
        Ok(self.push(Op::Add(a, b), v, g))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).sub(self.value(b))?;
        let g = self.grad2(a, b);
        Ok(self.push(Op::Sub(a, b), v, g))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).hadamard(self.value(b))?;
        let g = self.grad2(a, b);
        Ok(self.push(Op::Mul(a, b), v, g))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let v = self.value(a).scale(factor);
        let g = self.grad1(a);
        self.push(Op::Scale(a, factor), v, g)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        let g = self.grad2(a, b);
        Ok(self.push(Op::MatMul(a, b), v, g))
    }

    /// Adds a `1 x n` row to every row of an `m x n` matrix.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(shape_err("add_row", va, vr));
        }
        let mut v = va.clone();
        for r in 0..v.rows() {
            for (x, &b) in v.row_mut(r).iter_mut().zip(vr.data()) {
                *x += b;
            }
        }
        let g = self.grad2(a, row);
        Ok(self.push(Op::AddRow(a, row), v, g))
    }

    /// `a @ w + b`, the affine layer used throughout.
    pub fn affine(&mut self, a: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let h = self.matmul(a, w)?;
        self.add_row(h, b)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        let g = self.grad1(a);
        self.push(Op::Relu(a), v, g)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        let g = self.grad1(a);
        self.push(Op::Tanh(a), v, g)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        let g = self.grad1(a);
        self.push(Op::Sigmoid(a), v, g)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(shape_err("concat_cols", va, vb));
        }
        let cols = va.cols() + vb.cols();
        let mut data = Vec::with_capacity(va.rows() * cols);
        for r in 0..va.rows() {
            data.extend_from_slice(va.row(r));
            data.extend_from_slice(vb.row(r));
        }
        let v = Matrix::from_parts(va.rows(), cols, data);
        let g = self.grad2(a, b);
        Ok(self.push(Op::ConcatCols(a, b), v, g))
    }

    /// Row lookup: output row `k` is `table[indices[k]]`.
    pub fn gather(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId> {
        let vt = self.value(table);
        if let Some(&bad) = indices.iter().find(|&&i| i >= vt.rows()) {
            return Err(Error::Shape(format!(
                "gather index {bad} out of {} rows",
                vt.rows()
            )));
        }
        let mut data = Vec::with_capacity(indices.len() * vt.cols());
        for &i in indices {
            data.extend_from_slice(vt.row(i));
        }
        let v = Matrix::from_parts(indices.len(), vt.cols(), data);
        let g = self.grad1(table);
        Ok(self.push(Op::Gather(table, indices.to_vec()), v, g))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Matrix::scalar(self.value(a).data().iter().sum());
        let g = self.grad1(a);
        self.push(Op::Sum(a), v, g)
    }

    /// Mean squared error over every entry.
    pub fn mse(&mut self, pred: NodeId, target: &Matrix) -> Result<NodeId> {
        let vp = self.value(pred);
        if vp.shape() != target.shape() {
            return Err(shape_err("mse", vp, target));
        }
        let n = vp.len().max(1) as f64;
        let s: f64 = vp
            .data()
            .iter()
            .zip(target.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        let g = self.grad1(pred);
        Ok(self.push(
            Op::Mse {
                pred,
                target: target.clone(),
            },
            Matrix::scalar(s / n),
            g,
        ))
    }

    /// `(1/B) Σ_b w_b · mean_d |pred_bd − target_bd|`.
    pub fn weighted_l1(
        &mut self,
        pred: NodeId,
        target: &Matrix,
        row_weights: &[f64],
    ) -> Result<NodeId> {
        let vp = self.value(pred);
        if vp.shape() != target.shape() {
            return Err(shape_err("l1", vp, target));
        }
        if row_weights.len() != vp.rows() {
            return Err(Error::Shape(format!(
                "l1: {} row weights for {} rows",
                row_weights.len(),
                vp.rows()
            )));
        }
        let (b, d) = (vp.rows().max(1) as f64, vp.cols().max(1) as f64);
        let mut s = 0.0;
        for (r, &w) in row_weights.iter().enumerate() {
            let row: f64 = vp
                .row(r)
                .iter()
                .zip(target.row(r))
                .map(|(p, t)| (p - t).abs())
                .sum();
            s += w * row / d;
        }
        let g = self.grad1(pred);
        Ok(self.push(
            Op::L1 {
                pred,
                target: target.clone(),
                row_weights: row_weights.to_vec(),
            },
            Matrix::scalar(s / b),
            g,
        ))
    }

    /// Mean absolute error over every entry.
    pub fn l1(&mut self, pred: NodeId, target: &Matrix) -> Result<NodeId> {
        let rows = self.value(pred).rows();
        self.weighted_l1(pred, target, &vec![1.0; rows])
    }

    /// `Σ_b w_b · (−log softmax(z_b + adjust)[y_b])`.
    ///
    /// `adjust` is an optional per-class additive logit offset (for example
    /// log class priors).
    pub fn weighted_cross_entropy(
        &mut self,
        logits: NodeId,
        labels: &[usize],
        adjust: Option<&[f64]>,
        row_weights: &[f64],
    ) -> Result<NodeId> {
        let vz = self.value(logits);
        let (rows, cols) = vz.shape();
        if labels.len() != rows || row_weights.len() != rows {
            return Err(Error::Shape(format!(
                "cross entropy: {} labels / {} weights for {rows} rows",
                labels.len(),
                row_weights.len()
            )));
        }
        if let Some(adj) = adjust {
            if adj.len() != cols {
                return Err(Error::Shape(format!(
                    "cross entropy: {} adjustments for {cols} classes",
                    adj.len()
                )));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= cols) {
            return Err(Error::Contract(format!(
                "label {bad} out of {cols} classes"
            )));
        }
        let mut probs = Matrix::zeros(rows, cols);
        let mut loss = 0.0;
        for r in 0..rows {
            let z = vz.row(r);
            let out = probs.row_mut(r);
            for (c, o) in out.iter_mut().enumerate() {
                *o = z[c] + adjust.map_or(0.0, |a| a[c]);
            }
            let lse = log_sum_exp(out);
            let picked = out[labels[r]];
            for o in out.iter_mut() {
                *o = (*o - lse).exp();
            }
            loss += row_weights[r] * (lse - picked);
        }
        let g = self.grad1(logits);
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                row_weights: row_weights.to_vec(),
                probs,
            },
            Matrix::scalar(loss),
            g,
        ))
    }

    /// Mean softmax cross-entropy over rows.
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        labels: &[usize],
        adjust: Option<&[f64]>,
    ) -> Result<NodeId> {
        let rows = self.value(logits).rows();
        let w = vec![1.0 / rows.max(1) as f64; rows];
        self.weighted_cross_entropy(logits, labels, adjust, &w)
    }

    /// Reverse accumulation from a scalar node.
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        let out = self.value(output);
        if out.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar output, got {}x{}",
                out.rows(),
                out.cols()
            )));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; output.0 + 1];
        adj[output.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut adj);
            adj[idx] = Some(g);
        }

        for (i, slot) in adj.iter_mut().enumerate() {
            if !self.nodes[i].needs_grad {
                *slot = None;
            }
        }
        Ok(Gradients { adjoints: adj })
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn accumulate(adj: &mut [Option<Matrix>], id: NodeId, delta: Matrix) {
        match &mut adj[id.0] {
            Some(existing) => existing.axpy(1.0, &delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, op: &Op, value: &Matrix, g: &Matrix, adj: &mut [Option<Matrix>]) {
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.wants(*a) {
                    Self::accumulate(adj, *a, g.clone());
                }
                if self.wants(*b) {
                    Self::accumulate(adj, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    Self::accumulate(adj, *a, g.clone());
                }
                if self.wants(*b) {
                    Self::accumulate(adj, *b, g.scale(-1.0));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let d = g.hadamard(self.value(*b)).expect("shape checked on record");
                    Self::accumulate(adj, *a, d);
                }
                if self.wants(*b) {
                    let d = g.hadamard(self.value(*a)).expect("shape checked on record");
                    Self::accumulate(adj, *b, d);
                }
            }
            Op::Scale(a, f) => {
                if self.wants(*a) {
                    Self::accumulate(adj, *a, g.scale(*f));
                }
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                if self.wants(*a) {
                    let mut d = Matrix::zeros(m, k);
                    gemm_nt(g.data(), vb.data(), d.data_mut(), m, n, k);
                    Self::accumulate(adj, *a, d);
                }
                if self.wants(*b) {
                    let mut d = Matrix::zeros(k, n);
                    gemm_tn(va.data(), g.data(), d.data_mut(), m, k, n);
                    Self::accumulate(adj, *b, d);
                }
            }
            Op::AddRow(a, row) => {
                if self.wants(*a) {
                    Self::accumulate(adj, *a, g.clone());
                }
                if self.wants(*row) {
                    let mut d = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (x, &v) in d.data_mut().iter_mut().zip(g.row(r)) {
                            *x += v;
                        }
                    }
                    Self::accumulate(adj, *row, d);
                }
            }
            Op::Relu(a) => {
                if self.wants(*a) {
                    let mut d = g.clone();
                    for (x, &y) in d.data_mut().iter_mut().zip(value.data()) {
                        if y <= 0.0 {
                            *x = 0.0;
                        }
                    }
                    Self::accumulate(adj, *a, d);
                }
            }
            Op::Tanh(a) => {
                if self.wants(*a) {
                    let mut d = g.clone();
                    for (x, &y) in d.data_mut().iter_mut().zip(value.data()) {
                        *x *= 1.0 - y * y;
                    }
                    Self::accumulate(adj, *a, d);
                }
            }
            Op::Sigmoid(a) => {
                if self.wants(*a) {
                    let mut d = g.clone();
                    for (x, &y) in d.data_mut().iter_mut().zip(value.data()) {
                        *x *= y * (1.0 - y);
                    }
                    Self::accumulate(adj, *a, d);
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                if self.wants(*a) {
                    let d = Matrix::from_fn(g.rows(), ca, |r, c| g[(r, c)]);
                    Self::accumulate(adj, *a, d);
                }
                if self.wants(*b) {
                    let d = Matrix::from_fn(g.rows(), cb, |r, c| g[(r, ca + c)]);
                    Self::accumulate(adj, *b, d);
                }
            }
            Op::Gather(table, indices) => {
                if self.wants(*table) {
                    let vt = self.value(*table);
                    let mut d = Matrix::zeros(vt.rows(), vt.cols());
                    for (k, &i) in indices.iter().enumerate() {
                        for (x, &v) in d.row_mut(i).iter_mut().zip(g.row(k)) {
                            *x += v;
                        }
                    }
                    Self::accumulate(adj, *table, d);
                }
            }
            Op::Sum(a) => {
                if self.wants(*a) {
                    let va = self.value(*a);
                    Self::accumulate(adj, *a, Matrix::filled(va.rows(), va.cols(), g.data()[0]));
                }
            }
            Op::Mse { pred, target } => {
                if self.wants(*pred) {
                    let vp = self.value(*pred);
                    let f = 2.0 * g.data()[0] / vp.len().max(1) as f64;
                    let d = Matrix::from_parts(
                        vp.rows(),
                        vp.cols(),
                        vp.data()
                            .iter()
                            .zip(target.data())
                            .map(|(p, t)| f * (p - t))
                            .collect(),
                    );
                    Self::accumulate(adj, *pred, d);
                }
            }
            Op::L1 {
                pred,
                target,
                row_weights,
            } => {
                if self.wants(*pred) {
                    let vp = self.value(*pred);
                    let base = g.data()[0] / (vp.rows().max(1) * vp.cols().max(1)) as f64;
                    let mut d = Matrix::zeros(vp.rows(), vp.cols());
                    for (r, &w) in row_weights.iter().enumerate() {
                        for ((x, p), t) in d.row_mut(r).iter_mut().zip(vp.row(r)).zip(target.row(r))
                        {
                            *x = base * w * sign(p - t);
                        }
                    }
                    Self::accumulate(adj, *pred, d);
                }
            }
            Op::CrossEntropy {
                logits,
                labels,
                row_weights,
                probs,
            } => {
                if self.wants(*logits) {
                    let scale = g.data()[0];
                    let mut d = probs.clone();
                    for (r, (&y, &w)) in labels.iter().zip(row_weights).enumerate() {
                        let row = d.row_mut(r);
                        row[y] -= 1.0;
                        for x in row.iter_mut() {
                            *x *= scale * w;
                        }
                    }
                    Self::accumulate(adj, *logits, d);
                }
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log Σ exp(x)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax of a logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|z| (z - lse).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_has_derivative_two_x() {
        let mut t = Tape::new();
        let x = t.var(Matrix::scalar(3.0));
        let y = t.mul(x, x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(t.value(y).as_scalar(), Some(9.0));
        assert_eq!(g.get(x).unwrap().as_scalar(), Some(6.0));
    }

    #[test]
    fn product_plus_operand() {
        let mut t = Tape::new();
        let x = t.var(Matrix::scalar(2.0));
        let y = t.var(Matrix::scalar(5.0));
        let xy = t.mul(x, y).unwrap();
        let f = t.add(xy, y).unwrap();
        let g = t.backward(f).unwrap();
        assert_eq!(t.value(f).as_scalar(), Some(15.0));
        assert_eq!(g.get(x).unwrap().as_scalar(), Some(5.0));
        assert_eq!(g.get(y).unwrap().as_scalar(), Some(3.0));
    }

    #[test]
    fn non_scalar_output_is_contract_error() {
        let mut t = Tape::new();
        let x = t.var(Matrix::zeros(2, 2));
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(Matrix::scalar(4.0));
        let x = t.var(Matrix::scalar(1.5));
        let y = t.mul(c, x).unwrap();
        let g = t.backward(y).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap().as_scalar(), Some(4.0));
    }

    #[test]
    fn shared_node_accumulates() {
        // f = sum(relu(x) + relu(x)) has gradient 2 where x > 0.
        let mut t = Tape::new();
        let x = t.var(Matrix::row_vector(&[-1.0, 2.0]));
        let r = t.relu(x);
        let s = t.add(r, r).unwrap();
        let f = t.sum(s);
        let g = t.backward(f).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 2.0]);
    }

    #[test]
    fn uniform_two_class_cross_entropy_is_ln2() {
        let mut t = Tape::new();
        let z = t.var(Matrix::row_vector(&[1.0, 1.0]));
        let l = t.cross_entropy(z, &[0], None).unwrap();
        assert!((t.value(l).as_scalar().unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + std::f64::consts::LN_2)).abs() < 1e-9);
        let p = softmax(&[0.0, 0.0, 0.0]);
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }
}
