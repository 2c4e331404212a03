//! Tape-based reverse-mode differentiation.
//!
//! A [`ComputeGraph`] records every operation eagerly: each call computes its
//! output immediately and appends a node. Nodes are stored in creation order,
//! which is a topological order, so [`ComputeGraph::backward`] is a single
//! reverse sweep.

use crate::error::{dim_err, Error, Result};
use crate::nn::activation::{sigmoid, softmax_rows};
use crate::nn::conv::{self, Conv2dOptions};
use crate::nn::pool::max_pool_with_argmax;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
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
    MatMul(NodeId, NodeId),
    Conv2d(NodeId, NodeId, Conv2dOptions),
    MaxPool(NodeId, Vec<usize>),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Softmax(NodeId),
    LnClamped(NodeId, f64),
    Sum(NodeId),
    Mean(NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Reshape(NodeId),
    Columns(NodeId, usize),
    ConcatColumns(Vec<NodeId>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    trainable: bool,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct ComputeGraph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to graph nodes.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

fn broadcast_ok(lhs: &[usize], rhs: &[usize]) -> bool {
    rhs.len() <= lhs.len() && lhs[lhs.len() - rhs.len()..] == *rhs
}

fn accumulate(slot: &mut Option<Vec<f64>>, add: impl IntoIterator<Item = f64>, len: usize) {
    match slot {
        Some(g) => {
            for (gv, a) in g.iter_mut().zip(add) {
                *gv += a;
            }
        }
        None => {
            let mut v: Vec<f64> = add.into_iter().collect();
            debug_assert_eq!(v.len(), len);
            v.resize(len, 0.0);
            *slot = Some(v);
        }
    }
}

/// Sums a gradient over the broadcast (leading) dimensions of a suffix operand.
fn reduce_broadcast(grad: &[f64], rhs_len: usize, sign: f64) -> Vec<f64> {
    let mut out = vec![0.0; rhs_len];
    for chunk in grad.chunks(rhs_len) {
        for (o, g) in out.iter_mut().zip(chunk) {
            *o += sign * g;
        }
    }
    out
}

fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(&b[p * m..(p + 1) * m]) {
                *o += av * bv;
            }
        }
    }
    out
}

impl ComputeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push_node(value, Op::Leaf, true, true)
    }

    /// Adds a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_node(value, Op::Leaf, false, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn is_trainable(&self, id: NodeId) -> bool {
        self.nodes[id.0].trainable
    }

    fn push_node(&mut self, value: Tensor, op: Op, trainable: bool, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            trainable,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[NodeId]) -> NodeId {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.push_node(value, op, false, requires_grad)
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn elementwise(&mut self, a: NodeId, b: NodeId, kind: u8) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if !broadcast_ok(sa, sb) {
            return dim_err(format!("cannot broadcast {sb:?} onto {sa:?}"));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let r = bv.len();
        let data: Vec<f64> = av
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = bv[i % r];
                match kind {
                    0 => x + y,
                    1 => x - y,
                    _ => x * y,
                }
            })
            .collect();
        let value = Tensor::new(sa.to_vec(), data)?;
        let op = match kind {
            0 => Op::Add(a, b),
            1 => Op::Sub(a, b),
            _ => Op::Mul(a, b),
        };
        Ok(self.push(value, op, &[a, b]))
    }

    /// `a + b`, where `b`'s shape may be a trailing suffix of `a`'s (broadcast).
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, 0)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, 1)
    }

    /// Hadamard product with the same suffix broadcast as [`add`](Self::add).
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, 2)
    }

    /// `[n,k] · [k,m]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let ([n, k], [k2, m]) = (sa, sb) else {
            return dim_err(format!("matmul needs 2-D operands, got {sa:?} and {sb:?}"));
        };
        if k != k2 {
            return dim_err(format!("matmul inner dimensions differ: {sa:?} · {sb:?}"));
        }
        let (n, k, m) = (*n, *k, *m);
        let out = matmul(self.value(a).data(), self.value(b).data(), n, k, m);
        let value = Tensor::new(vec![n, m], out)?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    /// `x · w + b`.
    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }

    pub fn conv2d(&mut self, x: NodeId, kernel: NodeId, opts: Conv2dOptions) -> Result<NodeId> {
        let value = conv::conv2d(self.value(x), self.value(kernel), &opts)?;
        Ok(self.push(value, Op::Conv2d(x, kernel, opts), &[x, kernel]))
    }

    pub fn max_pool(&mut self, x: NodeId, window: (usize, usize)) -> Result<NodeId> {
        let (value, arg) = max_pool_with_argmax(self.value(x), window)?;
        Ok(self.push(value, Op::MaxPool(x, arg), &[x]))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(sigmoid);
        self.push(value, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(f64::tanh);
        self.push(value, Op::Tanh(x), &[x])
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu(x), &[x])
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x);
        let width = *t.shape().last().expect("non-empty shape");
        let value = Tensor::new(t.shape().to_vec(), softmax_rows(t.data(), width)).expect("same shape");
        self.push(value, Op::Softmax(x), &[x])
    }

    /// `ln(clamp(x, eps, 1 - eps))`; the gradient is zero where clamping is active.
    pub fn ln_clamped(&mut self, x: NodeId, eps: f64) -> NodeId {
        let value = self.value(x).map(|v| v.clamp(eps, 1.0 - eps).ln());
        self.push(value, Op::LnClamped(x, eps), &[x])
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x);
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(value, Op::Mean(x), &[x])
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.value(x).map(|v| v * c);
        self.push(value, Op::Scale(x, c), &[x])
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.value(x).map(|v| v + c);
        self.push(value, Op::AddScalar(x), &[x])
    }

    /// `1 - x`.
    pub fn one_minus(&mut self, x: NodeId) -> NodeId {
        let neg = self.scale(x, -1.0);
        self.add_scalar(neg, 1.0)
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(x).reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    /// Columns `start..start+len` of a 2-D tensor.
    pub fn columns(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let &[n, m] = self.shape(x) else {
            return dim_err(format!("columns() needs a 2-D tensor, got {:?}", self.shape(x)));
        };
        if len == 0 || start + len > m {
            return dim_err(format!("column range {start}..{} outside width {m}", start + len));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(n * len);
        for r in 0..n {
            data.extend_from_slice(&src[r * m + start..r * m + start + len]);
        }
        let value = Tensor::new(vec![n, len], data)?;
        Ok(self.push(value, Op::Columns(x, start), &[x]))
    }

    /// Concatenates 2-D tensors with equal row counts along the column axis.
    pub fn concat_columns(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return dim_err("concat of zero tensors");
        };
        let rows = self.shape(first)[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            match *self.shape(p) {
                [r, w] if r == rows => widths.push(w),
                ref s => return dim_err(format!("concat operand {s:?} incompatible with {rows} rows")),
            }
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let value = Tensor::new(vec![rows, total], data)?;
        Ok(self.push(value, Op::ConcatColumns(parts.to_vec()), parts))
    }

    /// Reverse sweep from a scalar `loss` node.
    ///
    /// Every trainable leaf gets a gradient of its own shape, zero when the
    /// loss does not depend on it.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        let grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(n, g)| {
                let data = match g {
                    Some(d) => d,
                    None if n.trainable => vec![0.0; n.value.len()],
                    None => return Ok(None),
                };
                Tensor::new(n.value.shape().to_vec(), data).map(Some)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Gradients { grads })
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], g.iter().copied(), g.len());
                }
                if self.wants(*b) {
                    let r = self.value(*b).len();
                    let red = reduce_broadcast(g, r, sign);
                    accumulate(&mut grads[b.0], red, r);
                }
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let r = bv.len();
                if self.wants(*a) {
                    let it = g.iter().enumerate().map(|(i, gv)| gv * bv[i % r]);
                    accumulate(&mut grads[a.0], it, g.len());
                }
                if self.wants(*b) {
                    let mut red = vec![0.0; r];
                    for (i, gv) in g.iter().enumerate() {
                        red[i % r] += gv * av[i];
                    }
                    accumulate(&mut grads[b.0], red, r);
                }
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (n, k, m) = (sa[0], sa[1], sb[1]);
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if self.wants(*a) {
                    // dA = dC · Bᵀ
                    let mut da = vec![0.0; n * k];
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            da[i * k + p] = grow.iter().zip(&bv[p * m..(p + 1) * m]).map(|(x, y)| x * y).sum();
                        }
                    }
                    accumulate(&mut grads[a.0], da, n * k);
                }
                if self.wants(*b) {
                    // dB = Aᵀ · dC
                    let mut db = vec![0.0; k * m];
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let av_ip = av[i * k + p];
                            if av_ip == 0.0 {
                                continue;
                            }
                            for (d, gv) in db[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *d += av_ip * gv;
                            }
                        }
                    }
                    accumulate(&mut grads[b.0], db, k * m);
                }
            }
            Op::Conv2d(x, k, opts) => {
                let gt = Tensor::new(node.value.shape().to_vec(), g.to_vec())?;
                let (gx, gk) = conv::conv2d_backward(
                    self.value(*x),
                    self.value(*k),
                    &gt,
                    opts,
                    self.wants(*x),
                    self.wants(*k),
                )?;
                if let Some(gx) = gx {
                    let n = gx.len();
                    accumulate(&mut grads[x.0], gx.into_data(), n);
                }
                if let Some(gk) = gk {
                    let n = gk.len();
                    accumulate(&mut grads[k.0], gk.into_data(), n);
                }
            }
            Op::MaxPool(x, arg) => {
                if self.wants(*x) {
                    let n = self.value(*x).len();
                    let mut gx = vec![0.0; n];
                    for (gv, &i) in g.iter().zip(arg) {
                        gx[i] += gv;
                    }
                    accumulate(&mut grads[x.0], gx, n);
                }
            }
            Op::Sigmoid(x) => {
                let it = g.iter().zip(out).map(|(gv, s)| gv * s * (1.0 - s));
                accumulate(&mut grads[x.0], it, g.len());
            }
            Op::Tanh(x) => {
                let it = g.iter().zip(out).map(|(gv, t)| gv * (1.0 - t * t));
                accumulate(&mut grads[x.0], it, g.len());
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let it = g.iter().zip(xv).map(|(gv, &v)| if v > 0.0 { *gv } else { 0.0 });
                accumulate(&mut grads[x.0], it, g.len());
            }
            Op::Softmax(x) => {
                let width = *node.value.shape().last().expect("non-empty");
                let mut gx = Vec::with_capacity(g.len());
                for (grow, srow) in g.chunks(width).zip(out.chunks(width)) {
                    let dot: f64 = grow.iter().zip(srow).map(|(a, b)| a * b).sum();
                    gx.extend(grow.iter().zip(srow).map(|(gv, s)| s * (gv - dot)));
                }
                accumulate(&mut grads[x.0], gx, g.len());
            }
            Op::LnClamped(x, eps) => {
                let xv = self.value(*x).data();
                let it = g.iter().zip(xv).map(|(gv, &v)| {
                    if v < *eps || v > 1.0 - eps {
                        0.0
                    } else {
                        gv / v
                    }
                });
                accumulate(&mut grads[x.0], it, g.len());
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                accumulate(&mut grads[x.0], std::iter::repeat_n(g[0], n), n);
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                accumulate(&mut grads[x.0], std::iter::repeat_n(g[0] / n as f64, n), n);
            }
            Op::Scale(x, c) => {
                accumulate(&mut grads[x.0], g.iter().map(|v| v * c), g.len());
            }
            Op::AddScalar(x) | Op::Reshape(x) => {
                accumulate(&mut grads[x.0], g.iter().copied(), g.len());
            }
            Op::Columns(x, start) => {
                let &[n, m] = self.shape(*x) else { unreachable!() };
                let len = node.value.shape()[1];
                let mut gx = vec![0.0; n * m];
                for r in 0..n {
                    gx[r * m + start..r * m + start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
                }
                accumulate(&mut grads[x.0], gx, n * m);
            }
            Op::ConcatColumns(parts) => {
                let rows = node.value.shape()[0];
                let total = node.value.shape()[1];
                let mut offset = 0;
                for p in parts {
                    let w = self.shape(*p)[1];
                    if self.wants(*p) {
                        let mut gp = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            gp.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        accumulate(&mut grads[p.0], gp, rows * w);
                    }
                    offset += w;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_loss_has_unit_gradient() {
        let mut g = ComputeGraph::new();
        let p = g.param(Tensor::scalar(3.0));
        let grads = g.backward(p).unwrap();
        assert_eq!(grads.get(p).unwrap().data(), &[1.0]);
    }

    #[test]
    fn sum_of_squares() {
        let mut g = ComputeGraph::new();
        let p = g.param(Tensor::vector(vec![1.0, 2.0]));
        let sq = g.mul(p, p).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(p).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn non_scalar_loss_is_contract_error() {
        let mut g = ComputeGraph::new();
        let p = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward(p), Err(Error::Contract(_))));
    }

    #[test]
    fn unreached_param_gets_zero_gradient() {
        let mut g = ComputeGraph::new();
        let p = g.param(Tensor::vector(vec![1.0, 2.0]));
        let q = g.param(Tensor::full(&[2, 2], 1.0));
        let loss = g.sum(p);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(q).unwrap(), &Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = ComputeGraph::new();
        let c = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let p = g.param(Tensor::vector(vec![3.0, 4.0]));
        let prod = g.mul(c, p).unwrap();
        let loss = g.sum(prod);
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(p).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn dense_matches_hand_computation() {
        let mut g = ComputeGraph::new();
        let x = g.constant(Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap());
        let w = g.param(Tensor::new(vec![2, 1], vec![1.0, 1.0]).unwrap());
        let b = g.param(Tensor::vector(vec![0.0]));
        let y = g.dense(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[3.0]);
    }

    #[test]
    fn dense_rejects_inner_mismatch() {
        let mut g = ComputeGraph::new();
        let x = g.constant(Tensor::zeros(&[1, 3]));
        let w = g.param(Tensor::zeros(&[2, 1]));
        assert!(matches!(g.matmul(x, w), Err(Error::Dimension(_))));
    }

    #[test]
    fn broadcast_bias_gradient_sums_over_rows() {
        let mut g = ComputeGraph::new();
        let x = g.constant(Tensor::zeros(&[3, 2]));
        let b = g.param(Tensor::vector(vec![0.5, -0.5]));
        let y = g.add(x, b).unwrap();
        let loss = g.sum(y);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(b).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn concat_and_columns_round_trip() {
        let mut g = ComputeGraph::new();
        let a = g.param(Tensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap());
        let b = g.param(Tensor::new(vec![2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap());
        let c = g.concat_columns(&[a, b]).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let back = g.columns(c, 1, 2).unwrap();
        assert_eq!(g.value(back), g.value(b));
        let loss = g.sum(back);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn max_pool_routes_gradient_to_argmax() {
        let mut g = ComputeGraph::new();
        let x = g.param(Tensor::new(vec![2, 2, 1], vec![1.0, 4.0, 4.0, 3.0]).unwrap());
        let y = g.max_pool(x, (2, 2)).unwrap();
        let loss = g.sum(y);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0, 0.0, 0.0]);
    }
}
