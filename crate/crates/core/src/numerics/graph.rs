//! Reverse-mode automatic differentiation over a flat tape.
//!
//! Nodes are appended in evaluation order, so node ids double as a
//! topological order: the backward pass walks ids in reverse and visits each
//! node exactly once. Values are computed eagerly at construction;
//! [`Graph::forward`] re-evaluates the tape after leaf values change, which
//! is what the finite-difference oracle uses.

use alloc::format;
use alloc::vec::Vec;

use crate::fmath;
use crate::numerics::Tensor;
use crate::{Error, Result};

/// Handle to a node in one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    /// Causal dilated 1-D convolution: input `(T, C_in)`, weight
    /// `(C_out, kernel·C_in)`, output `(T, C_out)` with implicit left zero
    /// padding. Tap `kernel-1` reads the current row.
    Conv1d { x: NodeId, w: NodeId, kernel: usize, dilation: usize },
    Tanh(NodeId),
    Relu(NodeId),
    Abs(NodeId),
    Mean(NodeId),
    SliceRows { x: NodeId, start: usize, end: usize },
    SliceCols { x: NodeId, start: usize, end: usize },
    ConcatCols(NodeId, NodeId),
    /// Broadcast scale: row `r` of `x` times `s[0, r]`.
    ScaleRows { x: NodeId, s: NodeId },
    /// Broadcast shift: column `c` of `x` plus `b[0, c]`.
    ShiftCols { x: NodeId, b: NodeId },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// A build-once, evaluate-forward, differentiate-backward tape.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Append an input/parameter/constant node.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node { op: Op::Leaf, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Replace a leaf's value; shape must match. Call [`Graph::forward`]
    /// afterwards to refresh downstream values.
    pub fn set_leaf(&mut self, id: NodeId, value: Tensor) -> Result<()> {
        let node = &mut self.nodes[id.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(Error::InvalidConfig("set_leaf on a non-leaf node".into()));
        }
        if !node.value.same_shape(&value) {
            return Err(Error::ShapeMismatch(format!(
                "leaf is {:?}, new value is {:?}",
                node.value.shape(),
                value.shape()
            )));
        }
        node.value = value;
        Ok(())
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        let value = self.eval(&op)?;
        self.nodes.push(Node { op, value });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn binary_same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        let (va, vb) = (self.value(a), self.value(b));
        if !va.same_shape(vb) {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "add")?;
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "sub")?;
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "mul")?;
        self.push(Op::Mul(a, b))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).cols() != self.value(b).rows() {
            return Err(Error::ShapeMismatch(format!(
                "matmul: {:?} x {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        self.push(Op::MatMul(a, b))
    }

    pub fn conv1d(&mut self, x: NodeId, w: NodeId, kernel: usize, dilation: usize) -> Result<NodeId> {
        if kernel == 0 || dilation == 0 {
            return Err(Error::InvalidConfig("conv1d kernel and dilation must be ≥ 1".into()));
        }
        let c_in = self.value(x).cols();
        if self.value(w).cols() != kernel * c_in {
            return Err(Error::ShapeMismatch(format!(
                "conv1d weight {:?} incompatible with kernel {kernel} over {c_in} channels",
                self.value(w).shape()
            )));
        }
        self.push(Op::Conv1d { x, w, kernel, dilation })
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Tanh(a)).expect("shape preserved")
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Relu(a)).expect("shape preserved")
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Abs(a)).expect("shape preserved")
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Mean(a)).expect("mean is total")
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        if start >= end || end > self.value(x).rows() {
            return Err(Error::ShapeMismatch(format!(
                "slice_rows {start}..{end} of {:?}",
                self.value(x).shape()
            )));
        }
        self.push(Op::SliceRows { x, start, end })
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        if start >= end || end > self.value(x).cols() {
            return Err(Error::ShapeMismatch(format!(
                "slice_cols {start}..{end} of {:?}",
                self.value(x).shape()
            )));
        }
        self.push(Op::SliceCols { x, start, end })
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).rows() != self.value(b).rows() {
            return Err(Error::ShapeMismatch(format!(
                "concat_cols: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        self.push(Op::ConcatCols(a, b))
    }

    pub fn scale_rows(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        let want = (1, self.value(x).rows());
        if self.value(s).shape() != want {
            return Err(Error::ShapeMismatch(format!(
                "scale_rows wants scale {:?}, got {:?}",
                want,
                self.value(s).shape()
            )));
        }
        self.push(Op::ScaleRows { x, s })
    }

    pub fn shift_cols(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let want = (1, self.value(x).cols());
        if self.value(b).shape() != want {
            return Err(Error::ShapeMismatch(format!(
                "shift_cols wants shift {:?}, got {:?}",
                want,
                self.value(b).shape()
            )));
        }
        self.push(Op::ShiftCols { x, b })
    }

    fn eval(&self, op: &Op) -> Result<Tensor> {
        let v = |id: NodeId| &self.nodes[id.0].value;
        Ok(match *op {
            Op::Leaf => unreachable!("leaves are evaluated at insertion"),
            Op::Add(a, b) => zip(v(a), v(b), |x, y| x + y),
            Op::Sub(a, b) => zip(v(a), v(b), |x, y| x - y),
            Op::Mul(a, b) => zip(v(a), v(b), |x, y| x * y),
            Op::MatMul(a, b) => matmul(v(a), v(b)),
            Op::Conv1d { x, w, kernel, dilation } => conv1d(v(x), v(w), kernel, dilation),
            Op::Tanh(a) => map(v(a), fmath::tanh),
            Op::Relu(a) => map(v(a), |x| if x > 0.0 { x } else { 0.0 }),
            Op::Abs(a) => map(v(a), fmath::abs),
            Op::Mean(a) => {
                let t = v(a);
                Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64)
            }
            Op::SliceRows { x, start, end } => {
                let t = v(x);
                let mut out = Tensor::zeros(end - start, t.cols());
                for r in start..end {
                    for c in 0..t.cols() {
                        out.set(r - start, c, t.at(r, c));
                    }
                }
                out
            }
            Op::SliceCols { x, start, end } => {
                let t = v(x);
                let mut out = Tensor::zeros(t.rows(), end - start);
                for r in 0..t.rows() {
                    for c in start..end {
                        out.set(r, c - start, t.at(r, c));
                    }
                }
                out
            }
            Op::ConcatCols(a, b) => {
                let (ta, tb) = (v(a), v(b));
                let mut out = Tensor::zeros(ta.rows(), ta.cols() + tb.cols());
                for r in 0..ta.rows() {
                    for c in 0..ta.cols() {
                        out.set(r, c, ta.at(r, c));
                    }
                    for c in 0..tb.cols() {
                        out.set(r, ta.cols() + c, tb.at(r, c));
                    }
                }
                out
            }
            Op::ScaleRows { x, s } => {
                let (tx, ts) = (v(x), v(s));
                let mut out = tx.clone();
                for r in 0..tx.rows() {
                    let f = ts.at(0, r);
                    for c in 0..tx.cols() {
                        out.set(r, c, tx.at(r, c) * f);
                    }
                }
                out
            }
            Op::ShiftCols { x, b } => {
                let (tx, tb) = (v(x), v(b));
                let mut out = tx.clone();
                for r in 0..tx.rows() {
                    for c in 0..tx.cols() {
                        out.set(r, c, tx.at(r, c) + tb.at(0, c));
                    }
                }
                out
            }
        })
    }

    /// Re-evaluate every non-leaf node in tape order.
    pub fn forward(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            if !matches!(self.nodes[i].op, Op::Leaf) {
                let op = self.nodes[i].op.clone();
                self.nodes[i].value = self.eval(&op)?;
            }
        }
        Ok(())
    }

    /// Gradients of a scalar `output` with respect to every node, by a single
    /// reverse sweep of the tape.
    pub fn backward(&self, output: NodeId) -> Result<Vec<Tensor>> {
        self.value(output).as_scalar()?;
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.rows(), n.value.cols()))
            .collect();
        grads[output.0] = Tensor::scalar(1.0);

        for i in (0..=output.0).rev() {
            let g = grads[i].clone();
            if g.data().iter().all(|&x| x == 0.0) {
                continue;
            }
            match self.nodes[i].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], &g, |x| x);
                    accumulate(&mut grads[b.0], &g, |x| x);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[a.0], &g, |x| x);
                    accumulate(&mut grads[b.0], &g, |x| -x);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(a).clone(), self.value(b).clone());
                    accumulate_zip(&mut grads[a.0], &g, &vb, |gi, o| gi * o);
                    accumulate_zip(&mut grads[b.0], &g, &va, |gi, o| gi * o);
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(a), self.value(b));
                    // dA = g · Bᵀ ; dB = Aᵀ · g
                    let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                    for r in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for c in 0..n {
                                acc += g.at(r, c) * vb.at(p, c);
                            }
                            let cur = grads[a.0].at(r, p);
                            grads[a.0].set(r, p, cur + acc);
                        }
                    }
                    for p in 0..k {
                        for c in 0..n {
                            let mut acc = 0.0;
                            for r in 0..m {
                                acc += va.at(r, p) * g.at(r, c);
                            }
                            let cur = grads[b.0].at(p, c);
                            grads[b.0].set(p, c, cur + acc);
                        }
                    }
                }
                Op::Conv1d { x, w, kernel, dilation } => {
                    let (vx, vw) = (self.value(x), self.value(w));
                    let (t_len, c_in) = vx.shape();
                    let c_out = vw.rows();
                    for t in 0..t_len {
                        for o in 0..c_out {
                            let go = g.at(t, o);
                            if go == 0.0 {
                                continue;
                            }
                            for k in 0..kernel {
                                let back = (kernel - 1 - k) * dilation;
                                if back > t {
                                    continue;
                                }
                                let src = t - back;
                                for ci in 0..c_in {
                                    let wc = k * c_in + ci;
                                    let cur_w = grads[w.0].at(o, wc);
                                    grads[w.0].set(o, wc, cur_w + go * vx.at(src, ci));
                                    let cur_x = grads[x.0].at(src, ci);
                                    grads[x.0].set(src, ci, cur_x + go * vw.at(o, wc));
                                }
                            }
                        }
                    }
                }
                Op::Tanh(a) => {
                    let y = self.value(NodeId(i)).clone();
                    accumulate_zip(&mut grads[a.0], &g, &y, |gi, yi| gi * (1.0 - yi * yi));
                }
                Op::Relu(a) => {
                    let va = self.value(a).clone();
                    accumulate_zip(&mut grads[a.0], &g, &va, |gi, xi| {
                        if xi > 0.0 {
                            gi
                        } else {
                            0.0
                        }
                    });
                }
                Op::Abs(a) => {
                    let va = self.value(a).clone();
                    accumulate_zip(&mut grads[a.0], &g, &va, |gi, xi| {
                        if xi > 0.0 {
                            gi
                        } else if xi < 0.0 {
                            -gi
                        } else {
                            0.0
                        }
                    });
                }
                Op::Mean(a) => {
                    let share = g.data()[0] / self.value(a).len() as f64;
                    for v in grads[a.0].data_mut() {
                        *v += share;
                    }
                }
                Op::SliceRows { x, start, end } => {
                    for r in start..end {
                        for c in 0..g.cols() {
                            let cur = grads[x.0].at(r, c);
                            grads[x.0].set(r, c, cur + g.at(r - start, c));
                        }
                    }
                }
                Op::SliceCols { x, start, end } => {
                    for r in 0..g.rows() {
                        for c in start..end {
                            let cur = grads[x.0].at(r, c);
                            grads[x.0].set(r, c, cur + g.at(r, c - start));
                        }
                    }
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(a).cols();
                    for r in 0..g.rows() {
                        for c in 0..ca {
                            let cur = grads[a.0].at(r, c);
                            grads[a.0].set(r, c, cur + g.at(r, c));
                        }
                        for c in 0..self.value(b).cols() {
                            let cur = grads[b.0].at(r, c);
                            grads[b.0].set(r, c, cur + g.at(r, ca + c));
                        }
                    }
                }
                Op::ScaleRows { x, s } => {
                    let (vx, vs) = (self.value(x), self.value(s));
                    for r in 0..vx.rows() {
                        let f = vs.at(0, r);
                        let mut ds = 0.0;
                        for c in 0..vx.cols() {
                            let cur = grads[x.0].at(r, c);
                            grads[x.0].set(r, c, cur + g.at(r, c) * f);
                            ds += g.at(r, c) * vx.at(r, c);
                        }
                        let cur = grads[s.0].at(0, r);
                        grads[s.0].set(0, r, cur + ds);
                    }
                }
                Op::ShiftCols { x, b } => {
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            let cur = grads[x.0].at(r, c);
                            grads[x.0].set(r, c, cur + g.at(r, c));
                            let cur = grads[b.0].at(0, c);
                            grads[b.0].set(0, c, cur + g.at(r, c));
                        }
                    }
                }
            }
        }
        Ok(grads)
    }
}

/// Gradients of `output` with respect to the given parameter leaves.
/// Parameters that do not reach the output get zero gradients.
pub fn grad(graph: &Graph, output: NodeId, params: &[NodeId]) -> Result<Vec<Tensor>> {
    let all = graph.backward(output)?;
    Ok(params.iter().map(|p| all[p.0].clone()).collect())
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = t.data().iter().map(|&x| f(x)).collect();
    Tensor::new(t.rows(), t.cols(), data).expect("same size")
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("same size")
}

fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(m, n);
    for r in 0..m {
        for p in 0..k {
            let av = a.at(r, p);
            if av == 0.0 {
                continue;
            }
            for c in 0..n {
                let cur = out.at(r, c);
                out.set(r, c, cur + av * b.at(p, c));
            }
        }
    }
    out
}

fn conv1d(x: &Tensor, w: &Tensor, kernel: usize, dilation: usize) -> Tensor {
    let (t_len, c_in) = x.shape();
    let c_out = w.rows();
    let mut out = Tensor::zeros(t_len, c_out);
    for t in 0..t_len {
        for o in 0..c_out {
            let mut acc = 0.0;
            for k in 0..kernel {
                let back = (kernel - 1 - k) * dilation;
                if back > t {
                    continue;
                }
                let src = t - back;
                for ci in 0..c_in {
                    acc += w.at(o, k * c_in + ci) * x.at(src, ci);
                }
            }
            out.set(t, o, acc);
        }
    }
    out
}

fn accumulate(target: &mut Tensor, g: &Tensor, f: impl Fn(f64) -> f64) {
    for (t, &gi) in target.data_mut().iter_mut().zip(g.data()) {
        *t += f(gi);
    }
}

fn accumulate_zip(target: &mut Tensor, g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) {
    for ((t, &gi), &oi) in target.data_mut().iter_mut().zip(g.data()).zip(other.data()) {
        *t += f(gi, oi);
    }
}
