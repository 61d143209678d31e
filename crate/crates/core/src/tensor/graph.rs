use std::fmt;

use super::tensor::broadcast_shapes;
use super::{ParamId, ParamStore, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Sigmoid,
    LogSigmoid,
    Softplus,
    Relu,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    LogSumExp,
    Max,
}

/// Smallest input accepted by `log`; smaller inputs are clamped.
pub const LOG_FLOOR: f64 = 1e-300;
const EXP_CEIL: f64 = 709.0;

/// A differentiable operation implemented outside this module.
///
/// The forward value is computed by the caller and handed to
/// [`Graph::custom`]; the op only supplies the vector-Jacobian product.
pub trait CustomOp: fmt::Debug {
    fn name(&self) -> &'static str;

    /// Gradient for each input (same shapes as the inputs) given the
    /// gradient of the output.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor>;
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Unary(UnaryOp, NodeId),
    Binary(BinaryOp, NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Reduce(ReduceOp, NodeId, usize),
    SumAll(NodeId),
    Reshape(NodeId),
    Expand(NodeId),
    Concat(Vec<NodeId>, usize),
    IndexSelect {
        src: NodeId,
        axis: usize,
        indices: Vec<usize>,
    },
    TakeLast {
        src: NodeId,
        indices: Vec<usize>,
    },
    Custom(Box<dyn CustomOp>, Vec<NodeId>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A single-use reverse-mode tape. Nodes are appended in evaluation order,
/// so inputs always precede outputs.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

type Result<T> = std::result::Result<T, TensorError>;

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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(TensorError::DetachedNode(id.0))
        }
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.constant(Tensor::scalar(value))
    }

    /// Leaf carrying the current value of a parameter; gradients flow back
    /// into the store on [`Graph::backward`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(store.get(id).value.clone(), Op::Param(id), true)
    }

    pub fn unary(&mut self, op: UnaryOp, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let x = &self.nodes[a.0].value;
        let value = match op {
            UnaryOp::Neg => x.map(|v| -v),
            UnaryOp::Exp => x.map(|v| v.min(EXP_CEIL).exp()),
            UnaryOp::Log => x.map(|v| v.max(LOG_FLOOR).ln()),
            UnaryOp::Sigmoid => x.map(sigmoid),
            UnaryOp::LogSigmoid => x.map(|v| -softplus(-v)),
            UnaryOp::Softplus => x.map(softplus),
            UnaryOp::Relu => x.map(|v| v.max(0.0)),
            UnaryOp::Tanh => x.map(f64::tanh),
        };
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(value, Op::Unary(op, a), ng))
    }

    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryOp::Neg, a)
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryOp::Exp, a)
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryOp::Log, a)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryOp::Sigmoid, a)
    }

    pub fn log_sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryOp::LogSigmoid, a)
    }

    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryOp::Softplus, a)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryOp::Relu, a)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryOp::Tanh, a)
    }

    pub fn binary(&mut self, op: BinaryOp, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let value = match op {
            BinaryOp::Add => x.zip_with(y, |p, q| p + q)?,
            BinaryOp::Sub => x.zip_with(y, |p, q| p - q)?,
            BinaryOp::Mul => x.zip_with(y, |p, q| p * q)?,
            BinaryOp::Div => x.zip_with(y, |p, q| p / q)?,
        };
        let ng = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        Ok(self.push(value, Op::Binary(op, a, b), ng))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryOp::Div, a, b)
    }

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if x.rank() != 2 || y.rank() != 2 || x.shape()[1] != y.shape()[0] {
            return Err(TensorError::ShapeMismatch(x.shape().to_vec(), y.shape().to_vec()));
        }
        let (m, k, n) = (x.shape()[0], x.shape()[1], y.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, x.data(), (k, 1), y.data(), (n, 1), &mut out, false);
        let value = Tensor::new(vec![m, n], out)?;
        let ng = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        Ok(self.push(value, Op::MatMul(a, b), ng))
    }

    /// Reduce over `axis`, dropping it from the shape.
    pub fn reduce(&mut self, op: ReduceOp, a: NodeId, axis: usize) -> Result<NodeId> {
        self.check(a)?;
        let x = &self.nodes[a.0].value;
        if axis >= x.rank() {
            return Err(TensorError::AxisOutOfRange { axis, rank: x.rank() });
        }
        let (outer, n, inner) = x.axis_split(axis);
        let d = x.data();
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| d[(o * n + j) * inner + i];
                let v = match op {
                    ReduceOp::Sum => (0..n).map(at).sum(),
                    ReduceOp::Mean => (0..n).map(at).sum::<f64>() / n as f64,
                    ReduceOp::Max => (0..n).map(at).fold(f64::NEG_INFINITY, f64::max),
                    ReduceOp::LogSumExp => {
                        let m = (0..n).map(at).fold(f64::NEG_INFINITY, f64::max);
                        if m.is_infinite() {
                            m
                        } else {
                            m + (0..n).map(|j| (at(j) - m).exp()).sum::<f64>().ln()
                        }
                    }
                };
                out.push(v);
            }
        }
        let mut shape = x.shape().to_vec();
        shape.remove(axis);
        let value = Tensor::new(shape, out)?;
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(value, Op::Reduce(op, a, axis), ng))
    }

    pub fn sum(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        self.reduce(ReduceOp::Sum, a, axis)
    }

    pub fn mean(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        self.reduce(ReduceOp::Mean, a, axis)
    }

    pub fn logsumexp(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        self.reduce(ReduceOp::LogSumExp, a, axis)
    }

    pub fn max(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        self.reduce(ReduceOp::Max, a, axis)
    }

    /// Sum of every element, as a rank-0 tensor.
    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let value = Tensor::scalar(self.nodes[a.0].value.sum());
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(value, Op::SumAll(a), ng))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.check(a)?;
        if self.nodes[a.0].value.shape() == shape {
            return Ok(a);
        }
        let value = self.nodes[a.0].value.reshape(shape)?;
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(value, Op::Reshape(a), ng))
    }

    /// Broadcast `a` to `shape`; gradients are summed back.
    pub fn expand(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.check(a)?;
        if self.nodes[a.0].value.shape() == shape {
            return Ok(a);
        }
        let value = self.nodes[a.0].value.expand_to(shape)?;
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(value, Op::Expand(a), ng))
    }

    /// Concatenate along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        assert!(!parts.is_empty(), "concat of zero tensors");
        for &p in parts {
            self.check(p)?;
        }
        let first = self.nodes[parts[0].0].value.shape().to_vec();
        if axis >= first.len() {
            return Err(TensorError::AxisOutOfRange {
                axis,
                rank: first.len(),
            });
        }
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let mut total = 0;
        for &p in parts {
            let s = self.nodes[p.0].value.shape();
            if s.len() != first.len() || s[..axis] != first[..axis] || s[axis + 1..] != first[axis + 1..] {
                return Err(TensorError::ShapeMismatch(first.clone(), s.to_vec()));
            }
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let t = &self.nodes[p.0].value;
                let block = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let value = Tensor::new(shape, out)?;
        let ng = parts.iter().any(|p| self.nodes[p.0].needs_grad);
        Ok(self.push(value, Op::Concat(parts.to_vec(), axis), ng))
    }

    /// Select entries along `axis` by `indices`, which take the place of that
    /// axis with shape `index_shape`. With `axis = 0` on an `[n, d]` table this
    /// is an embedding lookup.
    pub fn index_select(
        &mut self,
        a: NodeId,
        axis: usize,
        indices: Vec<usize>,
        index_shape: &[usize],
    ) -> Result<NodeId> {
        self.check(a)?;
        let x = &self.nodes[a.0].value;
        if axis >= x.rank() {
            return Err(TensorError::AxisOutOfRange { axis, rank: x.rank() });
        }
        if index_shape.iter().product::<usize>() != indices.len() {
            return Err(TensorError::ShapeMismatch(index_shape.to_vec(), vec![indices.len()]));
        }
        let (outer, n, inner) = x.axis_split(axis);
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(TensorError::IndexOutOfRange { index: bad, size: n });
        }
        let d = x.data();
        let mut out = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &ix in &indices {
                let start = (o * n + ix) * inner;
                out.extend_from_slice(&d[start..start + inner]);
            }
        }
        let mut shape = x.shape()[..axis].to_vec();
        shape.extend_from_slice(index_shape);
        shape.extend_from_slice(&x.shape()[axis + 1..]);
        let value = Tensor::new(shape, out)?;
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(value, Op::IndexSelect { src: a, axis, indices }, ng))
    }

    /// Gather rows of an `[n, d]` table: `[batch, d]` output.
    pub fn gather(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId> {
        self.index_select(table, 0, indices.to_vec(), &[indices.len()])
    }

    /// For `a` of shape `[L..., n]` pick one entry of the last axis per leading
    /// position; `indices` is row-major over `L`.
    pub fn take_last(&mut self, a: NodeId, indices: Vec<usize>) -> Result<NodeId> {
        self.check(a)?;
        let x = &self.nodes[a.0].value;
        if x.rank() == 0 {
            return Err(TensorError::AxisOutOfRange { axis: 0, rank: 0 });
        }
        let n = *x.shape().last().unwrap();
        let rows = x.len() / n;
        if indices.len() != rows {
            return Err(TensorError::ShapeMismatch(x.shape().to_vec(), vec![indices.len()]));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(TensorError::IndexOutOfRange { index: bad, size: n });
        }
        let out = indices.iter().enumerate().map(|(r, &i)| x.data()[r * n + i]).collect();
        let shape = x.shape()[..x.rank() - 1].to_vec();
        let value = Tensor::new(shape, out)?;
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(value, Op::TakeLast { src: a, indices }, ng))
    }

    pub fn custom(&mut self, op: Box<dyn CustomOp>, inputs: &[NodeId], value: Tensor) -> Result<NodeId> {
        for &i in inputs {
            self.check(i)?;
        }
        let ng = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        Ok(self.push(value, Op::Custom(op, inputs.to_vec()), ng))
    }

    /// Reverse pass from a rank-0 root; adds `d root / d param` into each
    /// reachable parameter's accumulator. Consumes the tape.
    pub fn backward(self, root: NodeId, store: &mut ParamStore) -> Result<()> {
        let grads = self.gradients(root)?;
        for (node, grad) in self.nodes.iter().zip(grads) {
            if let (Op::Param(pid), Some(g)) = (&node.op, grad) {
                let acc = &mut store.get_mut(*pid).grad;
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
        }
        Ok(())
    }

    /// Gradient of the root with respect to every node that needs one.
    pub fn gradients(&self, root: NodeId) -> Result<Vec<Option<Tensor>>> {
        self.check(root)?;
        let rv = &self.nodes[root.0].value;
        if rv.len() != 1 || rv.rank() > 1 {
            return Err(TensorError::NotScalar(rv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::full(rv.shape(), 1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(grads)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |id: NodeId| &self.nodes[id.0].value;
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Unary(op, a) => {
                let x = val(*a);
                let d: Vec<f64> = (0..x.len())
                    .map(|i| {
                        let (xv, yv, gv) = (x.data()[i], y.data()[i], g.data()[i]);
                        gv * match op {
                            UnaryOp::Neg => -1.0,
                            UnaryOp::Exp => yv,
                            UnaryOp::Log => {
                                if xv > LOG_FLOOR {
                                    1.0 / xv
                                } else {
                                    0.0
                                }
                            }
                            UnaryOp::Sigmoid => yv * (1.0 - yv),
                            UnaryOp::LogSigmoid => sigmoid(-xv),
                            UnaryOp::Softplus => sigmoid(xv),
                            UnaryOp::Relu => {
                                if xv > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            UnaryOp::Tanh => 1.0 - yv * yv,
                        }
                    })
                    .collect();
                self.accumulate(grads, *a, Tensor::new(x.shape().to_vec(), d).unwrap());
            }
            Op::Binary(op, a, b) => {
                let (xa, xb) = (val(*a), val(*b));
                let ea = xa.expand_to(y.shape()).unwrap();
                let eb = xb.expand_to(y.shape()).unwrap();
                let (ga, gb): (Vec<f64>, Vec<f64>) = g
                    .data()
                    .iter()
                    .zip(ea.data().iter().zip(eb.data()))
                    .map(|(&gv, (&p, &q))| match op {
                        BinaryOp::Add => (gv, gv),
                        BinaryOp::Sub => (gv, -gv),
                        BinaryOp::Mul => (gv * q, gv * p),
                        BinaryOp::Div => (gv / q, -gv * p / (q * q)),
                    })
                    .unzip();
                let ga = Tensor::new(y.shape().to_vec(), ga).unwrap();
                let gb = Tensor::new(y.shape().to_vec(), gb).unwrap();
                self.accumulate(grads, *a, ga.sum_to_shape(xa.shape()));
                self.accumulate(grads, *b, gb.sum_to_shape(xb.shape()));
            }
            Op::MatMul(a, b) => {
                let (xa, xb) = (val(*a), val(*b));
                let (m, k, n) = (xa.shape()[0], xa.shape()[1], xb.shape()[1]);
                if self.nodes[a.0].needs_grad {
                    // dA = G · Bᵀ
                    let mut out = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), (n, 1), xb.data(), (1, n), &mut out, false);
                    self.accumulate(grads, *a, Tensor::new(vec![m, k], out).unwrap());
                }
                if self.nodes[b.0].needs_grad {
                    // dB = Aᵀ · G
                    let mut out = vec![0.0; k * n];
                    gemm(k, m, n, xa.data(), (1, k), g.data(), (n, 1), &mut out, false);
                    self.accumulate(grads, *b, Tensor::new(vec![k, n], out).unwrap());
                }
            }
            Op::Reduce(op, a, axis) => {
                let x = val(*a);
                let (outer, n, inner) = x.axis_split(*axis);
                let mut d = vec![0.0; x.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let r = o * inner + i;
                        let (gv, yv) = (g.data()[r], y.data()[r]);
                        let at = |j: usize| (o * n + j) * inner + i;
                        match op {
                            ReduceOp::Sum => (0..n).for_each(|j| d[at(j)] = gv),
                            ReduceOp::Mean => (0..n).for_each(|j| d[at(j)] = gv / n as f64),
                            ReduceOp::LogSumExp => {
                                if yv.is_finite() {
                                    (0..n).for_each(|j| d[at(j)] = gv * (x.data()[at(j)] - yv).exp())
                                }
                            }
                            ReduceOp::Max => {
                                if let Some(j) = (0..n).find(|&j| x.data()[at(j)] == yv) {
                                    d[at(j)] = gv;
                                }
                            }
                        }
                    }
                }
                self.accumulate(grads, *a, Tensor::new(x.shape().to_vec(), d).unwrap());
            }
            Op::SumAll(a) => {
                let x = val(*a);
                self.accumulate(grads, *a, Tensor::full(x.shape(), g.item()));
            }
            Op::Reshape(a) => {
                let x = val(*a);
                self.accumulate(grads, *a, g.clone().reshaped(x.shape().to_vec()));
            }
            Op::Expand(a) => {
                let x = val(*a);
                self.accumulate(grads, *a, g.sum_to_shape(x.shape()));
            }
            Op::Concat(parts, axis) => {
                let shape = y.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total = shape[*axis] * inner;
                let mut offset = 0;
                for &p in parts {
                    let ps = val(p).shape();
                    let block = ps[*axis] * inner;
                    if self.nodes[p.0].needs_grad {
                        let mut d = Vec::with_capacity(outer * block);
                        for o in 0..outer {
                            let s = o * total + offset;
                            d.extend_from_slice(&g.data()[s..s + block]);
                        }
                        self.accumulate(grads, p, Tensor::new(ps.to_vec(), d).unwrap());
                    }
                    offset += block;
                }
            }
            Op::IndexSelect { src, axis, indices } => {
                let x = val(*src);
                let (outer, n, inner) = x.axis_split(*axis);
                let mut d = vec![0.0; x.len()];
                let mut k = 0;
                for o in 0..outer {
                    for &ix in indices {
                        let start = (o * n + ix) * inner;
                        for j in 0..inner {
                            d[start + j] += g.data()[k];
                            k += 1;
                        }
                    }
                }
                self.accumulate(grads, *src, Tensor::new(x.shape().to_vec(), d).unwrap());
            }
            Op::TakeLast { src, indices } => {
                let x = val(*src);
                let n = *x.shape().last().unwrap();
                let mut d = vec![0.0; x.len()];
                for (r, &i) in indices.iter().enumerate() {
                    d[r * n + i] += g.data()[r];
                }
                self.accumulate(grads, *src, Tensor::new(x.shape().to_vec(), d).unwrap());
            }
            Op::Custom(op, inputs) => {
                let xs: Vec<&Tensor> = inputs.iter().map(|&i| val(i)).collect();
                let gs = op.backward(&xs, y, g);
                debug_assert_eq!(gs.len(), inputs.len(), "{} returned wrong arity", op.name());
                for (&i, gi) in inputs.iter().zip(gs) {
                    debug_assert_eq!(gi.shape(), val(i).shape(), "{} gradient shape", op.name());
                    self.accumulate(grads, i, gi);
                }
            }
        }
    }
}

/// Broadcast-compatible result shape of two nodes.
pub fn broadcast_pair(g: &Graph, a: NodeId, b: NodeId) -> Result<Vec<usize>> {
    broadcast_shapes(g.shape(a), g.shape(b))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `out = a · b` for row-major views given as (row stride, col stride).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (ars, acs): (usize, usize),
    b: &[f64],
    (brs, bcs): (usize, usize),
    out: &mut [f64],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && out.len() >= m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: bounds are checked above and the strides describe views that
    // stay within the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            ars as isize,
            acs as isize,
            b.as_ptr(),
            brs as isize,
            bcs as isize,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn scalar_kernels() {
        let mut g = Graph::new();
        let z = g.scalar(0.0);
        let s = g.sigmoid(z).unwrap();
        let sp = g.softplus(z).unwrap();
        assert_eq!(g.value(s).item(), 0.5);
        assert!((g.value(sp).item() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn broadcast_add() {
        let mut g = Graph::new();
        let a = g.constant(t(&[3], &[1., 2., 3.]));
        let b = g.scalar(1.0);
        let c = g.add(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[2., 3., 4.]);
    }

    #[test]
    fn incompatible_shapes() {
        let mut g = Graph::new();
        let a = g.constant(t(&[3], &[1., 2., 3.]));
        let b = g.constant(t(&[2], &[1., 2.]));
        assert!(matches!(g.add(a, b), Err(TensorError::ShapeMismatch(..))));
    }

    #[test]
    fn matmul_identity_and_row_col() {
        let mut g = Graph::new();
        let i2 = g.constant(t(&[2, 2], &[1., 0., 0., 1.]));
        let m = g.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let p = g.matmul(i2, m).unwrap();
        assert_eq!(g.value(p).data(), &[1., 2., 3., 4.]);
        let r = g.constant(t(&[1, 2], &[1., 0.]));
        let c = g.constant(t(&[2, 1], &[0., 1.]));
        let p = g.matmul(r, c).unwrap();
        assert_eq!(g.value(p).data(), &[0.]);
        assert!(g.matmul(r, r).is_err());
    }

    #[test]
    fn reductions() {
        let mut g = Graph::new();
        let z = g.constant(t(&[2], &[0., 0.]));
        let l = g.logsumexp(z, 0).unwrap();
        assert!((g.value(l).item() - std::f64::consts::LN_2).abs() < 1e-15);
        let big = g.constant(t(&[2], &[1000., 1000.]));
        let l = g.logsumexp(big, 0).unwrap();
        assert!((g.value(l).item() - (1000.0 + std::f64::consts::LN_2)).abs() < 1e-12);
        let v = g.constant(t(&[3], &[1., 2., 3.]));
        let m = g.mean(v, 0).unwrap();
        assert_eq!(g.value(m).item(), 2.0);
        assert!(matches!(g.sum(v, 1), Err(TensorError::AxisOutOfRange { .. })));
    }

    #[test]
    fn gather_and_scatter_add() {
        let mut store = ParamStore::new();
        let pid = store.add("table", t(&[2, 2], &[1., 2., 3., 4.]));
        let mut g = Graph::new();
        let table = g.param(&store, pid);
        let row = g.gather(table, &[1]).unwrap();
        assert_eq!(g.value(row).data(), &[3., 4.]);
        let dup = g.gather(table, &[0, 0]).unwrap();
        assert_eq!(g.value(dup).data(), &[1., 2., 1., 2.]);
        assert!(matches!(
            g.gather(table, &[2]),
            Err(TensorError::IndexOutOfRange { .. })
        ));
        let s = g.sum_all(dup).unwrap();
        g.backward(s, &mut store).unwrap();
        assert_eq!(store.get(pid).grad.data(), &[2., 2., 0., 0.]);
    }

    #[test]
    fn backward_simple_rules() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::scalar(0.0));
        let mut g = Graph::new();
        let x = g.param(&store, p);
        let nx = g.neg(x).unwrap();
        let r = g.softplus(nx).unwrap();
        g.backward(r, &mut store).unwrap();
        assert_eq!(store.get(p).grad.item(), -0.5);

        let mut store = ParamStore::new();
        let p = store.add("p", t(&[2], &[1., 2.]));
        let mut g = Graph::new();
        let x = g.param(&store, p);
        let sq = g.mul(x, x).unwrap();
        let r = g.sum_all(sq).unwrap();
        g.backward(r, &mut store).unwrap();
        assert_eq!(store.get(p).grad.data(), &[2., 4.]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut store = ParamStore::new();
        let p = store.add("p", t(&[2], &[1., 2.]));
        let mut g = Graph::new();
        let x = g.param(&store, p);
        assert!(matches!(g.backward(x, &mut store), Err(TensorError::NotScalar(_))));
        let g = Graph::new();
        assert!(matches!(
            g.backward(NodeId(3), &mut store),
            Err(TensorError::DetachedNode(3))
        ));
    }

    #[test]
    fn take_last_and_concat_grads() {
        let mut store = ParamStore::new();
        let p = store.add("p", t(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
        let mut g = Graph::new();
        let x = g.param(&store, p);
        let picked = g.take_last(x, vec![2, 0]).unwrap();
        assert_eq!(g.value(picked).data(), &[3., 4.]);
        let c = g.concat(&[x, x], 1).unwrap();
        assert_eq!(g.shape(c), &[2, 6]);
        let s1 = g.sum_all(picked).unwrap();
        let s2 = g.sum_all(c).unwrap();
        let r = g.add(s1, s2).unwrap();
        g.backward(r, &mut store).unwrap();
        assert_eq!(store.get(p).grad.data(), &[2., 2., 3., 3., 2., 2.]);
    }

    #[test]
    fn log_and_exp_saturate() {
        let mut g = Graph::new();
        let z = g.constant(t(&[2], &[0.0, -1.0]));
        let l = g.log(z).unwrap();
        assert!(g.value(l).all_finite());
        let big = g.scalar(1e6);
        let e = g.exp(big).unwrap();
        assert!(g.value(e).all_finite());
    }
}
