use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A differentiable operation over previously recorded nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op<T> {
    /// `a · b`
    MatMul(NodeId, NodeId),
    /// `a · bᵀ`; keeps layer weights in `out x in` layout.
    MatMulT(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// Broadcasts a `1 x n` row (second operand) over every row of an `m x n` input.
    AddRow(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, T),
    /// Elementwise product.
    Mul(NodeId, NodeId),
    /// Subgradient 0 at the kink.
    Relu(NodeId),
    /// Derivative is `signum`, which is `+1` at `+0`.
    Abs(NodeId),
    Sin(NodeId),
    Log(NodeId),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    Sum(NodeId),
    Mean(NodeId),
}

impl<T: Copy> Op<T> {
    fn inputs(&self) -> ([NodeId; 2], usize) {
        use Op::*;
        match *self {
            MatMul(a, b) | MatMulT(a, b) | Add(a, b) | AddRow(a, b) | Sub(a, b) | Mul(a, b) => ([a, b], 2),
            Scale(a, _) | Relu(a) | Abs(a) | Sin(a) | Log(a) | Softmax(a) | LogSoftmax(a) | Sum(a) | Mean(a) => {
                ([a, a], 1)
            }
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    /// `None` for leaves and constants.
    op: Option<Op<T>>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Eagerly evaluated reverse-mode tape. Nodes are stored in recording order, which is
/// a topological order; `backward` walks it exactly in reverse.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Adjoints produced by [`Tape::backward`], indexed by node.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient with respect to `id`, zero-filled when the loss does not depend on it.
    pub fn wrt(&self, id: NodeId) -> Tensor<T> {
        match self.get(id) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[id.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded at or after position `len`.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    /// Differentiable input (a weight, or any value gradients are requested for).
    pub fn leaf(&mut self, value: Tensor<T>) -> NodeId {
        self.push(None, value, true)
    }

    /// Input treated as a constant; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(None, value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Option<Op<T>>, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> Result<&Node<T>> {
        self.nodes.get(id.0).ok_or(Error::UnknownNode(id.0))
    }

    /// Evaluates `op` eagerly and appends it to the tape.
    pub fn record(&mut self, op: Op<T>) -> Result<NodeId> {
        let (ins, n) = op.inputs();
        let mut requires_grad = false;
        for &id in &ins[..n] {
            requires_grad |= self.node(id)?.requires_grad;
        }
        let v = |id: NodeId| &self.nodes[id.0].value;
        let value = match op {
            Op::MatMul(a, b) => v(a).matmul(v(b))?,
            Op::MatMulT(a, b) => v(a).matmul_t(v(b))?,
            Op::Add(a, b) => v(a).add(v(b))?,
            Op::AddRow(a, b) => v(a).add_row(v(b))?,
            Op::Sub(a, b) => v(a).sub(v(b))?,
            Op::Scale(a, s) => v(a).scale(s),
            Op::Mul(a, b) => v(a).mul(v(b))?,
            Op::Relu(a) => v(a).relu(),
            Op::Abs(a) => v(a).map(T::abs),
            Op::Sin(a) => v(a).map(T::sin),
            Op::Log(a) => v(a).map(T::ln),
            Op::Softmax(a) => v(a).softmax_rows(),
            Op::LogSoftmax(a) => v(a).log_softmax_rows(),
            Op::Sum(a) => Tensor::scalar(v(a).sum()),
            Op::Mean(a) => {
                let t = v(a);
                Tensor::scalar(t.sum() / T::from_usize_lossy(t.len().max(1)))
            }
        };
        Ok(self.push(Some(op), value, requires_grad))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::MatMul(a, b))
    }
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::MatMulT(a, b))
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Add(a, b))
    }
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        self.record(Op::AddRow(a, row))
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Sub(a, b))
    }
    pub fn scale(&mut self, a: NodeId, s: T) -> Result<NodeId> {
        self.record(Op::Scale(a, s))
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Mul(a, b))
    }
    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Relu(a))
    }
    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Abs(a))
    }
    pub fn sin(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sin(a))
    }
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Log(a))
    }
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Softmax(a))
    }
    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::LogSoftmax(a))
    }
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sum(a))
    }
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Mean(a))
    }

    /// Reverse sweep from a `1 x 1` loss node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        let loss_node = self.node(loss)?;
        let (rows, cols) = loss_node.value.shape();
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarLoss { rows, cols });
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some(op) = node.op else { continue };
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(op, &node.value, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn propagate(&self, op: Op<T>, out: &Tensor<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let v = |id: NodeId| &self.nodes[id.0].value;
        let wants = |id: NodeId| self.nodes[id.0].requires_grad;
        let mut acc = |id: NodeId, delta: Tensor<T>| -> Result<()> {
            match &mut grads[id.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => {
                    *slot = Some(delta);
                    Ok(())
                }
            }
        };

        match op {
            Op::MatMul(a, b) => {
                if wants(a) {
                    acc(a, g.matmul_t(v(b))?)?;
                }
                if wants(b) {
                    acc(b, v(a).t_matmul(g)?)?;
                }
            }
            Op::MatMulT(a, b) => {
                if wants(a) {
                    acc(a, g.matmul(v(b))?)?;
                }
                if wants(b) {
                    acc(b, g.t_matmul(v(a))?)?;
                }
            }
            Op::Add(a, b) => {
                if wants(a) {
                    acc(a, g.clone())?;
                }
                if wants(b) {
                    acc(b, g.clone())?;
                }
            }
            Op::AddRow(a, b) => {
                if wants(a) {
                    acc(a, g.clone())?;
                }
                if wants(b) {
                    acc(b, g.column_sums())?;
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    acc(a, g.clone())?;
                }
                if wants(b) {
                    acc(b, g.scale(-T::one()))?;
                }
            }
            Op::Scale(a, s) => acc(a, g.scale(s))?,
            Op::Mul(a, b) => {
                if wants(a) {
                    acc(a, g.mul(v(b))?)?;
                }
                if wants(b) {
                    acc(b, g.mul(v(a))?)?;
                }
            }
            Op::Relu(a) => {
                let d = g.zip_map(v(a), "relu", |gi, x| if x > T::zero() { gi } else { T::zero() })?;
                acc(a, d)?;
            }
            Op::Abs(a) => acc(a, g.zip_map(v(a), "abs", |gi, x| gi * x.signum())?)?,
            Op::Sin(a) => acc(a, g.zip_map(v(a), "sin", |gi, x| gi * x.cos())?)?,
            Op::Log(a) => acc(a, g.zip_map(v(a), "log", |gi, x| gi / x)?)?,
            Op::Softmax(a) => {
                let mut d = g.mul(out)?;
                let cols = out.cols().max(1);
                for (drow, yrow) in d.data_mut().chunks_exact_mut(cols).zip(out.data().chunks_exact(cols)) {
                    let dot: T = drow.iter().copied().sum();
                    for (di, &yi) in drow.iter_mut().zip(yrow) {
                        *di -= yi * dot;
                    }
                }
                acc(a, d)?;
            }
            Op::LogSoftmax(a) => {
                let mut d = g.clone();
                let cols = out.cols().max(1);
                for (drow, yrow) in d.data_mut().chunks_exact_mut(cols).zip(out.data().chunks_exact(cols)) {
                    let total: T = drow.iter().copied().sum();
                    for (di, &yi) in drow.iter_mut().zip(yrow) {
                        *di -= yi.exp() * total;
                    }
                }
                acc(a, d)?;
            }
            Op::Sum(a) => {
                let (r, c) = v(a).shape();
                acc(a, Tensor::full(r, c, g.item()))?;
            }
            Op::Mean(a) => {
                let (r, c) = v(a).shape();
                let n = T::from_usize_lossy((r * c).max(1));
                acc(a, Tensor::full(r, c, g.item() / n))?;
            }
        }
        Ok(())
    }
}
