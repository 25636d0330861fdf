use super::tensor::matmul_into;
use super::{Gradients, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise primitives available through [`Tape::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Tanh,
    Sigmoid,
    Add,
    Sub,
    Hadamard,
    Scale(f64),
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    EmbedRow { table: ParamId, row: usize },
    MatMul { a: NodeId, b: NodeId, ta: bool, tb: bool },
    Tanh(NodeId),
    Sigmoid(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Scale(NodeId, f64),
    ScaleBy { x: NodeId, s: NodeId },
    AddRowBroadcast { m: NodeId, v: NodeId },
    Softmax(NodeId),
    LogSoftmax(NodeId),
    Concat(Vec<NodeId>),
    StackRows(Vec<NodeId>),
    Pick { x: NodeId, index: usize },
    Sum(NodeId),
    AddN(Vec<NodeId>),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    /// `None` for parameter leaves, whose value lives in the store.
    value: Option<Tensor>,
}

/// Append-only record of a forward computation over a borrowed parameter store.
///
/// Parents always precede their children, so the node order is a topological
/// order and `backward` is a single reverse sweep.
#[derive(Clone, Debug)]
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

/// Result of a reverse sweep: gradients for every node and every parameter.
#[derive(Debug)]
pub struct Backward {
    nodes: Vec<Option<Tensor>>,
    pub params: Gradients,
}

impl Backward {
    /// Gradient of the loss w.r.t. a node; `None` when the node does not reach the loss.
    pub fn node(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].as_ref()
    }

    pub fn param(&self, id: ParamId) -> &Tensor {
        self.params.get(id)
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(p)) => self.params.get(*p),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.value(id).shape()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        debug_assert!(
            value.data().iter().all(|x| !x.is_nan()),
            "NaN produced by {op:?}"
        );
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant leaf. Gradients still flow to it and are reported by [`Backward::node`].
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Row `row` of a parameter matrix as a column vector.
    pub fn embed_row(&mut self, table: ParamId, row: usize) -> Result<NodeId> {
        let t = self.params.get(table);
        if row >= t.rows() {
            return Err(Error::Index {
                what: "embedding table",
                index: row,
                len: t.rows(),
            });
        }
        let v = Tensor::vector(t.row(row).to_vec());
        Ok(self.push(Op::EmbedRow { table, row }, v))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.matmul_t(a, b, false, false)
    }

    /// `op(a) · op(b)` with optional transposes of either operand.
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId, ta: bool, tb: bool) -> Result<NodeId> {
        let v = self.value(a).matmul_t(self.value(b), ta, tb)?;
        Ok(self.push(Op::MatMul { a, b, ta, tb }, v))
    }

    pub fn elementwise(&mut self, kind: Elementwise, inputs: &[NodeId]) -> Result<NodeId> {
        let arity = match kind {
            Elementwise::Tanh | Elementwise::Sigmoid | Elementwise::Scale(_) => 1,
            _ => 2,
        };
        if inputs.len() != arity {
            return Err(Error::domain(format!(
                "{kind:?} takes {arity} input(s), got {}",
                inputs.len()
            )));
        }
        match kind {
            Elementwise::Tanh => Ok(self.tanh(inputs[0])),
            Elementwise::Sigmoid => Ok(self.sigmoid(inputs[0])),
            Elementwise::Scale(f) => Ok(self.scale(inputs[0], f)),
            Elementwise::Add => self.add(inputs[0], inputs[1]),
            Elementwise::Sub => self.sub(inputs[0], inputs[1]),
            Elementwise::Hadamard => self.hadamard(inputs[0], inputs[1]),
        }
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(f64::tanh);
        self.push(Op::Tanh(x), v)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(sigmoid);
        self.push(Op::Sigmoid(x), v)
    }

    fn binary(&mut self, name: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::dim(name, sa, sb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("hadamard", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(Op::Hadamard(a, b), v))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let v = self.value(x).map(|a| a * factor);
        self.push(Op::Scale(x, factor), v)
    }

    /// `x · s` for a 1×1 node `s`.
    pub fn scale_by(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        let ss = self.shape(s);
        if ss != (1, 1) {
            return Err(Error::dim("scale_by", self.shape(x), ss));
        }
        let f = self.value(s).item();
        let v = self.value(x).map(|a| a * f);
        Ok(self.push(Op::ScaleBy { x, s }, v))
    }

    /// Adds the column vector `v` (length = `m.cols`) to every row of `m`.
    pub fn add_row_broadcast(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        let (sm, sv) = (self.shape(m), self.shape(v));
        if sv != (sm.1, 1) {
            return Err(Error::dim("add_row_broadcast", sm, sv));
        }
        let mut out = self.value(m).clone();
        let vv = self.value(v).data();
        for r in 0..sm.0 {
            for (o, &x) in out.row_mut(r).iter_mut().zip(vv) {
                *o += x;
            }
        }
        Ok(self.push(Op::AddRowBroadcast { m, v }, out))
    }

    fn require_vector(&self, op: &'static str, x: NodeId) -> Result<()> {
        let s = self.shape(x);
        if s.1 != 1 {
            return Err(Error::dim(op, s, (s.0, 1)));
        }
        if s.0 == 0 {
            return Err(Error::domain(format!("{op} of an empty vector")));
        }
        Ok(())
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        self.require_vector("softmax", x)?;
        let v = softmax_values(self.value(x).data())?;
        Ok(self.push(Op::Softmax(x), Tensor::vector(v)))
    }

    pub fn log_softmax(&mut self, x: NodeId) -> Result<NodeId> {
        self.require_vector("log_softmax", x)?;
        let xs = self.value(x).data();
        let max = finite_max(xs)?;
        let lse = max + xs.iter().map(|&a| (a - max).exp()).sum::<f64>().ln();
        let v = xs.iter().map(|&a| a - lse).collect();
        Ok(self.push(Op::LogSoftmax(x), Tensor::vector(v)))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if !v.is_vector() {
                return Err(Error::dim("concat", v.shape(), (v.rows(), 1)));
            }
            data.extend_from_slice(v.data());
        }
        if parts.is_empty() {
            return Err(Error::domain("concat of zero parts"));
        }
        Ok(self.push(Op::Concat(parts.to_vec()), Tensor::vector(data)))
    }

    /// Stacks equal-length column vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        let first = rows
            .first()
            .ok_or_else(|| Error::domain("stack_rows of zero rows"))?;
        let width = self.shape(*first).0;
        let mut data = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            let v = self.value(r);
            if v.shape() != (width, 1) {
                return Err(Error::dim("stack_rows", (width, 1), v.shape()));
            }
            data.extend_from_slice(v.data());
        }
        let t = Tensor::from_vec(rows.len(), width, data)?;
        Ok(self.push(Op::StackRows(rows.to_vec()), t))
    }

    /// Component `index` of a vector as a 1×1 node.
    pub fn pick(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        let v = self.value(x);
        if index >= v.len() {
            return Err(Error::Index {
                what: "vector",
                index,
                len: v.len(),
            });
        }
        let s = v.data()[index];
        Ok(self.push(Op::Pick { x, index }, Tensor::scalar(s)))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).sum();
        self.push(Op::Sum(x), Tensor::scalar(s))
    }

    /// Sum of equally shaped nodes.
    pub fn add_n(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let first = xs.first().ok_or_else(|| Error::domain("add_n of zero terms"))?;
        let mut acc = self.value(*first).clone();
        for &x in &xs[1..] {
            let v = self.value(x);
            if v.shape() != acc.shape() {
                return Err(Error::dim("add_n", acc.shape(), v.shape()));
            }
            acc.add_assign(v);
        }
        Ok(self.push(Op::AddN(xs.to_vec()), acc))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Backward> {
        let mut params = Gradients::zeros(self.params);
        let nodes = self.sweep(loss, &mut params, true)?;
        Ok(Backward { nodes, params })
    }

    /// Reverse sweep that only accumulates parameter gradients into `grads`.
    pub fn backward_into(&self, loss: NodeId, grads: &mut Gradients) -> Result<()> {
        self.sweep(loss, grads, false).map(|_| ())
    }

    fn sweep(&self, loss: NodeId, params: &mut Gradients, keep: bool) -> Result<Vec<Option<Tensor>>> {
        let ls = self.shape(loss);
        if ls != (1, 1) {
            return Err(Error::domain(format!(
                "backward requires a scalar loss, got shape {ls:?}"
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(p) => params.get_mut(*p).add_assign(&g),
                Op::EmbedRow { table, row } => {
                    let t = params.get_mut(*table);
                    for (a, b) in t.row_mut(*row).iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                Op::MatMul { a, b, ta, tb } => {
                    let (a, b, ta, tb) = (*a, *b, *ta, *tb);
                    let (av, bv) = (self.value(a), self.value(b));
                    // C = op(A) op(B); dA = dC op(B)ᵀ (transposed back if ta), likewise for B
                    {
                        let target = self.grad_slot(a, &mut grads, params);
                        if ta {
                            matmul_into(bv, &g, tb, true, target, true);
                        } else {
                            matmul_into(&g, bv, false, !tb, target, true);
                        }
                    }
                    {
                        let target = self.grad_slot(b, &mut grads, params);
                        if tb {
                            matmul_into(&g, av, true, ta, target, true);
                        } else {
                            matmul_into(av, &g, !ta, false, target, true);
                        }
                    }
                }
                Op::Tanh(x) => {
                    let y = node.value.as_ref().unwrap();
                    let d = g.zip_map(y, |g, y| g * (1.0 - y * y));
                    self.accumulate(*x, &d, &mut grads, params);
                }
                Op::Sigmoid(x) => {
                    let y = node.value.as_ref().unwrap();
                    let d = g.zip_map(y, |g, y| g * y * (1.0 - y));
                    self.accumulate(*x, &d, &mut grads, params);
                }
                Op::Add(a, b) => {
                    self.accumulate(*a, &g, &mut grads, params);
                    self.accumulate(*b, &g, &mut grads, params);
                }
                Op::Sub(a, b) => {
                    self.accumulate(*a, &g, &mut grads, params);
                    self.grad_slot(*b, &mut grads, params).scaled_add_assign(-1.0, &g);
                }
                Op::Hadamard(a, b) => {
                    let da = g.zip_map(self.value(*b), |g, y| g * y);
                    let db = g.zip_map(self.value(*a), |g, x| g * x);
                    self.accumulate(*a, &da, &mut grads, params);
                    self.accumulate(*b, &db, &mut grads, params);
                }
                Op::Scale(x, f) => {
                    self.grad_slot(*x, &mut grads, params).scaled_add_assign(*f, &g);
                }
                Op::ScaleBy { x, s } => {
                    let f = self.value(*s).item();
                    let ds = g.dot(self.value(*x));
                    self.grad_slot(*x, &mut grads, params).scaled_add_assign(f, &g);
                    self.accumulate(*s, &Tensor::scalar(ds), &mut grads, params);
                }
                Op::AddRowBroadcast { m, v } => {
                    self.accumulate(*m, &g, &mut grads, params);
                    let cols = g.cols();
                    let mut dv = Tensor::zeros(cols, 1);
                    for r in 0..g.rows() {
                        for (a, b) in dv.data_mut().iter_mut().zip(g.row(r)) {
                            *a += b;
                        }
                    }
                    self.accumulate(*v, &dv, &mut grads, params);
                }
                Op::Softmax(x) => {
                    let y = node.value.as_ref().unwrap();
                    let gy = g.dot(y);
                    let d = g.zip_map(y, |g, y| y * (g - gy));
                    self.accumulate(*x, &d, &mut grads, params);
                }
                Op::LogSoftmax(x) => {
                    let y = node.value.as_ref().unwrap();
                    let gs = g.sum();
                    let d = g.zip_map(y, |g, y| g - y.exp() * gs);
                    self.accumulate(*x, &d, &mut grads, params);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        let piece = Tensor::vector(g.data()[offset..offset + n].to_vec());
                        self.accumulate(p, &piece, &mut grads, params);
                        offset += n;
                    }
                }
                Op::StackRows(rows) => {
                    for (r, &p) in rows.iter().enumerate() {
                        let piece = Tensor::vector(g.row(r).to_vec());
                        self.accumulate(p, &piece, &mut grads, params);
                    }
                }
                Op::Pick { x, index } => {
                    let (rows, cols) = self.shape(*x);
                    let slot = self.grad_slot(*x, &mut grads, params);
                    debug_assert_eq!(slot.shape(), (rows, cols));
                    slot.data_mut()[*index] += g.item();
                }
                Op::Sum(x) => {
                    let gv = g.item();
                    let slot = self.grad_slot(*x, &mut grads, params);
                    slot.data_mut().iter_mut().for_each(|a| *a += gv);
                }
                Op::AddN(xs) => {
                    for &x in xs {
                        self.accumulate(x, &g, &mut grads, params);
                    }
                }
            }
            if keep {
                grads[i] = Some(g);
            }
        }
        Ok(grads)
    }

    fn accumulate(&self, id: NodeId, d: &Tensor, grads: &mut [Option<Tensor>], params: &mut Gradients) {
        self.grad_slot(id, grads, params).add_assign(d);
    }

    /// Mutable gradient buffer for a node; parameter leaves write straight into `params`.
    fn grad_slot<'g>(
        &self,
        id: NodeId,
        grads: &'g mut [Option<Tensor>],
        params: &'g mut Gradients,
    ) -> &'g mut Tensor {
        if let Op::Param(p) = self.nodes[id.0].op {
            return params.get_mut(p);
        }
        let (r, c) = self.shape(id);
        grads[id.0].get_or_insert_with(|| Tensor::zeros(r, c))
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn finite_max(xs: &[f64]) -> Result<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::domain("softmax over all -inf scores"));
    }
    Ok(max)
}

/// Max-shifted softmax. Entries equal to `-inf` get exactly zero weight.
pub fn softmax_values(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::domain("softmax of an empty vector"));
    }
    let max = finite_max(xs)?;
    let exps: Vec<f64> = xs.iter().map(|&a| (a - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}
