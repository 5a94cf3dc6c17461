//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records every operation of a forward pass as an append-only
//! node list (inputs always precede consumers), then [`Tape::backward`]
//! replays the list once in reverse, accumulating adjoints. One training
//! step owns one tape; tapes are never shared across threads.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{matmul_nn, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

/// Axis selector for 2-D reductions and softmax.
///
/// `Rows` is axis 0 (collapse the row index, producing one value per
/// column); `Cols` is axis 1 (one value per row).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Mean,
    Sum,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: usize, b: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Neg { x: usize },
    Sigmoid { x: usize },
    Tanh { x: usize },
    Relu { x: usize },
    Gelu { x: usize },
    Exp { x: usize },
    Scale { x: usize, factor: f64 },
    AddRowBias { x: usize, bias: usize },
    Softmax { x: usize, axis: Axis },
    Reduce { x: usize, kind: ReduceKind, axis: Option<Axis> },
    LayerNorm { x: usize, gain: usize, bias: usize, eps: f64 },
    Transpose { x: usize },
    Row { x: usize, index: usize },
    ConcatRows { parts: Vec<usize> },
    ConcatCols { parts: Vec<usize> },
    Reshape { x: usize },
    /// Inverted dropout; `mask` holds 0.0 for dropped entries and
    /// `1/(1-rate)` for survivors, so forward and backward are both a
    /// plain elementwise product with it.
    Dropout { x: usize, mask: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Append-only record of one forward computation.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn sigmoid(x: f64) -> f64 {
    // Split by sign so the exponential never overflows.
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new(), backward_done: false }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Adjoint of `id` after [`Tape::backward`]; `None` if the node was
    /// not reached or does not require gradients.
    pub fn gradient(&self, id: NodeId) -> Option<Tensor> {
        self.grads[id.0]
            .as_ref()
            .map(|g| Tensor::with_shape_of(&self.nodes[id.0].value, g.clone()))
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Leaf that never receives gradients (inputs, targets, constants).
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node { value, op, needs_grad });
        self.grads.push(None);
        NodeId(id)
    }

    fn needs(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].needs_grad)
    }

    // ── binary elementwise ──────────────────────────────────────────

    /// Shape rule shared by add/sub/mul: identical shapes, or one side a
    /// scalar. No other broadcasting; callers reshape explicitly.
    fn binary_shape(&self, op: &'static str, a: usize, b: usize) -> Result<Vec<usize>> {
        let sa = self.nodes[a].value.shape();
        let sb = self.nodes[b].value.shape();
        if sa == sb {
            return Ok(sa.to_vec());
        }
        if self.nodes[b].value.is_scalar() {
            return Ok(sa.to_vec());
        }
        if self.nodes[a].value.is_scalar() {
            return Ok(sb.to_vec());
        }
        Err(Error::Dimension { op, lhs: sa.to_vec(), rhs: sb.to_vec() })
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let shape = self.binary_shape(name, a.0, b.0)?;
        let numel: usize = shape.iter().product();
        let da = self.nodes[a.0].value.data();
        let db = self.nodes[b.0].value.data();
        let data: Vec<f64> = if da.len() == db.len() {
            da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect()
        } else if db.len() == 1 {
            da.iter().map(|&x| f(x, db[0])).collect()
        } else {
            db.iter().map(|&y| f(da[0], y)).collect()
        };
        debug_assert_eq!(data.len(), numel);
        let needs = self.needs(&[a.0, b.0]);
        Ok(self.push(Tensor::raw(shape, data), op, needs))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("add", a, b, |x, y| x + y, Op::Add { a: a.0, b: b.0 })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub { a: a.0, b: b.0 })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul { a: a.0, b: b.0 })
    }

    // ── unary elementwise ───────────────────────────────────────────

    fn unary(&mut self, x: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let data: Vec<f64> = self.nodes[x.0].value.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::with_shape_of(&self.nodes[x.0].value, data);
        let needs = self.nodes[x.0].needs_grad;
        self.push(value, op, needs)
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| -v, Op::Neg { x: x.0 })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(x, sigmoid, Op::Sigmoid { x: x.0 })
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::tanh, Op::Tanh { x: x.0 })
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| v.max(0.0), Op::Relu { x: x.0 })
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        self.unary(x, gelu, Op::Gelu { x: x.0 })
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::exp, Op::Exp { x: x.0 })
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        self.unary(x, |v| v * factor, Op::Scale { x: x.0, factor })
    }

    // ── structural ops ──────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.nodes[a.0].value.shape().to_vec();
        let sb = self.nodes[b.0].value.shape().to_vec();
        let ([m, k], [k2, n]) = (sa.as_slice(), sb.as_slice()) else {
            return Err(Error::Dimension { op: "matmul", lhs: sa, rhs: sb });
        };
        let (m, k, n) = (*m, *k, *n);
        if k != *k2 {
            return Err(Error::Dimension { op: "matmul", lhs: sa, rhs: sb });
        }
        let data = matmul_nn(self.nodes[a.0].value.data(), self.nodes[b.0].value.data(), m, k, n);
        let needs = self.needs(&[a.0, b.0]);
        Ok(self.push(Tensor::raw(vec![m, n], data), Op::Matmul { a: a.0, b: b.0 }, needs))
    }

    /// `x[m,n] + bias[n]` applied to every row.
    pub fn add_row_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, n) = self.nodes[x.0].value.dims2();
        let sb = self.nodes[bias.0].value.shape().to_vec();
        if sb != [n] {
            return Err(Error::Dimension {
                op: "add_row_bias",
                lhs: self.nodes[x.0].value.shape().to_vec(),
                rhs: sb,
            });
        }
        let xb = self.nodes[x.0].value.data();
        let bb = self.nodes[bias.0].value.data();
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            data.extend(xb[i * n..(i + 1) * n].iter().zip(bb).map(|(&v, &w)| v + w));
        }
        let needs = self.needs(&[x.0, bias.0]);
        let shape = self.nodes[x.0].value.shape().to_vec();
        Ok(self.push(
            Tensor::raw(shape, data),
            Op::AddRowBias { x: x.0, bias: bias.0 },
            needs,
        ))
    }

    pub fn softmax(&mut self, x: NodeId, axis: Axis) -> NodeId {
        let value = &self.nodes[x.0].value;
        let (m, n) = value.dims2();
        let xd = value.data();
        let mut data = vec![0.0; m * n];
        match axis {
            Axis::Cols => {
                for i in 0..m {
                    softmax_slice(&xd[i * n..(i + 1) * n], &mut data[i * n..(i + 1) * n]);
                }
            }
            Axis::Rows => {
                let mut col = vec![0.0; m];
                let mut out = vec![0.0; m];
                for j in 0..n {
                    for i in 0..m {
                        col[i] = xd[i * n + j];
                    }
                    softmax_slice(&col, &mut out);
                    for i in 0..m {
                        data[i * n + j] = out[i];
                    }
                }
            }
        }
        let value = Tensor::with_shape_of(&self.nodes[x.0].value, data);
        let needs = self.nodes[x.0].needs_grad;
        self.push(value, Op::Softmax { x: x.0, axis }, needs)
    }

    pub fn reduce(&mut self, kind: ReduceKind, x: NodeId, axis: Option<Axis>) -> Result<NodeId> {
        let (m, n) = self.nodes[x.0].value.dims2();
        let xd = self.nodes[x.0].value.data();
        let (shape, data) = match axis {
            None => {
                let s: f64 = xd.iter().sum();
                let v = match kind {
                    ReduceKind::Sum => s,
                    ReduceKind::Mean => s / xd.len() as f64,
                };
                (vec![1], vec![v])
            }
            Some(Axis::Rows) => {
                if m == 0 {
                    return Err(Error::Domain("reduce over empty axis".into()));
                }
                let mut out = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        out[j] += xd[i * n + j];
                    }
                }
                if kind == ReduceKind::Mean {
                    out.iter_mut().for_each(|v| *v /= m as f64);
                }
                (vec![n], out)
            }
            Some(Axis::Cols) => {
                if n == 0 {
                    return Err(Error::Domain("reduce over empty axis".into()));
                }
                let mut out = vec![0.0; m];
                for i in 0..m {
                    out[i] = xd[i * n..(i + 1) * n].iter().sum();
                }
                if kind == ReduceKind::Mean {
                    out.iter_mut().for_each(|v| *v /= n as f64);
                }
                (vec![m], out)
            }
        };
        let needs = self.nodes[x.0].needs_grad;
        Ok(self.push(Tensor::raw(shape, data), Op::Reduce { x: x.0, kind, axis }, needs))
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        self.reduce(ReduceKind::Mean, x, None).expect("full reduce is infallible")
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        self.reduce(ReduceKind::Sum, x, None).expect("full reduce is infallible")
    }

    /// Per-row normalization over the last axis to zero mean / unit
    /// variance, then `gain * x_hat + bias`.
    pub fn layernorm(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> Result<NodeId> {
        let (m, n) = self.nodes[x.0].value.dims2();
        if self.nodes[gain.0].value.shape() != [n] || self.nodes[bias.0].value.shape() != [n] {
            return Err(Error::Dimension {
                op: "layernorm",
                lhs: self.nodes[x.0].value.shape().to_vec(),
                rhs: self.nodes[gain.0].value.shape().to_vec(),
            });
        }
        let xd = self.nodes[x.0].value.data();
        let gd = self.nodes[gain.0].value.data();
        let bd = self.nodes[bias.0].value.data();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &xd[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..n {
                data[i * n + j] = (row[j] - mean) * inv * gd[j] + bd[j];
            }
        }
        let needs = self.needs(&[x.0, gain.0, bias.0]);
        let shape = self.nodes[x.0].value.shape().to_vec();
        Ok(self.push(
            Tensor::raw(shape, data),
            Op::LayerNorm { x: x.0, gain: gain.0, bias: bias.0, eps },
            needs,
        ))
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let shape = self.nodes[x.0].value.shape().to_vec();
        let &[m, n] = shape.as_slice() else {
            return Err(Error::Dimension { op: "transpose", lhs: shape, rhs: vec![] });
        };
        let xd = self.nodes[x.0].value.data();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = xd[i * n + j];
            }
        }
        let needs = self.nodes[x.0].needs_grad;
        Ok(self.push(Tensor::raw(vec![n, m], data), Op::Transpose { x: x.0 }, needs))
    }

    /// Extract row `index` of a 2-D tensor as a `[1, n]` tensor.
    pub fn row(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        let shape = self.nodes[x.0].value.shape().to_vec();
        let &[m, n] = shape.as_slice() else {
            return Err(Error::Dimension { op: "row", lhs: shape, rhs: vec![] });
        };
        if index >= m {
            return Err(Error::Contract(format!("row {index} out of bounds for {m} rows")));
        }
        let data = self.nodes[x.0].value.data()[index * n..(index + 1) * n].to_vec();
        let needs = self.nodes[x.0].needs_grad;
        Ok(self.push(Tensor::raw(vec![1, n], data), Op::Row { x: x.0, index }, needs))
    }

    /// Stack parts vertically. Rank-1 parts count as single rows.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Contract("concat_rows of zero parts".into()));
        }
        let (_, n) = self.nodes[parts[0].0].value.dims2();
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            let (r, c) = self.nodes[p.0].value.dims2();
            if c != n {
                return Err(Error::Dimension {
                    op: "concat_rows",
                    lhs: vec![rows, n],
                    rhs: self.nodes[p.0].value.shape().to_vec(),
                });
            }
            rows += r;
            data.extend_from_slice(self.nodes[p.0].value.data());
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let needs = self.needs(&ids);
        Ok(self.push(Tensor::raw(vec![rows, n], data), Op::ConcatRows { parts: ids }, needs))
    }

    /// Concatenate 2-D parts side by side (same row count).
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Contract("concat_cols of zero parts".into()));
        }
        let (m, _) = self.nodes[parts[0].0].value.dims2();
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = self.nodes[p.0].value.dims2();
            if r != m {
                return Err(Error::Dimension {
                    op: "concat_cols",
                    lhs: self.nodes[parts[0].0].value.shape().to_vec(),
                    rhs: self.nodes[p.0].value.shape().to_vec(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; m * total];
        let mut offset = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let pd = self.nodes[p.0].value.data();
            for i in 0..m {
                data[i * total + offset..i * total + offset + w]
                    .copy_from_slice(&pd[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let needs = self.needs(&ids);
        Ok(self.push(Tensor::raw(vec![m, total], data), Op::ConcatCols { parts: ids }, needs))
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let numel: usize = shape.iter().product();
        if numel != self.nodes[x.0].value.numel() || shape.is_empty() || shape.len() > 2 {
            return Err(Error::Dimension {
                op: "reshape",
                lhs: self.nodes[x.0].value.shape().to_vec(),
                rhs: shape,
            });
        }
        let data = self.nodes[x.0].value.data().to_vec();
        let needs = self.nodes[x.0].needs_grad;
        Ok(self.push(Tensor::raw(shape, data), Op::Reshape { x: x.0 }, needs))
    }

    /// Inverted dropout: survivors are scaled by `1/(1-rate)` so the
    /// expectation matches the input. Pass `rate = 0` for a no-op.
    pub fn dropout(&mut self, x: NodeId, rate: f64, rng: &mut ChaCha8Rng) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - rate;
        let inv = 1.0 / keep;
        let mask: Vec<f64> = (0..self.nodes[x.0].value.numel())
            .map(|_| if rng.gen::<f64>() < keep { inv } else { 0.0 })
            .collect();
        let data: Vec<f64> =
            self.nodes[x.0].value.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::with_shape_of(&self.nodes[x.0].value, data);
        let needs = self.nodes[x.0].needs_grad;
        Ok(self.push(value, Op::Dropout { x: x.0, mask }, needs))
    }

    /// Mean squared error between two same-shape nodes, as a scalar node.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let sa = self.nodes[pred.0].value.shape();
        let sb = self.nodes[target.0].value.shape();
        if sa != sb {
            return Err(Error::Dimension { op: "mse", lhs: sa.to_vec(), rhs: sb.to_vec() });
        }
        let diff = self.sub(pred, target)?;
        let sq = self.mul(diff, diff)?;
        Ok(self.mean_all(sq))
    }

    // ── backward ────────────────────────────────────────────────────

    /// Propagate adjoints from a scalar `loss` node back to every leaf
    /// with `requires_grad`. Each node is visited exactly once, in
    /// reverse recording order. Calling this twice on one tape is an
    /// error; build a fresh tape per step instead.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.backward_done {
            return Err(Error::Contract(
                "backward already ran on this tape; record a new tape".into(),
            ));
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        self.backward_done = true;
        self.grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            self.apply_adjoint(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn acc(&mut self, id: usize, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[id].needs_grad {
            return;
        }
        let n = self.nodes[id].value.numel();
        let slot = self.grads[id].get_or_insert_with(|| vec![0.0; n]);
        f(slot);
    }

    fn apply_adjoint(&mut self, i: usize, g: &[f64]) {
        // Clone the op descriptor (cheap: indices + the occasional mask)
        // so `self` stays free for accumulation calls.
        let op = self.nodes[i].op.clone();
        match op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                self.acc_broadcast(a, g, |gi, _| gi);
                self.acc_broadcast(b, g, |gi, _| gi);
            }
            Op::Sub { a, b } => {
                self.acc_broadcast(a, g, |gi, _| gi);
                self.acc_broadcast(b, g, |gi, _| -gi);
            }
            Op::Mul { a, b } => {
                let (bd, ad) = (self.nodes[b].value.data().to_vec(), self.nodes[a].value.data().to_vec());
                self.acc_broadcast(a, g, |gi, idx| {
                    gi * if bd.len() == 1 { bd[0] } else { bd[idx] }
                });
                self.acc_broadcast(b, g, |gi, idx| {
                    gi * if ad.len() == 1 { ad[0] } else { ad[idx] }
                });
            }
            Op::Neg { x } => self.acc(x, |dst| {
                for (d, &gi) in dst.iter_mut().zip(g) {
                    *d -= gi;
                }
            }),
            Op::Sigmoid { x } => {
                let y = self.nodes[i].value.data().to_vec();
                self.acc(x, |dst| {
                    for ((d, &gi), &yi) in dst.iter_mut().zip(g).zip(&y) {
                        *d += gi * yi * (1.0 - yi);
                    }
                });
            }
            Op::Tanh { x } => {
                let y = self.nodes[i].value.data().to_vec();
                self.acc(x, |dst| {
                    for ((d, &gi), &yi) in dst.iter_mut().zip(g).zip(&y) {
                        *d += gi * (1.0 - yi * yi);
                    }
                });
            }
            Op::Relu { x } => {
                let xv = self.nodes[x].value.data().to_vec();
                self.acc(x, |dst| {
                    for ((d, &gi), &xi) in dst.iter_mut().zip(g).zip(&xv) {
                        if xi > 0.0 {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Gelu { x } => {
                let xv = self.nodes[x].value.data().to_vec();
                self.acc(x, |dst| {
                    for ((d, &gi), &xi) in dst.iter_mut().zip(g).zip(&xv) {
                        *d += gi * gelu_grad(xi);
                    }
                });
            }
            Op::Exp { x } => {
                let y = self.nodes[i].value.data().to_vec();
                self.acc(x, |dst| {
                    for ((d, &gi), &yi) in dst.iter_mut().zip(g).zip(&y) {
                        *d += gi * yi;
                    }
                });
            }
            Op::Scale { x, factor } => self.acc(x, |dst| {
                for (d, &gi) in dst.iter_mut().zip(g) {
                    *d += gi * factor;
                }
            }),
            Op::Dropout { x, mask } => self.acc(x, |dst| {
                for ((d, &gi), &m) in dst.iter_mut().zip(g).zip(&mask) {
                    *d += gi * m;
                }
            }),
            Op::Matmul { a, b } => {
                let (m, k) = self.nodes[a].value.dims2();
                let (_, n) = self.nodes[b].value.dims2();
                if self.nodes[a].needs_grad {
                    let da = matmul_nt(g, self.nodes[b].value.data(), m, n, k);
                    self.acc(a, |dst| {
                        for (d, v) in dst.iter_mut().zip(da) {
                            *d += v;
                        }
                    });
                }
                if self.nodes[b].needs_grad {
                    let db = matmul_tn(self.nodes[a].value.data(), g, m, k, n);
                    self.acc(b, |dst| {
                        for (d, v) in dst.iter_mut().zip(db) {
                            *d += v;
                        }
                    });
                }
            }
            Op::AddRowBias { x, bias } => {
                let (m, n) = self.nodes[x].value.dims2();
                self.acc(x, |dst| {
                    for (d, &gi) in dst.iter_mut().zip(g) {
                        *d += gi;
                    }
                });
                self.acc(bias, |dst| {
                    for i in 0..m {
                        for j in 0..n {
                            dst[j] += g[i * n + j];
                        }
                    }
                });
            }
            Op::Softmax { x, axis } => {
                let y = self.nodes[i].value.data().to_vec();
                let (m, n) = self.nodes[i].value.dims2();
                self.acc(x, |dst| match axis {
                    Axis::Cols => {
                        for r in 0..m {
                            let yr = &y[r * n..(r + 1) * n];
                            let gr = &g[r * n..(r + 1) * n];
                            let dot: f64 = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                            for j in 0..n {
                                dst[r * n + j] += yr[j] * (gr[j] - dot);
                            }
                        }
                    }
                    Axis::Rows => {
                        for c in 0..n {
                            let mut dot = 0.0;
                            for r in 0..m {
                                dot += y[r * n + c] * g[r * n + c];
                            }
                            for r in 0..m {
                                dst[r * n + c] += y[r * n + c] * (g[r * n + c] - dot);
                            }
                        }
                    }
                });
            }
            Op::Reduce { x, kind, axis } => {
                let (m, n) = self.nodes[x].value.dims2();
                self.acc(x, |dst| match axis {
                    None => {
                        let s = match kind {
                            ReduceKind::Mean => g[0] / dst.len() as f64,
                            ReduceKind::Sum => g[0],
                        };
                        for d in dst.iter_mut() {
                            *d += s;
                        }
                    }
                    Some(Axis::Rows) => {
                        let scale = match kind {
                            ReduceKind::Mean => 1.0 / m as f64,
                            ReduceKind::Sum => 1.0,
                        };
                        for r in 0..m {
                            for c in 0..n {
                                dst[r * n + c] += g[c] * scale;
                            }
                        }
                    }
                    Some(Axis::Cols) => {
                        let scale = match kind {
                            ReduceKind::Mean => 1.0 / n as f64,
                            ReduceKind::Sum => 1.0,
                        };
                        for r in 0..m {
                            for c in 0..n {
                                dst[r * n + c] += g[r] * scale;
                            }
                        }
                    }
                });
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                let (m, n) = self.nodes[x].value.dims2();
                let xd = self.nodes[x].value.data().to_vec();
                let gd = self.nodes[gain].value.data().to_vec();
                // Recompute per-row normalized values; cheaper than saving
                // them and keeps node payloads uniform.
                let mut xhat = vec![0.0; m * n];
                let mut inv_std = vec![0.0; m];
                for r in 0..m {
                    let row = &xd[r * n..(r + 1) * n];
                    let mean = row.iter().sum::<f64>() / n as f64;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    inv_std[r] = inv;
                    for c in 0..n {
                        xhat[r * n + c] = (row[c] - mean) * inv;
                    }
                }
                self.acc(x, |dst| {
                    for r in 0..m {
                        let gr = &g[r * n..(r + 1) * n];
                        let xr = &xhat[r * n..(r + 1) * n];
                        let mut mean_gg = 0.0;
                        let mut mean_gx = 0.0;
                        for c in 0..n {
                            let gg = gr[c] * gd[c];
                            mean_gg += gg;
                            mean_gx += gg * xr[c];
                        }
                        mean_gg /= n as f64;
                        mean_gx /= n as f64;
                        for c in 0..n {
                            let gg = gr[c] * gd[c];
                            dst[r * n + c] += inv_std[r] * (gg - mean_gg - xr[c] * mean_gx);
                        }
                    }
                });
                self.acc(gain, |dst| {
                    for r in 0..m {
                        for c in 0..n {
                            dst[c] += g[r * n + c] * xhat[r * n + c];
                        }
                    }
                });
                self.acc(bias, |dst| {
                    for r in 0..m {
                        for c in 0..n {
                            dst[c] += g[r * n + c];
                        }
                    }
                });
            }
            Op::Transpose { x } => {
                let (n, m) = self.nodes[i].value.dims2();
                self.acc(x, |dst| {
                    for r in 0..n {
                        for c in 0..m {
                            dst[c * n + r] += g[r * m + c];
                        }
                    }
                });
            }
            Op::Row { x, index } => {
                let (_, n) = self.nodes[x].value.dims2();
                self.acc(x, |dst| {
                    for (j, &gi) in g.iter().enumerate() {
                        dst[index * n + j] += gi;
                    }
                });
            }
            Op::ConcatRows { parts } => {
                let mut offset = 0;
                for p in parts {
                    let len = self.nodes[p].value.numel();
                    let slice = g[offset..offset + len].to_vec();
                    self.acc(p, |dst| {
                        for (d, v) in dst.iter_mut().zip(slice) {
                            *d += v;
                        }
                    });
                    offset += len;
                }
            }
            Op::ConcatCols { parts } => {
                let (m, total) = self.nodes[i].value.dims2();
                let mut offset = 0;
                for p in parts {
                    let (_, w) = self.nodes[p].value.dims2();
                    let mut slice = vec![0.0; m * w];
                    for r in 0..m {
                        slice[r * w..(r + 1) * w]
                            .copy_from_slice(&g[r * total + offset..r * total + offset + w]);
                    }
                    self.acc(p, |dst| {
                        for (d, v) in dst.iter_mut().zip(slice) {
                            *d += v;
                        }
                    });
                    offset += w;
                }
            }
            Op::Reshape { x } => self.acc(x, |dst| {
                for (d, &gi) in dst.iter_mut().zip(g) {
                    *d += gi;
                }
            }),
        }
    }

    /// Accumulate `f(g[idx], idx)` into a target that is either the same
    /// shape as `g` or a scalar (broadcast case: adjoint sums).
    fn acc_broadcast(&mut self, id: usize, g: &[f64], f: impl Fn(f64, usize) -> f64) {
        if !self.nodes[id].needs_grad {
            return;
        }
        let n = self.nodes[id].value.numel();
        let slot = self.grads[id].get_or_insert_with(|| vec![0.0; n]);
        if n == g.len() {
            for (i, d) in slot.iter_mut().enumerate() {
                *d += f(g[i], i);
            }
        } else {
            debug_assert_eq!(n, 1);
            slot[0] += g.iter().enumerate().map(|(i, &gi)| f(gi, i)).sum::<f64>();
        }
    }
}

fn softmax_slice(x: &[f64], out: &mut [f64]) {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        let e = (v - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t1(v: &[f64]) -> Tensor {
        Tensor::vector(v.to_vec())
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let mut tape = Tape::new();
        let eye = tape.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let v = tape.constant(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
        let out = tape.matmul(eye, v).unwrap();
        assert_eq!(tape.value(out).data(), &[3.0, 4.0]);

        let a = tape.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let b = tape.constant(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(out).data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_mismatch_reports_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        let b = tape.constant(Tensor::matrix(2, 2, vec![0.0; 4]).unwrap());
        let err = tape.matmul(a, b).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("[2, 3]") && text.contains("[2, 2]"), "{text}");
    }

    #[test]
    fn sigmoid_tanh_at_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(t1(&[0.0]));
        let s = tape.sigmoid(x);
        let t = tape.tanh(x);
        assert_eq!(tape.value(s).data(), &[0.5]);
        assert_eq!(tape.value(t).data(), &[0.0]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        let mut tape = Tape::new();
        let x = tape.constant(t1(&[-1000.0, 1000.0]));
        let s = tape.sigmoid(x);
        assert_eq!(tape.value(s).data(), &[0.0, 1.0]);
        assert!(tape.value(s).all_finite());
    }

    #[test]
    fn softmax_uniform_and_overflow_cases() {
        let mut tape = Tape::new();
        let x = tape.constant(t1(&[0.0, 0.0, 0.0]));
        let y = tape.softmax(x, Axis::Cols);
        for &v in tape.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let big = tape.constant(t1(&[1000.0, 0.0]));
        let y = tape.softmax(big, Axis::Cols);
        let out = tape.value(y).data();
        assert!(out[0] > 1.0 - 1e-12 && out[1] < 1e-12);
        assert!(tape.value(y).all_finite());
    }

    #[test]
    fn reduce_mean_hand_cases() {
        let mut tape = Tape::new();
        let x = tape.constant(t1(&[1.0, 2.0, 3.0]));
        let m = tape.mean_all(x);
        assert_eq!(tape.value(m).data(), &[2.0]);

        // mean over T copies of v returns v
        let rows = tape.constant(Tensor::matrix(3, 2, vec![4.0, 7.0, 4.0, 7.0, 4.0, 7.0]).unwrap());
        let m = tape.reduce(ReduceKind::Mean, rows, Some(Axis::Rows)).unwrap();
        assert_eq!(tape.value(m).data(), &[4.0, 7.0]);
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(t1(&[1.0, 2.0, 3.0, 4.0]), true);
        let s = tape.sum_all(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.gradient(x).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_elementwise_square() {
        let mut tape = Tape::new();
        let x = tape.leaf(t1(&[1.0, 2.0]), true);
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum_all(sq);
        tape.backward(s).unwrap();
        assert_eq!(tape.gradient(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_mean_distributes_inverse_count() {
        let mut tape = Tape::new();
        let x = tape.leaf(t1(&[5.0, 6.0, 7.0]), true);
        let m = tape.mean_all(x);
        tape.backward(m).unwrap();
        let g = tape.gradient(x).unwrap();
        for &v in g.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(t1(&[1.0, 2.0]), true);
        let y = tape.mul(x, x).unwrap();
        assert!(matches!(tape.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn backward_twice_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(t1(&[1.0]), true);
        let s = tape.sum_all(x);
        tape.backward(s).unwrap();
        assert!(matches!(tape.backward(s), Err(Error::Contract(_))));
    }

    #[test]
    fn layernorm_constant_row_is_zeroed() {
        let mut tape = Tape::new();
        let x = tape.constant(t1(&[3.0, 3.0, 3.0]));
        let gain = tape.constant(t1(&[1.0, 1.0, 1.0]));
        let bias = tape.constant(t1(&[0.0, 0.0, 0.0]));
        let y = tape.layernorm(x, gain, bias, 1e-5).unwrap();
        for &v in tape.value(y).data() {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn layernorm_two_point_zscore() {
        let mut tape = Tape::new();
        let x = tape.constant(t1(&[1.0, 3.0]));
        let gain = tape.constant(t1(&[1.0, 1.0]));
        let bias = tape.constant(t1(&[0.0, 0.0]));
        let y = tape.layernorm(x, gain, bias, 1e-12).unwrap();
        let out = tape.value(y).data();
        assert!((out[0] + 1.0).abs() < 1e-5);
        assert!((out[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn dropout_zero_rate_is_identity_node() {
        use rand::SeedableRng;
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = tape.constant(t1(&[1.0, 2.0]));
        let y = tape.dropout(x, 0.0, &mut rng).unwrap();
        assert_eq!(x, y);
        assert!(tape.dropout(x, 1.0, &mut rng).is_err());
        assert!(tape.dropout(x, -0.1, &mut rng).is_err());
    }

    #[test]
    fn concat_and_row_round_trip() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let b = tape.constant(Tensor::matrix(1, 2, vec![3.0, 4.0]).unwrap());
        let cat = tape.concat_rows(&[a, b]).unwrap();
        assert_eq!(tape.value(cat).shape(), &[2, 2]);
        let r1 = tape.row(cat, 1).unwrap();
        assert_eq!(tape.value(r1).data(), &[3.0, 4.0]);
    }

    #[test]
    fn concat_cols_layout() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::matrix(2, 1, vec![1.0, 3.0]).unwrap());
        let b = tape.constant(Tensor::matrix(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap());
        let cat = tape.concat_cols(&[a, b]).unwrap();
        assert_eq!(tape.value(cat).data(), &[1.0, 5.0, 6.0, 3.0, 7.0, 8.0]);
    }
}
