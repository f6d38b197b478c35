use std::cell::RefCell;

use super::{matmul_nt, matmul_tn, Tensor};
use crate::error::{GibError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum UnaryKind {
    Relu,
    Tanh,
    Exp,
    Log,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Binary(BinaryKind, usize, usize),
    Scale(usize, f64),
    Offset(usize),
    Unary(UnaryKind, usize),
    RowSoftmax(usize),
    Sum(usize),
    Mean(usize),
    FrobeniusNorm(usize),
    LogSumExp(usize),
    LogMeanExp(usize),
    SumRows(usize),
    MeanRows(usize),
    SumCols(usize),
    RowL1Normalize(usize),
    Row(usize, usize),
    Col(usize, usize),
    Pick(usize, usize, usize),
    ConcatCols(usize, usize),
    ConcatRows(Vec<usize>),
    SelectRows(usize, Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Record of every primitive evaluated during one forward pass.
///
/// Nodes are appended in evaluation order, so the vector is already
/// topologically sorted and `backward` simply walks it in reverse.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

/// Gradient buffers produced by [`Tape::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<[usize; 2]>,
}

impl Gradients {
    /// Gradient with respect to the leaf `var`, if it was reached. Gradients
    /// of intermediate nodes are not retained.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Gradient with respect to `var`; zeros when the loss does not depend on it.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => {
                let [r, c] = self.shapes[var.id];
                Tensor::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable input.
    pub fn var(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let shape = nodes[loss.id].value.shape();
        if shape != [1, 1] {
            return Err(GibError::contract(format!(
                "backward needs a scalar loss, got shape {shape:?}"
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                grads[id] = Some(g);
                continue;
            }
            propagate(&nodes, id, &g, &mut grads);
            // Only leaves keep their gradient; intermediates are freed early.
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
            }
        }

        let shapes = nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], nodes: &[Node], id: usize, g: Tensor) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Index into an operand that is broadcast along unit dimensions.
#[inline]
fn bidx(shape: [usize; 2], r: usize, c: usize) -> usize {
    let rr = if shape[0] == 1 { 0 } else { r };
    let cc = if shape[1] == 1 { 0 } else { c };
    rr * shape[1] + cc
}

/// Sums a full-size gradient down to the (possibly broadcast) operand shape.
fn reduce_to(g: &Tensor, shape: [usize; 2]) -> Tensor {
    if g.shape() == shape {
        return g.clone();
    }
    let mut out = Tensor::zeros(shape[0], shape[1]);
    if shape[0] == 1 && shape[1] == g.cols() {
        for row in g.data.chunks_exact(g.cols()) {
            for (o, v) in out.data.iter_mut().zip(row) {
                *o += v;
            }
        }
        return out;
    }
    for r in 0..g.rows() {
        for c in 0..g.cols() {
            out.data[bidx(shape, r, c)] += g.data[r * g.cols() + c];
        }
    }
    out
}

/// Elementwise `f(a, b)` over `shape`, broadcasting either operand along
/// unit dimensions.
fn zip_broadcast(a: &Tensor, b: &Tensor, shape: [usize; 2], f: impl Fn(f64, f64) -> f64) -> Tensor {
    let [rows, cols] = shape;
    let (sa, sb) = (a.shape(), b.shape());
    let data = if sa == shape && sb == shape {
        a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect()
    } else if sa == shape && sb == [1, cols] {
        let mut data = Vec::with_capacity(rows * cols);
        for row in a.data.chunks_exact(cols.max(1)) {
            data.extend(row.iter().zip(&b.data).map(|(&x, &y)| f(x, y)));
        }
        data
    } else if sa == shape && sb == [1, 1] {
        let y = b.data[0];
        a.data.iter().map(|&x| f(x, y)).collect()
    } else {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(a.data[bidx(sa, r, c)], b.data[bidx(sb, r, c)]));
            }
        }
        data
    };
    Tensor { rows, cols, data }
}

/// `tanh` through one `exp`, about three times cheaper than `f64::tanh`.
/// Absolute error is a few ulp; near zero the `1 - e` cancellation makes the
/// relative error grow like `ulp / |x|`, which activations do not care about.
#[inline]
fn fast_tanh(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

fn propagate(nodes: &[Node], id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let out = &nodes[id].value;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            if nodes[*a].requires_grad {
                accumulate(grads, nodes, *a, matmul_nt(g, bv));
            }
            if nodes[*b].requires_grad {
                accumulate(grads, nodes, *b, matmul_tn(av, g));
            }
        }
        Op::Transpose(a) => accumulate(grads, nodes, *a, g.transpose()),
        Op::Binary(kind, a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let shape = out.shape();
            if nodes[*a].requires_grad {
                let ga = match kind {
                    BinaryKind::Add | BinaryKind::Sub => g.clone(),
                    BinaryKind::Mul => zip_broadcast(g, bv, shape, |d, y| d * y),
                    BinaryKind::Div => zip_broadcast(g, bv, shape, |d, y| d / y),
                };
                accumulate(grads, nodes, *a, reduce_to(&ga, av.shape()));
            }
            if nodes[*b].requires_grad {
                let gb = match kind {
                    BinaryKind::Add => g.clone(),
                    BinaryKind::Sub => g.map(|d| -d),
                    BinaryKind::Mul => zip_broadcast(g, av, shape, |d, x| d * x),
                    BinaryKind::Div => {
                        // d(x/y)/dy = −(x/y)/y, reusing the forward quotient.
                        let q = zip_broadcast(g, out, shape, |d, q| d * q);
                        zip_broadcast(&q, bv, shape, |t, y| -t / y)
                    }
                };
                accumulate(grads, nodes, *b, reduce_to(&gb, bv.shape()));
            }
        }
        Op::Scale(a, s) => accumulate(grads, nodes, *a, g.map(|v| v * s)),
        Op::Offset(a) => accumulate(grads, nodes, *a, g.clone()),
        Op::Unary(kind, a) => {
            let x = &nodes[*a].value;
            let shape = out.shape();
            let d = match kind {
                // Subgradient at exactly zero is zero.
                UnaryKind::Relu => zip_broadcast(g, x, shape, |d, v| if v > 0.0 { d } else { 0.0 }),
                UnaryKind::Tanh => zip_broadcast(g, out, shape, |d, y| d * (1.0 - y * y)),
                UnaryKind::Exp => zip_broadcast(g, out, shape, |d, y| d * y),
                UnaryKind::Log => zip_broadcast(g, x, shape, |d, v| d / v),
            };
            accumulate(grads, nodes, *a, d);
        }
        Op::RowSoftmax(a) => {
            let mut d = Tensor::zeros(out.rows(), out.cols());
            for r in 0..out.rows() {
                let y = out.row(r);
                let gr = g.row(r);
                let dot: f64 = y.iter().zip(gr).map(|(p, q)| p * q).sum();
                for c in 0..out.cols() {
                    d.data[r * out.cols() + c] = y[c] * (gr[c] - dot);
                }
            }
            accumulate(grads, nodes, *a, d);
        }
        Op::Sum(a) => {
            let [r, c] = nodes[*a].value.shape();
            accumulate(grads, nodes, *a, Tensor::full(r, c, g.item()));
        }
        Op::Mean(a) => {
            let [r, c] = nodes[*a].value.shape();
            accumulate(grads, nodes, *a, Tensor::full(r, c, g.item() / (r * c) as f64));
        }
        Op::FrobeniusNorm(a) => {
            let x = &nodes[*a].value;
            let norm = out.item();
            let d = if norm > 0.0 {
                x.map(|v| g.item() * v / norm)
            } else {
                Tensor::zeros(x.rows(), x.cols())
            };
            accumulate(grads, nodes, *a, d);
        }
        Op::LogSumExp(a) => {
            let x = &nodes[*a].value;
            let lse = out.item();
            accumulate(grads, nodes, *a, x.map(|v| g.item() * (v - lse).exp()));
        }
        Op::LogMeanExp(a) => {
            let x = &nodes[*a].value;
            let lme = out.item();
            let w = g.item() / x.len() as f64;
            accumulate(grads, nodes, *a, x.map(|v| w * (v - lme).exp()));
        }
        Op::SumRows(a) | Op::MeanRows(a) => {
            let [r, c] = nodes[*a].value.shape();
            let scale = if matches!(nodes[id].op, Op::MeanRows(_)) {
                1.0 / r as f64
            } else {
                1.0
            };
            let mut d = Tensor::zeros(r, c);
            for i in 0..r {
                for j in 0..c {
                    d.data[i * c + j] = g.data[j] * scale;
                }
            }
            accumulate(grads, nodes, *a, d);
        }
        Op::SumCols(a) => {
            let [r, c] = nodes[*a].value.shape();
            let mut d = Tensor::zeros(r, c);
            for i in 0..r {
                for j in 0..c {
                    d.data[i * c + j] = g.data[i];
                }
            }
            accumulate(grads, nodes, *a, d);
        }
        Op::RowL1Normalize(a) => {
            let x = &nodes[*a].value;
            let cols = x.cols();
            let mut d = Tensor::zeros(x.rows(), cols);
            for r in 0..x.rows() {
                let xr = x.row(r);
                let s: f64 = xr.iter().map(|v| v.abs()).sum();
                // Zero rows normalise to a constant zero row.
                if s == 0.0 {
                    continue;
                }
                let gr = g.row(r);
                let gx: f64 = gr.iter().zip(xr).map(|(p, q)| p * q).sum();
                for c in 0..cols {
                    let sign = if xr[c] == 0.0 { 0.0 } else { xr[c].signum() };
                    d.data[r * cols + c] = gr[c] / s - sign * gx / (s * s);
                }
            }
            accumulate(grads, nodes, *a, d);
        }
        Op::Row(a, i) => {
            let [r, c] = nodes[*a].value.shape();
            let mut d = Tensor::zeros(r, c);
            d.data[i * c..(i + 1) * c].copy_from_slice(&g.data);
            accumulate(grads, nodes, *a, d);
        }
        Op::Col(a, j) => {
            let [r, c] = nodes[*a].value.shape();
            let mut d = Tensor::zeros(r, c);
            for i in 0..r {
                d.data[i * c + j] = g.data[i];
            }
            accumulate(grads, nodes, *a, d);
        }
        Op::Pick(a, i, j) => {
            let [r, c] = nodes[*a].value.shape();
            let mut d = Tensor::zeros(r, c);
            d.data[i * c + j] = g.item();
            accumulate(grads, nodes, *a, d);
        }
        Op::ConcatCols(a, b) => {
            let ca = nodes[*a].value.cols();
            let cb = nodes[*b].value.cols();
            let rows = out.rows();
            let mut da = Tensor::zeros(rows, ca);
            let mut db = Tensor::zeros(rows, cb);
            for r in 0..rows {
                let gr = g.row(r);
                da.data[r * ca..(r + 1) * ca].copy_from_slice(&gr[..ca]);
                db.data[r * cb..(r + 1) * cb].copy_from_slice(&gr[ca..]);
            }
            accumulate(grads, nodes, *a, da);
            accumulate(grads, nodes, *b, db);
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for &p in parts {
                let [r, c] = nodes[p].value.shape();
                let d = Tensor {
                    rows: r,
                    cols: c,
                    data: g.data[offset..offset + r * c].to_vec(),
                };
                offset += r * c;
                accumulate(grads, nodes, p, d);
            }
        }
        Op::SelectRows(a, idx) => {
            let [r, c] = nodes[*a].value.shape();
            let mut d = Tensor::zeros(r, c);
            for (k, &i) in idx.iter().enumerate() {
                for j in 0..c {
                    d.data[i * c + j] += g.data[k * c + j];
                }
            }
            accumulate(grads, nodes, *a, d);
        }
    }
}

fn broadcast_shape(op: &'static str, a: [usize; 2], b: [usize; 2]) -> Result<[usize; 2]> {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    match (dim(a[0], b[0]), dim(a[1], b[1])) {
        (Some(r), Some(c)) => Ok([r, c]),
        _ => Err(GibError::Dimension { op, lhs: a, rhs: b }),
    }
}

impl<'t> Var<'t> {
    pub fn id(self) -> usize {
        self.id
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    pub fn shape(self) -> [usize; 2] {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    /// A copy of the forward value.
    pub fn value(self) -> Tensor {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    /// Runs `f` on the forward value without copying it.
    pub fn with_value<R>(self, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.tape.nodes.borrow()[self.id].value)
    }

    /// Forward value of a `1×1` node.
    pub fn item(self) -> f64 {
        self.with_value(|t| t.data[0])
    }

    fn unary_result(self, value: Tensor, op: Op) -> Var<'t> {
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(value, op, rg)
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
            a.matmul(b)?
        };
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(value, Op::MatMul(self.id, other.id), rg))
    }

    pub fn transpose(self) -> Var<'t> {
        let value = self.with_value(|t| t.transpose());
        self.unary_result(value, Op::Transpose(self.id))
    }

    fn binary(self, other: Var<'t>, kind: BinaryKind, name: &'static str) -> Result<Var<'t>> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
            let shape = broadcast_shape(name, a.shape(), b.shape())?;
            match kind {
                BinaryKind::Add => zip_broadcast(a, b, shape, |x, y| x + y),
                BinaryKind::Sub => zip_broadcast(a, b, shape, |x, y| x - y),
                BinaryKind::Mul => zip_broadcast(a, b, shape, |x, y| x * y),
                BinaryKind::Div => zip_broadcast(a, b, shape, |x, y| x / y),
            }
        };
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(value, Op::Binary(kind, self.id, other.id), rg))
    }

    /// Elementwise sum; either operand may broadcast along unit dimensions.
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Add, "add")
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Sub, "sub")
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Mul, "mul")
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Div, "div")
    }

    pub fn scale(self, factor: f64) -> Var<'t> {
        let value = self.with_value(|t| t.map(|v| v * factor));
        self.unary_result(value, Op::Scale(self.id, factor))
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn add_scalar(self, offset: f64) -> Var<'t> {
        let value = self.with_value(|t| t.map(|v| v + offset));
        self.unary_result(value, Op::Offset(self.id))
    }

    fn unary(self, kind: UnaryKind) -> Var<'t> {
        let value = self.with_value(|t| {
            t.map(match kind {
                UnaryKind::Relu => |v: f64| v.max(0.0),
                UnaryKind::Tanh => fast_tanh,
                UnaryKind::Exp => f64::exp,
                UnaryKind::Log => f64::ln,
            })
        });
        self.unary_result(value, Op::Unary(kind, self.id))
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(UnaryKind::Relu)
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(UnaryKind::Tanh)
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(UnaryKind::Exp)
    }

    /// Natural log; every entry must be strictly positive.
    pub fn log(self) -> Result<Var<'t>> {
        let bad = self.with_value(|t| t.data.iter().copied().find(|v| !(*v > 0.0)));
        if let Some(v) = bad {
            return Err(GibError::Domain {
                op: "log",
                detail: format!("non-positive input {v}"),
            });
        }
        Ok(self.unary(UnaryKind::Log))
    }

    /// Softmax along each row, max-shifted.
    pub fn row_softmax(self) -> Var<'t> {
        let value = self.with_value(|t| {
            let mut out = t.clone();
            for r in 0..t.rows {
                let row = &mut out.data[r * t.cols..(r + 1) * t.cols];
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - m).exp();
                    z += *v;
                }
                for v in row.iter_mut() {
                    *v /= z;
                }
            }
            out
        });
        self.unary_result(value, Op::RowSoftmax(self.id))
    }

    fn nonempty(self, op: &'static str) -> Result<()> {
        let shape = self.shape();
        if shape[0] * shape[1] == 0 {
            return Err(GibError::Dimension {
                op,
                lhs: shape,
                rhs: [1, 1],
            });
        }
        Ok(())
    }

    pub fn sum(self) -> Result<Var<'t>> {
        self.nonempty("sum")?;
        let value = Tensor::scalar(self.with_value(|t| t.sum()));
        Ok(self.unary_result(value, Op::Sum(self.id)))
    }

    pub fn mean(self) -> Result<Var<'t>> {
        self.nonempty("mean")?;
        let value = Tensor::scalar(self.with_value(|t| t.sum() / t.len() as f64));
        Ok(self.unary_result(value, Op::Mean(self.id)))
    }

    pub fn frobenius_norm(self) -> Result<Var<'t>> {
        self.nonempty("frobenius_norm")?;
        let value = self.with_value(|t| t.data.iter().map(|v| v * v).sum::<f64>().sqrt());
        Ok(self.unary_result(Tensor::scalar(value), Op::FrobeniusNorm(self.id)))
    }

    /// `ln Σ exp(x)` over every entry, max-shifted.
    pub fn logsumexp(self) -> Result<Var<'t>> {
        self.nonempty("logsumexp")?;
        let value = self.with_value(|t| logsumexp(&t.data));
        Ok(self.unary_result(Tensor::scalar(value), Op::LogSumExp(self.id)))
    }

    /// `ln( (1/n) Σ exp(x) )` over every entry; exactly `c` when every entry is `c`.
    pub fn log_mean_exp(self) -> Result<Var<'t>> {
        self.nonempty("log_mean_exp")?;
        let value = self.with_value(|t| {
            let m = t.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !m.is_finite() {
                return m;
            }
            m + (t.data.iter().map(|v| (v - m).exp()).sum::<f64>() / t.len() as f64).ln()
        });
        Ok(self.unary_result(Tensor::scalar(value), Op::LogMeanExp(self.id)))
    }

    /// Column sums as a `1×cols` row.
    pub fn sum_rows(self) -> Var<'t> {
        let value = self.with_value(|t| column_reduce(t, 1.0));
        self.unary_result(value, Op::SumRows(self.id))
    }

    /// Column means as a `1×cols` row.
    pub fn mean_rows(self) -> Result<Var<'t>> {
        self.nonempty("mean_rows")?;
        let value = self.with_value(|t| column_reduce(t, 1.0 / t.rows as f64));
        Ok(self.unary_result(value, Op::MeanRows(self.id)))
    }

    /// Row sums as a `rows×1` column.
    pub fn sum_cols(self) -> Var<'t> {
        let value = self.with_value(|t| {
            let data = (0..t.rows).map(|r| t.row(r).iter().sum()).collect();
            Tensor {
                rows: t.rows,
                cols: 1,
                data,
            }
        });
        self.unary_result(value, Op::SumCols(self.id))
    }

    /// Divides each row by its L1 norm; an all-zero row stays zero.
    pub fn row_l1_normalize(self) -> Var<'t> {
        let value = self.with_value(|t| {
            let mut out = t.clone();
            for r in 0..t.rows {
                let row = &mut out.data[r * t.cols..(r + 1) * t.cols];
                let s: f64 = row.iter().map(|v| v.abs()).sum();
                if s > 0.0 {
                    row.iter_mut().for_each(|v| *v /= s);
                }
            }
            out
        });
        self.unary_result(value, Op::RowL1Normalize(self.id))
    }

    pub fn row(self, i: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        if i >= shape[0] {
            return Err(GibError::contract(format!("row {i} out of range for {shape:?}")));
        }
        let value = self.with_value(|t| Tensor::row_vector(t.row(i)));
        Ok(self.unary_result(value, Op::Row(self.id, i)))
    }

    pub fn col(self, j: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        if j >= shape[1] {
            return Err(GibError::contract(format!("column {j} out of range for {shape:?}")));
        }
        let value = self.with_value(|t| {
            let data = (0..t.rows).map(|r| t.get(r, j)).collect();
            Tensor {
                rows: t.rows,
                cols: 1,
                data,
            }
        });
        Ok(self.unary_result(value, Op::Col(self.id, j)))
    }

    /// The single entry at `(i, j)` as a scalar node.
    pub fn pick(self, i: usize, j: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        if i >= shape[0] || j >= shape[1] {
            return Err(GibError::contract(format!(
                "index ({i}, {j}) out of range for {shape:?}"
            )));
        }
        let value = Tensor::scalar(self.with_value(|t| t.get(i, j)));
        Ok(self.unary_result(value, Op::Pick(self.id, i, j)))
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn concat_cols(self, other: Var<'t>) -> Result<Var<'t>> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
            if a.rows != b.rows {
                return Err(GibError::Dimension {
                    op: "concat_cols",
                    lhs: a.shape(),
                    rhs: b.shape(),
                });
            }
            let cols = a.cols + b.cols;
            let mut data = Vec::with_capacity(a.rows * cols);
            for r in 0..a.rows {
                data.extend_from_slice(a.row(r));
                data.extend_from_slice(b.row(r));
            }
            Tensor {
                rows: a.rows,
                cols,
                data,
            }
        };
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(value, Op::ConcatCols(self.id, other.id), rg))
    }

    /// Vertical stack of equally wide parts.
    pub fn concat_rows(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| GibError::contract("concat_rows of zero parts"))?;
        let tape = first.tape;
        let value = {
            let nodes = tape.nodes.borrow();
            let cols = nodes[first.id].value.cols;
            let mut data = Vec::new();
            let mut rows = 0;
            for p in parts {
                let v = &nodes[p.id].value;
                if v.cols != cols {
                    return Err(GibError::Dimension {
                        op: "concat_rows",
                        lhs: nodes[first.id].value.shape(),
                        rhs: v.shape(),
                    });
                }
                rows += v.rows;
                data.extend_from_slice(&v.data);
            }
            Tensor { rows, cols, data }
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = tape.requires(&ids);
        Ok(tape.push(value, Op::ConcatRows(ids), rg))
    }

    /// Gathers rows by index (repeats allowed).
    pub fn select_rows(self, indices: &[usize]) -> Result<Var<'t>> {
        let rows = self.shape()[0];
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(GibError::contract(format!(
                "row index {bad} out of range for {rows} rows"
            )));
        }
        let value = self.with_value(|t| t.select_rows(indices));
        Ok(self.unary_result(value, Op::SelectRows(self.id, indices.to_vec())))
    }
}

fn column_reduce(t: &Tensor, scale: f64) -> Tensor {
    let mut out = vec![0.0; t.cols];
    for r in 0..t.rows {
        for (o, v) in out.iter_mut().zip(t.row(r)) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|v| *v *= scale);
    Tensor {
        rows: 1,
        cols: t.cols,
        data: out,
    }
}

/// Max-shifted `ln Σ exp(x)`; `-inf` for an empty slice.
pub(crate) fn logsumexp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn matmul_identity_and_dot() {
        let tape = Tape::new();
        let i = tape.constant(Tensor::identity(2));
        let b = tape.constant(Tensor::from_rows(&[[2.0, 3.0], [4.0, 5.0]]));
        assert_eq!(i.matmul(b).unwrap().value(), b.value());
        let r = tape.constant(Tensor::from_rows(&[[1.0, 2.0]]));
        let c = tape.constant(Tensor::from_rows(&[[3.0], [4.0]]));
        assert_eq!(r.matmul(c).unwrap().item(), 11.0);
    }

    #[test]
    fn matmul_gradient_of_sum() {
        let tape = Tape::new();
        let a = tape.var(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
        let b = tape.constant(Tensor::ones(2, 2));
        let loss = a.matmul(b).unwrap().sum().unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(a), Tensor::full(2, 2, 2.0));
    }

    #[test]
    fn elementwise_cases() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::row_vector(&[-1.0, 0.0, 2.0]));
        assert_eq!(x.relu().value().data(), &[0.0, 0.0, 2.0]);
        let z = tape.constant(Tensor::scalar(0.0));
        assert_eq!(z.tanh().item(), 0.0);
    }

    #[test]
    fn fast_tanh_tracks_libm() {
        for i in -40_000..=40_000 {
            let x = i as f64 * 1e-3 + 1e-7;
            let (got, want) = (fast_tanh(x), x.tanh());
            assert!((got - want).abs() <= 4.0 * f64::EPSILON, "{x}: {got} vs {want}");
        }
        assert_eq!(fast_tanh(800.0), 1.0);
        assert_eq!(fast_tanh(-800.0), -1.0);
    }

    #[test]
    fn relu_gradient_at_zero_is_zero() {
        let tape = Tape::new();
        let x = tape.var(Tensor::row_vector(&[0.0, 1.0]));
        let loss = x.relu().sum().unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(x).data(), &[0.0, 1.0]);
    }

    #[test]
    fn log_derivative_and_domain() {
        let tape = Tape::new();
        let x = tape.var(Tensor::scalar(2.0));
        let loss = x.log().unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(x).item(), 0.5);

        let bad = tape.var(Tensor::row_vector(&[1.0, 0.0]));
        assert!(matches!(bad.log(), Err(GibError::Domain { .. })));
    }

    #[test]
    fn softmax_closed_forms() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[[0.0, 0.0]]));
        assert_eq!(x.row_softmax().value().data(), &[0.5, 0.5]);
        let y = tape.constant(Tensor::from_rows(&[[2f64.ln(), 0.0]]));
        let s = y.row_softmax().value();
        assert!(close(s.get(0, 0), 2.0 / 3.0, 1e-15));
        assert!(close(s.get(0, 1), 1.0 / 3.0, 1e-15));
    }

    #[test]
    fn reductions() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[[3.0, 4.0]]));
        assert_eq!(x.frobenius_norm().unwrap().item(), 5.0);
        let z = tape.constant(Tensor::row_vector(&[0.0, 0.0]));
        assert!(close(z.logsumexp().unwrap().item(), 2f64.ln(), 1e-15));
        let m = tape.constant(Tensor::row_vector(&[1.0, 2.0, 3.0]));
        assert_eq!(m.mean().unwrap().item(), 2.0);
        let empty = tape.constant(Tensor::zeros(0, 3));
        assert!(matches!(empty.sum(), Err(GibError::Dimension { .. })));
        assert!(matches!(empty.logsumexp(), Err(GibError::Dimension { .. })));
    }

    #[test]
    fn square_gradient() {
        let tape = Tape::new();
        let x = tape.var(Tensor::scalar(3.0));
        let loss = x.mul(x).unwrap();
        assert_eq!(tape.backward(loss).unwrap().wrt(x).item(), 6.0);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let tape = Tape::new();
        let x = tape.var(Tensor::zeros(2, 1));
        assert!(matches!(tape.backward(x), Err(GibError::Contract(_))));
    }

    #[test]
    fn broadcast_rules() {
        let tape = Tape::new();
        let m = tape.var(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
        let b = tape.var(Tensor::row_vector(&[10.0, 20.0]));
        let s = m.add(b).unwrap();
        assert_eq!(s.value().data(), &[11.0, 22.0, 13.0, 24.0]);
        let g = tape.backward(s.sum().unwrap()).unwrap();
        assert_eq!(g.wrt(b).data(), &[2.0, 2.0]);
        let bad = tape.var(Tensor::zeros(3, 2));
        assert!(m.add(bad).is_err());
    }

    #[test]
    fn constants_get_no_gradient() {
        let tape = Tape::new();
        let c = tape.constant(Tensor::scalar(2.0));
        let x = tape.var(Tensor::scalar(3.0));
        let g = tape.backward(c.mul(x).unwrap()).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.wrt(x).item(), 2.0);
    }

    #[test]
    fn zero_row_normalizes_to_zero() {
        let tape = Tape::new();
        let x = tape.var(Tensor::from_rows(&[[1.0, 3.0], [0.0, 0.0]]));
        let y = x.row_l1_normalize();
        assert_eq!(y.value().data(), &[0.25, 0.75, 0.0, 0.0]);
        let g = tape.backward(y.frobenius_norm().unwrap()).unwrap();
        assert_eq!(g.wrt(x).row(1), &[0.0, 0.0]);
    }
}
