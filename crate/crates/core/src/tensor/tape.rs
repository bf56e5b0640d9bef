//! The reverse-mode tape: every operation appends a node recording its
//! inputs, and [`Tape::backward`] walks the record once in reverse.
//!
//! Gradient conventions at non-differentiable points: `clamp` and `relu`
//! take subgradient 0 at their kinks, `atanh` differentiates through its
//! clamped forward input, and row norms treat the gradient at the origin
//! as 0.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::geometry::{ATANH_BOUND, MIN_NORM};

use super::{SparseMatrix, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Div(TensorId, TensorId),
    MatMul(TensorId, TensorId),
    SparseMatMul(Rc<SparseMatrix>, TensorId),
    Sum(TensorId),
    Mean(TensorId),
    RowSum(TensorId),
    L2NormRows(TensorId),
    GatherRows(TensorId, Rc<Vec<usize>>),
    ConcatCols(TensorId, TensorId),
    Tanh(TensorId),
    Atanh(TensorId),
    Exp(TensorId),
    Log(TensorId),
    Sqrt(TensorId),
    Sigmoid(TensorId),
    Softplus(TensorId),
    Relu(TensorId),
    Clamp(TensorId, f64, f64),
    Neg(TensorId),
    AddScalar(TensorId),
    MulScalar(TensorId, f64),
    LogSoftmaxRows(TensorId),
}

/// Gradients produced by one backward pass, keyed by [`TensorId`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `id`, if any path reached it.
    pub fn get(&self, id: TensorId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Gradient or an all-zero tensor for values off every path to the loss.
    pub fn get_or_zero(&self, id: TensorId) -> Tensor {
        match &self.grads[id.0] {
            Some(t) => t.clone(),
            None => {
                let (r, c) = self.shapes[id.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

/// Record of a forward computation; owns every intermediate value.
///
/// A tape is confined to one training step: build it, run `backward`, drop
/// it. Values are appended in topological order by construction.
#[derive(Default)]
pub struct Tape {
    values: Vec<Tensor>,
    ops: Vec<Op>,
    needs_grad: Vec<bool>,
}

fn bdim(a: usize, b: usize) -> Option<usize> {
    if a == b {
        Some(a)
    } else if a == 1 {
        Some(b)
    } else if b == 1 {
        Some(a)
    } else {
        None
    }
}

fn broadcast_shape(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<(usize, usize)> {
    match (bdim(a.0, b.0), bdim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::contract(format!(
            "{op}: shapes ({}, {}) and ({}, {}) do not broadcast",
            a.0, a.1, b.0, b.1
        ))),
    }
}

/// Sums `g` over the axes that were broadcast to reach it from `(rows, cols)`.
fn reduce_to(g: &Tensor, rows: usize, cols: usize) -> Tensor {
    if g.rows == rows && g.cols == cols {
        return g.clone();
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..g.rows {
        let ti = if rows == 1 { 0 } else { i };
        for j in 0..g.cols {
            let tj = if cols == 1 { 0 } else { j };
            out[ti * cols + tj] += g.at(i, j);
        }
    }
    Tensor {
        rows,
        cols,
        data: out,
        requires_grad: false,
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Records an input value; its `requires_grad` flag decides whether
    /// gradients flow to it.
    pub fn leaf(&mut self, t: Tensor) -> TensorId {
        let id = TensorId(self.values.len());
        self.needs_grad.push(t.requires_grad);
        self.values.push(t);
        self.ops.push(Op::Leaf);
        id
    }

    /// Records a constant (no gradient).
    pub fn constant(&mut self, mut t: Tensor) -> TensorId {
        t.requires_grad = false;
        self.leaf(t)
    }

    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.constant(Tensor::scalar(v))
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.values[id.0]
    }

    fn push(&mut self, op: &'static str, node: Op, grad: bool, out: Tensor) -> Result<TensorId> {
        if out.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op });
        }
        let id = TensorId(self.values.len());
        self.values.push(out);
        self.ops.push(node);
        self.needs_grad.push(grad);
        Ok(id)
    }

    fn grad_of(&self, id: TensorId) -> bool {
        self.needs_grad[id.0]
    }

    fn binary_ew(
        &mut self,
        op: &'static str,
        a: TensorId,
        b: TensorId,
        node: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<TensorId> {
        let ta = &self.values[a.0];
        let tb = &self.values[b.0];
        let (r, c) = broadcast_shape(op, ta.shape(), tb.shape())?;
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            let ai = if ta.rows == 1 { 0 } else { i };
            let bi = if tb.rows == 1 { 0 } else { i };
            for j in 0..c {
                let aj = if ta.cols == 1 { 0 } else { j };
                let bj = if tb.cols == 1 { 0 } else { j };
                data.push(f(ta.at(ai, aj), tb.at(bi, bj)));
            }
        }
        let grad = self.grad_of(a) || self.grad_of(b);
        self.push(
            op,
            node,
            grad,
            Tensor {
                rows: r,
                cols: c,
                data,
                requires_grad: false,
            },
        )
    }

    fn unary(
        &mut self,
        op: &'static str,
        a: TensorId,
        node: Op,
        f: impl Fn(f64) -> f64,
    ) -> Result<TensorId> {
        let ta = &self.values[a.0];
        let out = Tensor {
            rows: ta.rows,
            cols: ta.cols,
            data: ta.data.iter().map(|&v| f(v)).collect(),
            requires_grad: false,
        };
        let grad = self.grad_of(a);
        self.push(op, node, grad, out)
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_ew("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_ew("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_ew("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_ew("div", a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let ta = &self.values[a.0];
        let tb = &self.values[b.0];
        if ta.cols != tb.rows {
            return Err(Error::contract(format!(
                "matmul: ({}, {}) x ({}, {})",
                ta.rows, ta.cols, tb.rows, tb.cols
            )));
        }
        let (n, k, m) = (ta.rows, ta.cols, tb.cols);
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            for p in 0..k {
                let av = ta.at(i, p);
                if av == 0.0 {
                    continue;
                }
                let brow = tb.row_slice(p);
                let drow = &mut data[i * m..(i + 1) * m];
                for (d, bv) in drow.iter_mut().zip(brow) {
                    *d += av * bv;
                }
            }
        }
        let grad = self.grad_of(a) || self.grad_of(b);
        self.push(
            "matmul",
            Op::MatMul(a, b),
            grad,
            Tensor {
                rows: n,
                cols: m,
                data,
                requires_grad: false,
            },
        )
    }

    pub fn sparse_matmul(&mut self, s: Rc<SparseMatrix>, x: TensorId) -> Result<TensorId> {
        let out = s.matmul_dense(&self.values[x.0])?;
        let grad = self.grad_of(x);
        self.push("sparse_matmul", Op::SparseMatMul(s, x), grad, out)
    }

    pub fn sum(&mut self, a: TensorId) -> Result<TensorId> {
        let total: f64 = self.values[a.0].data.iter().sum();
        let grad = self.grad_of(a);
        self.push("sum", Op::Sum(a), grad, Tensor::scalar(total))
    }

    pub fn mean(&mut self, a: TensorId) -> Result<TensorId> {
        let ta = &self.values[a.0];
        if ta.is_empty() {
            return Err(Error::contract("mean of an empty tensor".to_string()));
        }
        let total: f64 = ta.data.iter().sum();
        let v = total / ta.len() as f64;
        let grad = self.grad_of(a);
        self.push("mean", Op::Mean(a), grad, Tensor::scalar(v))
    }

    /// Per-row sum, shape `(n, c)` -> `(n, 1)`.
    pub fn row_sum(&mut self, a: TensorId) -> Result<TensorId> {
        let ta = &self.values[a.0];
        let data: Vec<f64> = (0..ta.rows)
            .map(|i| ta.row_slice(i).iter().sum())
            .collect();
        let grad = self.grad_of(a);
        self.push("row_sum", Op::RowSum(a), grad, Tensor::column(data))
    }

    /// Per-row Euclidean norm, shape `(n, c)` -> `(n, 1)`.
    pub fn l2_norm_rows(&mut self, a: TensorId) -> Result<TensorId> {
        let ta = &self.values[a.0];
        let data: Vec<f64> = (0..ta.rows)
            .map(|i| ta.row_slice(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let grad = self.grad_of(a);
        self.push("l2_norm_rows", Op::L2NormRows(a), grad, Tensor::column(data))
    }

    pub fn gather_rows(&mut self, a: TensorId, idx: Rc<Vec<usize>>) -> Result<TensorId> {
        let ta = &self.values[a.0];
        let mut data = Vec::with_capacity(idx.len() * ta.cols);
        for &i in idx.iter() {
            if i >= ta.rows {
                return Err(Error::contract(format!(
                    "gather_rows: row {i} out of range ({} rows)",
                    ta.rows
                )));
            }
            data.extend_from_slice(ta.row_slice(i));
        }
        let out = Tensor {
            rows: idx.len(),
            cols: ta.cols,
            data,
            requires_grad: false,
        };
        let grad = self.grad_of(a);
        self.push("gather_rows", Op::GatherRows(a, idx), grad, out)
    }

    pub fn concat_cols(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let ta = &self.values[a.0];
        let tb = &self.values[b.0];
        if ta.rows != tb.rows {
            return Err(Error::contract(format!(
                "concat_cols: row counts differ ({} vs {})",
                ta.rows, tb.rows
            )));
        }
        let cols = ta.cols + tb.cols;
        let mut data = Vec::with_capacity(ta.rows * cols);
        for i in 0..ta.rows {
            data.extend_from_slice(ta.row_slice(i));
            data.extend_from_slice(tb.row_slice(i));
        }
        let grad = self.grad_of(a) || self.grad_of(b);
        self.push(
            "concat_cols",
            Op::ConcatCols(a, b),
            grad,
            Tensor {
                rows: ta.rows,
                cols,
                data,
                requires_grad: false,
            },
        )
    }

    pub fn tanh(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary("tanh", a, Op::Tanh(a), f64::tanh)
    }

    /// `atanh` of the input clamped to `±(1 - 1e-15)`; the gradient uses the
    /// clamped value too.
    pub fn atanh(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary("atanh", a, Op::Atanh(a), |x| {
            x.clamp(-ATANH_BOUND, ATANH_BOUND).atanh()
        })
    }

    pub fn exp(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary("exp", a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary("log", a, Op::Log(a), f64::ln)
    }

    pub fn sqrt(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary("sqrt", a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn sigmoid(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary("sigmoid", a, Op::Sigmoid(a), sigmoid)
    }

    pub fn softplus(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary("softplus", a, Op::Softplus(a), crate::geometry::softplus)
    }

    pub fn relu(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary("relu", a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn clamp(&mut self, a: TensorId, lo: f64, hi: f64) -> Result<TensorId> {
        self.unary("clamp", a, Op::Clamp(a, lo, hi), move |x| x.clamp(lo, hi))
    }

    /// `clamp` with only a lower bound; the usual denominator guard.
    pub fn clamp_min(&mut self, a: TensorId, lo: f64) -> Result<TensorId> {
        self.clamp(a, lo, f64::INFINITY)
    }

    pub fn neg(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary("neg", a, Op::Neg(a), |x| -x)
    }

    pub fn add_scalar(&mut self, a: TensorId, s: f64) -> Result<TensorId> {
        self.unary("add_scalar", a, Op::AddScalar(a), move |x| x + s)
    }

    pub fn mul_scalar(&mut self, a: TensorId, s: f64) -> Result<TensorId> {
        self.unary("mul_scalar", a, Op::MulScalar(a, s), move |x| x * s)
    }

    /// Row-wise `log(softmax(x))` with the max-shift stabilization.
    pub fn log_softmax_rows(&mut self, a: TensorId) -> Result<TensorId> {
        let ta = &self.values[a.0];
        if ta.cols == 0 {
            return Err(Error::contract("log_softmax over zero columns".to_string()));
        }
        let mut data = Vec::with_capacity(ta.len());
        for i in 0..ta.rows {
            let row = ta.row_slice(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            data.extend(row.iter().map(|v| v - m - lse));
        }
        let grad = self.grad_of(a);
        self.push(
            "log_softmax_rows",
            Op::LogSoftmaxRows(a),
            grad,
            Tensor {
                rows: ta.rows,
                cols: ta.cols,
                data,
                requires_grad: false,
            },
        )
    }

    /// Reverse pass from a scalar loss. Every recorded value that requires
    /// gradients and lies on a path to `loss` receives its gradient; query
    /// the rest through [`Gradients::get_or_zero`].
    pub fn backward(&self, loss: TensorId) -> Result<Gradients> {
        if self.values.is_empty() {
            return Err(Error::contract("backward on an empty tape".to_string()));
        }
        let lt = &self.values[loss.0];
        if lt.shape() != (1, 1) {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape ({}, {})",
                lt.rows, lt.cols
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.values.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            if !self.needs_grad[idx] {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.values.iter().map(|t| t.shape()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: TensorId, contrib: Tensor) {
        match &mut grads[id.0] {
            Some(existing) => {
                for (e, c) in existing.data.iter_mut().zip(&contrib.data) {
                    *e += c;
                }
            }
            slot => *slot = Some(contrib),
        }
    }

    /// Gradient of a broadcast elementwise op w.r.t. input `a`:
    /// `factor(a_val, b_val) * g`, reduced back onto `a`'s shape.
    fn ew_input_grad(
        &self,
        g: &Tensor,
        a: TensorId,
        b: TensorId,
        factor: impl Fn(f64, f64) -> f64,
    ) -> Tensor {
        let ta = &self.values[a.0];
        let tb = &self.values[b.0];
        let mut full = Vec::with_capacity(g.len());
        for i in 0..g.rows {
            let ai = if ta.rows == 1 { 0 } else { i };
            let bi = if tb.rows == 1 { 0 } else { i };
            for j in 0..g.cols {
                let aj = if ta.cols == 1 { 0 } else { j };
                let bj = if tb.cols == 1 { 0 } else { j };
                full.push(g.at(i, j) * factor(ta.at(ai, aj), tb.at(bi, bj)));
            }
        }
        let full = Tensor {
            rows: g.rows,
            cols: g.cols,
            data: full,
            requires_grad: false,
        };
        reduce_to(&full, ta.rows, ta.cols)
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let out = &self.values[idx];
        match &self.ops[idx] {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.grad_of(*a) {
                    let ta = &self.values[a.0];
                    self.accumulate(grads, *a, reduce_to(g, ta.rows, ta.cols));
                }
                if self.grad_of(*b) {
                    let tb = &self.values[b.0];
                    self.accumulate(grads, *b, reduce_to(g, tb.rows, tb.cols));
                }
            }
            Op::Sub(a, b) => {
                if self.grad_of(*a) {
                    let ta = &self.values[a.0];
                    self.accumulate(grads, *a, reduce_to(g, ta.rows, ta.cols));
                }
                if self.grad_of(*b) {
                    let tb = &self.values[b.0];
                    let mut r = reduce_to(g, tb.rows, tb.cols);
                    for v in &mut r.data {
                        *v = -*v;
                    }
                    self.accumulate(grads, *b, r);
                }
            }
            Op::Mul(a, b) => {
                if self.grad_of(*a) {
                    let r = self.ew_input_grad(g, *a, *b, |_, bv| bv);
                    self.accumulate(grads, *a, r);
                }
                if self.grad_of(*b) {
                    let r = self.ew_input_grad(g, *b, *a, |_, av| av);
                    self.accumulate(grads, *b, r);
                }
            }
            Op::Div(a, b) => {
                if self.grad_of(*a) {
                    let r = self.ew_input_grad(g, *a, *b, |_, bv| 1.0 / bv);
                    self.accumulate(grads, *a, r);
                }
                if self.grad_of(*b) {
                    let r = self.ew_input_grad(g, *b, *a, |bv, av| -av / (bv * bv));
                    self.accumulate(grads, *b, r);
                }
            }
            Op::MatMul(a, b) => {
                let ta = &self.values[a.0];
                let tb = &self.values[b.0];
                let (n, k, m) = (ta.rows, ta.cols, tb.cols);
                if self.grad_of(*a) {
                    // ga = g · bᵀ
                    let mut data = vec![0.0; n * k];
                    for i in 0..n {
                        for p in 0..k {
                            let mut acc = 0.0;
                            let brow = tb.row_slice(p);
                            let grow = g.row_slice(i);
                            for (bv, gv) in brow.iter().zip(grow) {
                                acc += bv * gv;
                            }
                            data[i * k + p] = acc;
                        }
                    }
                    self.accumulate(
                        grads,
                        *a,
                        Tensor {
                            rows: n,
                            cols: k,
                            data,
                            requires_grad: false,
                        },
                    );
                }
                if self.grad_of(*b) {
                    // gb = aᵀ · g
                    let mut data = vec![0.0; k * m];
                    for i in 0..n {
                        let grow = g.row_slice(i);
                        for p in 0..k {
                            let av = ta.at(i, p);
                            if av == 0.0 {
                                continue;
                            }
                            let drow = &mut data[p * m..(p + 1) * m];
                            for (d, gv) in drow.iter_mut().zip(grow) {
                                *d += av * gv;
                            }
                        }
                    }
                    self.accumulate(
                        grads,
                        *b,
                        Tensor {
                            rows: k,
                            cols: m,
                            data,
                            requires_grad: false,
                        },
                    );
                }
            }
            Op::SparseMatMul(s, x) => {
                if self.grad_of(*x) {
                    self.accumulate(grads, *x, s.transpose_matmul_dense(g)?);
                }
            }
            Op::Sum(a) => {
                if self.grad_of(*a) {
                    let ta = &self.values[a.0];
                    let v = g.data[0];
                    self.accumulate(
                        grads,
                        *a,
                        Tensor {
                            rows: ta.rows,
                            cols: ta.cols,
                            data: vec![v; ta.len()],
                            requires_grad: false,
                        },
                    );
                }
            }
            Op::Mean(a) => {
                if self.grad_of(*a) {
                    let ta = &self.values[a.0];
                    let v = g.data[0] / ta.len() as f64;
                    self.accumulate(
                        grads,
                        *a,
                        Tensor {
                            rows: ta.rows,
                            cols: ta.cols,
                            data: vec![v; ta.len()],
                            requires_grad: false,
                        },
                    );
                }
            }
            Op::RowSum(a) => {
                if self.grad_of(*a) {
                    let ta = &self.values[a.0];
                    let mut data = Vec::with_capacity(ta.len());
                    for i in 0..ta.rows {
                        data.extend(std::iter::repeat_n(g.data[i], ta.cols));
                    }
                    self.accumulate(
                        grads,
                        *a,
                        Tensor {
                            rows: ta.rows,
                            cols: ta.cols,
                            data,
                            requires_grad: false,
                        },
                    );
                }
            }
            Op::L2NormRows(a) => {
                if self.grad_of(*a) {
                    let ta = &self.values[a.0];
                    let mut data = Vec::with_capacity(ta.len());
                    for i in 0..ta.rows {
                        let n = out.data[i].max(MIN_NORM);
                        let gi = g.data[i];
                        data.extend(ta.row_slice(i).iter().map(|&v| gi * v / n));
                    }
                    self.accumulate(
                        grads,
                        *a,
                        Tensor {
                            rows: ta.rows,
                            cols: ta.cols,
                            data,
                            requires_grad: false,
                        },
                    );
                }
            }
            Op::GatherRows(a, idx) => {
                if self.grad_of(*a) {
                    let ta = &self.values[a.0];
                    let mut data = vec![0.0; ta.len()];
                    for (r, &i) in idx.iter().enumerate() {
                        let src = g.row_slice(r);
                        let dst = &mut data[i * ta.cols..(i + 1) * ta.cols];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                    self.accumulate(
                        grads,
                        *a,
                        Tensor {
                            rows: ta.rows,
                            cols: ta.cols,
                            data,
                            requires_grad: false,
                        },
                    );
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = self.values[a.0].cols;
                let cb = self.values[b.0].cols;
                if self.grad_of(*a) {
                    let mut data = Vec::with_capacity(g.rows * ca);
                    for i in 0..g.rows {
                        data.extend_from_slice(&g.row_slice(i)[..ca]);
                    }
                    self.accumulate(
                        grads,
                        *a,
                        Tensor {
                            rows: g.rows,
                            cols: ca,
                            data,
                            requires_grad: false,
                        },
                    );
                }
                if self.grad_of(*b) {
                    let mut data = Vec::with_capacity(g.rows * cb);
                    for i in 0..g.rows {
                        data.extend_from_slice(&g.row_slice(i)[ca..]);
                    }
                    self.accumulate(
                        grads,
                        *b,
                        Tensor {
                            rows: g.rows,
                            cols: cb,
                            data,
                            requires_grad: false,
                        },
                    );
                }
            }
            Op::Tanh(a) => {
                self.unary_grad(grads, *a, out, g, |_, y| 1.0 - y * y);
            }
            Op::Atanh(a) => {
                self.unary_grad(grads, *a, out, g, |x, _| {
                    let u = x.clamp(-ATANH_BOUND, ATANH_BOUND);
                    1.0 / (1.0 - u * u)
                });
            }
            Op::Exp(a) => {
                self.unary_grad(grads, *a, out, g, |_, y| y);
            }
            Op::Log(a) => {
                self.unary_grad(grads, *a, out, g, |x, _| 1.0 / x);
            }
            Op::Sqrt(a) => {
                self.unary_grad(grads, *a, out, g, |_, y| 0.5 / y.max(MIN_NORM));
            }
            Op::Sigmoid(a) => {
                self.unary_grad(grads, *a, out, g, |_, y| y * (1.0 - y));
            }
            Op::Softplus(a) => {
                self.unary_grad(grads, *a, out, g, |x, _| sigmoid(x));
            }
            Op::Relu(a) => {
                self.unary_grad(grads, *a, out, g, |x, _| if x > 0.0 { 1.0 } else { 0.0 });
            }
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                self.unary_grad(grads, *a, out, g, move |x, _| {
                    if x > lo && x < hi {
                        1.0
                    } else {
                        0.0
                    }
                });
            }
            Op::Neg(a) => {
                self.unary_grad(grads, *a, out, g, |_, _| -1.0);
            }
            Op::AddScalar(a) => {
                self.unary_grad(grads, *a, out, g, |_, _| 1.0);
            }
            Op::MulScalar(a, s) => {
                let s = *s;
                self.unary_grad(grads, *a, out, g, move |_, _| s);
            }
            Op::LogSoftmaxRows(a) => {
                if self.grad_of(*a) {
                    let mut data = Vec::with_capacity(g.len());
                    for i in 0..g.rows {
                        let grow = g.row_slice(i);
                        let gsum: f64 = grow.iter().sum();
                        let yrow = out.row_slice(i);
                        data.extend(
                            grow.iter()
                                .zip(yrow)
                                .map(|(&gv, &yv)| gv - yv.exp() * gsum),
                        );
                    }
                    self.accumulate(
                        grads,
                        *a,
                        Tensor {
                            rows: g.rows,
                            cols: g.cols,
                            data,
                            requires_grad: false,
                        },
                    );
                }
            }
        }
        Ok(())
    }

    /// Shared path for elementwise unary gradients: `ga += g * factor(x, y)`
    /// where `x` is the input value and `y` the forward output.
    fn unary_grad(
        &self,
        grads: &mut [Option<Tensor>],
        a: TensorId,
        out: &Tensor,
        g: &Tensor,
        factor: impl Fn(f64, f64) -> f64,
    ) {
        if !self.grad_of(a) {
            return;
        }
        let ta = &self.values[a.0];
        let data: Vec<f64> = ta
            .data
            .iter()
            .zip(&out.data)
            .zip(&g.data)
            .map(|((&x, &y), &gv)| gv * factor(x, y))
            .collect();
        self.accumulate(
            grads,
            a,
            Tensor {
                rows: ta.rows,
                cols: ta.cols,
                data,
                requires_grad: false,
            },
        );
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
