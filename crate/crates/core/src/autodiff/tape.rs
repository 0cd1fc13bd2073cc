use std::collections::HashMap;

use crate::autodiff::{ParamGrads, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Normalization extent for softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Each row sums to one.
    Row,
    /// All entries together sum to one.
    Global,
}

enum Value<'a, S> {
    Owned(Tensor<S>),
    Borrowed(&'a Tensor<S>),
}

impl<S> Value<'_, S> {
    fn get(&self) -> &Tensor<S> {
        match self {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }
}

enum Op<S> {
    Leaf,
    Param,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, S),
    MulScalar(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Minimum(Var, Var),
    Softmax(Var, Axis, Option<Vec<bool>>),
    LogSoftmax(Var, Axis, Option<Vec<bool>>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    ScatterCols(Var, Vec<usize>),
    Pick(Var, usize, usize),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
}

struct Node<'a, S> {
    value: Value<'a, S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Reverse-mode recording of one forward pass.
///
/// Nodes are appended in evaluation order, so reverse index order is a
/// valid reverse topological order. A tape is single-threaded; documents
/// processed in parallel each get their own tape over a shared
/// [`ParamStore`].
pub struct Tape<'a, S> {
    nodes: Vec<Node<'a, S>>,
    store: Option<&'a ParamStore<S>>,
    param_vars: HashMap<ParamId, Var>,
}

impl<S: Scalar> Default for Tape<'static, S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<'static, S> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            store: None,
            param_vars: HashMap::new(),
        }
    }
}

impl<'a, S: Scalar> Tape<'a, S> {
    pub fn with_params(store: &'a ParamStore<S>) -> Self {
        Tape {
            nodes: Vec::new(),
            store: Some(store),
            param_vars: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        self.nodes[v.0].value.get()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    /// Scalar value of a `1×1` var.
    pub fn item(&self, v: Var) -> S {
        self.value(v).item()
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input that receives a gradient.
    pub fn leaf(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable parameter; repeated calls return the same var.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let store = self.store.expect("tape has no parameter store");
        self.nodes.push(Node {
            value: Value::Borrowed(store.get(id)),
            op: Op::Param,
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(out, Op::Transpose(a), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// Adds a `1×n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(Error::dim("add_row", x.shape(), r.shape()));
        }
        let cols = x.cols();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += r.data()[i % cols];
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).mul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: S, shift: S) -> Var {
        let out = self.value(a).map(|v| scale * v + shift);
        let rg = self.rg(a);
        self.push(out, Op::Affine(a, scale), rg)
    }

    pub fn scale(&mut self, a: Var, c: S) -> Var {
        self.affine(a, c, S::zero())
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        self.affine(a, -S::one(), S::one())
    }

    /// Multiplies every entry of `a` by the `1×1` var `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let sv = self.value(s);
        if sv.len() != 1 {
            return Err(Error::dim("mul_scalar", self.value(a).shape(), sv.shape()));
        }
        let c = sv.item();
        let out = self.value(a).scale(c);
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(out, Op::MulScalar(a, s), rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| {
            if v >= S::zero() {
                S::one() / (S::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (S::one() + e)
            }
        });
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(S::tanh);
        let rg = self.rg(a);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| if v > S::zero() { v } else { S::zero() });
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(S::exp);
        let rg = self.rg(a);
        self.push(out, Op::Exp(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if let Some(bad) = x.data().iter().find(|v| !(**v > S::zero())) {
            return Err(Error::numeric("log", format!("non-positive input {bad}")));
        }
        let out = x.map(S::ln);
        let rg = self.rg(a);
        Ok(self.push(out, Op::Log(a), rg))
    }

    /// Elementwise minimum; the gradient flows to the smaller operand
    /// (to `a` on ties).
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "minimum", S::min)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Minimum(a, b), rg))
    }

    pub fn softmax(&mut self, a: Var, axis: Axis) -> Result<Var> {
        self.softmax_masked(a, axis, None)
    }

    /// Softmax over the entries where `mask` is true; masked-out entries
    /// are fixed at zero.
    pub fn softmax_masked(&mut self, a: Var, axis: Axis, mask: Option<Vec<bool>>) -> Result<Var> {
        let out = softmax_forward(self.value(a), axis, mask.as_deref(), false)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Softmax(a, axis, mask), rg))
    }

    pub fn log_softmax(&mut self, a: Var, axis: Axis) -> Result<Var> {
        self.log_softmax_masked(a, axis, None)
    }

    /// Log-softmax; masked-out entries hold 0 and receive no gradient.
    pub fn log_softmax_masked(
        &mut self,
        a: Var,
        axis: Axis,
        mask: Option<Vec<bool>>,
    ) -> Result<Var> {
        let out = softmax_forward(self.value(a), axis, mask.as_deref(), true)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::LogSoftmax(a, axis, mask), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Invalid("concat of nothing".into()))?;
        let rows = self.value(first).rows();
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(Error::dim("concat_cols", self.value(first).shape(), t.shape()));
            }
            cols += t.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::matrix(rows, cols, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Invalid("concat of nothing".into()))?;
        let cols = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(Error::dim("concat_rows", self.value(first).shape(), t.shape()));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::matrix(rows, cols, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if len == 0 || start + len > x.cols() {
            return Err(Error::dim("slice_cols", x.shape(), &[start, len]));
        }
        let out = Tensor::from_fn(x.rows(), len, |r, c| x.get(r, start + c));
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceCols(a, start), rg))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if len == 0 || start + len > x.rows() {
            return Err(Error::dim("slice_rows", x.shape(), &[start, len]));
        }
        let c = x.cols();
        let out = Tensor::matrix(len, c, x.data()[start * c..(start + len) * c].to_vec())?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceRows(a, start), rg))
    }

    /// Row lookup (embedding gather); repeated indices accumulate gradient.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if idx.is_empty() {
            return Err(Error::Invalid("gather of no rows".into()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::dim("gather_rows", x.shape(), &[bad]));
        }
        let c = x.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(x.row(i));
        }
        let out = Tensor::matrix(idx.len(), c, data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::GatherRows(a, idx.to_vec()), rg))
    }

    /// Sums the entries of a `1×m` row into a `1×width` row at `idx`.
    pub fn scatter_cols(&mut self, a: Var, idx: &[usize], width: usize) -> Result<Var> {
        let x = self.value(a);
        if x.rows() != 1 || x.cols() != idx.len() {
            return Err(Error::dim("scatter_cols", x.shape(), &[1, idx.len()]));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= width) {
            return Err(Error::dim("scatter_cols", &[1, width], &[bad]));
        }
        let mut out = Tensor::zeros(1, width);
        for (&i, &v) in idx.iter().zip(x.data()) {
            out.data_mut()[i] += v;
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::ScatterCols(a, idx.to_vec()), rg))
    }

    /// Single entry as a `1×1` var.
    pub fn pick(&mut self, a: Var, r: usize, c: usize) -> Result<Var> {
        let x = self.value(a);
        if r >= x.rows() || c >= x.cols() {
            return Err(Error::dim("pick", x.shape(), &[r, c]));
        }
        let out = Tensor::scalar(x.get(r, c));
        let rg = self.rg(a);
        Ok(self.push(out, Op::Pick(a, r, c), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let n = S::from_usize(x.len()).unwrap();
        let out = Tensor::scalar(x.sum() / n);
        let rg = self.rg(a);
        self.push(out, Op::Mean(a), rg)
    }

    /// Column-wise mean over rows, `m×n → 1×n`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let n = S::from_usize(x.rows()).unwrap();
        let out = Tensor::from_fn(1, x.cols(), |_, c| {
            (0..x.rows()).map(|r| x.get(r, c)).sum::<S>() / n
        });
        let rg = self.rg(a);
        self.push(out, Op::MeanRows(a), rg)
    }

    /// `-Σ target ⊙ log_probs` with a constant target.
    pub fn cross_entropy(&mut self, target: &Tensor<S>, log_probs: Var) -> Result<Var> {
        let t = self.constant(target.clone());
        let prod = self.mul(t, log_probs)?;
        let s = self.sum(prod);
        Ok(self.scale(s, -S::one()))
    }

    /// Gradients of a `1×1` loss with respect to every recorded node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::dim("backward", lv.shape(), &[1, 1]));
        }
        let mut grads: Vec<Option<Tensor<S>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::scalar(S::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        Ok(Gradients {
            grads,
            params: self.param_vars.iter().map(|(&p, &v)| (p, v)).collect(),
        })
    }

    fn propagate(&self, i: usize, g: &Tensor<S>, grads: &mut [Option<Tensor<S>>]) -> Result<()> {
        let node = &self.nodes[i];
        let y = node.value.get();
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    let ga = g.matmul_nt(self.value(*b))?;
                    acc(grads, *a, ga)?;
                }
                if self.rg(*b) {
                    let gb = self.value(*a).matmul_tn(g)?;
                    acc(grads, *b, gb)?;
                }
            }
            Op::Transpose(a) => acc(grads, *a, g.transpose())?,
            Op::Add(a, b) => {
                if self.rg(*a) {
                    acc(grads, *a, g.clone())?;
                }
                if self.rg(*b) {
                    acc(grads, *b, g.clone())?;
                }
            }
            Op::AddRow(a, row) => {
                if self.rg(*a) {
                    acc(grads, *a, g.clone())?;
                }
                if self.rg(*row) {
                    let cols = g.cols();
                    let gr = Tensor::from_fn(1, cols, |_, c| {
                        (0..g.rows()).map(|r| g.get(r, c)).sum::<S>()
                    });
                    acc(grads, *row, gr)?;
                }
            }
            Op::Sub(a, b) => {
                if self.rg(*a) {
                    acc(grads, *a, g.clone())?;
                }
                if self.rg(*b) {
                    acc(grads, *b, g.scale(-S::one()))?;
                }
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    acc(grads, *a, g.mul(self.value(*b))?)?;
                }
                if self.rg(*b) {
                    acc(grads, *b, g.mul(self.value(*a))?)?;
                }
            }
            Op::Affine(a, scale) => acc(grads, *a, g.scale(*scale))?,
            Op::MulScalar(a, s) => {
                let c = self.value(*s).item();
                if self.rg(*a) {
                    acc(grads, *a, g.scale(c))?;
                }
                if self.rg(*s) {
                    let gs = g
                        .data()
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(&gv, &av)| gv * av)
                        .sum::<S>();
                    acc(grads, *s, Tensor::scalar(gs))?;
                }
            }
            Op::Sigmoid(a) => {
                let ga = g.zip_map(y, "sigmoid", |gv, yv| gv * yv * (S::one() - yv))?;
                acc(grads, *a, ga)?;
            }
            Op::Tanh(a) => {
                let ga = g.zip_map(y, "tanh", |gv, yv| gv * (S::one() - yv * yv))?;
                acc(grads, *a, ga)?;
            }
            Op::Relu(a) => {
                let ga = g.zip_map(self.value(*a), "relu", |gv, xv| {
                    if xv > S::zero() {
                        gv
                    } else {
                        S::zero()
                    }
                })?;
                acc(grads, *a, ga)?;
            }
            Op::Exp(a) => acc(grads, *a, g.mul(y)?)?,
            Op::Log(a) => {
                let ga = g.zip_map(self.value(*a), "log", |gv, xv| gv / xv)?;
                acc(grads, *a, ga)?;
            }
            Op::Minimum(a, b) => {
                let (xa, xb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let ga = Tensor::from_fn(g.rows(), g.cols(), |r, c| {
                        if xa.get(r, c) <= xb.get(r, c) {
                            g.get(r, c)
                        } else {
                            S::zero()
                        }
                    });
                    acc(grads, *a, ga)?;
                }
                if self.rg(*b) {
                    let gb = Tensor::from_fn(g.rows(), g.cols(), |r, c| {
                        if xa.get(r, c) <= xb.get(r, c) {
                            S::zero()
                        } else {
                            g.get(r, c)
                        }
                    });
                    acc(grads, *b, gb)?;
                }
            }
            Op::Softmax(a, axis, mask) => {
                let ga = softmax_backward(y, g, *axis, mask.as_deref(), false);
                acc(grads, *a, ga)?;
            }
            Op::LogSoftmax(a, axis, mask) => {
                let ga = softmax_backward(y, g, *axis, mask.as_deref(), true);
                acc(grads, *a, ga)?;
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    if self.rg(p) {
                        let gp = Tensor::from_fn(g.rows(), pc, |r, c| g.get(r, offset + c));
                        acc(grads, p, gp)?;
                    }
                    offset += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let pr = self.value(p).rows();
                    if self.rg(p) {
                        let slice = g.data()[offset * cols..(offset + pr) * cols].to_vec();
                        acc(grads, p, Tensor::matrix(pr, cols, slice)?)?;
                    }
                    offset += pr;
                }
            }
            Op::SliceCols(a, start) => {
                let x = self.value(*a);
                let mut ga = Tensor::zeros(x.rows(), x.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        ga.set(r, start + c, g.get(r, c));
                    }
                }
                acc(grads, *a, ga)?;
            }
            Op::SliceRows(a, start) => {
                let x = self.value(*a);
                let mut ga = Tensor::zeros(x.rows(), x.cols());
                let c = x.cols();
                ga.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                acc(grads, *a, ga)?;
            }
            Op::GatherRows(a, idx) => {
                let x = self.value(*a);
                let c = x.cols();
                // Embedding tables are large; accumulate in place.
                let slot = &mut grads[a.0];
                let target = slot.get_or_insert_with(|| Tensor::zeros(x.rows(), c));
                let data = target.data_mut();
                for (k, &row) in idx.iter().enumerate() {
                    for j in 0..c {
                        data[row * c + j] += g.get(k, j);
                    }
                }
            }
            Op::ScatterCols(a, idx) => {
                let ga = Tensor::from_fn(1, idx.len(), |_, k| g.data()[idx[k]]);
                acc(grads, *a, ga)?;
            }
            Op::Pick(a, r, c) => {
                let x = self.value(*a);
                let mut ga = Tensor::zeros(x.rows(), x.cols());
                ga.set(*r, *c, g.item());
                acc(grads, *a, ga)?;
            }
            Op::Sum(a) => {
                let x = self.value(*a);
                acc(grads, *a, Tensor::full(x.rows(), x.cols(), g.item()))?;
            }
            Op::Mean(a) => {
                let x = self.value(*a);
                let n = S::from_usize(x.len()).unwrap();
                acc(grads, *a, Tensor::full(x.rows(), x.cols(), g.item() / n))?;
            }
            Op::MeanRows(a) => {
                let x = self.value(*a);
                let n = S::from_usize(x.rows()).unwrap();
                let ga = Tensor::from_fn(x.rows(), x.cols(), |_, c| g.data()[c] / n);
                acc(grads, *a, ga)?;
            }
        }
        Ok(())
    }
}

fn acc<S: Scalar>(grads: &mut [Option<Tensor<S>>], v: Var, g: Tensor<S>) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Index groups that are normalized together.
fn extents(rows: usize, cols: usize, axis: Axis) -> Vec<std::ops::Range<usize>> {
    match axis {
        Axis::Row => (0..rows).map(|r| r * cols..(r + 1) * cols).collect(),
        Axis::Global => vec![0..rows * cols],
    }
}

fn softmax_forward<S: Scalar>(
    x: &Tensor<S>,
    axis: Axis,
    mask: Option<&[bool]>,
    log: bool,
) -> Result<Tensor<S>> {
    let op = if log { "log_softmax" } else { "softmax" };
    if !x.all_finite() {
        return Err(Error::numeric(op, "non-finite input"));
    }
    if let Some(m) = mask {
        if m.len() != x.len() {
            return Err(Error::dim(op, x.shape(), &[m.len()]));
        }
    }
    let keep = |i: usize| mask.map_or(true, |m| m[i]);
    let mut out = x.clone();
    let data = out.data_mut();
    for range in extents(x.rows(), x.cols(), axis) {
        let max = range
            .clone()
            .filter(|&i| keep(i))
            .map(|i| x.data()[i])
            .fold(S::neg_infinity(), S::max);
        if max == S::neg_infinity() {
            return Err(Error::numeric(op, "every entry of a normalized extent is masked"));
        }
        let z: S = range
            .clone()
            .filter(|&i| keep(i))
            .map(|i| (x.data()[i] - max).exp())
            .sum();
        let log_z = z.ln();
        for i in range {
            data[i] = if !keep(i) {
                S::zero()
            } else if log {
                x.data()[i] - max - log_z
            } else {
                (x.data()[i] - max).exp() / z
            };
        }
    }
    Ok(out)
}

fn softmax_backward<S: Scalar>(
    y: &Tensor<S>,
    g: &Tensor<S>,
    axis: Axis,
    mask: Option<&[bool]>,
    log: bool,
) -> Tensor<S> {
    let keep = |i: usize| mask.map_or(true, |m| m[i]);
    let mut out = Tensor::zeros(y.rows(), y.cols());
    let (yd, gd) = (y.data(), g.data());
    let od = out.data_mut();
    for range in extents(y.rows(), y.cols(), axis) {
        if log {
            let gsum: S = range.clone().filter(|&i| keep(i)).map(|i| gd[i]).sum();
            for i in range.filter(|&i| keep(i)) {
                od[i] = gd[i] - yd[i].exp() * gsum;
            }
        } else {
            let dot: S = range.clone().filter(|&i| keep(i)).map(|i| gd[i] * yd[i]).sum();
            for i in range.filter(|&i| keep(i)) {
                od[i] = yd[i] * (gd[i] - dot);
            }
        }
    }
    out
}

/// Result of [`Tape::backward`].
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
    params: Vec<(ParamId, Var)>,
}

impl<S: Scalar> Gradients<S> {
    pub fn wrt(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads[v.0].as_ref()
    }

    /// Adds this pass's parameter gradients into `into`.
    pub fn accumulate_params(&self, into: &mut ParamGrads<S>) -> Result<()> {
        for &(id, v) in &self.params {
            if let Some(g) = &self.grads[v.0] {
                match into.slot(id) {
                    Some(existing) => existing.add_assign(g)?,
                    slot @ None => *slot = Some(g.clone()),
                }
            }
        }
        Ok(())
    }

    pub fn param_grads(&self, num_params: usize) -> Result<ParamGrads<S>> {
        let mut pg = ParamGrads::new(num_params);
        self.accumulate_params(&mut pg)?;
        Ok(pg)
    }
}
