//! Reverse-mode differentiation over small dense arrays.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its value
//! and a record of its parents. [`Graph::backward`] walks the tape in
//! reverse from a scalar root and accumulates gradients into every node
//! that depends on a leaf. Nodes are addressed through copyable [`Var`]
//! handles that are only meaningful for the graph that created them.
//!
//! One graph per sentence is the intended granularity; graphs are cheap to
//! build and are dropped after the parameter gradients have been read.

use std::fmt;

use super::ops::{cumprod_backward, cumprod_kernel, cumsum_kernel, logistic, rev_cumsum_kernel, softmax_into};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A fused operation whose forward value is computed by the caller and whose
/// backward rule is supplied here.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;

    /// Vector-Jacobian product: returns one gradient per input, each the same
    /// length as that input.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, upstream: &[f64]) -> Vec<Vec<f64>>;
}

enum Op {
    Leaf,
    Constant,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    AddScalar(Var, Var),
    MulScalar(Var, Var),
    MatVec(Var, Var),
    MatTVec(Var, Var),
    AddRow(Var, Var),
    Row(Var, usize),
    StackRows(Vec<Var>),
    Concat(Vec<Var>),
    Element(Var, usize),
    Tanh(Var),
    Sigmoid(Var),
    Sum(Var),
    Dot(Var, Var),
    Clamp(Var, f64, f64),
    CumSum(Var),
    RevCumSum(Var),
    CumProd(Var, bool),
    ClampedDivide(Var, Var, f64),
    Normalize(Var),
    MaskedSoftmax(Var, usize),
    LogSoftmax(Var),
    Custom(Vec<Var>, Box<dyn CustomOp>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Tape of differentiable values.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph").field("nodes", &self.nodes.len()).finish()
    }
}

fn check_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("{what}: length mismatch {a} vs {b}")));
    }
    Ok(())
}

fn add_into(dst: &mut Vec<f64>, src: &[f64]) {
    if dst.is_empty() {
        dst.extend_from_slice(src);
    } else {
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let needs_grad = match op {
            Op::Leaf => true,
            Op::Constant => false,
            _ => parents.iter().any(|p| self.nodes[p.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable input (typically a parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, &[])
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, &[])
    }

    pub fn constant_vector(&mut self, data: Vec<f64>) -> Var {
        self.constant(Tensor::vector(data))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    /// Gradient accumulated by the last [`Graph::backward`], if the node was
    /// reached.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).filter(|g| !g.is_empty()).map(|g| g.as_slice())
    }

    fn vec_len(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    fn map_unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let x = self.value(a);
        let data = x.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(data, x.shape().to_vec()).expect("same shape");
        self.push(t, op, &[a])
    }

    fn zip_binary(&mut self, what: &str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::invalid(format!(
                "{what}: shape mismatch {:?} vs {:?}",
                x.shape(),
                y.shape()
            )));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        let t = Tensor::new(data, x.shape().to_vec()).expect("same shape");
        Ok(self.push(t, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map_unary(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        self.map_unary(a, Op::AddConst(a), |x| x + c)
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_const(neg, 1.0)
    }

    /// Adds a scalar node to every element of `a`.
    pub fn add_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.vec_len(s) != 1 {
            return Err(Error::invalid("add_scalar: second operand must be a scalar"));
        }
        let c = self.scalar(s);
        let x = self.value(a);
        let t = Tensor::new(x.data().iter().map(|v| v + c).collect(), x.shape().to_vec())?;
        Ok(self.push(t, Op::AddScalar(a, s), &[a, s]))
    }

    /// Multiplies every element of `a` by a scalar node.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.vec_len(s) != 1 {
            return Err(Error::invalid("mul_scalar: second operand must be a scalar"));
        }
        let c = self.scalar(s);
        let x = self.value(a);
        let t = Tensor::new(x.data().iter().map(|v| v * c).collect(), x.shape().to_vec())?;
        Ok(self.push(t, Op::MulScalar(a, s), &[a, s]))
    }

    /// `(r×c) · (c) -> (r)`.
    pub fn matvec(&mut self, m: Var, v: Var) -> Result<Var> {
        let (mt, vt) = (self.value(m), self.value(v));
        if mt.rank() != 2 || mt.cols() != vt.len() {
            return Err(Error::invalid(format!(
                "matvec: {:?} · {:?}",
                mt.shape(),
                vt.shape()
            )));
        }
        let x = vt.data();
        let out: Vec<f64> = (0..mt.rows())
            .map(|r| mt.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect();
        Ok(self.push(Tensor::vector(out), Op::MatVec(m, v), &[m, v]))
    }

    /// `(r×c)ᵀ · (r) -> (c)`.
    pub fn mat_t_vec(&mut self, m: Var, v: Var) -> Result<Var> {
        let (mt, vt) = (self.value(m), self.value(v));
        if mt.rank() != 2 || mt.rows() != vt.len() {
            return Err(Error::invalid(format!(
                "mat_t_vec: {:?}ᵀ · {:?}",
                mt.shape(),
                vt.shape()
            )));
        }
        let mut out = vec![0.0; mt.cols()];
        for (r, &w) in vt.data().iter().enumerate() {
            if w != 0.0 {
                for (o, a) in out.iter_mut().zip(mt.row(r)) {
                    *o += w * a;
                }
            }
        }
        Ok(self.push(Tensor::vector(out), Op::MatTVec(m, v), &[m, v]))
    }

    /// Adds vector `row` to every row of matrix `m`.
    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var> {
        let (mt, rt) = (self.value(m), self.value(row));
        if mt.rank() != 2 || mt.cols() != rt.len() {
            return Err(Error::invalid(format!(
                "add_row: {:?} + {:?}",
                mt.shape(),
                rt.shape()
            )));
        }
        let c = mt.cols();
        let data = mt
            .data()
            .iter()
            .enumerate()
            .map(|(i, a)| a + rt.data()[i % c])
            .collect();
        let t = Tensor::new(data, mt.shape().to_vec())?;
        Ok(self.push(t, Op::AddRow(m, row), &[m, row]))
    }

    pub fn row(&mut self, m: Var, r: usize) -> Result<Var> {
        let mt = self.value(m);
        if mt.rank() != 2 || r >= mt.rows() {
            return Err(Error::invalid(format!("row {r} of {:?}", mt.shape())));
        }
        let t = Tensor::vector(mt.row(r).to_vec());
        Ok(self.push(t, Op::Row(m, r), &[m]))
    }

    /// Stacks equal-length vectors into a matrix, one per row.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows.first().ok_or_else(|| Error::invalid("stack_rows: no rows"))?;
        let c = self.vec_len(*first);
        let mut data = Vec::with_capacity(c * rows.len());
        for r in rows {
            check_len("stack_rows", self.vec_len(*r), c)?;
            data.extend_from_slice(self.data(*r));
        }
        let t = Tensor::matrix(rows.len(), c, data)?;
        Ok(self.push(t, Op::StackRows(rows.to_vec()), rows))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::invalid("concat: no parts"));
        }
        let data: Vec<f64> = parts.iter().flat_map(|p| self.data(*p).iter().copied()).collect();
        Ok(self.push(Tensor::vector(data), Op::Concat(parts.to_vec()), parts))
    }

    pub fn element(&mut self, a: Var, i: usize) -> Result<Var> {
        let n = self.vec_len(a);
        if i >= n {
            return Err(Error::invalid(format!("element {i} of length {n}")));
        }
        let x = self.data(a)[i];
        Ok(self.push(Tensor::scalar(x), Op::Element(a, i), &[a]))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map_unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map_unary(a, Op::Sigmoid(a), logistic)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        check_len("dot", self.vec_len(a), self.vec_len(b))?;
        let s = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).sum();
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, b), &[a, b]))
    }

    /// Elementwise clamp into `[lo, hi]`; gradient passes wherever the input
    /// already lies in the closed interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.map_unary(a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn cumsum(&mut self, a: Var) -> Result<Var> {
        let v = self.data(a);
        if v.is_empty() {
            return Err(Error::invalid("cumsum: empty input"));
        }
        let out = cumsum_kernel(v);
        Ok(self.push(Tensor::vector(out), Op::CumSum(a), &[a]))
    }

    pub fn rev_cumsum(&mut self, a: Var) -> Result<Var> {
        let v = self.data(a);
        if v.is_empty() {
            return Err(Error::invalid("rev_cumsum: empty input"));
        }
        let out = rev_cumsum_kernel(v);
        Ok(self.push(Tensor::vector(out), Op::RevCumSum(a), &[a]))
    }

    pub fn cumprod(&mut self, a: Var, exclusive: bool) -> Result<Var> {
        let v = self.data(a);
        if v.is_empty() {
            return Err(Error::invalid("cumprod: empty input"));
        }
        let out = cumprod_kernel(v, exclusive);
        Ok(self.push(Tensor::vector(out), Op::CumProd(a, exclusive), &[a]))
    }

    /// `num / max(den, eps)`, elementwise.
    pub fn clamped_divide(&mut self, num: Var, den: Var, eps: f64) -> Result<Var> {
        if !(eps > 0.0) {
            return Err(Error::invalid(format!("clamped_divide: eps must be > 0, got {eps}")));
        }
        self.zip_binary("clamped_divide", num, den, Op::ClampedDivide(num, den, eps), |n, d| {
            n / d.max(eps)
        })
    }

    /// `a / ‖a‖₂`.
    pub fn normalize(&mut self, a: Var) -> Result<Var> {
        let norm = self.data(a).iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::numeric("normalize: zero-norm vector"));
        }
        Ok(self.map_unary(a, Op::Normalize(a), |x| x / norm))
    }

    pub fn masked_softmax(&mut self, a: Var, valid_len: usize) -> Result<Var> {
        let out = super::ops::masked_softmax(self.data(a), valid_len)?;
        Ok(self.push(Tensor::vector(out), Op::MaskedSoftmax(a, valid_len), &[a]))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let x = self.data(a);
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let out = x.iter().map(|v| v - lse).collect();
        self.push(Tensor::vector(out), Op::LogSoftmax(a), &[a])
    }

    /// Records a fused operation whose forward value the caller computed.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, op: Box<dyn CustomOp>) -> Var {
        self.push(output, Op::Custom(inputs.to_vec(), op), inputs)
    }

    /// Accumulates d(root)/d(node) into every node reachable from a leaf.
    /// `root` must hold a single element.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.vec_len(root) != 1 {
            return Err(Error::invalid("backward: root must be a scalar"));
        }
        self.grads = vec![Vec::new(); self.nodes.len()];
        self.grads[root.0] = vec![1.0];
        for i in (0..=root.0).rev() {
            if self.grads[i].is_empty() || !self.nodes[i].needs_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf | Op::Constant) {
                continue;
            }
            let upstream = std::mem::take(&mut self.grads[i]);
            self.propagate(i, &upstream);
            self.grads[i] = upstream;
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&mut self, i: usize, up: &[f64]) {
        let contributions = self.local_grads(i, up);
        for (v, g) in contributions {
            if self.nodes[v.0].needs_grad {
                add_into(&mut self.grads[v.0], &g);
            }
        }
    }

    /// Vector-Jacobian products of node `i` with respect to each parent that
    /// needs a gradient.
    fn local_grads(&self, i: usize, up: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[i];
        let y = node.value.data();
        let mut out = Vec::with_capacity(2);
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::Add(a, b) => {
                out.push((*a, up.to_vec()));
                out.push((*b, up.to_vec()));
            }
            Op::Sub(a, b) => {
                out.push((*a, up.to_vec()));
                out.push((*b, up.iter().map(|g| -g).collect()));
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    out.push((*a, up.iter().zip(self.data(*b)).map(|(g, y)| g * y).collect()));
                }
                if self.wants(*b) {
                    out.push((*b, up.iter().zip(self.data(*a)).map(|(g, x)| g * x).collect()));
                }
            }
            Op::Scale(a, c) => out.push((*a, up.iter().map(|g| g * c).collect())),
            Op::AddConst(a) => out.push((*a, up.to_vec())),
            Op::AddScalar(a, s) => {
                out.push((*a, up.to_vec()));
                out.push((*s, vec![up.iter().sum()]));
            }
            Op::MulScalar(a, s) => {
                let c = self.scalar(*s);
                if self.wants(*a) {
                    out.push((*a, up.iter().map(|g| g * c).collect()));
                }
                if self.wants(*s) {
                    let gs = up.iter().zip(self.data(*a)).map(|(g, x)| g * x).sum();
                    out.push((*s, vec![gs]));
                }
            }
            Op::MatVec(m, v) => {
                let mt = self.value(*m);
                let (rows, cols) = (mt.rows(), mt.cols());
                if self.wants(*m) {
                    let x = self.data(*v);
                    let mut gm = vec![0.0; rows * cols];
                    for (r, g) in up.iter().enumerate() {
                        for (dst, xv) in gm[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                            *dst = g * xv;
                        }
                    }
                    out.push((*m, gm));
                }
                if self.wants(*v) {
                    let mut gv = vec![0.0; cols];
                    for (r, g) in up.iter().enumerate() {
                        for (dst, a) in gv.iter_mut().zip(mt.row(r)) {
                            *dst += g * a;
                        }
                    }
                    out.push((*v, gv));
                }
            }
            Op::MatTVec(m, v) => {
                let mt = self.value(*m);
                let (rows, cols) = (mt.rows(), mt.cols());
                if self.wants(*m) {
                    let w = self.data(*v);
                    let mut gm = vec![0.0; rows * cols];
                    for (r, wr) in w.iter().enumerate() {
                        for (dst, g) in gm[r * cols..(r + 1) * cols].iter_mut().zip(up) {
                            *dst = wr * g;
                        }
                    }
                    out.push((*m, gm));
                }
                if self.wants(*v) {
                    let gv = (0..rows)
                        .map(|r| mt.row(r).iter().zip(up).map(|(a, g)| a * g).sum())
                        .collect();
                    out.push((*v, gv));
                }
            }
            Op::AddRow(m, row) => {
                let c = self.value(*m).cols();
                out.push((*m, up.to_vec()));
                if self.wants(*row) {
                    let mut gr = vec![0.0; c];
                    for (idx, g) in up.iter().enumerate() {
                        gr[idx % c] += g;
                    }
                    out.push((*row, gr));
                }
            }
            Op::Row(m, r) => {
                let mt = self.value(*m);
                let c = mt.cols();
                let mut gm = vec![0.0; mt.len()];
                gm[r * c..(r + 1) * c].copy_from_slice(up);
                out.push((*m, gm));
            }
            Op::StackRows(rows) => {
                let c = self.vec_len(rows[0]);
                for (k, r) in rows.iter().enumerate() {
                    out.push((*r, up[k * c..(k + 1) * c].to_vec()));
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.vec_len(*p);
                    out.push((*p, up[off..off + n].to_vec()));
                    off += n;
                }
            }
            Op::Element(a, idx) => {
                let mut ga = vec![0.0; self.vec_len(*a)];
                ga[*idx] = up[0];
                out.push((*a, ga));
            }
            Op::Tanh(a) => {
                out.push((*a, up.iter().zip(y).map(|(g, t)| g * (1.0 - t * t)).collect()));
            }
            Op::Sigmoid(a) => {
                out.push((*a, up.iter().zip(y).map(|(g, s)| g * s * (1.0 - s)).collect()));
            }
            Op::Sum(a) => out.push((*a, vec![up[0]; self.vec_len(*a)])),
            Op::Dot(a, b) => {
                if self.wants(*a) {
                    out.push((*a, self.data(*b).iter().map(|v| up[0] * v).collect()));
                }
                if self.wants(*b) {
                    out.push((*b, self.data(*a).iter().map(|v| up[0] * v).collect()));
                }
            }
            Op::Clamp(a, lo, hi) => {
                let ga = up
                    .iter()
                    .zip(self.data(*a))
                    .map(|(g, &x)| if x >= *lo && x <= *hi { *g } else { 0.0 })
                    .collect();
                out.push((*a, ga));
            }
            Op::CumSum(a) => out.push((*a, rev_cumsum_kernel(up))),
            Op::RevCumSum(a) => out.push((*a, cumsum_kernel(up))),
            Op::CumProd(a, exclusive) => {
                out.push((*a, cumprod_backward(self.data(*a), up, *exclusive)));
            }
            Op::ClampedDivide(n, d, eps) => {
                let den = self.data(*d);
                if self.wants(*n) {
                    out.push((*n, up.iter().zip(den).map(|(g, &q)| g / q.max(*eps)).collect()));
                }
                if self.wants(*d) {
                    let gd = up
                        .iter()
                        .zip(self.data(*n))
                        .zip(den)
                        .map(|((g, &x), &q)| if q > *eps { -g * x / (q * q) } else { 0.0 })
                        .collect();
                    out.push((*d, gd));
                }
            }
            Op::Normalize(a) => {
                let norm = self.data(*a).iter().map(|v| v * v).sum::<f64>().sqrt();
                let proj: f64 = up.iter().zip(y).map(|(g, v)| g * v).sum();
                out.push((*a, up.iter().zip(y).map(|(g, v)| (g - v * proj) / norm).collect()));
            }
            Op::MaskedSoftmax(a, valid) => {
                let valid = *valid;
                let inner: f64 = up[..valid].iter().zip(&y[..valid]).map(|(g, p)| g * p).sum();
                let mut ga = vec![0.0; y.len()];
                for j in 0..valid {
                    ga[j] = y[j] * (up[j] - inner);
                }
                out.push((*a, ga));
            }
            Op::LogSoftmax(a) => {
                let total: f64 = up.iter().sum();
                out.push((*a, up.iter().zip(y).map(|(g, ly)| g - ly.exp() * total).collect()));
            }
            Op::Custom(inputs, op) => {
                let ins: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
                let grads = op.backward(&ins, &node.value, up);
                debug_assert_eq!(grads.len(), inputs.len(), "{} returned wrong arity", op.name());
                out.extend(inputs.iter().copied().zip(grads));
            }
        }
        out
    }
}

/// Plain softmax helper exposed for custom ops.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    softmax_into(x, &mut out);
    out
}
