//! Tape-based reverse-mode differentiation over dense 2-D tensors.
//!
//! A [`Graph`] records every operation as it is evaluated. Nodes are appended in
//! evaluation order, so the tape is already topologically sorted and
//! [`Graph::backward`] is a single reverse sweep that visits each node once.
//!
//! ```
//! use graphnorm::autodiff::Graph;
//! use graphnorm::tensor::Tensor;
//!
//! let mut g = Graph::new();
//! let w = g.param(Tensor::filled(2, 2, 1.0));
//! let x = g.constant(Tensor::column(vec![1.0, 2.0]));
//! let y = g.matmul(w, x).unwrap();
//! let root = g.sum(y);
//! let grads = g.backward(root).unwrap();
//! assert_eq!(grads.wrt(w).data(), &[1.0, 2.0, 1.0, 2.0]);
//! ```
//!
//! Subgradients at kinks are zero: `relu'(0) = 0`, `|x|'(0) = 0`, and the gradient
//! of the Frobenius norm at the zero matrix is the zero matrix.

mod gradcheck;

pub use gradcheck::{gradient_check, GradCheck};

use std::sync::Arc;

use crate::tensor::{gemm, Tensor, Trans};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: (usize, usize), rhs: (usize, usize) },
    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot((usize, usize)),
    #[error("index {index} out of range for {op} on dimension of size {size}")]
    IndexOutOfRange { op: &'static str, index: usize, size: usize },
    #[error("non-finite function value {0} during gradient check")]
    NonFinite(f64),
    #[error("finite-difference step {0} outside [1e-7, 1e-3]")]
    InvalidStep(f64),
    #[error("{0}")]
    Invalid(String),
}

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Relu(Var),
    Abs(Var),
    Log2(Var),
    Sum(Var),
    SumRows(Var),
    Mean(Var),
    Frobenius(Var),
    Broadcast(Var),
    Reshape(Var),
    Transpose(Var),
    Concat(Vec<Var>, Axis),
    IndexSelect(Var, Arc<[usize]>),
    EdgeAggregate { theta: Var, x: Var, edges: Arc<[(usize, usize)]>, d_out: usize, d_in: usize },
    PairwiseAbsDiff { x: Var, divisor: f64 },
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Offset(a)
            | Op::Relu(a)
            | Op::Abs(a)
            | Op::Log2(a)
            | Op::Sum(a)
            | Op::SumRows(a)
            | Op::Mean(a)
            | Op::Frobenius(a)
            | Op::Broadcast(a)
            | Op::Reshape(a)
            | Op::Transpose(a)
            | Op::IndexSelect(a, _) => vec![*a],
            Op::Concat(parts, _) => parts.clone(),
            Op::EdgeAggregate { theta, x, .. } => vec![*theta, *x],
            Op::PairwiseAbsDiff { x, .. } => vec![*x],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient with respect to `var`, zero-filled when the root does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, var: Var) -> Tensor {
        match self.grads[var.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

/// A recorded computation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), AutodiffError> {
    if a.shape() != b.shape() {
        return Err(AutodiffError::ShapeMismatch { op, lhs: a.shape(), rhs: b.shape() });
    }
    Ok(())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> (usize, usize) {
        self.nodes[var.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(AutodiffError::ShapeMismatch { op: "matmul", lhs: va.shape(), rhs: vb.shape() });
        }
        let out = va.matmul(vb);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn zip(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, tag: Op) -> Result<Var, AutodiffError> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape(op, va, vb)?;
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_vec(va.rows(), va.cols(), data).expect("shape preserved");
        Ok(self.push(out, tag))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// Multiplication by a constant scalar.
    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        self.push(out, Op::Scale(a, factor))
    }

    /// Addition of a constant scalar to every entry.
    pub fn offset(&mut self, a: Var, shift: f64) -> Var {
        let out = self.value(a).map(|x| x + shift);
        self.push(out, Op::Offset(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(out, Op::Relu(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::abs);
        self.push(out, Op::Abs(a))
    }

    pub fn log2(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::log2);
        self.push(out, Op::Log2(a))
    }

    /// Sum of all entries, `1 × 1`.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// Per-row sums, `rows × 1`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let out = Tensor::column((0..va.rows()).map(|r| va.row_slice(r).iter().sum()).collect());
        self.push(out, Op::SumRows(a))
    }

    /// Mean of all entries, `1 × 1`.
    pub fn mean(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let out = Tensor::scalar(va.sum() / va.len() as f64);
        self.push(out, Op::Mean(a))
    }

    /// Frobenius norm, `1 × 1`.
    pub fn frobenius(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).frobenius_norm());
        self.push(out, Op::Frobenius(a))
    }

    /// Broadcasts a `1×1`, `1×cols` or `rows×1` tensor to `rows × cols`.
    pub fn broadcast(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, AutodiffError> {
        let va = self.value(a);
        let (r, c) = va.shape();
        if !((r == 1 || r == rows) && (c == 1 || c == cols)) {
            return Err(AutodiffError::ShapeMismatch { op: "broadcast", lhs: (r, c), rhs: (rows, cols) });
        }
        let out = Tensor::from_fn(rows, cols, |i, j| va.get(if r == 1 { 0 } else { i }, if c == 1 { 0 } else { j }));
        Ok(self.push(out, Op::Broadcast(a)))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, AutodiffError> {
        let va = self.value(a);
        if va.len() != rows * cols {
            return Err(AutodiffError::ShapeMismatch { op: "reshape", lhs: va.shape(), rhs: (rows, cols) });
        }
        let out = va.clone().reshaped(rows, cols).expect("length checked");
        Ok(self.push(out, Op::Reshape(a)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    /// Stacks tensors vertically (`Axis::Rows`) or horizontally (`Axis::Cols`).
    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var, AutodiffError> {
        let first = parts.first().ok_or_else(|| AutodiffError::Invalid("concat of zero tensors".into()))?;
        let base = self.shape(*first);
        for p in &parts[1..] {
            let s = self.shape(*p);
            let compatible = match axis {
                Axis::Rows => s.1 == base.1,
                Axis::Cols => s.0 == base.0,
            };
            if !compatible {
                return Err(AutodiffError::ShapeMismatch { op: "concat", lhs: base, rhs: s });
            }
        }
        let out = match axis {
            Axis::Rows => {
                let rows = parts.iter().map(|p| self.shape(*p).0).sum();
                let mut data = Vec::with_capacity(rows * base.1);
                for p in parts {
                    data.extend_from_slice(self.value(*p).data());
                }
                Tensor::from_vec(rows, base.1, data).expect("rows summed")
            }
            Axis::Cols => {
                let cols: usize = parts.iter().map(|p| self.shape(*p).1).sum();
                let mut data = Vec::with_capacity(base.0 * cols);
                for r in 0..base.0 {
                    for p in parts {
                        data.extend_from_slice(self.value(*p).row_slice(r));
                    }
                }
                Tensor::from_vec(base.0, cols, data).expect("cols summed")
            }
        };
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis)))
    }

    /// Gathers rows of `a` (repetition allowed).
    pub fn index_select(&mut self, a: Var, rows: &[usize]) -> Result<Var, AutodiffError> {
        let va = self.value(a);
        if let Some(&bad) = rows.iter().find(|&&r| r >= va.rows()) {
            return Err(AutodiffError::IndexOutOfRange { op: "index_select", index: bad, size: va.rows() });
        }
        let mut data = Vec::with_capacity(rows.len() * va.cols());
        for &r in rows {
            data.extend_from_slice(va.row_slice(r));
        }
        let out = Tensor::from_vec(rows.len(), va.cols(), data).expect("gathered rows");
        Ok(self.push(out, Op::IndexSelect(a, rows.into())))
    }

    /// Edge-conditioned neighbourhood sum over undirected edges.
    ///
    /// `theta` holds one flattened `d_out × d_in` filter per edge (row `e` for
    /// `edges[e]`), `x` holds node states `n × d_in`. For every edge `(a, b)` the
    /// output receives `out[a] += Θ_e x[b]` and `out[b] += Θ_e x[a]`.
    pub fn edge_aggregate(
        &mut self,
        theta: Var,
        x: Var,
        edges: &Arc<[(usize, usize)]>,
        d_out: usize,
        d_in: usize,
    ) -> Result<Var, AutodiffError> {
        let (vt, vx) = (self.value(theta), self.value(x));
        if vt.rows() != edges.len() || vt.cols() != d_out * d_in {
            return Err(AutodiffError::ShapeMismatch { op: "edge_aggregate", lhs: vt.shape(), rhs: (edges.len(), d_out * d_in) });
        }
        if vx.cols() != d_in {
            return Err(AutodiffError::ShapeMismatch { op: "edge_aggregate", lhs: vx.shape(), rhs: (vx.rows(), d_in) });
        }
        let n = vx.rows();
        if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= n || b >= n) {
            return Err(AutodiffError::IndexOutOfRange { op: "edge_aggregate", index: a.max(b), size: n });
        }
        let mut out = Tensor::zeros(n, d_out);
        {
            let od = out.data_mut();
            for (e, &(a, b)) in edges.iter().enumerate() {
                let th = vt.row_slice(e);
                let (xa, xb) = (vx.row_slice(a), vx.row_slice(b));
                for o in 0..d_out {
                    let w = &th[o * d_in..(o + 1) * d_in];
                    let mut to_a = 0.0;
                    let mut to_b = 0.0;
                    for k in 0..d_in {
                        to_a += w[k] * xb[k];
                        to_b += w[k] * xa[k];
                    }
                    od[a * d_out + o] += to_a;
                    od[b * d_out + o] += to_b;
                }
            }
        }
        Ok(self.push(out, Op::EdgeAggregate { theta, x, edges: Arc::clone(edges), d_out, d_in }))
    }

    /// `out[i][j] = Σ_d |x[i][d] − x[j][d]| / divisor`, zero diagonal.
    ///
    /// Only the upper triangle is computed; the lower triangle is a copy, so the
    /// output is exactly symmetric.
    pub fn pairwise_abs_diff(&mut self, x: Var, divisor: f64) -> Var {
        let vx = self.value(x);
        let n = vx.rows();
        let mut out = Tensor::zeros(n, n);
        for i in 0..n {
            let xi = vx.row_slice(i);
            for j in (i + 1)..n {
                let xj = vx.row_slice(j);
                let s: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b).abs()).sum();
                let v = s / divisor;
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        self.push(out, Op::PairwiseAbsDiff { x, divisor })
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients, AutodiffError> {
        let shape = self.shape(root);
        if shape != (1, 1) {
            return Err(AutodiffError::NonScalarRoot(shape));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], var: Var, f: impl FnOnce(&mut Tensor)) {
        if !self.nodes[var.0].requires_grad {
            return;
        }
        let slot = &mut grads[var.0];
        if slot.is_none() {
            let (r, c) = self.shape(var);
            *slot = Some(Tensor::zeros(r, c));
        }
        f(slot.as_mut().expect("initialised above"));
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &self.nodes[idx].value;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |ga| gemm(Trans::No, Trans::Yes, g, vb, 1.0, ga, 1.0));
                self.accumulate(grads, *b, |gb| gemm(Trans::Yes, Trans::No, va, g, 1.0, gb, 1.0));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |ga| ga.add_scaled(g, 1.0));
                self.accumulate(grads, *b, |gb| gb.add_scaled(g, 1.0));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |ga| ga.add_scaled(g, 1.0));
                self.accumulate(grads, *b, |gb| gb.add_scaled(g, -1.0));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |ga| {
                    for ((d, gi), y) in ga.data_mut().iter_mut().zip(g.data()).zip(vb.data()) {
                        *d += gi * y;
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for ((d, gi), x) in gb.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                        *d += gi * x;
                    }
                });
            }
            Op::Div(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |ga| {
                    for ((d, gi), y) in ga.data_mut().iter_mut().zip(g.data()).zip(vb.data()) {
                        *d += gi / y;
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for (((d, gi), x), y) in gb.data_mut().iter_mut().zip(g.data()).zip(va.data()).zip(vb.data()) {
                        *d -= gi * x / (y * y);
                    }
                });
            }
            Op::Scale(a, factor) => self.accumulate(grads, *a, |ga| ga.add_scaled(g, *factor)),
            Op::Offset(a) => self.accumulate(grads, *a, |ga| ga.add_scaled(g, 1.0)),
            Op::Relu(a) => {
                let va = self.value(*a);
                self.accumulate(grads, *a, |ga| {
                    for ((d, gi), x) in ga.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                        if *x > 0.0 {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Abs(a) => {
                let va = self.value(*a);
                self.accumulate(grads, *a, |ga| {
                    for ((d, gi), x) in ga.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                        *d += gi * sign(*x);
                    }
                });
            }
            Op::Log2(a) => {
                let va = self.value(*a);
                self.accumulate(grads, *a, |ga| {
                    for ((d, gi), x) in ga.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                        *d += gi / (x * std::f64::consts::LN_2);
                    }
                });
            }
            Op::Sum(a) => {
                let s = g.item();
                self.accumulate(grads, *a, |ga| ga.data_mut().iter_mut().for_each(|d| *d += s));
            }
            Op::SumRows(a) => {
                self.accumulate(grads, *a, |ga| {
                    let cols = ga.cols();
                    for (r, chunk) in ga.data_mut().chunks_mut(cols.max(1)).enumerate() {
                        let s = g.data()[r];
                        chunk.iter_mut().for_each(|d| *d += s);
                    }
                });
            }
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                let s = g.item() / n;
                self.accumulate(grads, *a, |ga| ga.data_mut().iter_mut().for_each(|d| *d += s));
            }
            Op::Frobenius(a) => {
                let norm = out.item();
                if norm > 0.0 {
                    let va = self.value(*a);
                    let s = g.item() / norm;
                    self.accumulate(grads, *a, |ga| ga.add_scaled(va, s));
                }
            }
            Op::Broadcast(a) => {
                let (r, c) = self.shape(*a);
                self.accumulate(grads, *a, |ga| {
                    for i in 0..g.rows() {
                        for j in 0..g.cols() {
                            let (ri, cj) = (if r == 1 { 0 } else { i }, if c == 1 { 0 } else { j });
                            let cur = ga.get(ri, cj);
                            ga.set(ri, cj, cur + g.get(i, j));
                        }
                    }
                });
            }
            Op::Reshape(a) => {
                self.accumulate(grads, *a, |ga| {
                    for (d, gi) in ga.data_mut().iter_mut().zip(g.data()) {
                        *d += gi;
                    }
                });
            }
            Op::Transpose(a) => {
                self.accumulate(grads, *a, |ga| ga.add_scaled(&g.transpose(), 1.0));
            }
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for p in parts {
                    let (r, c) = self.shape(*p);
                    let start = offset;
                    self.accumulate(grads, *p, |gp| match axis {
                        Axis::Rows => {
                            for i in 0..r {
                                for j in 0..c {
                                    let cur = gp.get(i, j);
                                    gp.set(i, j, cur + g.get(start + i, j));
                                }
                            }
                        }
                        Axis::Cols => {
                            for i in 0..r {
                                for j in 0..c {
                                    let cur = gp.get(i, j);
                                    gp.set(i, j, cur + g.get(i, start + j));
                                }
                            }
                        }
                    });
                    offset += match axis {
                        Axis::Rows => r,
                        Axis::Cols => c,
                    };
                }
            }
            Op::IndexSelect(a, rows) => {
                self.accumulate(grads, *a, |ga| {
                    let cols = ga.cols();
                    for (k, &r) in rows.iter().enumerate() {
                        let dst = &mut ga.data_mut()[r * cols..(r + 1) * cols];
                        for (d, gi) in dst.iter_mut().zip(g.row_slice(k)) {
                            *d += gi;
                        }
                    }
                });
            }
            Op::EdgeAggregate { theta, x, edges, d_out, d_in } => {
                let (d_out, d_in) = (*d_out, *d_in);
                let (vt, vx) = (self.value(*theta), self.value(*x));
                self.accumulate(grads, *theta, |gt| {
                    let td = gt.data_mut();
                    let width = d_out * d_in;
                    for (e, &(a, b)) in edges.iter().enumerate() {
                        let (ga_row, gb_row) = (g.row_slice(a), g.row_slice(b));
                        let (xa, xb) = (vx.row_slice(a), vx.row_slice(b));
                        let dst = &mut td[e * width..(e + 1) * width];
                        for o in 0..d_out {
                            let (ua, ub) = (ga_row[o], gb_row[o]);
                            for k in 0..d_in {
                                dst[o * d_in + k] += ua * xb[k] + ub * xa[k];
                            }
                        }
                    }
                });
                self.accumulate(grads, *x, |gx| {
                    let xd = gx.data_mut();
                    for (e, &(a, b)) in edges.iter().enumerate() {
                        let th = vt.row_slice(e);
                        let (ga_row, gb_row) = (g.row_slice(a), g.row_slice(b));
                        for o in 0..d_out {
                            let w = &th[o * d_in..(o + 1) * d_in];
                            let (ua, ub) = (ga_row[o], gb_row[o]);
                            for k in 0..d_in {
                                xd[b * d_in + k] += w[k] * ua;
                                xd[a * d_in + k] += w[k] * ub;
                            }
                        }
                    }
                });
            }
            Op::PairwiseAbsDiff { x, divisor } => {
                let vx = self.value(*x);
                let n = vx.rows();
                let d = vx.cols();
                self.accumulate(grads, *x, |gx| {
                    let xd = gx.data_mut();
                    for i in 0..n {
                        for j in (i + 1)..n {
                            let up = (g.get(i, j) + g.get(j, i)) / divisor;
                            if up == 0.0 {
                                continue;
                            }
                            for k in 0..d {
                                let s = sign(vx.get(i, k) - vx.get(j, k)) * up;
                                xd[i * d + k] += s;
                                xd[j * d + k] -= s;
                            }
                        }
                    }
                });
            }
        }
    }
}
