//! Matrix-valued reverse-mode differentiation.
//!
//! A [`Tape`] records every primitive applied during one forward pass. Nodes
//! are appended in evaluation order, so the record is topologically sorted by
//! construction. [`Tape::backward`] consumes the tape, which makes a second
//! backward sweep over the same forward pass impossible.

use std::sync::atomic::{AtomicU32, Ordering};

use super::matrix::{Activation, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

/// Lower clamp applied to probabilities before taking logs in [`Tape::bce`].
pub const BCE_CLAMP: f64 = 1e-12;

/// Handle to a node on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u32,
    idx: usize,
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Hadamard(Var, Var),
    Act(Var, Activation),
    SoftmaxCols(Var),
    MulConst(Var, Matrix<T>),
    Pool(Var, Var),
    VecColMajor(Var),
    Column(Var, usize),
    RowRange(Var, usize),
    HStack(Vec<Var>),
    VStack(Vec<Var>),
    Sum(Var),
    Bce(Var, Vec<T>),
}

struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
    needs_grad: bool,
    param: Option<usize>,
}

pub struct Tape<T> {
    id: u32,
    nodes: Vec<Node<T>>,
    params: Vec<usize>,
}

/// Gradients of a scalar output with respect to each parameter leaf, in
/// registration order.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Matrix<T>>,
    nodes: Vec<usize>,
    tape: u32,
}

impl<T: Real> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&Matrix<T>> {
        if v.tape != self.tape {
            return None;
        }
        self.nodes
            .iter()
            .position(|&n| n == v.idx)
            .map(|k| &self.grads[k])
    }

    pub fn into_vec(self) -> Vec<Matrix<T>> {
        self.grads
    }

    pub fn as_slice(&self) -> &[Matrix<T>] {
        &self.grads
    }
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Sum of `a[i]·b[i]` accumulated in ascending value order of the products.
///
/// The result depends only on the multiset of products, so reordering the
/// inputs jointly never changes a single bit of the output.
pub(crate) fn canonical_dot<T: Real>(buf: &mut Vec<T>, a: impl Iterator<Item = (T, T)>) -> T {
    buf.clear();
    buf.extend(a.map(|(x, y)| x * y));
    buf.sort_unstable_by(|x, y| x.total_cmp(y));
    buf.iter().fold(T::zero(), |acc, &v| acc + v)
}

/// `F · Aᵀ` with a permutation-invariant reduction over the shared column index.
pub fn pool_product<T: Real>(f: &Matrix<T>, a: &Matrix<T>) -> Result<Matrix<T>> {
    if f.cols() != a.cols() {
        return Err(Error::dim("pool", f.shape(), a.shape()));
    }
    let mut buf = Vec::with_capacity(f.cols());
    let mut out = Matrix::zeros(f.rows(), a.rows());
    for d in 0..f.rows() {
        let frow = f.row(d);
        for k in 0..a.rows() {
            let arow = a.row(k);
            let v = canonical_dot(&mut buf, frow.iter().copied().zip(arow.iter().copied()));
            out.set(d, k, v);
        }
    }
    Ok(out)
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<&Node<T>> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(Error::Usage(format!(
                "variable {} does not belong to this tape",
                v.idx
            )));
        }
        Ok(&self.nodes[v.idx])
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>, needs_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite tape value");
        let idx = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            param: None,
        });
        Var { tape: self.id, idx }
    }

    fn grad_of(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.idx].needs_grad)
    }

    /// Trainable leaf; its gradient is reported by [`Tape::backward`].
    pub fn param(&mut self, value: Matrix<T>) -> Var {
        let v = self.push(value, Op::Leaf, true);
        self.nodes[v.idx].param = Some(self.params.len());
        self.params.push(v.idx);
        v
    }

    /// Non-trainable leaf (inputs, masks).
    pub fn constant(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.check(v).expect("foreign variable").value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.check(a)?.value.matmul(&self.check(b)?.value)?;
        let g = self.grad_of(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), g))
    }

    /// `x + b` with the column vector `b` broadcast across columns of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let value = self
            .check(x)?
            .value
            .add_column_broadcast(&self.check(b)?.value)?;
        let g = self.grad_of(&[x, b]);
        Ok(self.push(value, Op::AddBias(x, b), g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.check(a)?.value.add(&self.check(b)?.value)?;
        let g = self.grad_of(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), g))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.check(a)?.value.hadamard(&self.check(b)?.value)?;
        let g = self.grad_of(&[a, b]);
        Ok(self.push(value, Op::Hadamard(a, b), g))
    }

    pub fn elementwise(&mut self, x: Var, act: Activation) -> Result<Var> {
        let value = self.check(x)?.value.elementwise(act);
        let g = self.grad_of(&[x]);
        Ok(self.push(value, Op::Act(x, act), g))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.elementwise(x, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.elementwise(x, Activation::Sigmoid)
    }

    pub fn softmax_columns(&mut self, x: Var) -> Result<Var> {
        let value = self.check(x)?.value.softmax_columns();
        let g = self.grad_of(&[x]);
        Ok(self.push(value, Op::SoftmaxCols(x), g))
    }

    /// Entrywise product with a constant (e.g. a dropout mask).
    pub fn mul_const(&mut self, x: Var, mask: Matrix<T>) -> Result<Var> {
        let value = self.check(x)?.value.hadamard(&mask)?;
        let g = self.grad_of(&[x]);
        Ok(self.push(value, Op::MulConst(x, mask), g))
    }

    /// `F · Aᵀ` where the shared column index is reduced in canonical order.
    pub fn pool(&mut self, f: Var, a: Var) -> Result<Var> {
        let value = pool_product(&self.check(f)?.value, &self.check(a)?.value)?;
        let g = self.grad_of(&[f, a]);
        Ok(self.push(value, Op::Pool(f, a), g))
    }

    pub fn vec_column_major(&mut self, x: Var) -> Result<Var> {
        let value = self.check(x)?.value.vec_column_major();
        let g = self.grad_of(&[x]);
        Ok(self.push(value, Op::VecColMajor(x), g))
    }

    pub fn column(&mut self, x: Var, j: usize) -> Result<Var> {
        let node = self.check(x)?;
        if j >= node.value.cols() {
            return Err(Error::dim("column", node.value.shape(), (0, j)));
        }
        let value = node.value.column_range(j, 1);
        let g = self.grad_of(&[x]);
        Ok(self.push(value, Op::Column(x, j), g))
    }

    pub fn row_range(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let node = self.check(x)?;
        if start + len > node.value.rows() {
            return Err(Error::dim("row_range", node.value.shape(), (start, len)));
        }
        let value = node.value.row_range(start, len);
        let g = self.grad_of(&[x]);
        Ok(self.push(value, Op::RowRange(x, start), g))
    }

    pub fn hstack(&mut self, parts: &[Var]) -> Result<Var> {
        let mats = parts
            .iter()
            .map(|&p| self.check(p).map(|n| &n.value))
            .collect::<Result<Vec<_>>>()?;
        let value = Matrix::hstack(&mats)?;
        let g = self.grad_of(parts);
        Ok(self.push(value, Op::HStack(parts.to_vec()), g))
    }

    pub fn vstack(&mut self, parts: &[Var]) -> Result<Var> {
        let mats = parts
            .iter()
            .map(|&p| self.check(p).map(|n| &n.value))
            .collect::<Result<Vec<_>>>()?;
        let value = Matrix::vstack(&mats)?;
        let g = self.grad_of(parts);
        Ok(self.push(value, Op::VStack(parts.to_vec()), g))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.check(x)?.value.sum();
        let g = self.grad_of(&[x]);
        Ok(self.push(Matrix::filled(1, 1, s), Op::Sum(x), g))
    }

    /// Mean binary cross-entropy of a column of probabilities against 0/1 labels.
    pub fn bce(&mut self, scores: Var, labels: &[T]) -> Result<Var> {
        let node = self.check(scores)?;
        if node.value.cols() != 1 || node.value.rows() != labels.len() {
            return Err(Error::dim("bce", node.value.shape(), (labels.len(), 1)));
        }
        let loss = bce_value(node.value.as_slice(), labels)?;
        let g = self.grad_of(&[scores]);
        Ok(self.push(
            Matrix::filled(1, 1, loss),
            Op::Bce(scores, labels.to_vec()),
            g,
        ))
    }

    /// Reverse sweep from a scalar output. Consumes the tape.
    pub fn backward(self, output: Var) -> Result<Gradients<T>> {
        let out = self.check(output)?;
        if out.value.shape() != (1, 1) {
            return Err(Error::Usage(format!(
                "backward needs a scalar output, got {:?}",
                out.value.shape()
            )));
        }
        if self.params.is_empty() {
            return Err(Error::Usage(
                "backward on a tape with no parameter leaves".into(),
            ));
        }
        let mut adj: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[output.idx] = Some(Matrix::filled(1, 1, T::one()));

        for idx in (0..=output.idx).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            if node.param.is_some() {
                adj[idx] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut adj)?;
        }

        let grads = self
            .params
            .iter()
            .map(|&p| {
                adj[p].take().unwrap_or_else(|| {
                    Matrix::zeros(self.nodes[p].value.rows(), self.nodes[p].value.cols())
                })
            })
            .collect();
        Ok(Gradients {
            grads,
            nodes: self.params,
            tape: self.id,
        })
    }

    fn accumulate(&self, adj: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) -> Result<()> {
        if !self.nodes[v.idx].needs_grad {
            return Ok(());
        }
        match &mut adj[v.idx] {
            Some(acc) => {
                for (a, b) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *a += *b;
                }
            }
            slot => *slot = Some(g),
        }
        Ok(())
    }

    fn val(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.idx].value
    }

    fn propagate(
        &self,
        node: &Node<T>,
        g: &Matrix<T>,
        adj: &mut [Option<Matrix<T>>],
    ) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.nodes[a.idx].needs_grad {
                    let ga = g.matmul(&self.val(*b).transpose())?;
                    self.accumulate(adj, *a, ga)?;
                }
                if self.nodes[b.idx].needs_grad {
                    let gb = self.val(*a).transpose().matmul(g)?;
                    self.accumulate(adj, *b, gb)?;
                }
            }
            Op::AddBias(x, b) => {
                self.accumulate(adj, *x, g.clone())?;
                let gb = Matrix::from_fn(g.rows(), 1, |i, _| {
                    g.row(i).iter().fold(T::zero(), |acc, &v| acc + v)
                });
                self.accumulate(adj, *b, gb)?;
            }
            Op::Add(a, b) => {
                self.accumulate(adj, *a, g.clone())?;
                self.accumulate(adj, *b, g.clone())?;
            }
            Op::Hadamard(a, b) => {
                let ga = g.hadamard(self.val(*b))?;
                let gb = g.hadamard(self.val(*a))?;
                self.accumulate(adj, *a, ga)?;
                self.accumulate(adj, *b, gb)?;
            }
            Op::Act(x, act) => {
                let dx = g.zip_with(&node.value, "act", |gi, y| {
                    gi * act.derivative_from_output(y)
                })?;
                self.accumulate(adj, *x, dx)?;
            }
            Op::SoftmaxCols(x) => {
                // dX[:,j] = S[:,j] ⊙ (G[:,j] − ⟨G[:,j], S[:,j]⟩)
                let s = &node.value;
                let mut dx = Matrix::zeros(s.rows(), s.cols());
                for j in 0..s.cols() {
                    let dot =
                        (0..s.rows()).fold(T::zero(), |acc, i| acc + g.get(i, j) * s.get(i, j));
                    for i in 0..s.rows() {
                        dx.set(i, j, s.get(i, j) * (g.get(i, j) - dot));
                    }
                }
                self.accumulate(adj, *x, dx)?;
            }
            Op::MulConst(x, mask) => {
                let dx = g.hadamard(mask)?;
                self.accumulate(adj, *x, dx)?;
            }
            Op::Pool(f, a) => {
                // M = F Aᵀ  ⇒  dF = G A,  dA = Gᵀ F
                if self.nodes[f.idx].needs_grad {
                    let df = g.matmul(self.val(*a))?;
                    self.accumulate(adj, *f, df)?;
                }
                if self.nodes[a.idx].needs_grad {
                    let da = g.transpose().matmul(self.val(*f))?;
                    self.accumulate(adj, *a, da)?;
                }
            }
            Op::VecColMajor(x) => {
                let (r, c) = self.val(*x).shape();
                let dx = Matrix::from_fn(r, c, |i, j| g.as_slice()[j * r + i]);
                self.accumulate(adj, *x, dx)?;
            }
            Op::Column(x, col) => {
                let (r, c) = self.val(*x).shape();
                let dx =
                    Matrix::from_fn(r, c, |i, j| if j == *col { g.get(i, 0) } else { T::zero() });
                self.accumulate(adj, *x, dx)?;
            }
            Op::RowRange(x, start) => {
                let (r, c) = self.val(*x).shape();
                let len = g.rows();
                let dx = Matrix::from_fn(r, c, |i, j| {
                    if i >= *start && i < start + len {
                        g.get(i - start, j)
                    } else {
                        T::zero()
                    }
                });
                self.accumulate(adj, *x, dx)?;
            }
            Op::HStack(parts) => {
                let mut offset = 0;
                for p in parts {
                    let w = self.val(*p).cols();
                    self.accumulate(adj, *p, g.column_range(offset, w))?;
                    offset += w;
                }
            }
            Op::VStack(parts) => {
                let mut offset = 0;
                for p in parts {
                    let h = self.val(*p).rows();
                    self.accumulate(adj, *p, g.row_range(offset, h))?;
                    offset += h;
                }
            }
            Op::Sum(x) => {
                let (r, c) = self.val(*x).shape();
                self.accumulate(adj, *x, Matrix::filled(r, c, g.get(0, 0)))?;
            }
            Op::Bce(s, labels) => {
                let scores = self.val(*s);
                let n = T::from_count(labels.len());
                let lo = T::lit(BCE_CLAMP);
                let hi = T::one() - lo;
                let upstream = g.get(0, 0);
                let ds = Matrix::from_fn(scores.rows(), 1, |i, _| {
                    let p = scores.get(i, 0);
                    if p < lo || p > hi {
                        return T::zero();
                    }
                    let y = labels[i];
                    upstream * ((T::one() - y) / (T::one() - p) - y / p) / n
                });
                self.accumulate(adj, *s, ds)?;
            }
        }
        Ok(())
    }
}

/// Mean BCE with probabilities clamped to `[1e-12, 1 − 1e-12]`.
pub fn bce_value<T: Real>(scores: &[T], labels: &[T]) -> Result<T> {
    if scores.is_empty() {
        return Err(Error::Usage("bce over an empty batch".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::dim("bce", (scores.len(), 1), (labels.len(), 1)));
    }
    let lo = T::lit(BCE_CLAMP);
    let hi = T::one() - lo;
    let total = scores.iter().zip(labels).fold(T::zero(), |acc, (&s, &y)| {
        let p = s.max(lo).min(hi);
        acc - (y * p.ln() + (T::one() - y) * (T::one() - p).ln())
    });
    Ok(total / T::from_count(scores.len()))
}
