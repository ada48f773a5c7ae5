//! Reverse-mode differentiation over a recorded trace of tensor operations.
//!
//! A [`Tape`] either records (training, gradient checks) or not (inference).
//! In both modes the forward values are identical; a non-recording tape keeps
//! nothing alive beyond the [`Var`]s the caller holds, so long free-running
//! decodes do not accumulate memory.
//!
//! ```
//! use encforge::numerics::{ParamStore, Tape, Tensor};
//!
//! let mut store = ParamStore::new();
//! store.insert("w", Tensor::vector(vec![3.0])).unwrap();
//! let tape = Tape::new();
//! let w = tape.param(&store, "w").unwrap();
//! let loss = w.mul(&w).unwrap().sum().unwrap();
//! tape.backward(&loss).unwrap().accumulate_into(&mut store).unwrap();
//! assert_eq!(store.grad("w").unwrap().data(), &[6.0]);
//! ```

use std::cell::RefCell;
use std::sync::Arc;

use super::params::ParamStore;
use super::tensor::{self, Tensor};
use crate::error::{Error, Result};

const NO_ID: usize = usize::MAX;

#[derive(Debug)]
enum Op {
    Leaf,
    Param(String),
    Matmul(usize, usize),
    MatmulNt(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Concat(Vec<usize>, Vec<usize>),
    SliceCols(usize, usize),
    Sum(usize),
    Mse(usize, usize),
    GaussianKl(usize, usize),
}

struct Node {
    op: Op,
    value: Arc<Tensor>,
}

/// The gradient context: a linear trace of every operation applied to
/// [`Var`]s created from this tape.
pub struct Tape {
    record: bool,
    nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    /// A recording tape.
    pub fn new() -> Self {
        Self {
            record: true,
            nodes: RefCell::new(Vec::new()),
        }
    }

    /// A tape that evaluates but records nothing; `backward` is unavailable.
    pub fn no_grad() -> Self {
        Self {
            record: false,
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A non-differentiable input.
    pub fn constant(&self, value: Tensor) -> Result<Var<'_>> {
        self.push(Op::Leaf, value, "constant")
    }

    /// A leaf bound to a named entry of `store`. Its gradient lands in the
    /// store's slot on [`Gradients::accumulate_into`].
    pub fn param(&self, store: &ParamStore, name: &str) -> Result<Var<'_>> {
        let value = store.value_arc(name)?;
        self.push_arc(Op::Param(name.to_owned()), value)
    }

    fn push(&self, op: Op, value: Tensor, name: &'static str) -> Result<Var<'_>> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        self.push_arc(op, Arc::new(value))
    }

    fn push_arc(&self, op: Op, value: Arc<Tensor>) -> Result<Var<'_>> {
        let id = if self.record {
            let mut nodes = self.nodes.borrow_mut();
            nodes.push(Node {
                op,
                value: Arc::clone(&value),
            });
            Some(nodes.len() - 1)
        } else {
            None
        };
        Ok(Var {
            tape: self,
            id,
            value,
        })
    }

    /// Propagates d(loss)/d(node) back through the trace.
    pub fn backward(&self, loss: &Var<'_>) -> Result<Gradients> {
        let root = loss
            .id
            .ok_or_else(|| Error::Precondition("backward on a non-recording tape".into()))?;
        if loss.value.len() != 1 {
            return Err(Error::shape("backward", loss.value.shape(), &[1]));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = vec![None; root + 1];
        grads[root] = Some(Tensor::filled(loss.value.shape(), 1.0));
        let mut params = Vec::new();

        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let val = |i: usize| -> &Tensor { &nodes[i].value };
            let mut send = |i: usize, t: Tensor| match &mut grads[i] {
                Some(acc) => acc.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(name) => {
                    params.push((name.clone(), g));
                    continue;
                }
                Op::Matmul(a, b) => {
                    send(*a, tensor::matmul_nt(&g, val(*b))?);
                    send(*b, tensor::matmul_tn(val(*a), &g));
                }
                Op::MatmulNt(x, w) => {
                    send(*x, tensor::matmul(&g, val(*w))?);
                    send(*w, tensor::matmul_tn(&g, val(*x)));
                }
                Op::Add(a, b) => {
                    send(*b, g.clone());
                    send(*a, g);
                }
                Op::AddRow(a, bias) => {
                    let mut gb = Tensor::zeros(val(*bias).shape());
                    for r in 0..g.rows() {
                        gb.add_assign_slice(g.row(r));
                    }
                    send(*bias, gb);
                    send(*a, g);
                }
                Op::Sub(a, b) => {
                    send(*b, g.map(|v| -v));
                    send(*a, g);
                }
                Op::Mul(a, b) => {
                    send(*a, g.zip_map(val(*b), |gv, bv| gv * bv));
                    send(*b, g.zip_map(val(*a), |gv, av| gv * av));
                }
                Op::Scale(a, s) => send(*a, g.map(|v| v * s)),
                Op::AddScalar(a) => send(*a, g),
                Op::Tanh(a) => send(*a, g.zip_map(&node.value, |gv, y| gv * (1.0 - y * y))),
                Op::Sigmoid(a) => send(*a, g.zip_map(&node.value, |gv, y| gv * y * (1.0 - y))),
                Op::Exp(a) => send(*a, g.zip_map(&node.value, |gv, y| gv * y)),
                Op::Concat(ids, widths) => {
                    let rows = g.rows();
                    let mut offset = 0;
                    for (&i, &w) in ids.iter().zip(widths) {
                        let mut part = Tensor::zeros(val(i).shape());
                        for r in 0..rows {
                            part.row_mut(r)
                                .copy_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        offset += w;
                        send(i, part);
                    }
                }
                Op::SliceCols(a, start) => {
                    let width = g.cols();
                    let mut part = Tensor::zeros(val(*a).shape());
                    for r in 0..g.rows() {
                        part.row_mut(r)[*start..*start + width].copy_from_slice(g.row(r));
                    }
                    send(*a, part);
                }
                Op::Sum(a) => send(*a, Tensor::filled(val(*a).shape(), g.data()[0])),
                Op::Mse(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let k = 2.0 * g.data()[0] / av.len() as f64;
                    let ga = av.zip_map(bv, |x, y| k * (x - y));
                    send(*b, ga.map(|v| -v));
                    send(*a, ga);
                }
                Op::GaussianKl(mu, sigma) => {
                    let (mv, sv) = (val(*mu), val(*sigma));
                    let k = g.data()[0] / mv.rows() as f64;
                    send(*mu, mv.map(|m| k * m));
                    send(*sigma, sv.map(|s| k * (s - 1.0 / s)));
                }
            }
        }
        Ok(Gradients { params })
    }
}

/// Parameter gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients {
    params: Vec<(String, Tensor)>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, g)| g)
    }

    /// Adds every parameter gradient into the matching slot of `store`.
    pub fn accumulate_into(self, store: &mut ParamStore) -> Result<()> {
        for (name, g) in self.params {
            store.add_grad(&name, &g)?;
        }
        store.mark_grads_ready();
        Ok(())
    }
}

/// A value on a [`Tape`]. Cloning is cheap.
#[derive(Clone)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: Option<usize>,
    value: Arc<Tensor>,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("value", &self.value)
            .finish()
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn idx(&self) -> usize {
        self.id.unwrap_or(NO_ID)
    }

    fn same_shape(&self, other: &Var<'_>, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(op, self.shape(), other.shape()));
        }
        Ok(())
    }

    fn binary(
        &self,
        other: &Var<'t>,
        op: &'static str,
        make: fn(usize, usize) -> Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'t>> {
        self.same_shape(other, op)?;
        let out = self.value.zip_map(&other.value, f);
        self.tape.push(make(self.idx(), other.idx()), out, op)
    }

    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        let out = tensor::matmul(&self.value, &other.value)?;
        self.tape
            .push(Op::Matmul(self.idx(), other.idx()), out, "matmul")
    }

    /// `self · weightᵀ` with `weight` laid out `[out, in]`.
    pub fn matmul_nt(&self, weight: &Var<'t>) -> Result<Var<'t>> {
        let out = tensor::matmul_nt(&self.value, &weight.value)?;
        self.tape
            .push(Op::MatmulNt(self.idx(), weight.idx()), out, "matmul_nt")
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", Op::Add, |a, b| a + b)
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", Op::Sub, |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "hadamard", Op::Mul, |a, b| a * b)
    }

    /// Adds a length-`cols` bias to every row.
    pub fn add_row(&self, bias: &Var<'t>) -> Result<Var<'t>> {
        let cols = self.value.cols();
        if bias.value.len() != cols {
            return Err(Error::shape("add_row", self.shape(), bias.shape()));
        }
        let mut out = (*self.value).clone();
        for r in 0..out.rows() {
            tensor::axpy(1.0, bias.value.data(), out.row_mut(r));
        }
        self.tape
            .push(Op::AddRow(self.idx(), bias.idx()), out, "add_row")
    }

    pub fn scale(&self, s: f64) -> Result<Var<'t>> {
        let out = self.value.map(|v| v * s);
        self.tape.push(Op::Scale(self.idx(), s), out, "scale")
    }

    pub fn add_scalar(&self, c: f64) -> Result<Var<'t>> {
        let out = self.value.map(|v| v + c);
        self.tape.push(Op::AddScalar(self.idx()), out, "add_scalar")
    }

    /// `1 - self`.
    pub fn one_minus(&self) -> Result<Var<'t>> {
        self.scale(-1.0)?.add_scalar(1.0)
    }

    pub fn tanh(&self) -> Result<Var<'t>> {
        let out = self.value.map(f64::tanh);
        self.tape.push(Op::Tanh(self.idx()), out, "tanh")
    }

    pub fn sigmoid(&self) -> Result<Var<'t>> {
        let out = self.value.map(sigmoid);
        self.tape.push(Op::Sigmoid(self.idx()), out, "sigmoid")
    }

    pub fn exp(&self) -> Result<Var<'t>> {
        let out = self.value.map(f64::exp);
        self.tape.push(Op::Exp(self.idx()), out, "exp")
    }

    /// Concatenates along columns. Rank-1 inputs give a rank-1 result.
    pub fn concat(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Precondition("concat of nothing".into()))?;
        let rows = first.value.rows();
        let rank1 = parts.iter().all(|p| p.shape().len() == 1);
        for p in parts {
            if p.value.rows() != rows || (!rank1 && p.shape().len() != 2) {
                return Err(Error::shape("concat", first.shape(), p.shape()));
            }
        }
        let widths: Vec<usize> = parts.iter().map(|p| p.value.cols()).collect();
        let total: usize = widths.iter().sum();
        let shape = if rank1 {
            vec![total]
        } else {
            vec![rows, total]
        };
        let mut out = Tensor::zeros(&shape);
        for r in 0..rows {
            let orow = out.row_mut(r);
            let mut offset = 0;
            for (p, &w) in parts.iter().zip(&widths) {
                orow[offset..offset + w].copy_from_slice(p.value.row(r));
                offset += w;
            }
        }
        let ids = parts.iter().map(Var::idx).collect();
        first.tape.push(Op::Concat(ids, widths), out, "concat")
    }

    /// Columns `start..start + width`.
    pub fn slice_cols(&self, start: usize, width: usize) -> Result<Var<'t>> {
        let cols = self.value.cols();
        if start + width > cols || self.shape().len() != 2 {
            return Err(Error::shape("slice_cols", self.shape(), &[start, width]));
        }
        let rows = self.value.rows();
        let mut out = Tensor::zeros(&[rows, width]);
        for r in 0..rows {
            out.row_mut(r)
                .copy_from_slice(&self.value.row(r)[start..start + width]);
        }
        self.tape
            .push(Op::SliceCols(self.idx(), start), out, "slice_cols")
    }

    pub fn sum(&self) -> Result<Var<'t>> {
        let s = self.value.data().iter().sum();
        self.tape
            .push(Op::Sum(self.idx()), Tensor::scalar(s), "sum")
    }

    /// Mean over all elements of the squared difference.
    pub fn mse(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_shape(other, "mse")?;
        let n = self.value.len();
        if n == 0 {
            return Err(Error::Precondition("mse of empty tensors".into()));
        }
        let s: f64 = self
            .value
            .data()
            .iter()
            .zip(other.value.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.tape.push(
            Op::Mse(self.idx(), other.idx()),
            Tensor::scalar(s / n as f64),
            "mse",
        )
    }

    /// KL divergence of the diagonal Gaussian `N(mu, sigma²)` from `N(0, I)`,
    /// summed over columns and averaged over rows.
    pub fn gaussian_kl(mu: &Var<'t>, sigma: &Var<'t>) -> Result<Var<'t>> {
        mu.same_shape(sigma, "gaussian_kl")?;
        let kl = gaussian_kl_value(&mu.value, &sigma.value)?;
        mu.tape.push(
            Op::GaussianKl(mu.idx(), sigma.idx()),
            Tensor::scalar(kl),
            "gaussian_kl",
        )
    }
}

impl Tensor {
    pub(crate) fn add_assign_slice(&mut self, other: &[f64]) {
        tensor::axpy(1.0, other, self.data_mut());
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

/// `½ Σ (μ² + σ² − 1 − ln σ²)` per row, averaged over rows.
pub fn gaussian_kl_value(mu: &Tensor, sigma: &Tensor) -> Result<f64> {
    if mu.shape() != sigma.shape() {
        return Err(Error::shape("gaussian_kl", mu.shape(), sigma.shape()));
    }
    if let Some(s) = sigma.data().iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::Domain(format!("sigma must be positive, got {s}")));
    }
    let total: f64 = mu
        .data()
        .iter()
        .zip(sigma.data())
        .map(|(&m, &s)| 0.5 * (m * m + s * s - 1.0 - 2.0 * s.ln()))
        .sum();
    Ok(total / mu.rows() as f64)
}

pub fn mse_value(a: &Tensor, b: &Tensor) -> Result<f64> {
    let tape = Tape::no_grad();
    let a = tape.constant(a.clone())?;
    let b = tape.constant(b.clone())?;
    Ok(a.mse(&b)?.value().data()[0])
}
