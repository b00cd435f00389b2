use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

/// A node of an eagerly evaluated computation graph.
///
/// Values are computed when a node is built and cached on it, so
/// [`Expr::evaluate`] is a lookup. Nodes that do not depend on any tracked
/// variable keep their value but drop their operands; they behave as
/// constants for differentiation.
///
/// Node ids grow monotonically, so every operand has a smaller id than the
/// node consuming it. The reverse sweep in [`crate::diff::gradient`] relies
/// on this for its ordering.
#[derive(Clone)]
pub struct Expr(pub(crate) Arc<Node>);

pub(crate) struct Node {
    pub(crate) id: u64,
    pub(crate) tracked: bool,
    pub(crate) value: Tensor,
    pub(crate) op: Op,
}

#[derive(Clone)]
pub(crate) enum Op {
    Leaf,
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    MatMul(Expr, Expr),
    Transpose(Expr),
    Neg(Expr),
    Scale(Expr, f64),
    Square(Expr),
    Relu(Expr),
    Tanh(Expr),
    Sigmoid(Expr),
    Softmax(Expr, usize),
    SumAll(Expr),
    SumAxis(Expr, usize, bool),
    BroadcastTo(Expr),
    SumTo(Expr),
    Reshape(Expr),
    Concat(Vec<Expr>, usize),
    Slice(Expr, usize, usize),
    Pad(Expr, usize, usize),
}

impl Op {
    pub(crate) fn operands(&self) -> Vec<&Expr> {
        use Op::*;
        match self {
            Leaf => Vec::new(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) => alloc::vec![a, b],
            Transpose(a)
            | Neg(a)
            | Scale(a, _)
            | Square(a)
            | Relu(a)
            | Tanh(a)
            | Sigmoid(a)
            | Softmax(a, _)
            | SumAll(a)
            | SumAxis(a, _, _)
            | BroadcastTo(a)
            | SumTo(a)
            | Reshape(a)
            | Slice(a, _, _)
            | Pad(a, _, _) => alloc::vec![a],
            Concat(parts, _) => parts.iter().collect(),
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Expr")
            .field("id", &self.0.id)
            .field("tracked", &self.0.tracked)
            .field("value", &self.0.value)
            .finish()
    }
}

impl Expr {
    fn build(value: Tensor, op: Op) -> Expr {
        let tracked = op.operands().iter().any(|e| e.0.tracked);
        let op = if tracked { op } else { Op::Leaf };
        Expr(Arc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            tracked,
            value,
            op,
        }))
    }

    /// A differentiable leaf.
    pub fn variable(value: Tensor) -> Expr {
        Expr(Arc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            tracked: true,
            value,
            op: Op::Leaf,
        }))
    }

    pub fn constant(value: Tensor) -> Expr {
        Expr(Arc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            tracked: false,
            value,
            op: Op::Leaf,
        }))
    }

    pub fn scalar(value: f64) -> Expr {
        Expr::constant(Tensor::scalar(value))
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    /// Owned copy of the cached value.
    pub fn evaluate(&self) -> Tensor {
        self.0.value.clone()
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    /// Whether any variable flows into this node.
    pub fn is_tracked(&self) -> bool {
        self.0.tracked
    }

    pub fn is_variable(&self) -> bool {
        self.0.tracked && matches!(self.0.op, Op::Leaf)
    }

    pub(crate) fn id(&self) -> u64 {
        self.0.id
    }

    pub fn ptr_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// Same value, cut off from the graph: gradients do not flow through.
    pub fn detach(&self) -> Expr {
        if !self.is_tracked() {
            return self.clone();
        }
        Expr::constant(self.0.value.clone())
    }

    pub fn add(&self, rhs: &Expr) -> Result<Expr> {
        let v = self.value().zip_with(rhs.value(), "add", |a, b| a + b)?;
        Ok(Expr::build(v, Op::Add(self.clone(), rhs.clone())))
    }

    pub fn sub(&self, rhs: &Expr) -> Result<Expr> {
        let v = self.value().zip_with(rhs.value(), "sub", |a, b| a - b)?;
        Ok(Expr::build(v, Op::Sub(self.clone(), rhs.clone())))
    }

    /// Elementwise product.
    pub fn mul(&self, rhs: &Expr) -> Result<Expr> {
        let v = self.value().zip_with(rhs.value(), "mul", |a, b| a * b)?;
        Ok(Expr::build(v, Op::Mul(self.clone(), rhs.clone())))
    }

    pub fn matmul(&self, rhs: &Expr) -> Result<Expr> {
        let v = self.value().matmul(rhs.value())?;
        Ok(Expr::build(v, Op::MatMul(self.clone(), rhs.clone())))
    }

    pub fn transpose(&self) -> Result<Expr> {
        let v = self.value().transpose()?;
        Ok(Expr::build(v, Op::Transpose(self.clone())))
    }

    pub fn neg(&self) -> Expr {
        Expr::build(self.value().map(|v| -v), Op::Neg(self.clone()))
    }

    /// Multiplies by a constant.
    pub fn scale(&self, factor: f64) -> Expr {
        Expr::build(self.value().map(|v| v * factor), Op::Scale(self.clone(), factor))
    }

    pub fn square(&self) -> Expr {
        Expr::build(self.value().map(|v| v * v), Op::Square(self.clone()))
    }

    /// `max(x, 0)`; the derivative at exactly 0 is taken as 0.
    pub fn relu(&self) -> Expr {
        Expr::build(
            self.value().map(|v| if v > 0.0 { v } else { 0.0 }),
            Op::Relu(self.clone()),
        )
    }

    pub fn tanh(&self) -> Expr {
        Expr::build(self.value().map(libm::tanh), Op::Tanh(self.clone()))
    }

    pub fn sigmoid(&self) -> Expr {
        Expr::build(self.value().map(sigmoid), Op::Sigmoid(self.clone()))
    }

    pub fn softmax(&self, axis: usize) -> Result<Expr> {
        let v = self.value().softmax(axis)?;
        Ok(Expr::build(v, Op::Softmax(self.clone(), axis)))
    }

    /// Sum of all entries, shape `[]`.
    pub fn sum(&self) -> Expr {
        Expr::build(self.value().sum_all(), Op::SumAll(self.clone()))
    }

    /// Mean of all entries, shape `[]`.
    pub fn mean(&self) -> Expr {
        let n = self.value().len().max(1) as f64;
        self.sum().scale(1.0 / n)
    }

    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Result<Expr> {
        let v = self.value().sum_axis(axis, keepdim)?;
        Ok(Expr::build(v, Op::SumAxis(self.clone(), axis, keepdim)))
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Expr> {
        if self.shape() == shape {
            return Ok(self.clone());
        }
        let v = self.value().broadcast_to(shape)?;
        Ok(Expr::build(v, Op::BroadcastTo(self.clone())))
    }

    pub fn sum_to(&self, shape: &[usize]) -> Result<Expr> {
        if self.shape() == shape {
            return Ok(self.clone());
        }
        let v = self.value().sum_to(shape)?;
        Ok(Expr::build(v, Op::SumTo(self.clone())))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Expr> {
        if self.shape() == shape {
            return Ok(self.clone());
        }
        let v = self.value().reshape(shape)?;
        Ok(Expr::build(v, Op::Reshape(self.clone())))
    }

    pub fn concat(parts: &[Expr], axis: usize) -> Result<Expr> {
        let values: Vec<&Tensor> = parts.iter().map(Expr::value).collect();
        let v = Tensor::concat(&values, axis)?;
        Ok(Expr::build(v, Op::Concat(parts.to_vec(), axis)))
    }

    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Expr> {
        let v = self.value().slice(axis, start, len)?;
        Ok(Expr::build(v, Op::Slice(self.clone(), axis, start)))
    }

    pub(crate) fn pad(&self, axis: usize, start: usize, total: usize) -> Result<Expr> {
        let v = self.value().pad(axis, start, total)?;
        Ok(Expr::build(v, Op::Pad(self.clone(), axis, start)))
    }

    /// `c - self` for a constant `c`.
    pub fn rsub_scalar(&self, c: f64) -> Expr {
        // Broadcasting a scalar constant cannot fail.
        Expr::scalar(c)
            .sub(self)
            .unwrap_or_else(|_| unreachable!("scalar broadcast"))
    }

    pub fn add_scalar(&self, c: f64) -> Expr {
        self.add(&Expr::scalar(c))
            .unwrap_or_else(|_| unreachable!("scalar broadcast"))
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + libm::exp(-v))
    } else {
        let e = libm::exp(v);
        e / (1.0 + e)
    }
}

/// Mean squared error between a prediction and a same-shaped target.
pub fn mse(prediction: &Expr, target: &Expr) -> Result<Expr> {
    if prediction.shape() != target.shape() {
        return Err(Error::shapes("mse", prediction.shape(), target.shape()));
    }
    Ok(prediction.sub(target)?.square().mean())
}
