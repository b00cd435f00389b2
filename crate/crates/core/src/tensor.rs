//! Dense row-major `f64` tensors and the numeric kernels behind every
//! differentiable operation.
//!
//! Broadcasting aligns trailing axes and only ever expands extents of size 1.
//! Anything else is reported as a shape mismatch naming the operation.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::invalid(
                "tensor",
                alloc::format!("shape {:?} holds {} values, got {}", shape, expected, data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Builds a `[rows, cols]` matrix; panics if `data` has the wrong length.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Self {
            shape: vec![rows, cols],
            data,
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shapes("reshape", &self.shape, shape));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Elementwise combination with broadcasting.
    pub fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape == other.shape {
            let data = self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect();
            return Ok(Tensor {
                shape: self.shape.clone(),
                data,
            });
        }
        let shape = broadcast_shape(&self.shape, &other.shape)
            .ok_or_else(|| Error::shapes(op, &self.shape, &other.shape))?;
        let n: usize = shape.iter().product();
        let data = if other.data.len() == 1 {
            let b = other.data[0];
            let a_len = self.data.len();
            if a_len == n {
                self.data.iter().map(|&a| f(a, b)).collect()
            } else {
                let a = self.data[0];
                vec![f(a, b); n]
            }
        } else if self.data.len() == 1 && other.data.len() == n {
            let a = self.data[0];
            other.data.iter().map(|&b| f(a, b)).collect()
        } else if self.data.len() == n && is_suffix_broadcast(&other.shape, &shape) {
            let m = other.data.len();
            self.data
                .iter()
                .enumerate()
                .map(|(i, &a)| f(a, other.data[i % m]))
                .collect()
        } else if other.data.len() == n && is_suffix_broadcast(&self.shape, &shape) {
            let m = self.data.len();
            other
                .data
                .iter()
                .enumerate()
                .map(|(i, &b)| f(self.data[i % m], b))
                .collect()
        } else {
            let sa = broadcast_strides(&self.shape, &shape);
            let sb = broadcast_strides(&other.shape, &shape);
            let mut out = Vec::with_capacity(n);
            for_each_index(&shape, |_, idx| {
                let ia: usize = idx.iter().zip(&sa).map(|(i, s)| i * s).sum();
                let ib: usize = idx.iter().zip(&sb).map(|(i, s)| i * s).sum();
                out.push(f(self.data[ia], other.data[ib]));
            });
            out
        };
        Ok(Tensor { shape, data })
    }

    /// Expands to `target`, which must be broadcast-compatible.
    pub fn broadcast_to(&self, target: &[usize]) -> Result<Tensor> {
        if self.shape == target {
            return Ok(self.clone());
        }
        match broadcast_shape(&self.shape, target) {
            Some(s) if s == target => {}
            _ => return Err(Error::shapes("broadcast_to", &self.shape, target)),
        }
        let n: usize = target.iter().product();
        let data = if self.data.len() == 1 {
            vec![self.data[0]; n]
        } else if is_suffix_broadcast(&self.shape, target) {
            let m = self.data.len();
            (0..n).map(|i| self.data[i % m]).collect()
        } else {
            let st = broadcast_strides(&self.shape, target);
            let mut out = Vec::with_capacity(n);
            for_each_index(target, |_, idx| {
                let i: usize = idx.iter().zip(&st).map(|(i, s)| i * s).sum();
                out.push(self.data[i]);
            });
            out
        };
        Ok(Tensor {
            shape: target.to_vec(),
            data,
        })
    }

    /// Sums over the axes that broadcasting `target` up to `self.shape` would
    /// have expanded. Adjoint of [`Tensor::broadcast_to`].
    pub fn sum_to(&self, target: &[usize]) -> Result<Tensor> {
        if self.shape == target {
            return Ok(self.clone());
        }
        match broadcast_shape(target, &self.shape) {
            Some(s) if s == self.shape => {}
            _ => return Err(Error::shapes("sum_to", &self.shape, target)),
        }
        let m: usize = target.iter().product();
        let mut out = vec![0.0; m];
        if m == 1 {
            out[0] = self.data.iter().sum();
        } else if is_suffix_broadcast(target, &self.shape) {
            for chunk in self.data.chunks_exact(m) {
                for (o, v) in out.iter_mut().zip(chunk) {
                    *o += v;
                }
            }
        } else {
            let st = broadcast_strides(target, &self.shape);
            for_each_index(&self.shape, |flat, idx| {
                let i: usize = idx.iter().zip(&st).map(|(i, s)| i * s).sum();
                out[i] += self.data[flat];
            });
        }
        Ok(Tensor {
            shape: target.to_vec(),
            data: out,
        })
    }

    pub fn sum_all(&self) -> Tensor {
        Tensor::scalar(self.data.iter().sum())
    }

    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor> {
        let (outer, n, inner) = self.split_axis("sum_axis", axis)?;
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            let base = o * n * inner;
            let dst = &mut out[o * inner..(o + 1) * inner];
            for k in 0..n {
                let src = &self.data[base + k * inner..base + (k + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut shape = self.shape.clone();
        if keepdim {
            shape[axis] = 1;
        } else {
            shape.remove(axis);
        }
        Ok(Tensor { shape, data: out })
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        let (outer, n, inner) = self.split_axis("softmax", axis)?;
        let mut out = self.data.clone();
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| o * n * inner + k * inner + i;
                let max = (0..n).map(|k| self.data[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for k in 0..n {
                    let e = libm::exp(self.data[at(k)] - max);
                    out[at(k)] = e;
                    total += e;
                }
                for k in 0..n {
                    out[at(k)] /= total;
                }
            }
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: out,
        })
    }

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k, n) = match (self.shape.as_slice(), other.shape.as_slice()) {
            (&[m, k], &[k2, n]) if k == k2 => (m, k, n),
            _ => return Err(Error::shapes("matmul", &self.shape, &other.shape)),
        };
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[p * n..(p + 1) * n];
                for (o, b) in row.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = match self.shape.as_slice() {
            &[r, c] => (r, c),
            _ => {
                return Err(Error::invalid(
                    "transpose",
                    alloc::format!("expected a matrix, got shape {:?}", self.shape),
                ))
            }
        };
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor {
            shape: vec![c, r],
            data: out,
        })
    }

    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat", "no operands"))?;
        if axis >= first.rank() {
            return Err(Error::invalid(
                "concat",
                alloc::format!("axis {axis} out of range for shape {:?}", first.shape),
            ));
        }
        let mut shape = first.shape.clone();
        shape[axis] = 0;
        for p in parts {
            let same_rank = p.rank() == first.rank();
            let same_dims = same_rank
                && p.shape
                    .iter()
                    .zip(&first.shape)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !same_dims {
                return Err(Error::shapes("concat", &first.shape, &p.shape));
            }
            shape[axis] += p.shape[axis];
        }
        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape[axis] * inner;
                data.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        Ok(Tensor { shape, data })
    }

    /// Takes `len` entries starting at `start` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let (outer, n, inner) = self.split_axis("slice", axis)?;
        if start + len > n {
            return Err(Error::invalid(
                "slice",
                alloc::format!("range {start}..{} exceeds extent {n} of axis {axis}", start + len),
            ));
        }
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * n * inner;
            data.extend_from_slice(&self.data[base + start * inner..base + (start + len) * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Ok(Tensor { shape, data })
    }

    /// Embeds `self` into zeros of extent `total` along `axis`, at offset
    /// `start`. Adjoint of [`Tensor::slice`].
    pub fn pad(&self, axis: usize, start: usize, total: usize) -> Result<Tensor> {
        let (outer, n, inner) = self.split_axis("pad", axis)?;
        if start + n > total {
            return Err(Error::invalid(
                "pad",
                alloc::format!("cannot place extent {n} at {start} within {total}"),
            ));
        }
        let mut data = vec![0.0; outer * total * inner];
        for o in 0..outer {
            let dst = o * total * inner + start * inner;
            data[dst..dst + n * inner].copy_from_slice(&self.data[o * n * inner..(o + 1) * n * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = total;
        Ok(Tensor { shape, data })
    }

    fn split_axis(&self, op: &'static str, axis: usize) -> Result<(usize, usize, usize)> {
        if axis >= self.rank() {
            return Err(Error::invalid(
                op,
                alloc::format!("axis {axis} out of range for shape {:?}", self.shape),
            ));
        }
        let outer = self.shape[..axis].iter().product();
        let inner = self.shape[axis + 1..].iter().product();
        Ok((outer, self.shape[axis], inner))
    }
}

/// Result shape of broadcasting `a` against `b`, or `None` if incompatible.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() {
            1
        } else {
            a[i - (rank - a.len())]
        };
        let db = if i < rank - b.len() {
            1
        } else {
            b[i - (rank - b.len())]
        };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

// `small` broadcasts to `full` purely by repeating its data, i.e. after
// dropping leading 1s it matches the trailing axes of `full` exactly.
fn is_suffix_broadcast(small: &[usize], full: &[usize]) -> bool {
    let trimmed = {
        let lead = small.iter().take_while(|&&d| d == 1).count();
        &small[lead..]
    };
    trimmed.len() <= full.len() && full[full.len() - trimmed.len()..] == *trimmed
}

fn broadcast_strides(shape: &[usize], target: &[usize]) -> Vec<usize> {
    let offset = target.len() - shape.len();
    let mut strides = vec![0; target.len()];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[offset + i] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

fn for_each_index(shape: &[usize], mut f: impl FnMut(usize, &[usize])) {
    let n: usize = shape.iter().product();
    if n == 0 {
        return;
    }
    let mut idx = vec![0usize; shape.len()];
    for flat in 0..n {
        f(flat, &idx);
        for d in (0..shape.len()).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
}
