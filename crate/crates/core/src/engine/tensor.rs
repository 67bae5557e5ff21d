use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{argument, dimension, Result};

/// Dense row-major tensor of `f64` values.
///
/// Rank-1 tensors are treated as a single row wherever a matrix is expected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(argument(format!("tensor shape {shape:?} must be non-empty with positive dimensions")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(dimension(format!(
                "shape {shape:?} holds {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    /// Stack equally long rows into a matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(argument("cannot build a matrix from zero rows"));
        };
        let cols = first.len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(dimension(format!("row {i} has {} values, expected {cols}", row.len())));
            }
            data.extend_from_slice(row);
        }
        Tensor::matrix(rows.len(), cols, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of rows when viewed as a matrix.
    pub fn rows(&self) -> usize {
        if self.shape.len() == 1 {
            1
        } else {
            self.shape[0]
        }
    }

    /// Number of columns when viewed as a matrix (trailing dimensions flattened).
    pub fn cols(&self) -> usize {
        if self.shape.len() == 1 {
            self.shape[0]
        } else {
            self.shape[1..].iter().product()
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    /// First value; meaningful for single-element tensors.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }

    /// Gather rows by index into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let c = self.cols();
        let n = self.rows();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= n {
                return Err(argument(format!("row index {i} out of range for {n} rows")));
            }
            data.extend_from_slice(self.row(i));
        }
        Tensor::matrix(indices.len(), c, data)
    }

    /// Concatenate matrices with equal column counts along the row axis.
    pub fn vstack(parts: &[&Tensor]) -> Result<Tensor> {
        let Some(first) = parts.first() else {
            return Err(argument("vstack of zero tensors"));
        };
        let c = first.cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.cols() != c {
                return Err(dimension(format!("vstack column mismatch: {} vs {c}", p.cols())));
            }
            rows += p.rows();
            data.extend_from_slice(&p.data);
        }
        Tensor::matrix(rows, c, data)
    }
}

/// `out[m×n] = a[m×k] · b[k×n]`
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `out[m×k] = g[m×n] · bᵀ` where `b` is `k×n`.
pub(crate) fn matmul_bt(g: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `out[k×n] = aᵀ · g` where `a` is `m×k` and `g` is `m×n`.
pub(crate) fn matmul_at(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    out
}
