//! Minimal dense vector/matrix arithmetic and the activation functions used
//! by every numerical module.
//!
//! Everything is `f64`, row-major, and allocation-per-result. That is plenty
//! for desk-scale recurrent networks and keeps indexing trivially testable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shape errors raised by the checked operations in this module.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum LinalgError {
    #[error("{op}: dimension mismatch ({detail})")]
    ShapeMismatch { op: &'static str, detail: String },
}

fn shape_err(op: &'static str, detail: String) -> LinalgError {
    LinalgError::ShapeMismatch { op, detail }
}

/// Dense column vector. Always holds at least one entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Wraps an owned buffer. Panics on an empty buffer: a zero-length
    /// vector is always a programming error here, not a data condition.
    pub fn new(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "Vector must hold at least one entry");
        Vector(data)
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Self::new(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; kept so slice-like call sites read naturally.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// Dot product. Panics on length mismatch (internal misuse, not data).
    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.len(), other.len(), "dot: length mismatch");
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds from row-major data. Panics if `rows * cols != data.len()`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert!(rows >= 1 && cols >= 1, "Matrix must have positive shape");
        assert_eq!(rows * cols, data.len(), "Matrix shape/data mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        assert!(!rows.is_empty(), "Matrix must have at least one row");
        let n_rows = rows.len();
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.into_iter().flatten().collect();
        Self::from_row_major(n_rows, cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_row_major(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::from_row_major(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Returns `selfᵀ · v` without materialising the transpose.
    pub fn transpose_mul(&self, v: &Vector) -> Result<Vector, LinalgError> {
        if self.rows != v.len() {
            return Err(shape_err(
                "transpose_mul",
                format!("matrix is {}x{}, vector has length {}", self.rows, self.cols, v.len()),
            ));
        }
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            let vr = v[r];
            for (o, w) in out.iter_mut().zip(row.iter()) {
                *o += w * vr;
            }
        }
        Ok(Vector::new(out))
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Computes `W·x + b`.
pub fn affine(w: &Matrix, x: &Vector, b: &Vector) -> Result<Vector, LinalgError> {
    if w.cols() != x.len() || w.rows() != b.len() {
        return Err(shape_err(
            "affine",
            format!(
                "matrix is {}x{}, input has length {}, bias has length {}",
                w.rows(),
                w.cols(),
                x.len(),
                b.len()
            ),
        ));
    }
    let mut out = Vec::with_capacity(w.rows());
    for r in 0..w.rows() {
        let dot: f64 = w
            .row(r)
            .iter()
            .zip(x.as_slice().iter())
            .map(|(wv, xv)| wv * xv)
            .sum();
        out.push(dot + b[r]);
    }
    Ok(Vector::new(out))
}

fn sigmoid_scalar(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Elementwise logistic sigmoid. Saturates smoothly; never NaN for finite input.
pub fn sigmoid(x: &Vector) -> Vector {
    Vector::new(x.iter().map(|&v| sigmoid_scalar(v)).collect())
}

/// Elementwise hyperbolic tangent.
pub fn tanh_act(x: &Vector) -> Vector {
    Vector::new(x.iter().map(|v| v.tanh()).collect())
}

/// Elementwise product.
pub fn hadamard(a: &Vector, b: &Vector) -> Result<Vector, LinalgError> {
    if a.len() != b.len() {
        return Err(shape_err(
            "hadamard",
            format!("lengths {} and {}", a.len(), b.len()),
        ));
    }
    Ok(Vector::new(
        a.iter().zip(b.iter()).map(|(x, y)| x * y).collect(),
    ))
}
