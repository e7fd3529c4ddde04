//! Dense row-major `f64` matrices and the activation functions used by the
//! recurrent cell.
//!
//! Column vectors are `n x 1` matrices. A batch of column vectors is stored as
//! an `n x B` matrix whose columns are independent samples; every routine here
//! treats columns independently, so a batched call produces bit-identical
//! columns to the corresponding single-column calls.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SohError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Entrywise binary operation selector for [`elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemOp {
    Add,
    Sub,
    Mul,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(SohError::InvalidDims(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
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
        Matrix { rows, cols, data }
    }

    /// Builds an `n x 1` column vector.
    pub fn column(values: &[f64]) -> Self {
        Matrix {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(SohError::InvalidDims(format!(
                    "row {r} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn scale(&self, k: f64) -> Matrix {
        self.map(|v| v * k)
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn same_shape(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(SohError::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// `self += other`, shapes must match.
    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        self.same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Adds an `n x 1` column to every column of an `n x B` matrix.
    pub fn add_column_broadcast(&mut self, column: &Matrix) -> Result<()> {
        if column.cols != 1 || column.rows != self.rows {
            return Err(SohError::Shape {
                op: "add_column_broadcast",
                left: self.shape(),
                right: column.shape(),
            });
        }
        for r in 0..self.rows {
            let b = column.data[r];
            for v in &mut self.data[r * self.cols..(r + 1) * self.cols] {
                *v += b;
            }
        }
        Ok(())
    }

    /// Row sums as an `n x 1` column (the gradient of a broadcast bias).
    pub fn sum_columns(&self) -> Matrix {
        let data = (0..self.rows).map(|r| self.row(r).iter().sum()).collect();
        Matrix {
            rows: self.rows,
            cols: 1,
            data,
        }
    }
}

/// Standard matrix product `a * b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(SohError::Shape {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    gemm_acc(&mut out, a, b);
    Ok(out)
}

/// `out += a * b` without shape checks beyond debug assertions.
pub(crate) fn gemm_acc(out: &mut Matrix, a: &Matrix, b: &Matrix) {
    debug_assert_eq!(a.cols, b.rows);
    debug_assert_eq!(out.shape(), (a.rows, b.cols));
    let n = b.cols;
    for i in 0..a.rows {
        let out_row = &mut out.data[i * n..(i + 1) * n];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            let b_row = &b.data[k * n..(k + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
}

/// `out += a^T * b`.
pub(crate) fn gemm_tn_acc(out: &mut Matrix, a: &Matrix, b: &Matrix) {
    debug_assert_eq!(a.rows, b.rows);
    debug_assert_eq!(out.shape(), (a.cols, b.cols));
    let n = b.cols;
    for k in 0..a.rows {
        let b_row = &b.data[k * n..(k + 1) * n];
        for i in 0..a.cols {
            let aki = a.data[k * a.cols + i];
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aki * bv;
            }
        }
    }
}

/// `out += a * b^T`.
pub(crate) fn gemm_nt_acc(out: &mut Matrix, a: &Matrix, b: &Matrix) {
    debug_assert_eq!(a.cols, b.cols);
    let bt = b.transpose();
    gemm_acc(out, a, &bt);
}

/// Logistic function, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Matrix) -> Matrix {
    x.map(sigmoid_scalar)
}

pub fn tanh_elem(x: &Matrix) -> Matrix {
    x.map(f64::tanh)
}

/// `d sigma / dx` expressed through the cached output `y = sigma(x)`.
#[inline]
pub fn sigmoid_grad_from_output(y: f64) -> f64 {
    y * (1.0 - y)
}

/// `d tanh / dx` expressed through the cached output `y = tanh(x)`.
#[inline]
pub fn tanh_grad_from_output(y: f64) -> f64 {
    1.0 - y * y
}

pub fn elementwise(a: &Matrix, b: &Matrix, op: ElemOp) -> Result<Matrix> {
    a.same_shape(b, "elementwise")?;
    let f = match op {
        ElemOp::Add => |x: f64, y: f64| x + y,
        ElemOp::Sub => |x: f64, y: f64| x - y,
        ElemOp::Mul => |x: f64, y: f64| x * y,
    };
    Ok(Matrix {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    })
}
