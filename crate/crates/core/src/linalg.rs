//! Dense row-major matrices and vectors used throughout the crate.
//!
//! Rows are pixels and columns are spectral bands. Everything is `f64`;
//! the problem sizes in scope (tens of thousands of pixels by a few hundred
//! bands) fit in memory together with a dense multiplier matrix of the same
//! shape.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{PnmuError, Result};

/// A real `n_rows × n_cols` matrix stored row-major. Entries are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DenseMatrix {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and non-finite entries.
    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(PnmuError::shape(format!(
                "{} values cannot fill a {}x{} matrix",
                data.len(),
                n_rows,
                n_cols
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(PnmuError::NonFinite {
                row: pos / n_cols.max(1),
                col: pos % n_cols.max(1),
            });
        }
        Ok(DenseMatrix {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(PnmuError::shape("rows have different lengths"));
        }
        Self::from_vec(n_rows, n_cols, rows.concat())
    }

    pub(crate) fn from_vec_unchecked(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n_rows * n_cols);
        DenseMatrix {
            n_rows,
            n_cols,
            data,
        }
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    #[inline]
    pub(crate) fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.n_cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn column(&self, col: usize) -> DenseVector {
        DenseVector((0..self.n_rows).map(|i| self.get(i, col)).collect())
    }

    pub(crate) fn set_column(&mut self, col: usize, values: &[f64]) {
        for (i, &v) in values.iter().enumerate() {
            self.set(i, col, v);
        }
    }

    pub(crate) fn set_row(&mut self, row: usize, values: &[f64]) {
        self.data[row * self.n_cols..(row + 1) * self.n_cols].copy_from_slice(values);
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                t.data[j * self.n_rows + i] = self.data[i * self.n_cols + j];
            }
        }
        t
    }

    /// Matrix product `self · other`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_cols != other.n_rows {
            return Err(PnmuError::shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            let out_row = &mut out.data[i * other.n_cols..(i + 1) * other.n_cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Entrywise `self − other`.
    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.shape() != other.shape() {
            return Err(PnmuError::shape(format!(
                "cannot subtract {:?} from {:?}",
                other.shape(),
                self.shape()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(DenseMatrix::from_vec_unchecked(
            self.n_rows,
            self.n_cols,
            data,
        ))
    }

    pub fn scale(&self, alpha: f64) -> DenseMatrix {
        let data = self.data.iter().map(|a| a * alpha).collect();
        DenseMatrix::from_vec_unchecked(self.n_rows, self.n_cols, data)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// A real vector with finite entries.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DenseVector(pub Vec<f64>);

impl DenseVector {
    pub fn zeros(len: usize) -> Self {
        DenseVector(vec![0.0; len])
    }

    pub fn from_slice(values: &[f64]) -> Self {
        DenseVector(values.to_vec())
    }

    pub fn norm2(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    /// Returns `self / ‖self‖₂`, or a copy of `self` when the norm is zero.
    pub fn normalized(&self) -> DenseVector {
        let nrm = self.norm2();
        if nrm > 0.0 {
            DenseVector(self.0.iter().map(|v| v / nrm).collect())
        } else {
            self.clone()
        }
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for DenseVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(v: Vec<f64>) -> Self {
        DenseVector(v)
    }
}

/// Nonnegative factors `U` (n×r) and `V` (r×m) with `M ≈ U·V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorPair {
    u: DenseMatrix,
    v: DenseMatrix,
}

impl FactorPair {
    pub fn new(u: DenseMatrix, v: DenseMatrix) -> Result<Self> {
        if u.n_cols() != v.n_rows() {
            return Err(PnmuError::shape(format!(
                "U has {} columns but V has {} rows",
                u.n_cols(),
                v.n_rows()
            )));
        }
        if !u.is_nonnegative() || !v.is_nonnegative() {
            return Err(PnmuError::parameter(
                "factors must be entrywise nonnegative",
            ));
        }
        Ok(FactorPair { u, v })
    }

    pub fn zeros(n: usize, r: usize, m: usize) -> Self {
        FactorPair {
            u: DenseMatrix::zeros(n, r),
            v: DenseMatrix::zeros(r, m),
        }
    }

    pub(crate) fn from_parts_unchecked(u: DenseMatrix, v: DenseMatrix) -> Self {
        debug_assert_eq!(u.n_cols(), v.n_rows());
        FactorPair { u, v }
    }

    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn rank(&self) -> usize {
        self.u.n_cols()
    }

    pub fn into_parts(self) -> (DenseMatrix, DenseMatrix) {
        (self.u, self.v)
    }

    /// The reconstruction `U·V`.
    pub fn product(&self) -> DenseMatrix {
        self.u
            .matmul(&self.v)
            .expect("factor dimensions are checked at construction")
    }
}

pub fn frobenius_norm(a: &DenseMatrix) -> f64 {
    a.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Largest absolute entry; zero for an empty vector.
pub fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn clip_nonneg(a: &DenseMatrix) -> DenseMatrix {
    let data = a.as_slice().iter().map(|&v| v.max(0.0)).collect();
    DenseMatrix::from_vec_unchecked(a.n_rows(), a.n_cols(), data)
}

/// `a·x`, or `aᵀ·x` when `transpose` is set.
pub fn mat_vec(a: &DenseMatrix, x: &[f64], transpose: bool) -> Result<DenseVector> {
    let expected = if transpose { a.n_rows() } else { a.n_cols() };
    if x.len() != expected {
        return Err(PnmuError::shape(format!(
            "vector of length {} does not conform to a {}x{} matrix{}",
            x.len(),
            a.n_rows(),
            a.n_cols(),
            if transpose { " (transposed)" } else { "" }
        )));
    }
    Ok(if transpose {
        mat_t_vec_unchecked(a, x)
    } else {
        mat_vec_unchecked(a, x)
    })
}

pub(crate) fn mat_vec_unchecked(a: &DenseMatrix, x: &[f64]) -> DenseVector {
    DenseVector(
        (0..a.n_rows())
            .map(|i| a.row(i).iter().zip(x).map(|(p, q)| p * q).sum())
            .collect(),
    )
}

pub(crate) fn mat_t_vec_unchecked(a: &DenseMatrix, x: &[f64]) -> DenseVector {
    let mut out = vec![0.0; a.n_cols()];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, &aij) in out.iter_mut().zip(a.row(i)) {
            *o += aij * xi;
        }
    }
    DenseVector(out)
}
