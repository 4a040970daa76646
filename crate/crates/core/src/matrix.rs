//! Dense row-major matrices and the validated wrappers used across the crate.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::error::{check_dim, Error, Result};
use crate::kernel::MIN_NORM;

/// Row-major `rows × cols` matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("matrix buffer length", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim("row length", cols, r.as_ref().len())?;
            data.extend_from_slice(r.as_ref());
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// New matrix whose row `i` is `self.row(indices[i])`.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Stacks `top` above `bottom`.
    pub fn vstack(top: &Matrix, bottom: &Matrix) -> Result<Self> {
        check_dim("stacked columns", top.cols, bottom.cols)?;
        let mut data = Vec::with_capacity(top.data.len() + bottom.data.len());
        data.extend_from_slice(&top.data);
        data.extend_from_slice(&bottom.data);
        Ok(Self {
            rows: top.rows + bottom.rows,
            cols: top.cols,
            data,
        })
    }

    /// `self · other` for `self: n×k`, `other: k×c`.
    pub fn matmul(&self, other: &Matrix) -> Result<Self> {
        check_dim("inner dimension", self.cols, other.rows)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (d, &b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// An `N × C` frame of per-pixel features. Entries are finite and both
/// dimensions are at least one; rows may be zero (kernel ops reject them).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix(Matrix);

impl FeatureMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows() == 0 || m.cols() == 0 {
            return Err(Error::InvalidValue {
                what: "feature matrix",
                reason: "needs at least one row and one column",
            });
        }
        if !m.is_finite() {
            return Err(Error::NonFinite {
                what: "feature matrix",
            });
        }
        Ok(Self(m))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

impl Deref for FeatureMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// `K × C` set of basis vectors. Entries are finite and every row has a norm
/// of at least [`MIN_NORM`], so the cosine kernel is defined for each basis.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisSet(Matrix);

impl BasisSet {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows() == 0 || m.cols() == 0 {
            return Err(Error::InvalidValue {
                what: "basis set",
                reason: "needs at least one basis and one column",
            });
        }
        if !m.is_finite() {
            return Err(Error::NonFinite { what: "basis set" });
        }
        if let Some(row) = (0..m.rows()).find(|&i| norm(m.row(i)) < MIN_NORM) {
            return Err(Error::DegenerateInput { what: "basis", row });
        }
        Ok(Self(m))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn count(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn concat(top: &BasisSet, bottom: &BasisSet) -> Result<BasisSet> {
        Ok(BasisSet(Matrix::vstack(&top.0, &bottom.0)?))
    }

    pub fn permuted(&self, perm: &[usize]) -> BasisSet {
        BasisSet(self.0.select_rows(perm))
    }
}

impl Deref for BasisSet {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// Row-sum tolerance for responsibility rows.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// `N × K` soft assignment matrix: entries in `[0, 1]`, rows summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponsibilityMatrix(Matrix);

impl ResponsibilityMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        for row in m.iter_rows() {
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidValue {
                    what: "responsibilities",
                    reason: "entries must lie in [0, 1]",
                });
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidValue {
                    what: "responsibilities",
                    reason: "rows must sum to 1",
                });
            }
        }
        Ok(Self(m))
    }

    pub(crate) fn new_unchecked(m: Matrix) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

impl Deref for ResponsibilityMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_rows_rejects_ragged() {
        let err = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn basis_rejects_zero_row() {
        let err = BasisSet::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap_err();
        assert_eq!(err, Error::DegenerateInput { what: "basis", row: 1 });
    }

    #[test]
    fn feature_rejects_nan_and_empty() {
        assert!(FeatureMatrix::from_rows(&[[f64::NAN, 0.0]]).is_err());
        assert!(FeatureMatrix::new(Matrix::zeros(0, 3)).is_err());
        // zero rows are allowed until a kernel needs them
        assert!(FeatureMatrix::from_rows(&[[0.0, 0.0]]).is_ok());
    }

    #[test]
    fn responsibilities_validated() {
        assert!(ResponsibilityMatrix::new(Matrix::from_rows(&[[0.25, 0.75]]).unwrap()).is_ok());
        assert!(ResponsibilityMatrix::new(Matrix::from_rows(&[[0.5, 0.6]]).unwrap()).is_err());
        assert!(ResponsibilityMatrix::new(Matrix::from_rows(&[[1.5, -0.5]]).unwrap()).is_err());
    }

    #[test]
    fn matmul_and_vstack() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[[1.0, 0.0, 2.0], [3.0, 1.0, 0.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.row(0), &[7.0, 2.0, 2.0]);
        assert_eq!(c.row(1), &[3.0, 1.0, 0.0]);
        let s = Matrix::vstack(&a, &a).unwrap();
        assert_eq!(s.rows(), 4);
        assert_eq!(s.row(3), &[0.0, 1.0]);
    }
}
