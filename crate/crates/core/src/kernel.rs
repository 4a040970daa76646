//! Cosine/temperature similarity kernel `exp(cos(a, b) / tau)`.
//!
//! Anything that only ever appears inside a ratio (responsibilities, coarse
//! class probabilities, memory reads) is computed from the log-kernel
//! `cos / tau` and normalised with max-subtraction, so small temperatures
//! never overflow.

use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::matrix::{dot, norm, BasisSet, FeatureMatrix, Matrix};

/// Rows with a Euclidean norm below this are rejected by every kernel op.
pub const MIN_NORM: f64 = 1e-12;
pub const DEFAULT_TAU: f64 = 0.05;
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    /// Temperature; smaller is sharper.
    pub tau: f64,
    /// Mass below which a basis update is skipped.
    pub epsilon: f64,
}

impl KernelParams {
    pub fn new(tau: f64, epsilon: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidValue {
                what: "tau",
                reason: "must be finite and positive",
            });
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidValue {
                what: "epsilon",
                reason: "must be finite and positive",
            });
        }
        Ok(Self { tau, epsilon })
    }

    pub fn with_tau(tau: f64) -> Result<Self> {
        Self::new(tau, DEFAULT_EPSILON)
    }
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Cosine similarity of two vectors of equal length.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim("vector length", a.len(), b.len())?;
    let na = norm(a);
    if na < MIN_NORM {
        return Err(Error::DegenerateInput { what: "vector", row: 0 });
    }
    let nb = norm(b);
    if nb < MIN_NORM {
        return Err(Error::DegenerateInput { what: "vector", row: 1 });
    }
    Ok(dot(a, b) / (na * nb))
}

pub fn kernel(a: &[f64], b: &[f64], params: &KernelParams) -> Result<f64> {
    Ok(libm::exp(cosine(a, b)? / params.tau))
}

pub(crate) fn row_norms(m: &Matrix, what: &'static str) -> Result<Vec<f64>> {
    m.iter_rows()
        .enumerate()
        .map(|(row, r)| {
            let n = norm(r);
            if n < MIN_NORM {
                Err(Error::DegenerateInput { what, row })
            } else {
                Ok(n)
            }
        })
        .collect()
}

/// `N × K` matrix of cosine similarities between rows of `x` and rows of `m`.
pub fn cosine_rows(x: &Matrix, m: &Matrix) -> Result<Matrix> {
    check_dim("feature channels", m.cols(), x.cols())?;
    let xn = row_norms(x, "feature")?;
    let mn = row_norms(m, "basis")?;
    let mut out = Matrix::zeros(x.rows(), m.rows());
    for (n, xr) in x.iter_rows().enumerate() {
        let dst = out.row_mut(n);
        for (k, mr) in m.iter_rows().enumerate() {
            dst[k] = dot(xr, mr) / (xn[n] * mn[k]);
        }
    }
    Ok(out)
}

/// Log-kernel matrix, entry `(n, k) = cos(x_n, mu_k) / tau`.
pub fn log_kernel_rows(x: &FeatureMatrix, m: &BasisSet, params: &KernelParams) -> Result<Matrix> {
    let mut out = cosine_rows(x, m)?;
    let inv_tau = 1.0 / params.tau;
    for n in 0..out.rows() {
        for v in out.row_mut(n) {
            *v *= inv_tau;
        }
    }
    Ok(out)
}

/// Kernel matrix, entry `(n, k) = kernel(x_n, mu_k)`.
pub fn kernel_rows(x: &FeatureMatrix, m: &BasisSet, params: &KernelParams) -> Result<Matrix> {
    let mut out = cosine_rows(x, m)?;
    for n in 0..out.rows() {
        for v in out.row_mut(n) {
            *v = libm::exp(*v / params.tau);
        }
    }
    Ok(out)
}

/// Turns each row of logits into a probability row in place
/// (max-subtracted softmax).
pub(crate) fn softmax_rows(logits: &mut Matrix) {
    for n in 0..logits.rows() {
        softmax_in_place(logits.row_mut(n));
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `ln(sum(exp(row)))`, stable for large entries.
pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = row.iter().map(|&v| libm::exp(v - max)).sum();
    max + libm::log(s)
}
