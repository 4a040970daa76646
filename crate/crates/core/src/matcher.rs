//! Memory reads: softmax value reconstruction over the joint fg+bg key bases,
//! and permutation-invariant top-`l` affinity ratios over the separate sets.

use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::kernel::{log_kernel_rows, softmax_rows, KernelParams};
use crate::matrix::{BasisSet, FeatureMatrix, Matrix};

/// `N × L` matrix; entry `(n, l-1)` is the top-`l` fg share for pixel `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityFeatures(Matrix);

impl AffinityFeatures {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

impl core::ops::Deref for AffinityFeatures {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReadResult {
    /// `N × C'` reconstructed values.
    pub values: Matrix,
    pub affinity: AffinityFeatures,
}

/// Mixing weights used by [`read_values`]: row-wise softmax of the log-kernel.
pub fn read_weights(q: &FeatureMatrix, keys: &BasisSet, params: &KernelParams) -> Result<Matrix> {
    let mut a = log_kernel_rows(q, keys, params)?;
    softmax_rows(&mut a);
    Ok(a)
}

/// `V_n = sum_k softmax_k(K(q_n, key_k)) value_k`.
pub fn read_values(
    q: &FeatureMatrix,
    keys: &BasisSet,
    values: &Matrix,
    params: &KernelParams,
) -> Result<Matrix> {
    check_dim("value basis count", keys.count(), values.rows())?;
    read_weights(q, keys, params)?.matmul(values)
}

/// For every pixel and `l = 1..=top_l`:
/// `S[n, l-1] = top_l_sum(fg) / (top_l_sum(fg) + top_l_sum(bg))`,
/// where `top_l_sum` adds the `l` largest kernel values against a basis set.
///
/// Kernel values are shared by a per-pixel factor `exp(-max / tau)` before
/// summing; the ratio is unchanged and nothing overflows.
pub fn affinity_features(
    q: &FeatureMatrix,
    fg: &BasisSet,
    bg: &BasisSet,
    top_l: usize,
    params: &KernelParams,
) -> Result<AffinityFeatures> {
    check_dim("background basis count", fg.count(), bg.count())?;
    if top_l == 0 || top_l > fg.count() {
        return Err(Error::InvalidValue {
            what: "top-L",
            reason: "must satisfy 1 <= L <= K",
        });
    }
    let lf = log_kernel_rows(q, fg, params)?;
    let lb = log_kernel_rows(q, bg, params)?;
    let mut out = Matrix::zeros(q.rows(), top_l);
    let mut top_f = Vec::with_capacity(fg.count());
    let mut top_b = Vec::with_capacity(bg.count());
    for n in 0..q.rows() {
        top_descending(lf.row(n), top_l, &mut top_f);
        top_descending(lb.row(n), top_l, &mut top_b);
        let shift = top_f[0].max(top_b[0]);
        let (mut sf, mut sb) = (0.0, 0.0);
        for (l, dst) in out.row_mut(n).iter_mut().enumerate() {
            sf += libm::exp(top_f[l] - shift);
            sb += libm::exp(top_b[l] - shift);
            *dst = sf / (sf + sb);
        }
    }
    Ok(AffinityFeatures(out))
}

/// Writes the `l` largest entries of `row` into `out`, largest first.
fn top_descending(row: &[f64], l: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(row);
    let desc = |a: &f64, b: &f64| b.total_cmp(a);
    if l < out.len() {
        out.select_nth_unstable_by(l - 1, desc);
        out.truncate(l);
    }
    out.sort_unstable_by(desc);
}
