//! EM over cosine-kernel responsibilities: the plain E/M steps, the weighted
//! M-step, coarse foreground/background classification, adaptive weights, and
//! the sequential weighted step that folds one frame into running
//! accumulators.

use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::kernel::{log_kernel_rows, log_sum_exp, softmax_rows, KernelParams};
use crate::matrix::{BasisSet, FeatureMatrix, Matrix, ResponsibilityMatrix};

/// Per-pixel foreground probability; background is `1 - fg`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftMask {
    fg: Vec<f64>,
}

impl SoftMask {
    pub fn new(fg: Vec<f64>) -> Result<Self> {
        if fg.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidValue {
                what: "soft mask",
                reason: "entries must lie in [0, 1]",
            });
        }
        Ok(Self { fg })
    }

    pub fn len(&self) -> usize {
        self.fg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fg.is_empty()
    }

    pub fn fg(&self) -> &[f64] {
        &self.fg
    }

    pub fn bg(&self) -> Vec<f64> {
        self.fg.iter().map(|&m| 1.0 - m).collect()
    }

    pub fn fg_mass(&self) -> f64 {
        self.fg.iter().sum()
    }

    pub fn bg_mass(&self) -> f64 {
        self.fg.iter().map(|&m| 1.0 - m).sum()
    }
}

/// Nonnegative per-pixel contribution weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::InvalidValue {
                what: "weights",
                reason: "entries must be finite and nonnegative",
            });
        }
        Ok(Self(w))
    }

    pub fn ones(n: usize) -> Self {
        Self(alloc::vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Running weighted sums for one class: `alpha` (`K × C`) and `beta` (`K`).
#[derive(Clone, Debug, PartialEq)]
pub struct Accumulator {
    pub alpha: Matrix,
    pub beta: Vec<f64>,
}

impl Accumulator {
    pub fn zeros(k: usize, c: usize) -> Self {
        Self {
            alpha: Matrix::zeros(k, c),
            beta: alloc::vec![0.0; k],
        }
    }
}

/// Coarse classification of every pixel against fg and bg bases.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassProbability {
    pub fg: Vec<f64>,
    pub bg: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WeightMode {
    /// Weights stay equal to the mask for every iteration.
    Fixed,
    /// Weights are re-estimated from the coarse classification after every
    /// M-step.
    #[default]
    Adaptive,
}

/// Bases and accumulators of one class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassState {
    pub bases: BasisSet,
    pub acc: Accumulator,
}

impl ClassState {
    pub fn new(bases: BasisSet, acc: Accumulator) -> Result<Self> {
        check_dim("accumulator rows", bases.rows(), acc.alpha.rows())?;
        check_dim("accumulator columns", bases.cols(), acc.alpha.cols())?;
        check_dim("beta length", bases.rows(), acc.beta.len())?;
        Ok(Self { bases, acc })
    }

    /// Fresh state with zero accumulators.
    pub fn from_bases(bases: BasisSet) -> Self {
        let acc = Accumulator::zeros(bases.rows(), bases.cols());
        Self { bases, acc }
    }
}

/// What one class committed during a step: the final responsibilities, the
/// weights used by the final M-step, and the per-basis mass `sum_n z_nk w_n`
/// they contributed.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassCommit {
    pub responsibilities: ResponsibilityMatrix,
    pub weights: WeightVector,
    pub added_mass: Vec<f64>,
}

impl ClassCommit {
    /// Whether basis `k` took part in this step (mass at or above epsilon).
    pub fn updated(&self, k: usize, epsilon: f64) -> bool {
        self.added_mass[k] >= epsilon
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwemStepResult {
    pub fg: ClassState,
    pub bg: ClassState,
    pub fg_commit: ClassCommit,
    pub bg_commit: ClassCommit,
}

/// Soft assignments `z_nk = K(x_n, mu_k) / sum_j K(x_n, mu_j)`.
pub fn estimate_responsibilities(
    x: &FeatureMatrix,
    bases: &BasisSet,
    params: &KernelParams,
) -> Result<ResponsibilityMatrix> {
    let mut z = log_kernel_rows(x, bases, params)?;
    softmax_rows(&mut z);
    Ok(ResponsibilityMatrix::new_unchecked(z))
}

/// `(sum_n z_nk w_n x_n, sum_n z_nk w_n)` for every basis `k`.
fn weighted_sums(x: &Matrix, z: &Matrix, w: Option<&[f64]>) -> (Matrix, Vec<f64>) {
    let k = z.cols();
    let mut numer = Matrix::zeros(k, x.cols());
    let mut mass = alloc::vec![0.0; k];
    for n in 0..x.rows() {
        let wn = w.map_or(1.0, |w| w[n]);
        if wn == 0.0 {
            continue;
        }
        let xr = x.row(n);
        for (j, &znk) in z.row(n).iter().enumerate() {
            let s = znk * wn;
            if s == 0.0 {
                continue;
            }
            mass[j] += s;
            for (a, &xv) in numer.row_mut(j).iter_mut().zip(xr) {
                *a += s * xv;
            }
        }
    }
    (numer, mass)
}

fn check_assignment_shapes(x: &FeatureMatrix, z: &ResponsibilityMatrix) -> Result<()> {
    check_dim("responsibility rows", x.rows(), z.rows())?;
    if z.cols() == 0 {
        return Err(Error::InvalidValue {
            what: "responsibilities",
            reason: "need at least one basis column",
        });
    }
    Ok(())
}

fn ratio_bases(numer: Matrix, mass: &[f64], params: &KernelParams) -> Result<BasisSet> {
    let mut numer = numer;
    for (k, &m) in mass.iter().enumerate() {
        if m < params.epsilon {
            return Err(Error::InsufficientMass { basis: k, mass: m });
        }
        for v in numer.row_mut(k) {
            *v /= m;
        }
    }
    BasisSet::new(numer)
}

/// `mu_k = sum_n z_nk x_n / sum_n z_nk`.
///
/// A basis whose column mass falls below epsilon has no defined mean, which
/// this stateless form reports as [`Error::InsufficientMass`].
pub fn maximize_bases(
    x: &FeatureMatrix,
    z: &ResponsibilityMatrix,
    params: &KernelParams,
) -> Result<BasisSet> {
    check_assignment_shapes(x, z)?;
    let (numer, mass) = weighted_sums(x, z, None);
    ratio_bases(numer, &mass, params)
}

/// `mu_k = sum_n z_nk w_n x_n / sum_n z_nk w_n`.
pub fn maximize_bases_weighted(
    x: &FeatureMatrix,
    z: &ResponsibilityMatrix,
    w: &WeightVector,
    params: &KernelParams,
) -> Result<BasisSet> {
    check_assignment_shapes(x, z)?;
    check_dim("weight length", x.rows(), w.len())?;
    let (numer, mass) = weighted_sums(x, z, Some(w.as_slice()));
    ratio_bases(numer, &mass, params)
}

/// Unweighted EM from `init`: `iterations` rounds of E then M. Bases whose
/// mass drops below epsilon keep their previous value.
pub fn fit_bases(
    x: &FeatureMatrix,
    init: &BasisSet,
    params: &KernelParams,
    iterations: usize,
) -> Result<(BasisSet, ResponsibilityMatrix)> {
    let mut bases = init.clone();
    let mut z = estimate_responsibilities(x, &bases, params)?;
    for _ in 0..iterations {
        let (mut numer, mass) = weighted_sums(x, &z, None);
        for (k, &m) in mass.iter().enumerate() {
            if m < params.epsilon {
                numer.row_mut(k).copy_from_slice(bases.row(k));
            } else {
                numer.row_mut(k).iter_mut().for_each(|v| *v /= m);
            }
        }
        bases = BasisSet::new(numer)?;
        z = estimate_responsibilities(x, &bases, params)?;
    }
    Ok((bases, z))
}

/// `P_fg(x_n) = sum_k K(x_n, fg_k) / sum_k [K(x_n, fg_k) + K(x_n, bg_k)]`.
pub fn classify_coarse(
    x: &FeatureMatrix,
    fg: &BasisSet,
    bg: &BasisSet,
    params: &KernelParams,
) -> Result<ClassProbability> {
    check_dim("background basis count", fg.count(), bg.count())?;
    let lf = log_kernel_rows(x, fg, params)?;
    let lb = log_kernel_rows(x, bg, params)?;
    let mut pfg = Vec::with_capacity(x.rows());
    let mut pbg = Vec::with_capacity(x.rows());
    for n in 0..x.rows() {
        // logistic of the log-ratio of the two kernel sums
        let d = log_sum_exp(lb.row(n)) - log_sum_exp(lf.row(n));
        pfg.push(1.0 / (1.0 + libm::exp(d)));
        pbg.push(1.0 / (1.0 + libm::exp(-d)));
    }
    Ok(ClassProbability { fg: pfg, bg: pbg })
}

/// `w_fg = m_fg * P_bg`, `w_bg = m_bg * P_fg`: pixels the bases disagree with
/// get the larger weight.
pub fn adaptive_weights(
    mask: &SoftMask,
    p: &ClassProbability,
) -> Result<(WeightVector, WeightVector)> {
    check_dim("class probability length", mask.len(), p.fg.len())?;
    check_dim("class probability length", mask.len(), p.bg.len())?;
    let wfg = mask.fg().iter().zip(&p.bg).map(|(m, q)| m * q).collect();
    let wbg = mask.fg().iter().zip(&p.fg).map(|(m, q)| (1.0 - m) * q).collect();
    Ok((WeightVector(wfg), WeightVector(wbg)))
}

/// SW-M: rebuild the candidate accumulators from the previous frame's state
/// plus this iteration's contribution, and the bases as their ratio. Bases
/// whose added mass is below epsilon keep their previous row, alpha and beta.
fn sw_maximize(
    prev: &ClassState,
    x: &FeatureMatrix,
    z: &ResponsibilityMatrix,
    w: &[f64],
    params: &KernelParams,
) -> Result<(ClassState, Vec<f64>)> {
    let (numer, mass) = weighted_sums(x, z, Some(w));
    let mut acc = prev.acc.clone();
    let mut bases = prev.bases.matrix().clone();
    for (k, &m) in mass.iter().enumerate() {
        if m < params.epsilon {
            continue;
        }
        acc.beta[k] += m;
        let beta = acc.beta[k];
        let alpha = acc.alpha.row_mut(k);
        for (a, &d) in alpha.iter_mut().zip(numer.row(k)) {
            *a += d;
        }
        for (b, &a) in bases.row_mut(k).iter_mut().zip(alpha.iter()) {
            *b = a / beta;
        }
    }
    Ok((
        ClassState {
            bases: BasisSet::new(bases)?,
            acc,
        },
        mass,
    ))
}

/// One sequential weighted EM step for a frame `x` with soft mask `mask`.
///
/// Each of the `iterations` rounds runs E (responsibilities against the
/// current working bases), M (accumulators rebuilt from `fg`/`bg`, the state
/// at the previous frame) and, in adaptive mode, W (weights from the coarse
/// classification against the new working bases). Only the last round's
/// contribution is committed. The W update after the last M-step cannot
/// affect anything and is skipped; the returned weights are the ones the
/// committed M-step used.
pub fn swem_step(
    x: &FeatureMatrix,
    mask: &SoftMask,
    fg: &ClassState,
    bg: &ClassState,
    params: &KernelParams,
    iterations: usize,
    mode: WeightMode,
) -> Result<SwemStepResult> {
    if iterations == 0 {
        return Err(Error::InvalidValue {
            what: "iterations",
            reason: "must be at least 1",
        });
    }
    check_dim("mask length", x.rows(), mask.len())?;
    check_dim("background basis count", fg.bases.count(), bg.bases.count())?;
    for state in [fg, bg] {
        check_dim("basis channels", x.cols(), state.bases.cols())?;
        check_dim("accumulator rows", state.bases.rows(), state.acc.alpha.rows())?;
        check_dim("accumulator columns", state.bases.cols(), state.acc.alpha.cols())?;
        check_dim("beta length", state.bases.rows(), state.acc.beta.len())?;
    }

    let mut w_fg = mask.fg().to_vec();
    let mut w_bg = mask.bg();
    let mut work_fg = fg.bases.clone();
    let mut work_bg = bg.bases.clone();
    let mut last = None;

    for r in 0..iterations {
        let z_fg = estimate_responsibilities(x, &work_fg, params)?;
        let z_bg = estimate_responsibilities(x, &work_bg, params)?;
        let (new_fg, mass_fg) = sw_maximize(fg, x, &z_fg, &w_fg, params)?;
        let (new_bg, mass_bg) = sw_maximize(bg, x, &z_bg, &w_bg, params)?;
        work_fg = new_fg.bases.clone();
        work_bg = new_bg.bases.clone();
        let is_last = r + 1 == iterations;
        if is_last {
            last = Some(SwemStepResult {
                fg: new_fg,
                bg: new_bg,
                fg_commit: ClassCommit {
                    responsibilities: z_fg,
                    weights: WeightVector(core::mem::take(&mut w_fg)),
                    added_mass: mass_fg,
                },
                bg_commit: ClassCommit {
                    responsibilities: z_bg,
                    weights: WeightVector(core::mem::take(&mut w_bg)),
                    added_mass: mass_bg,
                },
            });
        } else if mode == WeightMode::Adaptive {
            let p = classify_coarse(x, &work_fg, &work_bg, params)?;
            let (a, b) = adaptive_weights(mask, &p)?;
            w_fg = a.0;
            w_bg = b.0;
        }
    }
    Ok(last.expect("iterations >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> KernelParams {
        KernelParams::default()
    }

    fn rel(a: f64, b: f64) -> f64 {
        if a == b {
            0.0
        } else {
            (a - b).abs() / a.abs().max(b.abs())
        }
    }

    fn resp(rows: &[&[f64]]) -> ResponsibilityMatrix {
        ResponsibilityMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn single_basis_responsibility_is_one() {
        let x = FeatureMatrix::from_rows(&[[1.0, 2.0], [-3.0, 0.1], [0.0, 1.0]]).unwrap();
        let m = BasisSet::from_rows(&[[0.4, -0.2]]).unwrap();
        let z = estimate_responsibilities(&x, &m, &p()).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn responsibility_of_collinear_basis() {
        let x = FeatureMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let m = BasisSet::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let z = estimate_responsibilities(&x, &m, &p()).unwrap();
        // direct evaluation of e^20 / (e^20 + e^0)
        let expected = 1.0 / (1.0 + (-20f64).exp());
        assert!(rel(z.get(0, 0), expected) < 1e-15);
        assert!(rel(z.get(0, 1), (-20f64).exp() / (1.0 + (-20f64).exp())) < 1e-12);
        assert!((1.0 - z.get(0, 0) - 2.061_153_618_190_204e-9).abs() < 2e-16);
    }

    #[test]
    fn responsibilities_permute_with_bases() {
        let x = FeatureMatrix::from_rows(&[[1.0, 0.3, -0.2], [0.1, -1.0, 0.5]]).unwrap();
        let m = BasisSet::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.3, 0.3, 1.0]]).unwrap();
        let perm = [1, 2, 0];
        let a = estimate_responsibilities(&x, &m, &p()).unwrap();
        let b = estimate_responsibilities(&x, &m.permuted(&perm), &p()).unwrap();
        for n in 0..2 {
            for (j, &q) in perm.iter().enumerate() {
                assert!((b.get(n, j) - a.get(n, q)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn uniform_assignment_gives_mean() {
        let x = FeatureMatrix::from_rows(&[[1.0, 2.0], [3.0, -2.0], [2.0, 3.0]]).unwrap();
        let z = resp(&[&[0.5, 0.5], &[0.5, 0.5], &[0.5, 0.5]]);
        let m = maximize_bases(&x, &z, &p()).unwrap();
        for k in 0..2 {
            assert!(rel(m.get(k, 0), 2.0) < 1e-15);
            assert!(rel(m.get(k, 1), 1.0) < 1e-15);
        }
    }

    #[test]
    fn one_hot_assignment_gives_cluster_means() {
        let x = FeatureMatrix::from_rows(&[[1.0, 0.0], [3.0, 0.0], [0.0, 5.0]]).unwrap();
        let z = resp(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let m = maximize_bases(&x, &z, &p()).unwrap();
        assert_eq!(m.row(0), &[2.0, 0.0]);
        assert_eq!(m.row(1), &[0.0, 5.0]);
    }

    #[test]
    fn maximize_matches_summation_loop() {
        let x = FeatureMatrix::from_rows(&[
            [0.3, -1.1, 2.0, 0.4],
            [1.2, 0.7, -0.3, 0.9],
            [-0.8, 0.2, 0.6, -1.4],
            [0.05, 1.6, -0.9, 0.2],
            [2.2, -0.4, 0.1, 0.8],
            [-1.3, -0.6, 1.7, 0.3],
        ])
        .unwrap();
        let zr = [0.2, 0.9, 0.45, 0.6, 0.01, 0.77];
        let rows: Vec<[f64; 2]> = zr.iter().map(|&a| [a, 1.0 - a]).collect();
        let z = ResponsibilityMatrix::new(Matrix::from_rows(&rows).unwrap()).unwrap();
        let m = maximize_bases(&x, &z, &p()).unwrap();
        for k in 0..2 {
            let mut den = 0.0;
            let mut num = [0.0; 4];
            for n in 0..6 {
                den += z.get(n, k);
                for c in 0..4 {
                    num[c] += z.get(n, k) * x.get(n, c);
                }
            }
            for c in 0..4 {
                assert!(rel(m.get(k, c), num[c] / den) < 1e-12);
            }
        }
    }

    #[test]
    fn maximize_reports_empty_basis() {
        let x = FeatureMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let z = resp(&[&[1.0, 0.0], &[1.0, 0.0]]);
        assert!(matches!(
            maximize_bases(&x, &z, &p()),
            Err(Error::InsufficientMass { basis: 1, .. })
        ));
    }

    #[test]
    fn unit_weights_match_unweighted() {
        let x = FeatureMatrix::from_rows(&[[1.0, 2.0], [3.0, -2.0], [2.0, 3.0]]).unwrap();
        let z = resp(&[&[0.3, 0.7], &[0.9, 0.1], &[0.5, 0.5]]);
        let a = maximize_bases(&x, &z, &p()).unwrap();
        let b = maximize_bases_weighted(&x, &z, &WeightVector::ones(3), &p()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn weighted_mean_closed_form() {
        let x = FeatureMatrix::from_rows(&[[0.0, 0.0], [2.0, 0.0]]).unwrap();
        let z = resp(&[&[1.0], &[1.0]]);
        let w = WeightVector::new(vec![1.0, 3.0]).unwrap();
        let m = maximize_bases_weighted(&x, &z, &w, &p()).unwrap();
        assert_eq!(m.row(0), &[1.5, 0.0]);
    }

    #[test]
    fn duplicated_row_with_halved_weight() {
        let rows = [[1.0, 2.0], [3.0, -2.0], [2.0, 3.0]];
        let zr = [[0.3, 0.7], [0.9, 0.1], [0.5, 0.5]];
        let w = [0.8, 0.6, 0.3];
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let z = ResponsibilityMatrix::new(Matrix::from_rows(&zr).unwrap()).unwrap();
        let base = maximize_bases_weighted(&x, &z, &WeightVector::new(w.to_vec()).unwrap(), &p())
            .unwrap();

        // duplicate row 1, halving its weight on both copies
        let x2 = FeatureMatrix::from_rows(&[rows[0], rows[1], rows[1], rows[2]]).unwrap();
        let z2 = ResponsibilityMatrix::new(Matrix::from_rows(&[zr[0], zr[1], zr[1], zr[2]]).unwrap())
            .unwrap();
        let w2 = WeightVector::new(vec![w[0], w[1] / 2.0, w[1] / 2.0, w[2]]).unwrap();
        let dup = maximize_bases_weighted(&x2, &z2, &w2, &p()).unwrap();
        for (a, b) in base.as_slice().iter().zip(dup.as_slice()) {
            assert!(rel(*a, *b) < 1e-12);
        }
    }

    #[test]
    fn weights_validated() {
        assert!(WeightVector::new(vec![0.5, -0.1]).is_err());
        assert!(WeightVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn identical_sets_classify_half() {
        let x = FeatureMatrix::from_rows(&[[1.0, 0.2], [-0.4, 1.0]]).unwrap();
        let m = BasisSet::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let c = classify_coarse(&x, &m, &m, &p()).unwrap();
        assert!(c.fg.iter().chain(&c.bg).all(|&v| v == 0.5));
    }

    #[test]
    fn collinear_fg_classification() {
        let x = FeatureMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let fg = BasisSet::from_rows(&[[2.0, 0.0]]).unwrap();
        let bg = BasisSet::from_rows(&[[0.0, 1.0]]).unwrap();
        let c = classify_coarse(&x, &fg, &bg, &p()).unwrap();
        let e20 = 20f64.exp();
        assert!(rel(c.fg[0], e20 / (e20 + 1.0)) < 1e-15);
        assert!(rel(c.bg[0], 1.0 / (e20 + 1.0)) < 1e-12);
        assert!(c.fg[0] < 1.0 && c.bg[0] > 0.0);
    }

    #[test]
    fn swapping_sets_flips_classification() {
        let x = FeatureMatrix::from_rows(&[[1.0, 0.2], [-0.4, 1.0], [0.3, 0.3]]).unwrap();
        let a = BasisSet::from_rows(&[[1.0, 0.0], [0.5, 0.5]]).unwrap();
        let b = BasisSet::from_rows(&[[0.0, 1.0], [-1.0, 0.2]]).unwrap();
        let c1 = classify_coarse(&x, &a, &b, &p()).unwrap();
        let c2 = classify_coarse(&x, &b, &a, &p()).unwrap();
        for n in 0..3 {
            assert!((c1.fg[n] - c2.bg[n]).abs() < 1e-15);
            assert!((c1.fg[n] + c1.bg[n] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn classify_requires_equal_counts() {
        let x = FeatureMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let a = BasisSet::from_rows(&[[1.0, 0.0], [0.5, 0.5]]).unwrap();
        let b = BasisSet::from_rows(&[[0.0, 1.0]]).unwrap();
        assert!(classify_coarse(&x, &a, &b, &p()).is_err());
    }

    #[test]
    fn adaptive_weight_cases() {
        let mask = SoftMask::new(vec![0.0, 1.0, 1.0, 1.0]).unwrap();
        let probs = ClassProbability {
            fg: vec![0.3, 0.5, 1.0 - 1e-9, 0.02],
            bg: vec![0.7, 0.5, 1e-9, 0.98],
        };
        let (wf, wb) = adaptive_weights(&mask, &probs).unwrap();
        assert_eq!(wf.as_slice()[0], 0.0);
        assert_eq!(wf.as_slice()[1], 0.5);
        assert_eq!(wb.as_slice()[1], 0.0);
        // confident consistent pixel nearly ignored, inconsistent one dominant
        assert!(wf.as_slice()[2] < 1e-8);
        assert!(wf.as_slice()[3] > 0.97);
        assert_eq!(wb.as_slice()[0], 0.3);
    }

    #[test]
    fn adaptive_weights_length_mismatch() {
        let mask = SoftMask::new(vec![0.0, 1.0]).unwrap();
        let probs = ClassProbability {
            fg: vec![0.5],
            bg: vec![0.5],
        };
        assert!(adaptive_weights(&mask, &probs).is_err());
    }

    #[test]
    fn mask_validation() {
        assert!(SoftMask::new(vec![0.0, 1.1]).is_err());
        assert!(SoftMask::new(vec![f64::NAN]).is_err());
        let m = SoftMask::new(vec![0.25, 1.0]).unwrap();
        assert_eq!(m.bg(), vec![0.75, 0.0]);
    }

    fn frame() -> (FeatureMatrix, SoftMask) {
        let x = FeatureMatrix::from_rows(&[
            [1.0, 0.1, 0.0],
            [0.9, -0.1, 0.2],
            [1.1, 0.3, -0.1],
            [0.0, 1.0, 0.1],
            [0.2, 0.8, -0.3],
            [-0.1, 1.2, 0.4],
        ])
        .unwrap();
        let mask = SoftMask::new(vec![1.0, 0.9, 1.0, 0.0, 0.2, 0.0]).unwrap();
        (x, mask)
    }

    fn init_state() -> (ClassState, ClassState) {
        let fg = ClassState::from_bases(BasisSet::from_rows(&[[1.0, 0.0, 0.0], [0.8, 0.5, 0.0]]).unwrap());
        let bg = ClassState::from_bases(BasisSet::from_rows(&[[0.0, 1.0, 0.0], [0.3, 1.0, 0.2]]).unwrap());
        (fg, bg)
    }

    #[test]
    fn first_step_is_one_weighted_pass() {
        let (x, mask) = frame();
        let (fg, bg) = init_state();
        let out = swem_step(&x, &mask, &fg, &bg, &p(), 1, WeightMode::Fixed).unwrap();
        let z = estimate_responsibilities(&x, &fg.bases, &p()).unwrap();
        let w = WeightVector::new(mask.fg().to_vec()).unwrap();
        let expected = maximize_bases_weighted(&x, &z, &w, &p()).unwrap();
        for (a, b) in out.fg.bases.as_slice().iter().zip(expected.as_slice()) {
            assert!(rel(*a, *b) < 1e-12);
        }
        assert_eq!(out.fg_commit.weights.as_slice(), mask.fg());
    }

    #[test]
    fn zero_mask_leaves_fg_untouched() {
        let (x, _) = frame();
        let mask = SoftMask::new(vec![0.0; 6]).unwrap();
        let (fg, bg) = init_state();
        for mode in [WeightMode::Fixed, WeightMode::Adaptive] {
            let first = swem_step(&x, &SoftMask::new(vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]).unwrap(), &fg, &bg, &p(), 3, mode).unwrap();
            let out = swem_step(&x, &mask, &first.fg, &first.bg, &p(), 3, mode).unwrap();
            assert_eq!(out.fg, first.fg);
            assert!(out.fg_commit.added_mass.iter().all(|&m| m == 0.0));
        }
    }

    #[test]
    fn bases_equal_alpha_over_beta() {
        let (x, mask) = frame();
        let (fg, bg) = init_state();
        let out = swem_step(&x, &mask, &fg, &bg, &p(), 4, WeightMode::Adaptive).unwrap();
        for state in [&out.fg, &out.bg] {
            for k in 0..2 {
                if state.acc.beta[k] > p().epsilon {
                    for c in 0..3 {
                        let r = state.acc.alpha.get(k, c) / state.acc.beta[k];
                        assert!((state.bases.get(k, c) - r).abs() <= 1e-12 * r.abs().max(1e-300));
                    }
                }
            }
        }
    }

    #[test]
    fn replaying_converged_frame_keeps_bases() {
        let (x, mask) = frame();
        let (fg, bg) = init_state();
        // converge on the frame alone with a fresh accumulator each time
        let mut fgs = fg.bases.clone();
        let mut bgs = bg.bases.clone();
        for _ in 0..200 {
            let out = swem_step(
                &x,
                &mask,
                &ClassState::from_bases(fgs.clone()),
                &ClassState::from_bases(bgs.clone()),
                &p(),
                1,
                WeightMode::Fixed,
            )
            .unwrap();
            fgs = out.fg.bases;
            bgs = out.bg.bases;
        }
        let one = swem_step(
            &x,
            &mask,
            &ClassState::from_bases(fgs.clone()),
            &ClassState::from_bases(bgs.clone()),
            &p(),
            1,
            WeightMode::Fixed,
        )
        .unwrap();
        let two = swem_step(&x, &mask, &one.fg, &one.bg, &p(), 1, WeightMode::Fixed).unwrap();
        for (a, b) in two.fg.bases.as_slice().iter().zip(fgs.as_slice()) {
            assert!(rel(*a, *b) < 1e-10);
        }
        for k in 0..2 {
            assert!(rel(two.fg.acc.beta[k], 2.0 * one.fg.acc.beta[k]) < 1e-10);
        }
        // closed form over both frames' committed products
        for (st, c1, c2) in [
            (&two.fg, &one.fg_commit, &two.fg_commit),
            (&two.bg, &one.bg_commit, &two.bg_commit),
        ] {
            for k in 0..2 {
                let mut num = [0.0; 3];
                let mut den = 0.0;
                for c in [c1, c2] {
                    for n in 0..6 {
                        let s = c.responsibilities.get(n, k) * c.weights.as_slice()[n];
                        den += s;
                        for j in 0..3 {
                            num[j] += s * x.get(n, j);
                        }
                    }
                }
                for j in 0..3 {
                    assert!(rel(st.bases.get(k, j), num[j] / den) < 1e-10);
                }
            }
        }
    }

    #[test]
    fn adaptive_changes_committed_weights_only_after_first_round() {
        let (x, mask) = frame();
        let (fg, bg) = init_state();
        let one = swem_step(&x, &mask, &fg, &bg, &p(), 1, WeightMode::Adaptive).unwrap();
        assert_eq!(one.fg_commit.weights.as_slice(), mask.fg());
        let two = swem_step(&x, &mask, &fg, &bg, &p(), 2, WeightMode::Adaptive).unwrap();
        assert_ne!(two.fg_commit.weights.as_slice(), mask.fg());
        for (w, m) in two.fg_commit.weights.as_slice().iter().zip(mask.fg()) {
            assert!(*w <= *m);
        }
    }

    #[test]
    fn step_rejects_bad_shapes() {
        let (x, mask) = frame();
        let (fg, bg) = init_state();
        assert!(swem_step(&x, &mask, &fg, &bg, &p(), 0, WeightMode::Fixed).is_err());
        let short = SoftMask::new(vec![1.0; 3]).unwrap();
        assert!(matches!(
            swem_step(&x, &short, &fg, &bg, &p(), 1, WeightMode::Fixed),
            Err(Error::DimensionMismatch { .. })
        ));
        let bg1 = ClassState::from_bases(BasisSet::from_rows(&[[0.0, 1.0, 0.0]]).unwrap());
        assert!(swem_step(&x, &mask, &fg, &bg1, &p(), 1, WeightMode::Fixed).is_err());
    }

    #[test]
    fn fit_bases_fixed_point_at_distinct_pixels() {
        let x = FeatureMatrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let init = BasisSet::new(x.matrix().clone()).unwrap();
        let (m, z) = fit_bases(&x, &init, &p(), 4).unwrap();
        for n in 0..3 {
            assert!(z.get(n, n) > 1.0 - 1e-8);
        }
        for (a, b) in m.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
