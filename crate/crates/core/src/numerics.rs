//! Dense decomposition primitives with explicit truncation and
//! normalization contracts.
//!
//! Everything downstream goes through three entry points:
//! [`truncated_sym_eig`] for Gramians, [`general_eig`] for the projected
//! Koopman matrix, and [`pinv_diag`] for the truncated pseudo-inverse of
//! the singular values.

use std::cmp::Ordering;

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated by [`truncated_sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvector-matrix condition number above which left eigenvectors are
/// considered unreliable.
pub const DEFECTIVE_CONDITION: f64 = 1e12;
/// Relative gap below which two eigenvalues are reported as repeated.
pub const REPEATED_GAP: f64 = 1e-10;

/// How many singular values (equivalently Gramian eigenvalues) to keep.
///
/// Thresholds are applied to Gramian eigenvalues, i.e. to squared singular
/// values `s²`, so `RelativeThreshold(1e-10)` keeps every direction whose
/// energy is at least `1e-10` of the leading one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationPolicy {
    FixedRank(usize),
    RelativeThreshold(f64),
}

impl TruncationPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TruncationPolicy::FixedRank(0) => Err(Error::InvalidParameter(
                "fixed rank must be at least 1".into(),
            )),
            TruncationPolicy::RelativeThreshold(tau) if !(tau > 0.0 && tau <= 1.0) => Err(
                Error::InvalidParameter(format!("relative threshold {tau} is not in (0, 1]")),
            ),
            _ => Ok(()),
        }
    }

    /// Number of leading entries of `energies` (sorted descending) that
    /// survive the policy. Non-positive energies never survive.
    pub fn retained_count(&self, energies: &[f64]) -> usize {
        let positive = energies.iter().take_while(|&&e| e > 0.0).count();
        match *self {
            TruncationPolicy::FixedRank(r) => r.min(positive),
            TruncationPolicy::RelativeThreshold(tau) => {
                let Some(&top) = energies.first() else {
                    return 0;
                };
                energies[..positive]
                    .iter()
                    .take_while(|&&e| e >= tau * top)
                    .count()
            }
        }
    }
}

/// Leading eigenvectors `Q` and singular values `sigma` of a Gramian
/// `G = Q Σ² Qᵀ`.
#[derive(Debug, Clone)]
pub struct TruncatedBasis {
    pub q: Mat<f64>,
    /// Strictly positive, descending.
    pub sigma: Vec<f64>,
    /// Every eigenvalue of the Gramian, descending, negatives included.
    pub spectrum: Vec<f64>,
}

impl TruncatedBasis {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn snapshots(&self) -> usize {
        self.q.nrows()
    }

    /// Largest eigenvalue not retained, or zero when everything was kept.
    pub fn first_discarded(&self) -> f64 {
        self.spectrum
            .get(self.rank())
            .copied()
            .unwrap_or(0.0)
            .max(0.0)
    }

    /// Condition number of the retained part of the Gramian, `σ₁² / σ_r²`.
    pub fn retained_condition(&self) -> f64 {
        let first = self.sigma[0];
        let last = self.sigma[self.rank() - 1];
        (first / last).powi(2)
    }

    /// Condition number of the full Gramian (infinite when singular).
    pub fn full_condition(&self) -> f64 {
        let top = self.spectrum[0];
        let bottom = *self.spectrum.last().unwrap();
        if bottom <= 0.0 {
            f64::INFINITY
        } else {
            top / bottom
        }
    }
}

/// Problems detected while decomposing a non-symmetric matrix that do not
/// prevent a result from being returned.
#[derive(Debug, Clone, PartialEq)]
pub enum EigenWarning {
    /// Two eigenvalues agree to within [`REPEATED_GAP`]; biorthogonality
    /// only holds blockwise for them.
    Repeated { first: usize, second: usize },
}

/// Right and left eigenvectors of a real matrix.
///
/// Columns of `right` are unit norm. Rows of `left` are the conjugate
/// transposed left eigenvectors scaled so that `left * right = I`.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<c64>,
    pub right: Mat<c64>,
    pub left: Mat<c64>,
    /// 2-norm condition number of `right`.
    pub condition: f64,
    pub warnings: Vec<EigenWarning>,
}

/// Library-wide eigenvalue order: modulus descending, then imaginary part
/// descending.
pub fn spectral_order(a: &c64, b: &c64) -> Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then_with(|| b.im.total_cmp(&a.im))
}

fn max_abs(m: MatRef<'_, f64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].abs());
        }
    }
    out
}

/// Eigendecomposition of a symmetric positive semi-definite matrix,
/// truncated according to `policy`.
pub fn truncated_sym_eig(g: MatRef<'_, f64>, policy: TruncationPolicy) -> Result<TruncatedBasis> {
    policy.validate()?;
    let m = g.nrows();
    if g.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: g.ncols(),
        });
    }
    if m == 0 {
        return Err(Error::RankZero);
    }
    let scale = max_abs(g);
    let mut asymmetry = 0.0f64;
    for j in 0..m {
        for i in (j + 1)..m {
            asymmetry = asymmetry.max((g[(i, j)] - g[(j, i)]).abs());
        }
    }
    if asymmetry > SYMMETRY_TOL * scale || !scale.is_finite() {
        return Err(Error::NotSymmetric { asymmetry, scale });
    }

    let evd = g
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Decomposition(format!("{e:?}")))?;
    let values = evd.S().column_vector();
    let vectors = evd.U();
    // faer returns ascending order
    let order: Vec<usize> = (0..m).rev().collect();
    let norm = values[m - 1].abs().max(values[0].abs());
    let spectrum: Vec<f64> = order
        .iter()
        .map(|&k| {
            let v = values[k];
            // roundoff on a PSD matrix
            if v < 0.0 && v.abs() <= 1e-12 * norm {
                0.0
            } else {
                v
            }
        })
        .collect();

    let r = policy.retained_count(&spectrum);
    if r == 0 {
        return Err(Error::RankZero);
    }
    let q = Mat::from_fn(m, r, |i, j| vectors[(i, order[j])]);
    let sigma = spectrum[..r].iter().map(|v| v.sqrt()).collect();
    Ok(TruncatedBasis { q, sigma, spectrum })
}

/// Elementwise reciprocal of strictly positive singular values.
pub fn pinv_diag(sigma: &[f64]) -> Result<Vec<f64>> {
    sigma
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if value > 0.0 {
                Ok(1.0 / value)
            } else {
                Err(Error::ZeroSingularValue { index, value })
            }
        })
        .collect()
}

/// 2-norm condition number of a complex matrix.
pub fn condition_number(a: MatRef<'_, c64>) -> Result<f64> {
    let s = a
        .singular_values()
        .map_err(|e| Error::Decomposition(format!("{e:?}")))?;
    match (s.first(), s.last()) {
        (Some(&top), Some(&bottom)) if bottom > 0.0 => Ok(top / bottom),
        (Some(_), Some(_)) => Ok(f64::INFINITY),
        _ => Ok(1.0),
    }
}

/// Eigendecomposition without the conditioning gate of [`general_eig`].
///
/// The returned `left` is the numerical inverse of `right` and is only
/// meaningful when `condition` is moderate.
pub fn general_eig_unchecked(k: MatRef<'_, f64>) -> Result<EigenPairs> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: k.ncols(),
        });
    }
    for j in 0..n {
        for i in 0..n {
            if !k[(i, j)].is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "non-finite entry at ({i}, {j})"
                )));
            }
        }
    }
    if n == 0 {
        return Ok(EigenPairs {
            values: Vec::new(),
            right: Mat::zeros(0, 0),
            left: Mat::zeros(0, 0),
            condition: 1.0,
            warnings: Vec::new(),
        });
    }

    let evd = k
        .eigen()
        .map_err(|e| Error::Decomposition(format!("{e:?}")))?;
    let raw_values = evd.S().column_vector();
    let raw_vectors = evd.U();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| spectral_order(&raw_values[a], &raw_values[b]).then(a.cmp(&b)));

    let values: Vec<c64> = order.iter().map(|&i| raw_values[i]).collect();
    let mut right = Mat::<c64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = raw_vectors.col(src);
        let norm = col.norm_l2();
        // pin the phase: largest component real and positive. Conjugate
        // vectors pick the same index, so pairs stay exact conjugates.
        let mut pivot = 0;
        let mut best = -1.0;
        for i in 0..n {
            let a = col[i].norm();
            if a > best {
                best = a;
                pivot = i;
            }
        }
        let phase = col[pivot].conj() / col[pivot].norm();
        for i in 0..n {
            right[(i, dst)] = col[i] * phase / norm;
        }
    }

    let condition = condition_number(right.as_ref())?;
    let left = right.partial_piv_lu().inverse();

    let mut warnings = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let scale = values[i].norm().max(values[j].norm());
            if (values[i] - values[j]).norm() <= REPEATED_GAP * scale {
                warnings.push(EigenWarning::Repeated {
                    first: i,
                    second: j,
                });
            }
        }
    }

    Ok(EigenPairs {
        values,
        right,
        left,
        condition,
        warnings,
    })
}

/// Right and biorthogonally scaled left eigenpairs of a real square matrix.
///
/// Fails with [`Error::DefectiveMatrix`] when the eigenvector matrix has a
/// condition number above [`DEFECTIVE_CONDITION`].
pub fn general_eig(k: MatRef<'_, f64>) -> Result<EigenPairs> {
    let pairs = general_eig_unchecked(k)?;
    if pairs.condition.is_nan() || pairs.condition > DEFECTIVE_CONDITION {
        return Err(Error::DefectiveMatrix {
            condition: pairs.condition,
        });
    }
    Ok(pairs)
}

/// Minimum-norm least-squares solution of `a x = b` using singular values
/// above `rcond * s_max`.
pub fn pinv_solve_complex(a: MatRef<'_, c64>, b: MatRef<'_, c64>, rcond: f64) -> Result<Mat<c64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    let svd = a
        .thin_svd()
        .map_err(|e| Error::Decomposition(format!("{e:?}")))?;
    let s = svd.S().column_vector();
    let k = a.nrows().min(a.ncols());
    let top = if k > 0 { s[0].re } else { 0.0 };
    let kept = (0..k)
        .take_while(|&i| s[i].re > rcond * top && s[i].re > 0.0)
        .count();
    let u = svd.U().subcols(0, kept);
    let v = svd.V().subcols(0, kept);
    let mut coeffs = u.adjoint() * b;
    for i in 0..kept {
        let inv = 1.0 / s[i].re;
        for j in 0..coeffs.ncols() {
            coeffs[(i, j)] *= inv;
        }
    }
    Ok(v * coeffs)
}

/// Promote a real matrix to complex.
pub fn to_complex(a: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

/// Frobenius norm of a real matrix.
pub fn frobenius(a: MatRef<'_, f64>) -> f64 {
    a.norm_l2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<f64> {
        Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_keeps_everything() {
        let g = Mat::<f64>::identity(3, 3);
        let basis = truncated_sym_eig(g.as_ref(), TruncationPolicy::FixedRank(3)).unwrap();
        assert_eq!(basis.sigma, vec![1.0, 1.0, 1.0]);
        let qtq = basis.q.transpose() * &basis.q;
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[(i, j)] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn diagonal_threshold_drops_zero() {
        let mut g = Mat::<f64>::zeros(3, 3);
        g[(0, 0)] = 4.0;
        g[(1, 1)] = 1.0;
        let basis =
            truncated_sym_eig(g.as_ref(), TruncationPolicy::RelativeThreshold(0.1)).unwrap();
        assert_eq!(basis.rank(), 2);
        assert!((basis.sigma[0] - 2.0).abs() < 1e-15);
        assert!((basis.sigma[1] - 1.0).abs() < 1e-15);
        assert_eq!(basis.first_discarded(), 0.0);
    }

    #[test]
    fn fixed_rank_never_keeps_nonpositive_values() {
        let mut g = Mat::<f64>::zeros(3, 3);
        g[(0, 0)] = 2.0;
        let basis = truncated_sym_eig(g.as_ref(), TruncationPolicy::FixedRank(3)).unwrap();
        assert_eq!(basis.rank(), 1);
    }

    #[test]
    fn rejects_asymmetric_and_zero() {
        let mut g = Mat::<f64>::identity(2, 2);
        g[(0, 1)] = 0.5;
        assert!(matches!(
            truncated_sym_eig(g.as_ref(), TruncationPolicy::FixedRank(2)),
            Err(Error::NotSymmetric { .. })
        ));
        let z = Mat::<f64>::zeros(2, 2);
        assert_eq!(
            truncated_sym_eig(z.as_ref(), TruncationPolicy::FixedRank(2)).unwrap_err(),
            Error::RankZero
        );
    }

    #[test]
    fn policy_validation() {
        assert!(TruncationPolicy::FixedRank(0).validate().is_err());
        assert!(TruncationPolicy::RelativeThreshold(0.0).validate().is_err());
        assert!(TruncationPolicy::RelativeThreshold(1.5).validate().is_err());
        assert!(TruncationPolicy::RelativeThreshold(1.0).validate().is_ok());
    }

    #[test]
    fn retained_set_is_prefix() {
        let e = [9.0, 4.0, 1.0, 0.5, -1e-20];
        assert_eq!(
            TruncationPolicy::RelativeThreshold(0.1).retained_count(&e),
            3
        );
        assert_eq!(TruncationPolicy::FixedRank(10).retained_count(&e), 4);
        assert_eq!(TruncationPolicy::FixedRank(2).retained_count(&e), 2);
    }

    #[test]
    fn pinv_diag_examples() {
        assert_eq!(pinv_diag(&[2.0, 1.0]).unwrap(), vec![0.5, 1.0]);
        assert_eq!(pinv_diag(&[1.0]).unwrap(), vec![1.0]);
        assert_eq!(
            pinv_diag(&[1.0, 0.0]).unwrap_err(),
            Error::ZeroSingularValue {
                index: 1,
                value: 0.0
            }
        );
    }

    #[test]
    fn diagonal_general_eig() {
        let mut k = Mat::<f64>::zeros(2, 2);
        k[(0, 0)] = 0.5;
        k[(1, 1)] = 0.9;
        let pairs = general_eig(k.as_ref()).unwrap();
        assert_eq!(pairs.values, vec![c64::new(0.9, 0.0), c64::new(0.5, 0.0)]);
        // sorted: 0.9 first, which is the second coordinate
        assert!((pairs.right[(1, 0)] - c64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((pairs.right[(0, 1)] - c64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((pairs.left[(0, 1)] - c64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(pairs.warnings.is_empty());
    }

    #[test]
    fn rotation_gives_conjugate_pair() {
        let mut k = Mat::<f64>::zeros(2, 2);
        k[(0, 1)] = -1.0;
        k[(1, 0)] = 1.0;
        let pairs = general_eig(k.as_ref()).unwrap();
        assert!((pairs.values[0] - c64::new(0.0, 1.0)).norm() < 1e-14);
        assert_eq!(pairs.values[1], pairs.values[0].conj());
        for i in 0..2 {
            assert_eq!(pairs.right[(i, 1)], pairs.right[(i, 0)].conj());
        }
    }

    #[test]
    fn repeated_values_are_flagged() {
        let k = Mat::<f64>::identity(2, 2);
        let pairs = general_eig(k.as_ref()).unwrap();
        assert_eq!(
            pairs.warnings,
            vec![EigenWarning::Repeated {
                first: 0,
                second: 1
            }]
        );
    }

    #[test]
    fn jordan_block_is_defective() {
        let mut k = Mat::<f64>::identity(2, 2);
        k[(0, 1)] = 1.0;
        assert!(matches!(
            general_eig(k.as_ref()),
            Err(Error::DefectiveMatrix { .. })
        ));
        assert!(general_eig_unchecked(k.as_ref()).is_ok());
    }

    #[test]
    fn pinv_solve_matches_inverse_on_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = to_complex(random_matrix(&mut rng, 4, 4).as_ref());
        let b = to_complex(random_matrix(&mut rng, 4, 2).as_ref());
        let x = pinv_solve_complex(a.as_ref(), b.as_ref(), 1e-14).unwrap();
        let r = &a * &x - &b;
        assert!(r.norm_l2() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn general_eig_biorthogonal_and_accurate(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = random_matrix(&mut rng, 10, 10);
            let pairs = general_eig(k.as_ref()).unwrap();
            let kc = to_complex(k.as_ref());
            let knorm = k.norm_l2();
            let residual = &kc * &pairs.right - &pairs.right * Mat::from_fn(10, 10, |i, j| if i == j { pairs.values[i] } else { c64::new(0.0, 0.0) });
            for j in 0..10 {
                prop_assert!(residual.col(j).norm_l2() <= 1e-8 * knorm);
                prop_assert!((pairs.right.col(j).norm_l2() - 1.0).abs() < 1e-12);
            }
            let distinct = pairs.warnings.is_empty();
            if distinct {
                let prod = &pairs.left * &pairs.right;
                for i in 0..10 {
                    for j in 0..10 {
                        let expect = if i == j { 1.0 } else { 0.0 };
                        prop_assert!((prod[(i, j)] - c64::new(expect, 0.0)).norm() < 1e-8);
                    }
                }
            }
            // conjugate closure and ordering
            for (i, v) in pairs.values.iter().enumerate() {
                if v.im != 0.0 {
                    prop_assert!(pairs.values.iter().any(|w| *w == v.conj()));
                }
                if i > 0 {
                    prop_assert!(spectral_order(&pairs.values[i - 1], v) != Ordering::Greater);
                }
            }
        }

        #[test]
        fn gramian_reconstruction_bound(seed in any::<u64>(), rank in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, 8, 5);
            let g = &a * a.transpose();
            // enforce exact symmetry
            let g = Mat::from_fn(8, 8, |i, j| if i >= j { g[(i, j)] } else { g[(j, i)] });
            let basis = truncated_sym_eig(g.as_ref(), TruncationPolicy::FixedRank(rank)).unwrap();
            let r = basis.rank();
            let qtq = basis.q.transpose() * &basis.q;
            for i in 0..r {
                for j in 0..r {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((qtq[(i, j)] - expect).abs() < 1e-10 * 8.0);
                }
            }
            let sq = Mat::from_fn(8, r, |i, j| basis.q[(i, j)] * basis.sigma[j] * basis.sigma[j]);
            let recon = &sq * basis.q.transpose();
            let err = (&g - &recon).norm_l2();
            let discarded: f64 = basis.spectrum[r..].iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(err <= discarded + 1e-8 * g.norm_l2());
            for w in basis.sigma.windows(2) {
                prop_assert!(w[0] >= w[1] && w[1] > 0.0);
            }
            let inv = pinv_diag(&basis.sigma).unwrap();
            for (s, i) in basis.sigma.iter().zip(&inv) {
                prop_assert!((s * i - 1.0).abs() < 1e-14);
            }
        }
    }
}
