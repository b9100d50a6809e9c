//! Explicit-dictionary Extended DMD over monomials.
//!
//! This is the primal counterpart of the kernel pipeline: it materializes
//! `Ψx`, `Ψy` and the `K × K` matrix `K = Ψx⁺Ψy`. It only scales to small
//! state dimensions and degrees and serves as an independent oracle, and
//! with the identity dictionary as the DMD baseline.

use faer::{Mat, MatRef};
use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::SnapshotSet;
use crate::numerics::{self, TruncationPolicy};

/// Upper bound on `M · K` entries materialized by [`lift`].
pub const LIFT_GUARD: usize = 100_000_000;
/// Eigenvalues below this modulus are "numerically zero" when comparing
/// spectra.
pub const NUMERICAL_ZERO: f64 = 1e-10;

/// A finite set of weighted monomials `w_k · x^β_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitDictionary {
    pub n: usize,
    pub alpha: u32,
    /// Multi-indices ordered by total degree, then graded lexicographic
    /// with the first coordinate most significant.
    pub exponents: Vec<Vec<u32>>,
    pub weights: Vec<f64>,
}

fn monomials_of_degree(n: usize, degree: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() + 1 == n {
        prefix.push(degree);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for e in (0..=degree).rev() {
        prefix.push(e);
        monomials_of_degree(n, degree - e, prefix, out);
        prefix.pop();
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// `C(n + k, k)`.
pub fn binomial(n: usize, k: usize) -> usize {
    let mut out: u128 = 1;
    for i in 1..=k as u128 {
        out = out * (n as u128 + i) / i;
    }
    out as usize
}

impl ExplicitDictionary {
    /// All monomials of total degree at most `alpha` in `n` variables.
    ///
    /// With `weighted`, each monomial carries the square root of its
    /// multinomial coefficient so that `ψ(z)ᵀψ(x) = (1 + zᵀx)^alpha`.
    pub fn polynomial(n: usize, alpha: u32, weighted: bool) -> Result<Self> {
        if n == 0 || alpha == 0 {
            return Err(Error::InvalidParameter(
                "dictionary needs n ≥ 1 and alpha ≥ 1".into(),
            ));
        }
        let mut exponents = Vec::with_capacity(binomial(n, alpha as usize));
        for d in 0..=alpha {
            monomials_of_degree(n, d, &mut Vec::with_capacity(n), &mut exponents);
        }
        let weights = exponents
            .iter()
            .map(|beta| {
                if !weighted {
                    return 1.0;
                }
                let d: u32 = beta.iter().sum();
                let denom: f64 =
                    beta.iter().map(|&b| factorial(b)).product::<f64>() * factorial(alpha - d);
                (factorial(alpha) / denom).sqrt()
            })
            .collect();
        Ok(Self {
            n,
            alpha,
            exponents,
            weights,
        })
    }

    /// `ψ(x) = x`, the dictionary that turns Extended DMD into DMD.
    pub fn identity(n: usize) -> Self {
        let exponents = (0..n)
            .map(|i| (0..n).map(|j| u32::from(i == j)).collect())
            .collect();
        Self {
            n,
            alpha: 1,
            exponents,
            weights: vec![1.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        self.exponents
            .iter()
            .zip(&self.weights)
            .map(|(beta, w)| {
                beta.iter()
                    .zip(x)
                    .fold(*w, |acc, (&b, &xi)| acc * xi.powi(b as i32))
            })
            .collect()
    }

    /// Column holding coordinate `i` as a degree-one monomial.
    fn coordinate_column(&self, i: usize) -> Option<usize> {
        self.exponents.iter().position(|beta| {
            beta.iter()
                .enumerate()
                .all(|(j, &b)| b == u32::from(i == j))
        })
    }
}

/// Rows `ψ(x_m)ᵀ` for every row of `x`.
pub fn lift(dict: &ExplicitDictionary, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if x.ncols() != dict.n {
        return Err(Error::DimensionMismatch {
            expected: dict.n,
            found: x.ncols(),
        });
    }
    let k = dict.len();
    if x.nrows().saturating_mul(k) > LIFT_GUARD {
        return Err(Error::DictionaryTooLarge {
            terms: k,
            rows: x.nrows(),
        });
    }
    let mut out = Mat::zeros(x.nrows(), k);
    let mut state = vec![0.0; dict.n];
    for i in 0..x.nrows() {
        for (j, s) in state.iter_mut().enumerate() {
            *s = x[(i, j)];
        }
        for (c, f) in dict.features(&state).into_iter().enumerate() {
            out[(i, c)] = f;
        }
    }
    Ok(out)
}

/// `K = Ψx⁺Ψy` with a truncated SVD pseudo-inverse.
pub fn edmd_matrix_direct(
    data: &SnapshotSet,
    dict: &ExplicitDictionary,
    policy: TruncationPolicy,
) -> Result<Mat<f64>> {
    policy.validate()?;
    let psi_x = lift(dict, data.x.as_ref())?;
    let psi_y = lift(dict, data.y.as_ref())?;
    let svd = psi_x
        .thin_svd()
        .map_err(|e| Error::Decomposition(format!("{e:?}")))?;
    let s = svd.S().column_vector();
    let energies: Vec<f64> = (0..s.nrows()).map(|i| s[i] * s[i]).collect();
    let r = policy.retained_count(&energies);
    if r == 0 {
        return Err(Error::RankZero);
    }
    let u = svd.U().subcols(0, r);
    let v = svd.V().subcols(0, r);
    let mut ut_y = u.transpose() * &psi_y;
    for i in 0..r {
        let inv = 1.0 / s[i];
        for j in 0..ut_y.ncols() {
            ut_y[(i, j)] *= inv;
        }
    }
    Ok(v * ut_y)
}

/// `K = G⁺A` with `G = ΨxᵀΨx`, `A = ΨxᵀΨy`, accumulated pair by pair.
pub fn edmd_matrix_normal(
    data: &SnapshotSet,
    dict: &ExplicitDictionary,
    policy: TruncationPolicy,
) -> Result<Mat<f64>> {
    let k = dict.len();
    let mut g = Mat::<f64>::zeros(k, k);
    let mut a = Mat::<f64>::zeros(k, k);
    let mut xs = vec![0.0; dict.n];
    let mut ys = vec![0.0; dict.n];
    for m in 0..data.pairs() {
        for j in 0..dict.n {
            xs[j] = data.x[(m, j)];
            ys[j] = data.y[(m, j)];
        }
        let px = dict.features(&xs);
        let py = dict.features(&ys);
        for c in 0..k {
            for r in 0..k {
                g[(r, c)] += px[r] * px[c];
                a[(r, c)] += px[r] * py[c];
            }
        }
    }
    let basis = numerics::truncated_sym_eig(g.as_ref(), policy)?;
    let r = basis.rank();
    let qt_a = basis.q.transpose() * &a;
    let scaled = Mat::from_fn(r, k, |i, j| {
        qt_a[(i, j)] / (basis.sigma[i] * basis.sigma[i])
    });
    Ok(&basis.q * scaled)
}

/// Koopman tuples from explicit Extended DMD.
#[derive(Debug, Clone)]
pub struct EdmdFit {
    pub k_matrix: Mat<f64>,
    pub values: Vec<c64>,
    /// Column `k` holds the coefficients of `φ_k = ψᵀv_k`.
    pub coefficients: Mat<c64>,
    /// Modes from regressing the states on the eigenfunction values, one
    /// per row.
    pub modes: Mat<c64>,
    /// Inverse of `coefficients`; rows are scaled left eigenvectors.
    pub left: Mat<c64>,
    pub eigenvector_condition: f64,
}

/// Explicit Extended DMD on `data` with dictionary `dict`.
pub fn edmd_fit(
    data: &SnapshotSet,
    dict: &ExplicitDictionary,
    policy: TruncationPolicy,
) -> Result<EdmdFit> {
    let k_matrix = edmd_matrix_direct(data, dict, policy)?;
    let pairs = numerics::general_eig_unchecked(k_matrix.as_ref())?;
    let psi_x = lift(dict, data.x.as_ref())?;
    let phi = numerics::to_complex(psi_x.as_ref()) * &pairs.right;
    let modes = numerics::pinv_solve_complex(
        phi.as_ref(),
        numerics::to_complex(data.x.as_ref()).as_ref(),
        1e-10,
    )?;
    Ok(EdmdFit {
        k_matrix,
        values: pairs.values,
        coefficients: pairs.right,
        modes,
        left: pairs.left,
        eigenvector_condition: pairs.condition,
    })
}

impl EdmdFit {
    /// Modes read off the scaled left eigenvectors at the columns of the
    /// dictionary that hold the state coordinates. Requires every
    /// coordinate to appear as a degree-one monomial.
    pub fn modes_from_left(&self, dict: &ExplicitDictionary) -> Result<Mat<c64>> {
        let columns: Vec<usize> = (0..dict.n)
            .map(|i| {
                dict.coordinate_column(i).ok_or_else(|| {
                    Error::InvalidParameter(format!("coordinate {i} is not in the dictionary"))
                })
            })
            .collect::<Result<_>>()?;
        let k = self.values.len();
        Ok(Mat::from_fn(k, dict.n, |row, i| {
            self.left[(row, columns[i])] / dict.weights[columns[i]]
        }))
    }
}

/// One pairing produced by [`match_spectra`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    /// `distance / max(|a|, |b|)`
    pub relative: f64,
}

/// Result of pairing two spectra.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMatch {
    pub matched: Vec<MatchedPair>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
    /// Indices left out because their modulus is below [`NUMERICAL_ZERO`].
    pub zero_a: Vec<usize>,
    pub zero_b: Vec<usize>,
    pub max_distance: f64,
    pub max_relative: f64,
}

impl SpectrumMatch {
    pub fn all_matched(&self) -> bool {
        self.unmatched_a.is_empty() && self.unmatched_b.is_empty()
    }
}

/// Greedy nearest-neighbour pairing of two eigenvalue lists; pairs farther
/// apart than `tol` are reported as unmatched.
pub fn match_spectra(a: &[c64], b: &[c64], tol: f64) -> SpectrumMatch {
    let split = |v: &[c64]| -> (Vec<usize>, Vec<usize>) {
        (0..v.len()).partition(|&i| v[i].norm() >= NUMERICAL_ZERO)
    };
    let (live_a, zero_a) = split(a);
    let (live_b, zero_b) = split(b);

    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(live_a.len() * live_b.len());
    for &i in &live_a {
        for &j in &live_b {
            candidates.push(((a[i] - b[j]).norm(), i, j));
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut out = SpectrumMatch {
        zero_a,
        zero_b,
        ..Default::default()
    };
    for (distance, i, j) in candidates {
        if distance > tol {
            break;
        }
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        let relative = distance / a[i].norm().max(b[j].norm());
        out.max_distance = out.max_distance.max(distance);
        out.max_relative = out.max_relative.max(relative);
        out.matched.push(MatchedPair {
            a: i,
            b: j,
            distance,
            relative,
        });
    }
    out.unmatched_a = live_a.into_iter().filter(|&i| !used_a[i]).collect();
    out.unmatched_b = live_b.into_iter().filter(|&j| !used_b[j]).collect();
    out
}
