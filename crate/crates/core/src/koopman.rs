//! Kernel Extended DMD: from snapshot pairs and a kernel to approximate
//! Koopman eigenvalues, eigenfunctions and modes.
//!
//! The pipeline never touches feature space. Everything is expressed
//! through the Gramians `Ĝ`, `Â`, the method-of-snapshots basis
//! `Ĝ = Q Σ² Qᵀ`, and the `r × r` matrix `K̂ = (Σ⁺Qᵀ) Â (QΣ⁺)`.

use faer::{Mat, MatRef};
use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, GramPair, KernelSpec, SnapshotSet};
use crate::numerics::{self, EigenWarning, TruncatedBasis, TruncationPolicy};

/// Eigenvalues below this fraction of the spectral radius carry no
/// continuous-time counterpart.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-13;
/// Allowed imaginary residue in [`KoopmanDecomposition::predict`],
/// relative to the norm of the prediction.
pub const CONJUGATE_RESIDUE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub kernel: KernelSpec,
    pub truncation: TruncationPolicy,
    /// Rescale the data so the mean state norm is one before fitting.
    pub normalize: bool,
}

/// Numerical health of a fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Condition number of the full Gramian (may be infinite).
    pub gram_condition: f64,
    /// `σ₁² / σ_r²` over the retained directions.
    pub retained_condition: f64,
    /// Largest Gramian eigenvalue that was discarded.
    pub first_discarded: f64,
    /// Condition number of the eigenvector matrix `V̂`.
    pub eigenvector_condition: f64,
    /// Modes were obtained from the pseudo-inverse of `Φx` because `V̂`
    /// was numerically singular.
    pub singular_eigenbasis: bool,
    /// Indices of eigenvalues on the negative real axis, whose principal
    /// logarithm has imaginary part `π/Δt`.
    pub negative_real: Vec<usize>,
    /// Pairs of indices whose eigenvalues coincide numerically.
    pub repeated: Vec<(usize, usize)>,
}

/// Approximate Koopman tuples on the training data.
#[derive(Debug, Clone)]
pub struct KoopmanDecomposition {
    /// Discrete-time eigenvalues, modulus descending.
    pub mu: Vec<c64>,
    /// `log(μ)/Δt` on the principal branch, present when the data carry a
    /// sampling interval; `None` entries mark zero eigenvalues.
    pub lambda: Option<Vec<Option<c64>>>,
    /// Eigenfunction values at the training states, `M × r`.
    pub phi_x: Mat<c64>,
    /// Koopman modes in physical units, one per row, `r × N`.
    pub modes: Mat<c64>,
    /// Column `k` is `QΣ⁺v̂_k`, used to evaluate `φ_k` at new states.
    pub efun_coeff: Mat<c64>,
    pub basis: TruncatedBasis,
    pub kernel: KernelSpec,
    /// Training states as seen by the kernel (already scaled).
    pub x_train: Mat<f64>,
    /// Factor applied to states before they reach the kernel.
    pub scale: f64,
    pub dt: Option<f64>,
    pub diagnostics: FitDiagnostics,
}

/// Ordering used by [`KoopmanDecomposition::select`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Largest `Re λ` first; zero eigenvalues are left out.
    SlowestDecay,
    LargestMagnitude,
    /// The first `n` entries of the slowest-decay order.
    TopN(usize),
}

/// `log(μ)/Δt` for each eigenvalue; `None` marks numerically zero ones.
pub fn continuous_eigenvalues(mu: &[c64], dt: Option<f64>) -> Option<Vec<Option<c64>>> {
    let dt = dt?;
    let radius = mu.iter().map(|m| m.norm()).fold(0.0, f64::max);
    Some(
        mu.iter()
            .map(|m| {
                if m.norm() <= ZERO_EIGENVALUE_TOL * radius || *m == c64::new(0.0, 0.0) {
                    None
                } else {
                    Some(m.ln() / dt)
                }
            })
            .collect(),
    )
}

/// Fits approximate Koopman tuples to `data`.
pub fn fit(data: &SnapshotSet, options: &FitOptions) -> Result<KoopmanDecomposition> {
    options.kernel.validate()?;
    options.truncation.validate()?;
    let (scaled, scale) = if options.normalize {
        kernels::normalize_snapshots(data)?
    } else {
        (data.clone(), 1.0)
    };

    let grams = GramPair::assemble(&options.kernel, &scaled)?;
    let basis = numerics::truncated_sym_eig(grams.g.as_ref(), options.truncation)?;
    let sigma_inv = numerics::pinv_diag(&basis.sigma)?;
    let r = basis.rank();
    let m = basis.snapshots();
    let n = scaled.state_dim();

    // K̂ = (Σ⁺Qᵀ) Â (QΣ⁺)
    let projected = basis.q.transpose() * &grams.a * &basis.q;
    let k_hat = Mat::from_fn(r, r, |i, j| sigma_inv[i] * projected[(i, j)] * sigma_inv[j]);

    let pairs = numerics::general_eig_unchecked(k_hat.as_ref())?;
    let singular_eigenbasis =
        pairs.condition.is_nan() || pairs.condition > numerics::DEFECTIVE_CONDITION;

    let q = &basis.q;
    let phi_x = Mat::from_fn(m, r, |i, k| {
        (0..r).fold(c64::new(0.0, 0.0), |acc, l| {
            acc + pairs.right[(l, k)] * (q[(i, l)] * basis.sigma[l])
        })
    });
    let efun_coeff = Mat::from_fn(m, r, |i, k| {
        (0..r).fold(c64::new(0.0, 0.0), |acc, l| {
            acc + pairs.right[(l, k)] * (q[(i, l)] * sigma_inv[l])
        })
    });

    // Σ⁺QᵀX, r × N
    let qtx = basis.q.transpose() * &scaled.x;
    let reduced = Mat::from_fn(r, n, |l, j| c64::new(sigma_inv[l] * qtx[(l, j)], 0.0));
    let scaled_modes = if singular_eigenbasis {
        numerics::pinv_solve_complex(
            phi_x.as_ref(),
            numerics::to_complex(scaled.x.as_ref()).as_ref(),
            1e-12,
        )?
    } else {
        &pairs.left * &reduced
    };
    let modes = Mat::from_fn(r, n, |k, j| scaled_modes[(k, j)] / scale);

    let negative_real = pairs
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.im == 0.0 && v.re < 0.0)
        .map(|(i, _)| i)
        .collect();
    let repeated = pairs
        .warnings
        .iter()
        .map(|w| match *w {
            EigenWarning::Repeated { first, second } => (first, second),
        })
        .collect();

    let diagnostics = FitDiagnostics {
        gram_condition: basis.full_condition(),
        retained_condition: basis.retained_condition(),
        first_discarded: basis.first_discarded(),
        eigenvector_condition: pairs.condition,
        singular_eigenbasis,
        negative_real,
        repeated,
    };

    Ok(KoopmanDecomposition {
        lambda: continuous_eigenvalues(&pairs.values, scaled.dt),
        mu: pairs.values,
        phi_x,
        modes,
        efun_coeff,
        basis,
        kernel: options.kernel,
        x_train: scaled.x,
        scale,
        dt: scaled.dt,
        diagnostics,
    })
}

impl KoopmanDecomposition {
    pub fn rank(&self) -> usize {
        self.mu.len()
    }

    pub fn state_dim(&self) -> usize {
        self.x_train.ncols()
    }

    /// Training states in physical units.
    pub fn training_states(&self) -> Mat<f64> {
        Mat::from_fn(self.x_train.nrows(), self.x_train.ncols(), |i, j| {
            self.x_train[(i, j)] / self.scale
        })
    }

    /// Continuous-time eigenvalue `k`, when defined.
    pub fn lambda_at(&self, k: usize) -> Option<c64> {
        self.lambda.as_ref().and_then(|l| l[k])
    }

    /// Eigenfunction values `(φ₁(x), …, φ_r(x))` at a physical state.
    pub fn eigenfunction_at(&self, x: &[f64]) -> Result<Vec<c64>> {
        let n = self.state_dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x.len(),
            });
        }
        let scaled: Vec<f64> = x.iter().map(|v| v * self.scale).collect();
        let mut row = vec![0.0; self.x_train.nrows()];
        let mut train = vec![0.0; n];
        for (j, slot) in row.iter_mut().enumerate() {
            for (c, t) in train.iter_mut().enumerate() {
                *t = self.x_train[(j, c)];
            }
            *slot = kernels::eval(&self.kernel, &scaled, &train)?;
        }
        Ok((0..self.rank())
            .map(|k| {
                row.iter()
                    .enumerate()
                    .fold(c64::new(0.0, 0.0), |acc, (j, f)| {
                        acc + self.efun_coeff[(j, k)] * *f
                    })
            })
            .collect())
    }

    /// Eigenfunction values at many states at once (rows of `states`).
    pub fn eigenfunctions_at(&self, states: MatRef<'_, f64>) -> Result<Mat<c64>> {
        if states.ncols() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim(),
                found: states.ncols(),
            });
        }
        let scaled = Mat::from_fn(states.nrows(), states.ncols(), |i, j| {
            states[(i, j)] * self.scale
        });
        let rows = kernels::gram(&self.kernel, scaled.as_ref(), self.x_train.as_ref())?;
        Ok(numerics::to_complex(rows.as_ref()) * &self.efun_coeff)
    }

    /// One-step prediction `Σ_k μ_k ξ_k φ_k(x)` in physical units.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let phi = self.eigenfunction_at(x)?;
        self.combine(&phi, |k| self.mu[k])
    }

    /// State reconstruction `Σ_k ξ_k φ_k(x)` without advancing time.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let phi = self.eigenfunction_at(x)?;
        self.combine(&phi, |_| c64::new(1.0, 0.0))
    }

    fn combine(&self, phi: &[c64], weight: impl Fn(usize) -> c64) -> Result<Vec<f64>> {
        let n = self.state_dim();
        let mut out = vec![c64::new(0.0, 0.0); n];
        for (k, p) in phi.iter().enumerate() {
            let w = weight(k) * p;
            for (j, o) in out.iter_mut().enumerate() {
                *o += w * self.modes[(k, j)];
            }
        }
        let residue = out.iter().map(|v| v.im * v.im).sum::<f64>().sqrt();
        let norm = out.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if residue > CONJUGATE_RESIDUE_TOL * norm {
            return Err(Error::ConjugateImbalance { residue, norm });
        }
        Ok(out.into_iter().map(|v| v.re).collect())
    }

    /// `Re(Φx Ξ)` in physical units and its relative Frobenius residual
    /// against the training states.
    pub fn reconstruct(&self) -> (Mat<f64>, f64) {
        let product = &self.phi_x * &self.modes;
        let x = self.training_states();
        let xhat = Mat::from_fn(product.nrows(), product.ncols(), |i, j| product[(i, j)].re);
        let residual = (&x - &xhat).norm_l2() / x.norm_l2();
        (xhat, residual)
    }

    /// Indices of the tuples in the requested order. Nothing is mutated.
    pub fn select(&self, criterion: Selection) -> Vec<usize> {
        select_indices(&self.mu, self.dt, criterion)
    }
}

/// Orders eigenvalue indices; see [`Selection`].
pub fn select_indices(mu: &[c64], dt: Option<f64>, criterion: Selection) -> Vec<usize> {
    match criterion {
        Selection::LargestMagnitude => {
            let mut idx: Vec<usize> = (0..mu.len()).collect();
            idx.sort_by(|&a, &b| mu[b].norm().total_cmp(&mu[a].norm()));
            idx
        }
        Selection::SlowestDecay => {
            let lambda = continuous_eigenvalues(mu, Some(dt.unwrap_or(1.0))).unwrap_or_default();
            let mut idx: Vec<usize> = (0..mu.len()).filter(|&k| lambda[k].is_some()).collect();
            idx.sort_by(|&a, &b| {
                let (la, lb) = (lambda[a].unwrap(), lambda[b].unwrap());
                lb.re.total_cmp(&la.re)
            });
            idx
        }
        Selection::TopN(n) => {
            let mut idx = select_indices(mu, dt, Selection::SlowestDecay);
            idx.truncate(n);
            idx
        }
    }
}
