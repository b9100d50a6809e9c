//! Cosine-series representation on the midpoint grid of `[0, L]`.
//!
//! A field is stored as coefficients `a_k` of `Σ_k a_k cos(kπx/L)`. Every
//! basis function has zero slope at both ends, which is how the Neumann
//! conditions are imposed. Physical values live on `x_j = (j + ½) L / n`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use faer::Mat;
use rustdct::{Dct2, Dct3, DctPlanner};

#[derive(Clone)]
pub struct CosineBasis {
    n: usize,
    length: f64,
    dct2: Arc<dyn Dct2<f64>>,
    dct3: Arc<dyn Dct3<f64>>,
}

impl fmt::Debug for CosineBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CosineBasis")
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl CosineBasis {
    pub fn new(n: usize, length: f64) -> Self {
        let mut planner = DctPlanner::new();
        Self {
            n,
            length,
            dct2: planner.plan_dct2(n),
            dct3: planner.plan_dct3(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Collocation points `(j + ½) L / n`.
    pub fn grid(&self) -> Vec<f64> {
        let h = self.length / self.n as f64;
        (0..self.n).map(|j| (j as f64 + 0.5) * h).collect()
    }

    /// `kπ/L` for each mode.
    pub fn wavenumber(&self, k: usize) -> f64 {
        k as f64 * PI / self.length
    }

    /// Eigenvalue of `∂_xx` on mode `k`.
    pub fn laplacian_eigenvalue(&self, k: usize) -> f64 {
        -self.wavenumber(k).powi(2)
    }

    /// Coefficients to grid values, in place.
    pub fn to_physical_in_place(&self, buf: &mut [f64]) {
        // rustdct's DCT-III halves the zeroth input
        buf[0] *= 2.0;
        self.dct3.process_dct3(buf);
    }

    /// Grid values to coefficients, in place.
    pub fn to_spectral_in_place(&self, buf: &mut [f64]) {
        self.dct2.process_dct2(buf);
        let n = self.n as f64;
        buf[0] /= n;
        for b in buf[1..].iter_mut() {
            *b *= 2.0 / n;
        }
    }

    pub fn to_physical(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut buf = coeffs.to_vec();
        self.to_physical_in_place(&mut buf);
        buf
    }

    pub fn to_spectral(&self, values: &[f64]) -> Vec<f64> {
        let mut buf = values.to_vec();
        self.to_spectral_in_place(&mut buf);
        buf
    }

    /// Evaluates the cosine series anywhere in `[0, L]`.
    pub fn value_at(&self, coeffs: &[f64], x: f64) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| a * (self.wavenumber(k) * x).cos())
            .sum()
    }

    /// Evaluates `∂_x` of the cosine series anywhere in `[0, L]`.
    pub fn derivative_at(&self, coeffs: &[f64], x: f64) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| -a * self.wavenumber(k) * (self.wavenumber(k) * x).sin())
            .sum()
    }

    /// Dense grid-space matrix of `∂_xx`.
    pub fn second_derivative_matrix(&self) -> Mat<f64> {
        let n = self.n;
        let mut out = Mat::zeros(n, n);
        let mut buf = vec![0.0; n];
        for j in 0..n {
            buf.iter_mut().for_each(|b| *b = 0.0);
            buf[j] = 1.0;
            self.to_spectral_in_place(&mut buf);
            for (k, b) in buf.iter_mut().enumerate() {
                *b *= self.laplacian_eigenvalue(k);
            }
            self.to_physical_in_place(&mut buf);
            for i in 0..n {
                out[(i, j)] = buf[i];
            }
        }
        out
    }
}
