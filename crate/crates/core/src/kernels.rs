//! Kernel functions, snapshot data, and Gram-matrix assembly.
//!
//! A kernel `f(x, z) = ψ(z)ᵀψ(x)` stands in for an explicit feature map
//! `ψ`, so every feature-space inner product the decomposition needs can be
//! computed in `O(N)` time from the raw states.

use std::fmt;
use std::str::FromStr;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows used by the median heuristic for the Gaussian bandwidth.
pub const MEDIAN_HEURISTIC_ROWS: usize = 500;

/// Kernel family and parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelSpec {
    /// `(1 + zᵀx)^alpha`
    Polynomial { alpha: u32 },
    /// `exp(-‖x - z‖² / sigma²)`
    Gaussian { sigma: f64 },
    /// `zᵀx`, which reduces the method to DMD.
    Linear,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Polynomial { alpha: 0 } => Err(Error::InvalidParameter(
                "polynomial degree must be at least 1".into(),
            )),
            KernelSpec::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                Error::InvalidParameter(format!("gaussian width {sigma} must be positive")),
            ),
            _ => Ok(()),
        }
    }

    /// Kernel value as a function of the inner product `zᵀx` and the squared
    /// distance `‖x - z‖²`. Only the Gaussian needs the distance.
    #[inline]
    fn combine(&self, inner: f64, sq_dist: f64) -> f64 {
        match *self {
            KernelSpec::Polynomial { alpha } => (1.0 + inner).powi(alpha as i32),
            KernelSpec::Gaussian { sigma } => (-sq_dist.max(0.0) / (sigma * sigma)).exp(),
            KernelSpec::Linear => inner,
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Polynomial { alpha } => write!(f, "polynomial:{alpha}"),
            KernelSpec::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            KernelSpec::Linear => write!(f, "linear"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// Parses `polynomial:ALPHA`, `gaussian:SIGMA` or `linear`.
    fn from_str(s: &str) -> Result<Self> {
        let (family, param) = match s.split_once(':') {
            Some((f, p)) => (f.trim(), Some(p.trim())),
            None => (s.trim(), None),
        };
        let bad = || Error::InvalidParameter(format!("cannot parse kernel '{s}'"));
        let spec = match (family, param) {
            ("linear", None) => KernelSpec::Linear,
            ("polynomial", Some(p)) => KernelSpec::Polynomial {
                alpha: p.parse().map_err(|_| bad())?,
            },
            ("gaussian", Some(p)) => KernelSpec::Gaussian {
                sigma: p.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Paired snapshot matrices; row `m` of `y` is the image of row `m` of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub x: Mat<f64>,
    pub y: Mat<f64>,
    /// Sampling interval, absent for intrinsically discrete-time data.
    pub dt: Option<f64>,
}

impl SnapshotSet {
    pub fn new(x: Mat<f64>, y: Mat<f64>, dt: Option<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() || x.ncols() != y.ncols() {
            return Err(Error::InvalidSnapshots(format!(
                "X is {}x{} but Y is {}x{}",
                x.nrows(),
                x.ncols(),
                y.nrows(),
                y.ncols()
            )));
        }
        if x.nrows() < 2 {
            return Err(Error::InvalidSnapshots(format!(
                "need at least 2 snapshot pairs, got {}",
                x.nrows()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidSnapshots("state dimension is zero".into()));
        }
        if let Some(dt) = dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidSnapshots(format!("sampling interval {dt}")));
            }
        }
        for m in [&x, &y] {
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    if !m[(i, j)].is_finite() {
                        return Err(Error::InvalidSnapshots(format!(
                            "non-finite entry at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        Ok(Self { x, y, dt })
    }

    /// Builds pairs from consecutive rows of a single time series.
    pub fn from_series(series: MatRef<'_, f64>, dt: Option<f64>) -> Result<Self> {
        let m = series.nrows();
        if m < 3 {
            return Err(Error::InvalidSnapshots(format!(
                "a series of {m} states yields fewer than 2 pairs"
            )));
        }
        let x = series.subrows(0, m - 1).to_owned();
        let y = series.subrows(1, m - 1).to_owned();
        Self::new(x, y, dt)
    }

    pub fn pairs(&self) -> usize {
        self.x.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.x.ncols()
    }

    /// Row permutation of the pairs, used to check order independence.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let n = self.state_dim();
        Self {
            x: Mat::from_fn(order.len(), n, |i, j| self.x[(order[i], j)]),
            y: Mat::from_fn(order.len(), n, |i, j| self.y[(order[i], j)]),
            dt: self.dt,
        }
    }
}

/// Gramian `Ĝ_ij = f(x_i, x_j)` and cross-Gramian `Â_ij = f(y_i, x_j)`.
#[derive(Debug, Clone)]
pub struct GramPair {
    pub g: Mat<f64>,
    pub a: Mat<f64>,
}

impl GramPair {
    pub fn assemble(kernel: &KernelSpec, data: &SnapshotSet) -> Result<Self> {
        Ok(Self {
            g: gram_symmetric(kernel, data.x.as_ref())?,
            a: gram(kernel, data.y.as_ref(), data.x.as_ref())?,
        })
    }
}

/// Evaluates the kernel on two states.
pub fn eval(kernel: &KernelSpec, x: &[f64], z: &[f64]) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: z.len(),
        });
    }
    let (inner, sq) = x.iter().zip(z).fold((0.0, 0.0), |(ip, sq), (a, b)| {
        (ip + a * b, sq + (a - b) * (a - b))
    });
    Ok(kernel.combine(inner, sq))
}

fn row_sq_norms(a: MatRef<'_, f64>) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * a[(i, j)]).sum())
        .collect()
}

/// Kernel matrix with entries `f(row_i(a), row_j(b))`.
///
/// Inner products are formed with a single matrix product, so the cost is
/// `O(rows(a) · rows(b) · N)`.
pub fn gram(kernel: &KernelSpec, a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
    kernel.validate()?;
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            found: b.ncols(),
        });
    }
    let mut out = a * b.transpose();
    let (na, nb) = match kernel {
        KernelSpec::Gaussian { .. } => (row_sq_norms(a), row_sq_norms(b)),
        _ => (Vec::new(), Vec::new()),
    };
    for j in 0..out.ncols() {
        for i in 0..out.nrows() {
            let inner = out[(i, j)];
            let sq = if na.is_empty() {
                0.0
            } else {
                na[i] + nb[j] - 2.0 * inner
            };
            out[(i, j)] = kernel.combine(inner, sq);
        }
    }
    Ok(out)
}

/// [`gram`] of a matrix with itself, exactly symmetric.
pub fn gram_symmetric(kernel: &KernelSpec, a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let mut g = gram(kernel, a, a)?;
    let m = g.nrows();
    for j in 0..m {
        for i in (j + 1)..m {
            g[(j, i)] = g[(i, j)];
        }
    }
    if let KernelSpec::Gaussian { .. } = kernel {
        for i in 0..m {
            g[(i, i)] = 1.0;
        }
    }
    Ok(g)
}

/// Rescales `X` and `Y` by the same factor so that the mean Euclidean norm
/// of the rows of `X` is one. Returns the scaled set and the factor.
pub fn normalize_snapshots(data: &SnapshotSet) -> Result<(SnapshotSet, f64)> {
    let total: f64 = row_sq_norms(data.x.as_ref()).iter().map(|s| s.sqrt()).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::DegenerateData("every row of X is zero".into()));
    }
    let scale = data.pairs() as f64 / total;
    let scaled = SnapshotSet {
        x: Mat::from_fn(data.x.nrows(), data.x.ncols(), |i, j| {
            data.x[(i, j)] * scale
        }),
        y: Mat::from_fn(data.y.nrows(), data.y.ncols(), |i, j| {
            data.y[(i, j)] * scale
        }),
        dt: data.dt,
    };
    Ok((scaled, scale))
}

/// Median pairwise distance between (at most 500, evenly strided) rows.
pub fn median_heuristic_sigma(x: MatRef<'_, f64>) -> Result<f64> {
    let m = x.nrows();
    let take = m.min(MEDIAN_HEURISTIC_ROWS);
    if take < 2 {
        return Err(Error::DegenerateData(
            "need two rows for the median heuristic".into(),
        ));
    }
    let rows: Vec<usize> = (0..take).map(|k| k * m / take).collect();
    let mut dists = Vec::with_capacity(take * (take - 1) / 2);
    for (a, &i) in rows.iter().enumerate() {
        for &j in &rows[a + 1..] {
            let d: f64 = (0..x.ncols())
                .map(|c| (x[(i, c)] - x[(j, c)]).powi(2))
                .sum();
            dists.push(d.sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let n = dists.len();
    let median = if n % 2 == 1 {
        dists[n / 2]
    } else {
        0.5 * (dists[n / 2 - 1] + dists[n / 2])
    };
    if median > 0.0 {
        Ok(median)
    } else {
        Err(Error::DegenerateData(
            "median pairwise distance is zero".into(),
        ))
    }
}
