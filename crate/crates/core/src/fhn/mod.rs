//! One-dimensional FitzHugh-Nagumo reaction-diffusion data.
//!
//! ```text
//! ∂_t v = ∂_xx v + v − w − v³
//! ∂_t w = δ ∂_xx w + ε (v − c₁ w − c₀)
//! ```
//!
//! on `[0, L]` with Neumann boundaries, discretised with a cosine series.
//! The stable standing front is perturbed by three Gaussian kicks every
//! `perturb_period` time units.

mod dataset;
mod equilibrium;
mod integrator;
mod spectral;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{generate_dataset, generate_from, trajectory_series};
pub use equilibrium::{find_equilibrium, jacobian, linearization_oracle, Linearization};
pub use integrator::{integrate, Integrator};
pub use spectral::CosineBasis;

/// Relative slack allowed when checking that time steps divide each other.
const STEP_RATIO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FhnConfig {
    pub c0: f64,
    pub c1: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub length: f64,
    pub n_modes: usize,
    pub dt_sample: f64,
    pub perturb_period: f64,
    pub centers: [f64; 3],
    pub forcing_std: f64,
    pub n_snapshots: usize,
    pub n_trajectories: usize,
    pub seed: u64,
    pub dt_internal: f64,
}

impl Default for FhnConfig {
    fn default() -> Self {
        Self {
            c0: -0.03,
            c1: 2.0,
            delta: 4.0,
            epsilon: 0.02,
            length: 20.0,
            n_modes: 128,
            dt_sample: 1.0,
            perturb_period: 25.0,
            centers: [7.5, 10.0, 12.5],
            forcing_std: 0.1,
            n_snapshots: 2500,
            n_trajectories: 5,
            seed: 0,
            dt_internal: 0.01,
        }
    }
}

fn whole_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let n = r.round();
    (n >= 1.0 && (r - n).abs() <= STEP_RATIO_TOL * n).then_some(n as usize)
}

impl FhnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        let scalars = [self.c0, self.c1, self.delta, self.epsilon, self.forcing_std];
        if scalars.iter().any(|v| !v.is_finite()) || self.centers.iter().any(|c| !c.is_finite()) {
            return bad("FHN parameters must be finite");
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return bad("domain length must be positive");
        }
        if self.delta < 0.0 || self.forcing_std < 0.0 {
            return bad("delta and forcing_std must be non-negative");
        }
        if self.n_modes < 2 {
            return bad("need at least two cosine modes");
        }
        for (name, v) in [
            ("dt_sample", self.dt_sample),
            ("dt_internal", self.dt_internal),
            ("perturb_period", self.perturb_period),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if whole_ratio(self.dt_sample, self.dt_internal).is_none() {
            return bad("dt_internal must divide dt_sample evenly");
        }
        if whole_ratio(self.perturb_period, self.dt_sample).is_none() {
            return bad("perturb_period must be a whole multiple of dt_sample");
        }
        if self.n_snapshots < 3 {
            return bad("need at least three snapshots per trajectory");
        }
        if self.n_trajectories == 0 {
            return bad("need at least one trajectory");
        }
        Ok(())
    }

    /// Internal steps per sample.
    pub fn substeps(&self) -> usize {
        whole_ratio(self.dt_sample, self.dt_internal).unwrap_or(1)
    }

    /// Samples between perturbations.
    pub fn samples_per_period(&self) -> usize {
        whole_ratio(self.perturb_period, self.dt_sample).unwrap_or(1)
    }

    /// Length of a snapshot vector (`v` then `w`).
    pub fn state_dim(&self) -> usize {
        2 * self.n_modes
    }

    pub fn basis(&self) -> CosineBasis {
        CosineBasis::new(self.n_modes, self.length)
    }
}

/// Cosine coefficients of both fields.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl FieldState {
    pub fn zeros(n_modes: usize) -> Self {
        Self {
            v: vec![0.0; n_modes],
            w: vec![0.0; n_modes],
        }
    }

    /// Spatially constant fields.
    pub fn constant(n_modes: usize, v: f64, w: f64) -> Self {
        let mut s = Self::zeros(n_modes);
        s.v[0] = v;
        s.w[0] = w;
        s
    }

    pub fn from_physical(basis: &CosineBasis, v: &[f64], w: &[f64]) -> Self {
        Self {
            v: basis.to_spectral(v),
            w: basis.to_spectral(w),
        }
    }

    /// Grid values of `v` followed by those of `w`.
    pub fn to_physical(&self, basis: &CosineBasis) -> Vec<f64> {
        let mut out = basis.to_physical(&self.v);
        out.extend(basis.to_physical(&self.w));
        out
    }

    pub fn n_modes(&self) -> usize {
        self.v.len()
    }

    pub fn max_abs(&self) -> f64 {
        self.v
            .iter()
            .chain(&self.w)
            .fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().chain(&self.w).all(|c| c.is_finite())
    }

    /// Largest coefficient difference.
    pub fn distance(&self, other: &FieldState) -> f64 {
        self.v
            .iter()
            .zip(&other.v)
            .chain(self.w.iter().zip(&other.w))
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    fn check_modes(&self, cfg: &FhnConfig) -> Result<()> {
        if self.v.len() != cfg.n_modes || self.w.len() != cfg.n_modes {
            return Err(Error::DimensionMismatch {
                expected: cfg.n_modes,
                found: self.v.len().max(self.w.len()),
            });
        }
        Ok(())
    }
}

/// Reaction terms without diffusion: `(v − w − v³, ε(v − c₁w − c₀))` in
/// coefficient space.
pub(crate) fn reaction(state: &FieldState, cfg: &FhnConfig, basis: &CosineBasis) -> FieldState {
    let mut cube = basis.to_physical(&state.v);
    cube.iter_mut().for_each(|v| *v = *v * *v * *v);
    basis.to_spectral_in_place(&mut cube);
    let v = state
        .v
        .iter()
        .zip(&state.w)
        .zip(&cube)
        .map(|((v, w), c)| v - w - c)
        .collect();
    let mut w: Vec<f64> = state
        .v
        .iter()
        .zip(&state.w)
        .map(|(v, w)| cfg.epsilon * (v - cfg.c1 * w))
        .collect();
    w[0] -= cfg.epsilon * cfg.c0;
    FieldState { v, w }
}

/// Time derivative of the discretised system.
pub fn fhn_rhs(state: &FieldState, cfg: &FhnConfig) -> Result<FieldState> {
    state.check_modes(cfg)?;
    let basis = cfg.basis();
    Ok(rhs_with(state, cfg, &basis))
}

pub(crate) fn rhs_with(state: &FieldState, cfg: &FhnConfig, basis: &CosineBasis) -> FieldState {
    let mut out = reaction(state, cfg, basis);
    for k in 0..cfg.n_modes {
        let lap = basis.laplacian_eigenvalue(k);
        out.v[k] += lap * state.v[k];
        out.w[k] += cfg.delta * lap * state.w[k];
    }
    out
}

/// Adds `Σ u_i exp(−(x − x_i)²)` to `v` on the grid; `w` is untouched.
pub fn perturb(state: &FieldState, u: &[f64; 3], cfg: &FhnConfig) -> Result<FieldState> {
    state.check_modes(cfg)?;
    let basis = cfg.basis();
    Ok(perturb_with(state, u, cfg, &basis))
}

pub(crate) fn perturb_with(
    state: &FieldState,
    u: &[f64; 3],
    cfg: &FhnConfig,
    basis: &CosineBasis,
) -> FieldState {
    let mut v = basis.to_physical(&state.v);
    for (x, vx) in basis.grid().iter().zip(v.iter_mut()) {
        for (ui, ci) in u.iter().zip(&cfg.centers) {
            *vx += ui * (-(x - ci).powi(2)).exp();
        }
    }
    basis.to_spectral_in_place(&mut v);
    FieldState {
        v,
        w: state.w.clone(),
    }
}
