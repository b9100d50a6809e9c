//! Standing-front equilibrium and the linearisation about it.

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64 as c64;

use super::{rhs_with, CosineBasis, FhnConfig, FieldState, Integrator};
use crate::error::{Error, Result};
use crate::numerics::general_eig_unchecked;

/// Iteration cap for Newton's method.
pub const MAX_NEWTON_ITERATIONS: usize = 200;
/// Required sup-norm of the coefficient-space residual.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Time spent relaxing the initial guess when Newton fails from it directly.
const RELAX_TIME: f64 = 2000.0;

/// Dense Jacobian of the discretised right-hand side, acting on grid values
/// laid out as `v` then `w`.
pub fn jacobian(cfg: &FhnConfig, state: &FieldState) -> Result<Mat<f64>> {
    cfg.validate()?;
    state.check_modes(cfg)?;
    let basis = cfg.basis();
    let d2 = basis.second_derivative_matrix();
    let v = basis.to_physical(&state.v);
    Ok(assemble_jacobian(cfg, &d2, &v))
}

fn assemble_jacobian(cfg: &FhnConfig, d2: &Mat<f64>, v: &[f64]) -> Mat<f64> {
    let n = cfg.n_modes;
    Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => d2[(i, j)] + if i == j { 1.0 - 3.0 * v[i] * v[i] } else { 0.0 },
        (true, false) => {
            if j - n == i {
                -1.0
            } else {
                0.0
            }
        }
        (false, true) => {
            if i - n == j {
                cfg.epsilon
            } else {
                0.0
            }
        }
        (false, false) => {
            cfg.delta * d2[(i - n, j - n)] - if i == j { cfg.epsilon * cfg.c1 } else { 0.0 }
        }
    })
}

fn residual(cfg: &FhnConfig, basis: &CosineBasis, s: &FieldState) -> f64 {
    rhs_with(s, cfg, basis).max_abs()
}

/// Damped Newton iteration on grid values. Returns the best state reached
/// and its residual.
fn newton(
    cfg: &FhnConfig,
    basis: &CosineBasis,
    d2: &Mat<f64>,
    start: FieldState,
) -> (FieldState, f64, usize) {
    let n = cfg.n_modes;
    let mut s = start;
    let mut r = residual(cfg, basis, &s);
    let mut iterations = 0;
    while iterations < MAX_NEWTON_ITERATIONS && r >= RESIDUAL_TOL * 1e-2 {
        iterations += 1;
        let v = basis.to_physical(&s.v);
        let f = rhs_with(&s, cfg, basis);
        let fv = basis.to_physical(&f.v);
        let fw = basis.to_physical(&f.w);
        let jac = assemble_jacobian(cfg, d2, &v);
        let b = Mat::from_fn(2 * n, 1, |i, _| if i < n { -fv[i] } else { -fw[i - n] });
        let step = jac.partial_piv_lu().solve(&b);
        if (0..2 * n).any(|i| !step[(i, 0)].is_finite()) {
            break;
        }
        let phys = s.to_physical(basis);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-4 {
            let trial: Vec<f64> = (0..2 * n).map(|i| phys[i] + t * step[(i, 0)]).collect();
            let cand = FieldState::from_physical(basis, &trial[..n], &trial[n..]);
            let rc = residual(cfg, basis, &cand);
            if rc < r {
                s = cand;
                r = rc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (s, r, iterations)
}

/// Front-shaped initial guess; `w` solves its own (linear) equation for the
/// given `v`.
fn initial_guess(cfg: &FhnConfig, basis: &CosineBasis, d2: &Mat<f64>) -> FieldState {
    let n = cfg.n_modes;
    let x = basis.grid();
    let v: Vec<f64> = x
        .iter()
        .map(|x| -0.7 * ((x - cfg.length / 2.0) / std::f64::consts::SQRT_2).tanh())
        .collect();
    let a = Mat::from_fn(n, n, |i, j| {
        cfg.delta * d2[(i, j)] - if i == j { cfg.epsilon * cfg.c1 } else { 0.0 }
    });
    let b = Mat::from_fn(n, 1, |i, _| -cfg.epsilon * (v[i] - cfg.c0));
    let w = a.partial_piv_lu().solve(&b);
    let w: Vec<f64> = (0..n).map(|i| w[(i, 0)]).collect();
    FieldState::from_physical(basis, &v, &w)
}

/// Solves `fhn_rhs = 0` for the standing front.
///
/// Newton's method is tried from a front-shaped guess; if that stalls the
/// guess is first relaxed by integrating the dynamics.
pub fn find_equilibrium(cfg: &FhnConfig) -> Result<FieldState> {
    cfg.validate()?;
    let basis = cfg.basis();
    let d2 = basis.second_derivative_matrix();
    let guess = initial_guess(cfg, &basis, &d2);
    let (s, r, _) = newton(cfg, &basis, &d2, guess.clone());
    if r < RESIDUAL_TOL {
        return Ok(s);
    }
    let integ = Integrator::new(cfg)?;
    let relaxed = integ.trajectory(&guess, RELAX_TIME)?.pop().unwrap_or(guess);
    let (s, r, iterations) = newton(cfg, &basis, &d2, relaxed);
    if r < RESIDUAL_TOL {
        Ok(s)
    } else {
        Err(Error::NoConvergence {
            iterations,
            residual: r,
        })
    }
}

/// Eigenvalues and eigenvectors of the Jacobian at an equilibrium.
#[derive(Debug, Clone)]
pub struct Linearization {
    /// Sorted by real part, largest first; ties by imaginary part.
    pub values: Vec<c64>,
    /// Unit columns in the snapshot layout (`v` grid values then `w`).
    pub vectors: Mat<c64>,
}

impl Linearization {
    /// Discrete-time multiplier `exp(λ Δt)` of eigenvalue `i`.
    pub fn multiplier(&self, i: usize, dt: f64) -> c64 {
        (self.values[i] * dt).exp()
    }
}

pub fn linearization_oracle(cfg: &FhnConfig, eq: &FieldState) -> Result<Linearization> {
    let jac = jacobian(cfg, eq)?;
    let pairs = general_eig_unchecked(jac.as_ref())?;
    let m = pairs.values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (pairs.values[a], pairs.values[b]);
        y.re.total_cmp(&x.re)
            .then(y.im.total_cmp(&x.im))
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| pairs.values[i]).collect();
    let vectors = Mat::from_fn(m, m, |i, j| pairs.right[(i, order[j])]);
    Ok(Linearization { values, vectors })
}
