//! Exponential time differencing, fourth order (Cox-Matthews), with the
//! diagonal diffusion handled exactly and the reaction explicitly.

use num_complex::Complex64;

use super::{reaction, CosineBasis, FhnConfig, FieldState};
use crate::error::{Error, Result};

/// Coefficients larger than this are treated as blow-up.
pub const BLOW_UP: f64 = 1e6;

/// Points on the contour used to evaluate the phi-functions.
const CONTOUR_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, Default)]
struct Coefficients {
    e: f64,
    e2: f64,
    q: f64,
    f1: f64,
    f2: f64,
    f3: f64,
}

impl Coefficients {
    /// For the scalar linear rate `c` and step `h`. The phi-functions are
    /// averaged over a unit circle around `hc` so that small `hc` does not
    /// cancel catastrophically.
    fn new(c: f64, h: f64) -> Self {
        let z = h * c;
        let mut q = 0.0;
        let mut f1 = 0.0;
        let mut f2 = 0.0;
        let mut f3 = 0.0;
        for j in 0..CONTOUR_POINTS {
            let theta = std::f64::consts::PI * (j as f64 + 0.5) / CONTOUR_POINTS as f64;
            // upper half circle; conjugate points give the conjugate values
            let r = Complex64::new(z, 0.0) + Complex64::from_polar(1.0, theta);
            let er = r.exp();
            let r2 = r * r;
            let r3 = r2 * r;
            q += (((r / 2.0).exp() - 1.0) / r).re;
            f1 += ((-4.0 - r + er * (4.0 - 3.0 * r + r2)) / r3).re;
            f2 += ((2.0 + r + er * (r - 2.0)) / r3).re;
            f3 += ((-4.0 - 3.0 * r - r2 + er * (4.0 - r)) / r3).re;
        }
        let m = CONTOUR_POINTS as f64;
        Self {
            e: z.exp(),
            e2: (z / 2.0).exp(),
            q: h * q / m,
            f1: h * f1 / m,
            f2: h * f2 / m,
            f3: h * f3 / m,
        }
    }
}

/// Reusable stepper for a fixed configuration.
#[derive(Debug, Clone)]
pub struct Integrator {
    cfg: FhnConfig,
    basis: CosineBasis,
    cv: Vec<Coefficients>,
    cw: Vec<Coefficients>,
}

impl Integrator {
    pub fn new(cfg: &FhnConfig) -> Result<Self> {
        cfg.validate()?;
        let basis = cfg.basis();
        let h = cfg.dt_sample / cfg.substeps() as f64;
        let cv = (0..cfg.n_modes)
            .map(|k| Coefficients::new(basis.laplacian_eigenvalue(k), h))
            .collect();
        let cw = (0..cfg.n_modes)
            .map(|k| Coefficients::new(cfg.delta * basis.laplacian_eigenvalue(k), h))
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            basis,
            cv,
            cw,
        })
    }

    pub fn config(&self) -> &FhnConfig {
        &self.cfg
    }

    pub fn basis(&self) -> &CosineBasis {
        &self.basis
    }

    fn combine(
        coeffs: &[Coefficients],
        u: &[f64],
        n: &[f64],
        pick: impl Fn(&Coefficients, f64, f64) -> f64,
    ) -> Vec<f64> {
        coeffs
            .iter()
            .zip(u.iter().zip(n))
            .map(|(c, (u, n))| pick(c, *u, *n))
            .collect()
    }

    /// One internal step.
    pub fn step(&self, s: &FieldState) -> FieldState {
        let nu = reaction(s, &self.cfg, &self.basis);
        let half = |c: &Coefficients, u: f64, n: f64| c.e2 * u + c.q * n;
        let a = FieldState {
            v: Self::combine(&self.cv, &s.v, &nu.v, half),
            w: Self::combine(&self.cw, &s.w, &nu.w, half),
        };
        let na = reaction(&a, &self.cfg, &self.basis);
        let b = FieldState {
            v: Self::combine(&self.cv, &s.v, &na.v, half),
            w: Self::combine(&self.cw, &s.w, &na.w, half),
        };
        let nb = reaction(&b, &self.cfg, &self.basis);
        let c_field = |cs: &[Coefficients], a: &[f64], nu: &[f64], nb: &[f64]| -> Vec<f64> {
            cs.iter()
                .enumerate()
                .map(|(k, c)| c.e2 * a[k] + c.q * (2.0 * nb[k] - nu[k]))
                .collect()
        };
        let c = FieldState {
            v: c_field(&self.cv, &a.v, &nu.v, &nb.v),
            w: c_field(&self.cw, &a.w, &nu.w, &nb.w),
        };
        let nc = reaction(&c, &self.cfg, &self.basis);
        let finish = |cs: &[Coefficients],
                      u: &[f64],
                      nu: &[f64],
                      na: &[f64],
                      nb: &[f64],
                      nc: &[f64]|
         -> Vec<f64> {
            cs.iter()
                .enumerate()
                .map(|(k, co)| {
                    co.e * u[k] + co.f1 * nu[k] + 2.0 * co.f2 * (na[k] + nb[k]) + co.f3 * nc[k]
                })
                .collect()
        };
        FieldState {
            v: finish(&self.cv, &s.v, &nu.v, &na.v, &nb.v, &nc.v),
            w: finish(&self.cw, &s.w, &nu.w, &na.w, &nb.w, &nc.w),
        }
    }

    /// Advances by one sampling interval.
    pub fn advance(&self, s: &FieldState, time: f64) -> Result<FieldState> {
        let mut s = s.clone();
        for _ in 0..self.cfg.substeps() {
            s = self.step(&s);
        }
        if !s.is_finite() || s.max_abs() > BLOW_UP {
            return Err(Error::Instability {
                time: time + self.cfg.dt_sample,
            });
        }
        Ok(s)
    }

    /// States at `0, Δt, …, t_span`, initial state included.
    pub fn trajectory(&self, from: &FieldState, t_span: f64) -> Result<Vec<FieldState>> {
        from.check_modes(&self.cfg)?;
        let samples = if t_span == 0.0 {
            0
        } else {
            super::whole_ratio(t_span, self.cfg.dt_sample).ok_or_else(|| {
                Error::InvalidParameter("t_span must be a multiple of dt_sample".into())
            })?
        };
        let mut out = Vec::with_capacity(samples + 1);
        out.push(from.clone());
        for i in 0..samples {
            let next = self.advance(&out[i], i as f64 * self.cfg.dt_sample)?;
            out.push(next);
        }
        Ok(out)
    }
}

/// Integrates from `from` over `t_span`, returning every sample including
/// the starting state.
pub fn integrate(cfg: &FhnConfig, from: &FieldState, t_span: f64) -> Result<Vec<FieldState>> {
    Integrator::new(cfg)?.trajectory(from, t_span)
}
