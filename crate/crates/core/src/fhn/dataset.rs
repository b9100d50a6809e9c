//! Randomly kicked trajectories around the equilibrium.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{find_equilibrium, perturb_with, FhnConfig, FieldState, Integrator};
use crate::error::{Error, Result};
use crate::kernels::SnapshotSet;

/// Grid-space snapshots of trajectory `index`, one row per sample.
///
/// Trajectory `index` draws its kicks from `ChaCha8Rng` seeded with
/// `seed + index`, three normals per kick. A kick is applied right after
/// each snapshot at a multiple of `perturb_period`, starting at `t = 0`.
pub fn trajectory_series(integ: &Integrator, eq: &FieldState, index: usize) -> Result<Mat<f64>> {
    let cfg = integ.config();
    let normal = Normal::new(0.0, cfg.forcing_std)
        .map_err(|e| Error::InvalidParameter(format!("forcing distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(index as u64));
    let period = cfg.samples_per_period();
    let mut series = Mat::zeros(cfg.n_snapshots, cfg.state_dim());
    let mut state = eq.clone();
    for step in 0..cfg.n_snapshots {
        for (j, value) in state.to_physical(integ.basis()).into_iter().enumerate() {
            series[(step, j)] = value;
        }
        if step + 1 == cfg.n_snapshots {
            break;
        }
        if step % period == 0 {
            let u = [
                normal.sample(&mut rng),
                normal.sample(&mut rng),
                normal.sample(&mut rng),
            ];
            state = perturb_with(&state, &u, cfg, integ.basis());
        }
        state = integ.advance(&state, step as f64 * cfg.dt_sample)?;
    }
    Ok(series)
}

/// All trajectories started from a known equilibrium.
pub fn generate_from(cfg: &FhnConfig, eq: &FieldState) -> Result<Vec<SnapshotSet>> {
    let integ = Integrator::new(cfg)?;
    eq.check_modes(cfg)?;
    (0..cfg.n_trajectories)
        .into_par_iter()
        .map(|i| {
            let series = trajectory_series(&integ, eq, i)?;
            SnapshotSet::from_series(series.as_ref(), Some(cfg.dt_sample))
        })
        .collect()
}

/// One snapshot-pair set per trajectory.
pub fn generate_dataset(cfg: &FhnConfig) -> Result<Vec<SnapshotSet>> {
    let eq = find_equilibrium(cfg)?;
    generate_from(cfg, &eq)
}
