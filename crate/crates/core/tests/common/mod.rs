#![allow(dead_code)]

use faer::Mat;
use kernel_koopman::{KoopmanDecomposition, SnapshotSet};
use num_complex::Complex64 as c64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Mat<f64> {
    Mat::from_fn(m, n, |_, _| StandardNormal.sample(rng))
}

/// Snapshot pairs of the map `y = tanh(x B)` with random `B` and
/// Gaussian states.
pub fn nonlinear_pairs(seed: u64, m: usize, n: usize) -> SnapshotSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal_matrix(&mut rng, m, n);
    let b = normal_matrix(&mut rng, n, n) * faer::Scale(0.8 / (n as f64).sqrt());
    let xb = &x * &b;
    let y = Mat::from_fn(m, n, |i, j| xb[(i, j)].tanh());
    SnapshotSet::new(x, y, Some(0.1)).unwrap()
}

/// Pairs of `y = A x` with `A = diag(0.9, 0.5)`.
pub fn diagonal_pairs(seed: u64, m: usize) -> SnapshotSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal_matrix(&mut rng, m, 2);
    let y = Mat::from_fn(m, 2, |i, j| x[(i, j)] * [0.9, 0.5][j]);
    SnapshotSet::new(x, y, Some(1.0)).unwrap()
}

pub fn complex_frobenius(a: &Mat<c64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

pub fn row(a: &Mat<c64>, k: usize) -> Vec<c64> {
    (0..a.ncols()).map(|j| a[(k, j)]).collect()
}

pub fn norm(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `|⟨a, b⟩| / (‖a‖ ‖b‖)`
pub fn cosine(a: &[c64], b: &[c64]) -> f64 {
    let inner: c64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    inner.norm() / (norm(a) * norm(b))
}

/// `min_θ ‖a/‖a‖ − e^{iθ} b/‖b‖‖`
pub fn aligned_distance(a: &[c64], b: &[c64]) -> f64 {
    (2.0 - 2.0 * cosine(a, b)).max(0.0).sqrt()
}

/// `min_θ ‖a − e^{iθ} b‖`
pub fn phase_aligned_gap(a: &[c64], b: &[c64]) -> f64 {
    let inner: c64 = b.iter().zip(a).map(|(x, y)| x.conj() * y).sum();
    let phase = if inner.norm() > 0.0 {
        inner / inner.norm()
    } else {
        c64::new(1.0, 0.0)
    };
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - phase * y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `Q Qᵀ X` for the retained kernel principal components, in physical
/// units.
pub fn projected_states(d: &KoopmanDecomposition) -> Mat<f64> {
    let q = &d.basis.q;
    let x = d.training_states();
    q * (q.transpose() * &x)
}

/// Largest violation, relative to the natural scale of each identity, of
/// the decomposition invariants; every entry should be tiny.
pub struct Violations {
    pub phi_factorization: f64,
    pub reconstruction: f64,
    pub consistency: f64,
    pub conjugate_closure: f64,
}

pub fn violations(d: &KoopmanDecomposition) -> Violations {
    let q = faer_complex(&d.basis.q);
    let sigma = &d.basis.sigma;
    let r = d.rank();

    // V̂ = Σ Qᵀ C since C = Q Σ⁺ V̂.
    let qt_c = q.transpose() * &d.efun_coeff;
    let v_hat = Mat::from_fn(r, r, |i, k| qt_c[(i, k)] * sigma[i]);
    let sigma_v = Mat::from_fn(r, r, |i, k| v_hat[(i, k)] * sigma[i]);
    let phi = &q * &sigma_v;
    let phi_factorization = complex_frobenius(&(&phi - &d.phi_x)) / complex_frobenius(&d.phi_x);

    let x = d.training_states();
    let product = &d.phi_x * &d.modes;
    let target = faer_complex(&projected_states(d));
    let reconstruction = complex_frobenius(&(&product - &target)) / x.norm_l2();

    let at_training = d.eigenfunctions_at(x.as_ref()).unwrap();
    let consistency = complex_frobenius(&(&at_training - &d.phi_x)) / complex_frobenius(&d.phi_x);

    let mut conjugate_closure: f64 = 0.0;
    let radius = d.mu[0].norm();
    for k in 0..r {
        let mu = d.mu[k];
        if mu.im.abs() <= 1e-10 * radius {
            continue;
        }
        let j = (0..r)
            .filter(|&j| j != k)
            .min_by(|&a, &b| {
                (d.mu[a] - mu.conj())
                    .norm()
                    .total_cmp(&(d.mu[b] - mu.conj()).norm())
            })
            .unwrap();
        let mode_k = row(&d.modes, k);
        let mode_j = row(&d.modes, j);
        let mode_gap = mode_k
            .iter()
            .zip(&mode_j)
            .map(|(a, b)| (a.conj() - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / norm(&mode_k);
        let phi_gap = (0..d.phi_x.nrows())
            .map(|m| (d.phi_x[(m, k)].conj() - d.phi_x[(m, j)]).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / (0..d.phi_x.nrows())
                .map(|m| d.phi_x[(m, k)].norm_sqr())
                .sum::<f64>()
                .sqrt();
        let value_gap = (d.mu[j] - mu.conj()).norm() / radius;
        conjugate_closure = conjugate_closure.max(value_gap).max(mode_gap).max(phi_gap);
    }

    Violations {
        phi_factorization,
        reconstruction,
        consistency,
        conjugate_closure,
    }
}

pub fn faer_complex(a: &Mat<f64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}
