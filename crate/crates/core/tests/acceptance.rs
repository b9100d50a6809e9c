//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit status
//! if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use faer::Mat;
use kernel_koopman::edmd::{edmd_fit, match_spectra, ExplicitDictionary};
use kernel_koopman::fhn::{
    find_equilibrium, generate_from, linearization_oracle, FhnConfig, Linearization,
};
use kernel_koopman::{
    fit, FitOptions, KernelSpec, KoopmanDecomposition, Selection, SnapshotSet, TruncationPolicy,
};
use num_complex::Complex64 as c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const THRESHOLD: TruncationPolicy = TruncationPolicy::RelativeThreshold(1e-10);
const REFERENCE_PAIR: c64 = c64::new(-0.006, 0.053);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn seconds(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Kernel pipeline against explicit Extended DMD on random small problems.
fn oracle_equivalence(fits: &mut Vec<KoopmanDecomposition>) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for instance in 0..20 {
        let n = rng.random_range(1..=3);
        let alpha = rng.random_range(1..=3u32);
        let m = rng.random_range(10..=30);
        let data = nonlinear_pairs(rng.random(), m, n);
        let options = FitOptions {
            kernel: KernelSpec::Polynomial { alpha },
            truncation: THRESHOLD,
            normalize: false,
        };
        let d = fit(&data, &options).expect("kernel fit");
        let dict = ExplicitDictionary::polynomial(n, alpha, true).expect("dictionary");
        let oracle = edmd_fit(&data, &dict, THRESHOLD).expect("explicit fit");
        let report = match_spectra(&d.mu, &oracle.values, 1e-3);
        worst = worst.max(report.max_relative);
        if !report.all_matched() || report.max_relative > 1e-6 {
            failures.push(format!("#{instance} (N={n}, α={alpha}, M={m})"));
        }
        fits.push(d);
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(10);
    Outcome::new(
        pass,
        format!(
            "20 instances, worst relative eigenvalue gap {worst:.1e} (limit 1e-6), {:.2} s (limit 10 s){}",
            seconds(elapsed),
            if failures.is_empty() { String::new() } else { format!(", failed: {}", failures.join(" ")) }
        ),
    )
}

fn linear_vs_dmd(data: &SnapshotSet) -> (SnapshotSetReport, KoopmanDecomposition) {
    let d = fit(
        data,
        &FitOptions {
            kernel: KernelSpec::Linear,
            truncation: THRESHOLD,
            normalize: false,
        },
    )
    .expect("linear fit");
    let dmd = edmd_fit(
        data,
        &ExplicitDictionary::identity(data.state_dim()),
        THRESHOLD,
    )
    .expect("dmd");
    let report = match_spectra(&d.mu, &dmd.values, 1e-8);
    (
        SnapshotSetReport {
            matched: report.matched.len(),
            all: report.all_matched(),
            max_distance: report.max_distance,
        },
        d,
    )
}

struct SnapshotSetReport {
    matched: usize,
    all: bool,
    max_distance: f64,
}

/// Linear kernel against DMD on an exact linear system and on FHN data.
fn dmd_equivalence(fhn: &SnapshotSet, fits: &mut Vec<KoopmanDecomposition>) -> Outcome {
    let data = diagonal_pairs(2, 20);
    let (small, d) = linear_vs_dmd(&data);
    let mut exact = true;
    let mut worst_cos: f64 = 1.0;
    for (target, axis) in [(0.9, 0), (0.5, 1)] {
        let k = (0..d.rank())
            .min_by(|&a, &b| {
                (d.mu[a] - target)
                    .norm()
                    .total_cmp(&(d.mu[b] - target).norm())
            })
            .unwrap();
        exact &= (d.mu[k] - target).norm() < 1e-10;
        let mut e = vec![c64::new(0.0, 0.0); 2];
        e[axis] = c64::new(1.0, 0.0);
        worst_cos = worst_cos.min(cosine(&row(&d.modes, k), &e));
    }
    fits.push(d);

    let start = Instant::now();
    let (large, d) = linear_vs_dmd(fhn);
    let elapsed = start.elapsed();
    fits.push(d);

    let pass = small.all
        && exact
        && worst_cos > 1.0 - 1e-8
        && large.all
        && elapsed < Duration::from_secs(120);
    Outcome::new(
        pass,
        format!(
            "2-state: {} matched, eigenvalues exact to 1e-10: {exact}, min mode cosine {worst_cos:.12}; \
             FHN: {} matched (all: {}), max gap {:.1e} (limit 1e-8), {:.2} s",
            small.matched,
            large.matched,
            large.all,
            large.max_distance,
            seconds(elapsed)
        ),
    )
}

/// Fitted quantities for one FHN data set.
struct FhnRun {
    lambda: Vec<Option<c64>>,
    l1: usize,
    l2: usize,
    l3: usize,
    /// Real eigenvalue nearest `2 Re λ₂`.
    l4: Option<usize>,
    /// Eigenvalue nearest `λ₄ + λ₂`.
    l7: Option<usize>,
    fit_time: Duration,
    decomposition: KoopmanDecomposition,
}

fn nearest(lambda: &[Option<c64>], target: c64, skip: &[usize]) -> Option<(usize, f64)> {
    lambda
        .iter()
        .enumerate()
        .filter(|(k, _)| !skip.contains(k))
        .filter_map(|(k, l)| l.map(|l| (k, (l - target).norm())))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

fn fhn_fit(data: &SnapshotSet, lin: &Linearization) -> FhnRun {
    let start = Instant::now();
    let options = FitOptions {
        kernel: KernelSpec::Polynomial { alpha: 20 },
        truncation: TruncationPolicy::FixedRank(150),
        normalize: true,
    };
    let d = fit(data, &options).expect("FHN fit");
    let fit_time = start.elapsed();
    let lambda = d.lambda.clone().expect("sampled data");
    let l1 = d
        .select(Selection::SlowestDecay)
        .into_iter()
        .min_by(|&a, &b| {
            lambda[a]
                .unwrap()
                .norm()
                .total_cmp(&lambda[b].unwrap().norm())
        })
        .unwrap();
    // λ₂ is the fitted eigenvalue closest to the upper slow eigenvalue of
    // the linearization.
    let upper = lin
        .values
        .iter()
        .take(2)
        .find(|v| v.im > 0.0)
        .copied()
        .unwrap();
    let (l2, _) = nearest(&lambda, upper, &[l1]).unwrap();
    let (l3, _) = nearest(&lambda, lambda[l2].unwrap().conj(), &[l1, l2]).unwrap();
    let taken = [l1, l2, l3];
    let rate = lambda[l2].unwrap().re;
    let l4 = lambda
        .iter()
        .enumerate()
        .filter(|(k, l)| !taken.contains(k) && l.is_some_and(|l| l.im == 0.0))
        .map(|(k, l)| (k, (l.unwrap().re - 2.0 * rate).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|x| x.0);
    let l7 = nearest(
        &lambda,
        c64::new(3.0 * rate, lambda[l2].unwrap().im),
        &taken,
    )
    .map(|x| x.0);
    FhnRun {
        lambda,
        l1,
        l2,
        l3,
        l4,
        l7,
        fit_time,
        decomposition: d,
    }
}

fn eigenvalue_reproduction(runs: &[FhnRun], generation: Duration) -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for (seed, run) in runs.iter().enumerate() {
        let lambda = &run.lambda;
        let l1 = lambda[run.l1].unwrap();
        let l2 = lambda[run.l2].unwrap();
        let pair = (l2 - REFERENCE_PAIR)
            .norm()
            .max((lambda[run.l3].unwrap() - REFERENCE_PAIR.conj()).norm());
        let gap = |k: Option<usize>, target: c64| {
            k.map_or(f64::INFINITY, |k| (lambda[k].unwrap() - target).norm())
        };
        let real = gap(run.l4, c64::new(2.0 * l2.re, 0.0));
        let layer = gap(run.l7, c64::new(3.0 * l2.re, l2.im));

        let ok_1 = l1.norm() < 5e-3;
        let ok_pair = pair < 6e-3;
        let ok_real = real < 6e-3;
        let ok_layer = layer < 8e-3;
        let ok_time = run.fit_time + generation < Duration::from_secs(900);
        pass &= ok_1 && ok_pair && ok_real && ok_layer && ok_time;
        lines.push(format!(
            "seed {seed}: |λ₁|={:.1e}{} λ₂={:.5}{:+.5}i gap to -0.006+0.053i {pair:.2e}{} \
             2Reλ₂ gap {real:.1e}{} λ₄+λ₂ gap {layer:.1e}{}",
            l1.norm(),
            mark(ok_1),
            l2.re,
            l2.im,
            mark(ok_pair),
            mark(ok_real),
            mark(ok_layer),
        ));
    }
    Outcome::new(pass, lines.join("; "))
}

fn mark(ok: bool) -> &'static str {
    if ok {
        ""
    } else {
        " (out of tolerance)"
    }
}

fn mode_accuracy(runs: &[FhnRun], eq: &[f64], lin: &Linearization) -> Outcome {
    let eq: Vec<c64> = eq.iter().map(|&v| c64::new(v, 0.0)).collect();
    let n = eq.len();
    let upper = (0..2).find(|&j| lin.values[j].im > 0.0).unwrap();
    let true_2: Vec<c64> = (0..n).map(|i| lin.vectors[(i, upper)]).collect();
    let true_3: Vec<c64> = true_2.iter().map(|z| z.conj()).collect();

    let mut good = 0;
    let mut lines = Vec::new();
    for run in runs {
        let d = &run.decomposition;
        let l3 = run.l3;
        let e1 = aligned_distance(&row(&d.modes, run.l1), &eq);
        let e2 = aligned_distance(&row(&d.modes, run.l2), &true_2);
        let e3 = aligned_distance(&row(&d.modes, l3), &true_3);
        if e1 < 0.015 && e2 < 0.03 && e3 < 0.03 {
            good += 1;
        }
        lines.push(format!("{e1:.1e}/{e2:.1e}/{e3:.1e}"));
    }
    Outcome::new(
        good >= 4,
        format!(
            "{good}/5 seeds within ‖ξ₁‖<0.015, ‖ξ₂,₃‖<0.03 (need 4); errors ξ₁/ξ₂/ξ₃ per seed: {}",
            lines.join(", ")
        ),
    )
}

fn identity_check(
    fits: &[KoopmanDecomposition],
    pick: impl Fn(&Violations) -> f64,
    what: &str,
) -> (bool, String) {
    let values: Vec<f64> = fits.iter().map(|d| pick(&violations(d))).collect();
    let worst = values.iter().copied().fold(0.0, f64::max);
    let failing: Vec<String> = values
        .iter()
        .zip(fits)
        .filter(|(v, _)| **v > 1e-8)
        .map(|(v, d)| {
            format!(
                "{v:.1e} at M={} r={} retained condition {:.1e}",
                d.basis.snapshots(),
                d.rank(),
                d.basis.retained_condition()
            )
        })
        .collect();
    let mut text = format!(
        "{what} over {} fits: worst {worst:.1e} (limit 1e-8)",
        fits.len()
    );
    if !failing.is_empty() {
        text.push_str(&format!("; over the limit: {}", failing.join(", ")));
    }
    (worst <= 1e-8, text)
}

fn reconstruction_identity(fits: &[KoopmanDecomposition]) -> Outcome {
    let (ok, text) = identity_check(fits, |v| v.reconstruction, "‖ΦxΞ − QQᵀX‖/‖X‖");
    let data = nonlinear_pairs(17, 12, 3);
    let d = fit(
        &data,
        &FitOptions {
            kernel: KernelSpec::Gaussian { sigma: 1.5 },
            truncation: TruncationPolicy::FixedRank(12),
            normalize: false,
        },
    )
    .expect("full-rank fit");
    let (_, residual) = d.reconstruct();
    let full = d.rank() == 12 && residual <= 1e-8;
    Outcome::new(
        ok && full,
        format!("{text}; r = M = 12 residual {residual:.1e}"),
    )
}

fn eigenfunction_consistency(fits: &[KoopmanDecomposition]) -> Outcome {
    let (ok, text) = identity_check(fits, |v| v.consistency, "‖φ(X) − Φx‖/‖Φx‖");
    Outcome::new(ok, text)
}

fn stability(runs: &[FhnRun]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut unstable = 0;
    let mut retained = 0;
    for run in runs {
        let identified = [Some(run.l1), Some(run.l2), Some(run.l3), run.l4, run.l7];
        for k in identified.into_iter().flatten() {
            worst = worst.max(run.lambda[k].unwrap().re);
        }
        for l in run.lambda.iter().flatten() {
            retained += 1;
            if l.re > 1e-3 {
                unstable += 1;
            }
        }
    }
    Outcome::new(
        worst <= 1e-3,
        format!(
            "max Re λ over λ₁, λ₂,₃, λ₄, λ₇ of every seed {worst:.2e} (limit 1e-3); \
             {unstable} of all {retained} retained eigenvalues have Re λ > 1e-3"
        ),
    )
}

/// Noisy samples of `ẋ = x − ωy − x r²`, `ẏ = ωx + y − y r²` along one
/// trajectory that starts inside the unit limit cycle.
fn hopf_data(omega: f64, dt: f64, pairs: usize, noise: f64, seed: u64) -> SnapshotSet {
    let flow = |r0: f64, theta0: f64, t: f64| {
        let r = r0 / (r0 * r0 + (1.0 - r0 * r0) * (-2.0 * t).exp()).sqrt();
        let theta = theta0 + omega * t;
        [r * theta.cos(), r * theta.sin()]
    };
    let normal = Normal::new(0.0, noise).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = |t: f64| {
        let [x, y] = flow(0.3, 0.0, t);
        [x + normal.sample(&mut rng), y + normal.sample(&mut rng)]
    };
    let mut x = Mat::zeros(pairs, 2);
    let mut y = Mat::zeros(pairs, 2);
    for m in 0..pairs {
        let t = m as f64 * dt;
        let (a, b) = (sample(t), sample(t + dt));
        for j in 0..2 {
            x[(m, j)] = a[j];
            y[(m, j)] = b[j];
        }
    }
    SnapshotSet::new(x, y, Some(dt)).unwrap()
}

fn noisy_limit_cycle() -> Outcome {
    let omega = 1.0;
    let data = hopf_data(omega, 0.1, 1000, 0.01, 8);
    let d = fit(
        &data,
        &FitOptions {
            kernel: KernelSpec::Polynomial { alpha: 4 },
            truncation: THRESHOLD,
            normalize: true,
        },
    )
    .expect("Hopf fit");
    let lambda = d.lambda.clone().unwrap();
    let leading: Vec<c64> = d
        .select(Selection::TopN(3))
        .into_iter()
        .map(|k| lambda[k].unwrap())
        .collect();
    let near_axis = leading.iter().all(|l| l.re.abs() <= 0.05);
    let frequency = leading
        .iter()
        .map(|l| l.im.abs())
        .min_by(|a, b| (a - omega).abs().total_cmp(&(b - omega).abs()))
        .unwrap();
    let ok_freq = (frequency - omega).abs() <= 0.05 * omega;
    let shown: Vec<String> = leading
        .iter()
        .map(|l| format!("{:.4}{:+.4}i", l.re, l.im))
        .collect();
    Outcome::new(
        near_axis && ok_freq,
        format!(
            "leading λ: {}; frequency {frequency:.4} vs {omega} (limit 5%)",
            shown.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let mut fits = Vec::new();
    let mut outcomes: Vec<(u32, &str, Outcome)> = Vec::new();

    outcomes.push((1, "oracle equivalence", oracle_equivalence(&mut fits)));

    let cfg = FhnConfig::default();
    let start = Instant::now();
    let eq = find_equilibrium(&cfg).expect("equilibrium");
    let datasets = generate_from(&cfg, &eq).expect("FHN data");
    let generation = start.elapsed();
    let lin = linearization_oracle(&cfg, &eq).expect("linearization");

    outcomes.push((
        2,
        "DMD equivalence",
        dmd_equivalence(&datasets[0], &mut fits),
    ));

    let runs: Vec<FhnRun> = datasets.iter().map(|data| fhn_fit(data, &lin)).collect();
    outcomes.push((
        3,
        "FHN eigenvalues",
        eigenvalue_reproduction(&runs, generation),
    ));
    outcomes.push((
        4,
        "FHN modes",
        mode_accuracy(&runs, &eq.to_physical(&cfg.basis()), &lin),
    ));
    fits.extend(runs.iter().map(|r| r.decomposition.clone()));

    outcomes.push((5, "reconstruction identity", reconstruction_identity(&fits)));
    outcomes.push((
        6,
        "eigenfunction consistency",
        eigenfunction_consistency(&fits),
    ));
    outcomes.push((7, "stable spectrum", stability(&runs)));
    outcomes.push((8, "noisy limit cycle", noisy_limit_cycle()));

    println!(
        "FHN: {} data sets of {} pairs generated in {:.1} s; linearization λ₂,₃ = {:.6} ± {:.6}i",
        datasets.len(),
        datasets[0].pairs(),
        seconds(generation),
        lin.values[0].re,
        lin.values[0].im.abs()
    );
    let mut failed = 0;
    for (number, name, outcome) in &outcomes {
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        if !outcome.pass {
            failed += 1;
        }
        println!("criterion {number} ({name}): {status}: {}", outcome.detail);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        outcomes.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
