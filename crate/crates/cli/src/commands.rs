//! The subcommands. Each returns a short summary for standard output and
//! writes its results below the configured output directory.

use std::path::PathBuf;
use std::time::Instant;

use faer::Mat;
use kernel_koopman::edmd::{edmd_fit, match_spectra, ExplicitDictionary};
use kernel_koopman::fhn::{find_equilibrium, generate_from, FhnConfig};
use kernel_koopman::kernels::normalize_snapshots;
use kernel_koopman::koopman::select_indices;
use kernel_koopman::{fit, FitOptions, KernelSpec, SnapshotSet};
use num_complex::Complex64 as c64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{DataFormat, Layout, RunConfig};
use crate::decomposition::{
    self, eigen_rows, EdmdModel, Metadata, Method, Model, SavedDecomposition, FORMAT_VERSION,
};
use crate::error::{CliError, CliResult};
use crate::formats::{
    fmt_f64, matrix_csv, read_snapshots, read_states, write_atomic, write_snapshots_binary,
    write_snapshots_csv, Table,
};

/// File stem of the decomposition written by `fit`.
pub const DECOMPOSITION_STEM: &str = "decomposition";

fn required(path: Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    path.ok_or_else(|| CliError::Config(format!("no {what} given (argument or [paths] entry)")))
}

/// The explicit dictionary whose inner products reproduce `kernel`.
pub fn dictionary_for(kernel: &KernelSpec, n: usize) -> CliResult<ExplicitDictionary> {
    match *kernel {
        KernelSpec::Polynomial { alpha } => Ok(ExplicitDictionary::polynomial(n, alpha, true)?),
        KernelSpec::Linear => Ok(ExplicitDictionary::identity(n)),
        KernelSpec::Gaussian { .. } => Err(CliError::Config(
            "the gaussian kernel has no finite explicit dictionary".into(),
        )),
    }
}

#[derive(Serialize)]
struct Manifest {
    crate_version: &'static str,
    command: &'static str,
    seed: u64,
    config_sha256: String,
    format: DataFormat,
    trajectories: usize,
    pairs: usize,
    state_dim: usize,
    dt: f64,
    equilibrium: String,
    files: Vec<String>,
    fhn: FhnConfig,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn to_toml<T: Serialize>(value: &T) -> CliResult<String> {
    toml::to_string(value).map_err(|e| CliError::Numerical(format!("cannot encode TOML: {e}")))
}

pub fn simulate(cfg: &RunConfig) -> CliResult<String> {
    let fhn = &cfg.fhn;
    fhn.validate()?;
    let out = &cfg.paths.out;
    let eq = find_equilibrium(fhn)?;
    let sets = generate_from(fhn, &eq)?;

    let mut files = Vec::new();
    for (i, set) in sets.iter().enumerate() {
        let stem = format!("trajectory_{i}");
        match cfg.simulate.format {
            DataFormat::Binary => {
                let name = format!("{stem}.kdmd");
                write_snapshots_binary(&out.join(&name), set)?;
                files.push(name);
            }
            DataFormat::Csv => {
                write_snapshots_csv(&out.join(&stem), set)?;
                files.push(format!("{stem}.x.csv"));
                files.push(format!("{stem}.y.csv"));
            }
        }
    }
    let eq_row = eq.to_physical(&fhn.basis());
    let eq_mat = Mat::from_fn(1, eq_row.len(), |_, j| eq_row[j]);
    let eq_name = "equilibrium.csv";
    write_atomic(
        &out.join(eq_name),
        matrix_csv("# equilibrium state, v then w\n", &eq_mat).as_bytes(),
    )?;

    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION"),
        command: "simulate",
        seed: fhn.seed,
        config_sha256: sha256_hex(to_toml(fhn)?.as_bytes()),
        format: cfg.simulate.format,
        trajectories: sets.len(),
        pairs: fhn.n_snapshots - 1,
        state_dim: fhn.state_dim(),
        dt: fhn.dt_sample,
        equilibrium: eq_name.into(),
        files,
        fhn: fhn.clone(),
    };
    write_atomic(&out.join("manifest.toml"), to_toml(&manifest)?.as_bytes())?;
    Ok(format!(
        "wrote {} trajectories of {} pairs x {} to {}",
        sets.len(),
        fhn.n_snapshots - 1,
        fhn.state_dim(),
        out.display()
    ))
}

fn relative_residual(model: &Model, data: &SnapshotSet) -> CliResult<f64> {
    let phi = model.eigenfunctions_at(data.x.as_ref())?;
    let recon = &phi * model.modes();
    let diff = Mat::from_fn(recon.nrows(), recon.ncols(), |i, j| {
        data.x[(i, j)] - recon[(i, j)].re
    });
    Ok(diff.norm_l2() / data.x.norm_l2())
}

fn eigenvalue_table(model: &Model) -> Table {
    let mut t = Table::new(&["index", "mu_re", "mu_im", "lambda_re", "lambda_im"]);
    for (k, m) in model.mu().iter().enumerate() {
        let l = model.lambda_at(k);
        t.push(&[
            k.to_string(),
            fmt_f64(m.re),
            fmt_f64(m.im),
            l.map(|l| fmt_f64(l.re)).unwrap_or_default(),
            l.map(|l| fmt_f64(l.im)).unwrap_or_default(),
        ]);
    }
    t
}

pub fn fit_command(cfg: &RunConfig, input: Option<PathBuf>) -> CliResult<String> {
    let input = required(
        input.or_else(|| cfg.paths.input.clone()),
        "input snapshot file",
    )?;
    let truncation = cfg.fit.truncation()?;
    let choice = cfg.fit.kernel()?;
    let data = read_snapshots(&input)?;
    let normalize = cfg.fit.normalize;

    let start = Instant::now();
    let (scaled, scale) = if normalize {
        normalize_snapshots(&data)?
    } else {
        (data.clone(), 1.0)
    };
    let kernel = choice.resolve(&scaled)?;
    let (model, diagnostics, eigenvector_condition) = match cfg.fit.method {
        Method::Kernel => {
            let d = fit(
                &data,
                &FitOptions {
                    kernel,
                    truncation,
                    normalize,
                },
            )?;
            let diag = d.diagnostics.clone();
            let cond = diag.eigenvector_condition;
            (Model::Kernel(d), Some(diag), cond)
        }
        Method::Edmd => {
            let dict = dictionary_for(&kernel, data.state_dim())?;
            let f = edmd_fit(&scaled, &dict, truncation)?;
            let cond = f.eigenvector_condition;
            (
                Model::Edmd(EdmdModel::from_fit(f, dict, scale, data.dt)),
                None,
                cond,
            )
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let residual = relative_residual(&model, &data)?;

    let out = &cfg.paths.out;
    let stem = out.join(DECOMPOSITION_STEM);
    let meta = Metadata {
        format_version: FORMAT_VERSION,
        method: cfg.fit.method,
        kernel,
        truncation,
        normalize,
        scale,
        dt: data.dt,
        snapshots: data.pairs(),
        state_dim: data.state_dim(),
        rank: model.mu().len(),
        reconstruction_residual: residual,
        eigenvector_condition,
        diagnostics,
        sidecar: format!("{DECOMPOSITION_STEM}.bin"),
        eigenvalues: eigen_rows(model.mu(), |k| model.lambda_at(k)),
    };
    let saved = SavedDecomposition { meta, model };
    decomposition::save(&stem, &saved)?;
    eigenvalue_table(&saved.model).write(&out.join("eigenvalues.csv"))?;
    // kept apart so that the decomposition itself is reproducible bit for bit
    write_atomic(
        &out.join("timing.toml"),
        format!("fit_seconds = {seconds}\n").as_bytes(),
    )?;

    let mut summary = format!(
        "rank {} fit ({}, {}) with reconstruction residual {:.3e}\n",
        saved.meta.rank, cfg.fit.method, kernel, residual
    );
    let mut order = select_indices(saved.model.mu(), data.dt, cfg.select.selection());
    order.truncate(cfg.select.top.unwrap_or(10));
    for k in order {
        let m = saved.model.mu()[k];
        match saved.model.lambda_at(k) {
            Some(l) => {
                summary.push_str(&format!("  {k:>4}  lambda = {:+.6} {:+.6}i\n", l.re, l.im))
            }
            None => summary.push_str(&format!("  {k:>4}  mu = {:+.6} {:+.6}i\n", m.re, m.im)),
        }
    }
    Ok(summary)
}

pub fn eval(
    cfg: &RunConfig,
    decomp: Option<PathBuf>,
    states: Option<PathBuf>,
) -> CliResult<String> {
    let decomp = required(
        decomp.or_else(|| cfg.paths.decomposition.clone()),
        "decomposition",
    )?;
    let states_path = required(states.or_else(|| cfg.paths.states.clone()), "states file")?;
    let saved = decomposition::load(&decomp)?;
    let states = read_states(&states_path)?;
    let rank = saved.model.mu().len();
    let n = saved.model.state_dim();

    let mut efun_cols = vec!["row".to_string()];
    for k in 0..rank {
        efun_cols.push(format!("phi{k}_re"));
        efun_cols.push(format!("phi{k}_im"));
    }
    let mut pred_cols = vec!["row".to_string()];
    pred_cols.extend((0..n).map(|j| format!("y{j}")));
    let mut efun = Table::new(&efun_cols);
    let mut pred = Table::new(&pred_cols);

    if states.nrows() > 0 {
        if states.ncols() != n {
            return Err(CliError::Data(format!(
                "states have {} columns but the decomposition expects {n}",
                states.ncols()
            )));
        }
        let phi = saved.model.eigenfunctions_at(states.as_ref())?;
        let y = saved.model.predict(states.as_ref())?;
        for i in 0..states.nrows() {
            let mut row = vec![i.to_string()];
            for k in 0..rank {
                row.push(fmt_f64(phi[(i, k)].re));
                row.push(fmt_f64(phi[(i, k)].im));
            }
            efun.push(&row);
            let mut row = vec![i.to_string()];
            row.extend((0..n).map(|j| fmt_f64(y[(i, j)])));
            pred.push(&row);
        }
    }
    let out = &cfg.paths.out;
    efun.write(&out.join("eigenfunctions.csv"))?;
    pred.write(&out.join("predictions.csv"))?;
    Ok(format!(
        "evaluated {} states into {}",
        states.nrows(),
        out.display()
    ))
}

pub fn compare(cfg: &RunConfig, a: Option<PathBuf>, b: Option<PathBuf>) -> CliResult<String> {
    let a = required(
        a.or_else(|| cfg.paths.decomposition.clone()),
        "first decomposition",
    )?;
    let b = required(
        b.or_else(|| cfg.paths.other.clone()),
        "second decomposition",
    )?;
    let tol = cfg.compare.tolerance;
    if tol.is_nan() || tol < 0.0 {
        return Err(CliError::Config(format!(
            "tolerance {tol} must be non-negative"
        )));
    }
    let da = decomposition::load(&a)?;
    let db = decomposition::load(&b)?;
    let (ma, mb) = (da.model.mu(), db.model.mu());
    let report = match_spectra(ma, mb, tol);

    let mut table = Table::new(&[
        "status", "a_index", "b_index", "a_re", "a_im", "b_re", "b_im", "distance", "relative",
    ]);
    let cell = |v: c64| [fmt_f64(v.re), fmt_f64(v.im)];
    for p in &report.matched {
        let [ar, ai] = cell(ma[p.a]);
        let [br, bi] = cell(mb[p.b]);
        table.push(&[
            "matched".into(),
            p.a.to_string(),
            p.b.to_string(),
            ar,
            ai,
            br,
            bi,
            fmt_f64(p.distance),
            fmt_f64(p.relative),
        ]);
    }
    let lone = |status: &str, side_a: bool, idx: &[usize], table: &mut Table| {
        for &i in idx {
            let v = if side_a { ma[i] } else { mb[i] };
            let [re, im] = cell(v);
            let (ai, bi, ar, aim, br, bim) = if side_a {
                (
                    i.to_string(),
                    String::new(),
                    re,
                    im,
                    String::new(),
                    String::new(),
                )
            } else {
                (
                    String::new(),
                    i.to_string(),
                    String::new(),
                    String::new(),
                    re,
                    im,
                )
            };
            table.push(&[
                status.into(),
                ai,
                bi,
                ar,
                aim,
                br,
                bim,
                String::new(),
                String::new(),
            ]);
        }
    };
    lone("unmatched", true, &report.unmatched_a, &mut table);
    lone("unmatched", false, &report.unmatched_b, &mut table);
    lone("zero", true, &report.zero_a, &mut table);
    lone("zero", false, &report.zero_b, &mut table);
    table.write(&cfg.paths.out.join("compare.csv"))?;

    Ok(format!(
        "matched {} (max distance {:.3e}, max relative {:.3e}); unmatched {} in A, {} in B; zero {} in A, {} in B",
        report.matched.len(),
        report.max_distance,
        report.max_relative,
        report.unmatched_a.len(),
        report.unmatched_b.len(),
        report.zero_a.len(),
        report.zero_b.len()
    ))
}

/// `(field, coordinate)` labels for the state entries.
fn coordinates(layout: Layout, length: f64, n: usize) -> CliResult<Vec<(&'static str, f64)>> {
    match layout {
        Layout::Flat => Ok((0..n).map(|j| ("state", j as f64)).collect()),
        Layout::Fhn => {
            if !n.is_multiple_of(2) || n == 0 {
                return Err(CliError::Config(format!(
                    "the fhn layout needs an even state dimension, found {n}"
                )));
            }
            if !(length > 0.0 && length.is_finite()) {
                return Err(CliError::Config("export length must be positive".into()));
            }
            let half = n / 2;
            let h = length / half as f64;
            Ok((0..n)
                .map(|j| {
                    let field = if j < half { "v" } else { "w" };
                    (field, ((j % half) as f64 + 0.5) * h)
                })
                .collect())
        }
    }
}

pub fn export_plots(cfg: &RunConfig, decomp: Option<PathBuf>) -> CliResult<String> {
    let decomp = required(
        decomp.or_else(|| cfg.paths.decomposition.clone()),
        "decomposition",
    )?;
    let saved = decomposition::load(&decomp)?;
    let model = &saved.model;
    let n = model.state_dim();
    let coords = coordinates(cfg.export.layout, cfg.export.length, n)?;
    let mut order = select_indices(model.mu(), saved.meta.dt, cfg.select.selection());
    if let Some(top) = cfg.select.top {
        order.truncate(top);
    }

    let dt = saved.meta.dt.unwrap_or(1.0);
    let mut scatter = Table::new(&["index", "lambda_re", "lambda_im", "mu_re", "mu_im"]);
    let mut modes = Table::new(&["index", "field", "x", "re", "im"]);
    for &k in &order {
        let mu = model.mu()[k];
        let l = model.lambda_at(k).unwrap_or_else(|| mu.ln() / dt);
        scatter.push(&[
            k.to_string(),
            fmt_f64(l.re),
            fmt_f64(l.im),
            fmt_f64(mu.re),
            fmt_f64(mu.im),
        ]);
        for (j, (field, x)) in coords.iter().enumerate() {
            let v = model.modes()[(k, j)];
            modes.push(&[
                k.to_string(),
                field.to_string(),
                fmt_f64(*x),
                fmt_f64(v.re),
                fmt_f64(v.im),
            ]);
        }
    }
    let out = &cfg.paths.out;
    scatter.write(&out.join("eigenvalue_scatter.csv"))?;
    modes.write(&out.join("mode_profiles.csv"))?;
    Ok(format!(
        "exported {} tuples to {}",
        order.len(),
        out.display()
    ))
}
