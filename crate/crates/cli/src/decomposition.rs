//! Saved decompositions: a TOML document with metadata and the eigenvalue
//! table, plus a binary sidecar holding the matrices.
//!
//! Sidecar layout, little-endian:
//!
//! ```text
//! "KDMX" | version u32 | count u32
//! per matrix: name length u32 | name utf-8 | kind u8 (0 real, 1 complex)
//!             rows u64 | cols u64 | row-major f64 data, complex as (re, im)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use faer::{Mat, MatRef};
use kernel_koopman::edmd::{EdmdFit, ExplicitDictionary};
use kernel_koopman::koopman::{continuous_eigenvalues, FitDiagnostics};
use kernel_koopman::{KernelSpec, KoopmanDecomposition, TruncatedBasis, TruncationPolicy};
use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::formats::write_atomic;

pub const SIDECAR_MAGIC: &[u8; 4] = b"KDMX";
pub const SIDECAR_VERSION: u32 = 1;
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Kernel Extended DMD.
    #[default]
    Kernel,
    /// Extended DMD with the explicit dictionary matching the kernel.
    Edmd,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Kernel => "kernel",
            Method::Edmd => "edmd",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenRow {
    pub mu_re: f64,
    pub mu_im: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_re: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_im: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub format_version: u32,
    pub method: Method,
    pub kernel: KernelSpec,
    pub truncation: TruncationPolicy,
    pub normalize: bool,
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub snapshots: usize,
    pub state_dim: usize,
    pub rank: usize,
    pub reconstruction_residual: f64,
    pub eigenvector_condition: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<FitDiagnostics>,
    pub sidecar: String,
    pub eigenvalues: Vec<EigenRow>,
}

/// Explicit-dictionary tuples with enough context to evaluate them.
#[derive(Debug, Clone)]
pub struct EdmdModel {
    pub dictionary: ExplicitDictionary,
    pub mu: Vec<c64>,
    pub lambda: Option<Vec<Option<c64>>>,
    /// Column `k` holds the dictionary coefficients of `φ_k`.
    pub coefficients: Mat<c64>,
    /// Modes in physical units, one per row.
    pub modes: Mat<c64>,
    pub scale: f64,
}

impl EdmdModel {
    pub fn from_fit(
        fit: EdmdFit,
        dictionary: ExplicitDictionary,
        scale: f64,
        dt: Option<f64>,
    ) -> Self {
        let modes = Mat::from_fn(fit.modes.nrows(), fit.modes.ncols(), |i, j| {
            fit.modes[(i, j)] / scale
        });
        Self {
            lambda: continuous_eigenvalues(&fit.values, dt),
            mu: fit.values,
            coefficients: fit.coefficients,
            modes,
            dictionary,
            scale,
        }
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Model {
    Kernel(KoopmanDecomposition),
    Edmd(EdmdModel),
}

impl Model {
    pub fn mu(&self) -> &[c64] {
        match self {
            Model::Kernel(d) => &d.mu,
            Model::Edmd(e) => &e.mu,
        }
    }

    pub fn lambda_at(&self, k: usize) -> Option<c64> {
        let lambda = match self {
            Model::Kernel(d) => d.lambda.as_ref(),
            Model::Edmd(e) => e.lambda.as_ref(),
        };
        lambda.and_then(|l| l[k])
    }

    pub fn modes(&self) -> &Mat<c64> {
        match self {
            Model::Kernel(d) => &d.modes,
            Model::Edmd(e) => &e.modes,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.modes().ncols()
    }

    /// Eigenfunction values at each row of `states` (physical units).
    pub fn eigenfunctions_at(&self, states: MatRef<'_, f64>) -> CliResult<Mat<c64>> {
        match self {
            Model::Kernel(d) => Ok(d.eigenfunctions_at(states)?),
            Model::Edmd(e) => {
                if states.ncols() != e.dictionary.n {
                    return Err(kernel_koopman::Error::DimensionMismatch {
                        expected: e.dictionary.n,
                        found: states.ncols(),
                    }
                    .into());
                }
                let mut lifted = Mat::<c64>::zeros(states.nrows(), e.dictionary.len());
                for i in 0..states.nrows() {
                    let x: Vec<f64> = (0..states.ncols())
                        .map(|j| states[(i, j)] * e.scale)
                        .collect();
                    for (j, f) in e.dictionary.features(&x).into_iter().enumerate() {
                        lifted[(i, j)] = c64::new(f, 0.0);
                    }
                }
                Ok(&lifted * &e.coefficients)
            }
        }
    }

    /// One-step predictions `Re Σ_k μ_k ξ_k φ_k(x)` for each row.
    pub fn predict(&self, states: MatRef<'_, f64>) -> CliResult<Mat<f64>> {
        let phi = self.eigenfunctions_at(states)?;
        let mu = self.mu();
        let weighted = Mat::from_fn(phi.nrows(), phi.ncols(), |i, k| phi[(i, k)] * mu[k]);
        let out = &weighted * self.modes();
        Ok(Mat::from_fn(out.nrows(), out.ncols(), |i, j| {
            out[(i, j)].re
        }))
    }
}

#[derive(Debug, Clone)]
pub struct SavedDecomposition {
    pub meta: Metadata,
    pub model: Model,
}

enum Block {
    Real(Mat<f64>),
    Complex(Mat<c64>),
}

fn real_row(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(1, v.len(), |_, j| v[j])
}

fn complex_row(v: &[c64]) -> Mat<c64> {
    Mat::from_fn(1, v.len(), |_, j| v[j])
}

fn encode_sidecar(blocks: &[(&str, Block)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(SIDECAR_MAGIC);
    out.extend_from_slice(&SIDECAR_VERSION.to_le_bytes());
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for (name, block) in blocks {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let (kind, rows, cols) = match block {
            Block::Real(m) => (0u8, m.nrows(), m.ncols()),
            Block::Complex(m) => (1u8, m.nrows(), m.ncols()),
        };
        out.push(kind);
        out.extend_from_slice(&(rows as u64).to_le_bytes());
        out.extend_from_slice(&(cols as u64).to_le_bytes());
        for i in 0..rows {
            for j in 0..cols {
                match block {
                    Block::Real(m) => out.extend_from_slice(&m[(i, j)].to_le_bytes()),
                    Block::Complex(m) => {
                        out.extend_from_slice(&m[(i, j)].re.to_le_bytes());
                        out.extend_from_slice(&m[(i, j)].im.to_le_bytes());
                    }
                }
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, k: usize) -> CliResult<&[u8]> {
        if self.at + k > self.bytes.len() {
            return Err(CliError::Data("decomposition sidecar is truncated".into()));
        }
        let s = &self.bytes[self.at..self.at + k];
        self.at += k;
        Ok(s)
    }

    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> CliResult<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| CliError::Data("matrix dimension overflows".into()))
    }

    fn f64(&mut self) -> CliResult<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode_sidecar(bytes: &[u8]) -> CliResult<BTreeMap<String, Block>> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != SIDECAR_MAGIC {
        return Err(CliError::Data(
            "decomposition sidecar lacks KDMX magic".into(),
        ));
    }
    let version = r.u32()?;
    if version != SIDECAR_VERSION {
        return Err(CliError::Data(format!(
            "unsupported sidecar version {version}"
        )));
    }
    let count = r.u32()?;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| CliError::Data("matrix name is not utf-8".into()))?;
        let kind = r.take(1)?[0];
        let (rows, cols) = (r.u64()?, r.u64()?);
        let width = if kind == 0 { 8 } else { 16 };
        if rows.saturating_mul(cols).saturating_mul(width) > bytes.len() - r.at {
            return Err(CliError::Data("decomposition sidecar is truncated".into()));
        }
        let block = match kind {
            0 => {
                let mut m = Mat::zeros(rows, cols);
                for i in 0..rows {
                    for j in 0..cols {
                        m[(i, j)] = r.f64()?;
                    }
                }
                Block::Real(m)
            }
            1 => {
                let mut m = Mat::<c64>::zeros(rows, cols);
                for i in 0..rows {
                    for j in 0..cols {
                        m[(i, j)] = c64::new(r.f64()?, r.f64()?);
                    }
                }
                Block::Complex(m)
            }
            k => return Err(CliError::Data(format!("unknown matrix kind {k}"))),
        };
        out.insert(name, block);
    }
    if r.at != bytes.len() {
        return Err(CliError::Data(
            "trailing bytes in decomposition sidecar".into(),
        ));
    }
    Ok(out)
}

/// `stem.toml` and `stem.bin`.
pub fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("toml"), stem.with_extension("bin"))
}

pub fn eigen_rows(mu: &[c64], lambda_at: impl Fn(usize) -> Option<c64>) -> Vec<EigenRow> {
    mu.iter()
        .enumerate()
        .map(|(k, m)| {
            let l = lambda_at(k);
            EigenRow {
                mu_re: m.re,
                mu_im: m.im,
                lambda_re: l.map(|l| l.re),
                lambda_im: l.map(|l| l.im),
            }
        })
        .collect()
}

fn blocks_for(model: &Model) -> Vec<(&'static str, Block)> {
    match model {
        Model::Kernel(d) => vec![
            ("mu", Block::Complex(complex_row(&d.mu))),
            ("q", Block::Real(d.basis.q.clone())),
            ("sigma", Block::Real(real_row(&d.basis.sigma))),
            ("spectrum", Block::Real(real_row(&d.basis.spectrum))),
            ("phi_x", Block::Complex(d.phi_x.clone())),
            ("modes", Block::Complex(d.modes.clone())),
            ("efun_coeff", Block::Complex(d.efun_coeff.clone())),
            ("x_train", Block::Real(d.x_train.clone())),
        ],
        Model::Edmd(e) => vec![
            ("mu", Block::Complex(complex_row(&e.mu))),
            ("coefficients", Block::Complex(e.coefficients.clone())),
            ("modes", Block::Complex(e.modes.clone())),
        ],
    }
}

/// Writes `stem.toml` and `stem.bin`.
pub fn save(stem: &Path, saved: &SavedDecomposition) -> CliResult<()> {
    let (meta_path, bin_path) = paths(stem);
    let text = toml::to_string(&saved.meta)
        .map_err(|e| CliError::Numerical(format!("cannot encode metadata: {e}")))?;
    write_atomic(&bin_path, &encode_sidecar(&blocks_for(&saved.model)))?;
    write_atomic(&meta_path, text.as_bytes())
}

fn take_real(blocks: &mut BTreeMap<String, Block>, name: &str) -> CliResult<Mat<f64>> {
    match blocks.remove(name) {
        Some(Block::Real(m)) => Ok(m),
        _ => Err(CliError::Data(format!(
            "sidecar lacks real matrix '{name}'"
        ))),
    }
}

fn take_complex(blocks: &mut BTreeMap<String, Block>, name: &str) -> CliResult<Mat<c64>> {
    match blocks.remove(name) {
        Some(Block::Complex(m)) => Ok(m),
        _ => Err(CliError::Data(format!(
            "sidecar lacks complex matrix '{name}'"
        ))),
    }
}

fn row_values<T: Copy>(m: &Mat<T>) -> Vec<T> {
    (0..m.ncols()).map(|j| m[(0, j)]).collect()
}

/// Reads a decomposition given its `.toml` path (or stem).
pub fn load(path: &Path) -> CliResult<SavedDecomposition> {
    let meta_path = path.with_extension("toml");
    let text = fs::read_to_string(&meta_path).map_err(|e| CliError::read(&meta_path, e))?;
    let meta: Metadata = toml::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", meta_path.display())))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(CliError::Data(format!(
            "unsupported decomposition version {}",
            meta.format_version
        )));
    }
    let bin_path = meta_path.with_file_name(&meta.sidecar);
    let bytes = fs::read(&bin_path).map_err(|e| CliError::read(&bin_path, e))?;
    let mut blocks = decode_sidecar(&bytes)?;
    let mu = row_values(&take_complex(&mut blocks, "mu")?);
    let modes = take_complex(&mut blocks, "modes")?;
    if mu.len() != meta.rank || modes.nrows() != meta.rank || modes.ncols() != meta.state_dim {
        return Err(CliError::Data(
            "sidecar shapes disagree with the metadata".into(),
        ));
    }
    let model = match meta.method {
        Method::Kernel => {
            let basis = TruncatedBasis {
                q: take_real(&mut blocks, "q")?,
                sigma: row_values(&take_real(&mut blocks, "sigma")?),
                spectrum: row_values(&take_real(&mut blocks, "spectrum")?),
            };
            Model::Kernel(KoopmanDecomposition {
                lambda: continuous_eigenvalues(&mu, meta.dt),
                mu,
                phi_x: take_complex(&mut blocks, "phi_x")?,
                modes,
                efun_coeff: take_complex(&mut blocks, "efun_coeff")?,
                basis,
                kernel: meta.kernel,
                x_train: take_real(&mut blocks, "x_train")?,
                scale: meta.scale,
                dt: meta.dt,
                diagnostics: meta.diagnostics.clone().unwrap_or_default(),
            })
        }
        Method::Edmd => {
            let dictionary = crate::commands::dictionary_for(&meta.kernel, meta.state_dim)?;
            Model::Edmd(EdmdModel {
                lambda: continuous_eigenvalues(&mu, meta.dt),
                mu,
                coefficients: take_complex(&mut blocks, "coefficients")?,
                modes,
                dictionary,
                scale: meta.scale,
            })
        }
    };
    Ok(SavedDecomposition { meta, model })
}
