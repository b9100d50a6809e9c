//! Run configuration, read from TOML and overridden by command-line flags.
//!
//! Every key is optional. Defaults:
//!
//! ```toml
//! [paths]
//! out = "out"            # output directory
//! # input, states, decomposition, other: optional input paths
//!
//! [fit]
//! method = "kernel"      # or "edmd"
//! kernel = "polynomial:20"
//! normalize = true
//! # rank = 150 or threshold = 1e-10 (relative, on Gramian eigenvalues);
//! # with neither, threshold = 1e-10
//!
//! [select]
//! criterion = "slowest-decay"   # or "largest-magnitude"
//! # top = 10                    # default: every tuple
//!
//! [compare]
//! tolerance = 1e-6
//!
//! [simulate]
//! format = "binary"      # or "csv"
//!
//! [export]
//! layout = "fhn"         # "fhn": v then w on the midpoint grid; "flat"
//! length = 20.0          # domain length for the fhn layout
//!
//! [fhn]                  # data generator parameters, see FhnConfig
//! ```

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use kernel_koopman::fhn::FhnConfig;
use kernel_koopman::{KernelSpec, Selection, SnapshotSet, TruncationPolicy};
use serde::{Deserialize, Serialize};

use crate::decomposition::Method;
use crate::error::{CliError, CliResult};

pub const DEFAULT_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub fit: FitSection,
    pub select: SelectSection,
    pub compare: CompareSection,
    pub simulate: SimulateSection,
    pub export: ExportSection,
    pub fhn: FhnConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub input: Option<PathBuf>,
    pub states: Option<PathBuf>,
    pub decomposition: Option<PathBuf>,
    /// Second decomposition for `compare`.
    pub other: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            input: None,
            states: None,
            decomposition: None,
            other: None,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub method: Method,
    pub kernel: String,
    pub rank: Option<usize>,
    pub threshold: Option<f64>,
    pub normalize: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            method: Method::Kernel,
            kernel: "polynomial:20".into(),
            rank: None,
            threshold: None,
            normalize: true,
        }
    }
}

impl FitSection {
    pub fn truncation(&self) -> CliResult<TruncationPolicy> {
        let policy = match (self.rank, self.threshold) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "give either rank or threshold, not both".into(),
                ))
            }
            (Some(r), None) => TruncationPolicy::FixedRank(r),
            (None, Some(t)) => TruncationPolicy::RelativeThreshold(t),
            (None, None) => TruncationPolicy::RelativeThreshold(DEFAULT_THRESHOLD),
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn kernel(&self) -> CliResult<KernelChoice> {
        KernelChoice::parse(&self.kernel)
    }
}

/// A kernel as written by the user; a bare `gaussian` picks its width from
/// the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelChoice {
    Fixed(KernelSpec),
    GaussianMedian,
}

impl KernelChoice {
    pub fn parse(s: &str) -> CliResult<Self> {
        if s.trim() == "gaussian" {
            return Ok(KernelChoice::GaussianMedian);
        }
        s.parse::<KernelSpec>()
            .map(KernelChoice::Fixed)
            .map_err(|e| CliError::Config(format!("--kernel: {e}")))
    }

    /// The concrete kernel for data that the fit will see (already scaled).
    pub fn resolve(&self, scaled: &SnapshotSet) -> CliResult<KernelSpec> {
        match *self {
            KernelChoice::Fixed(k) => Ok(k),
            KernelChoice::GaussianMedian => {
                let sigma = kernel_koopman::kernels::median_heuristic_sigma(scaled.x.as_ref())?;
                Ok(KernelSpec::Gaussian { sigma })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    #[default]
    SlowestDecay,
    LargestMagnitude,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSection {
    pub criterion: Criterion,
    pub top: Option<usize>,
}

impl SelectSection {
    pub fn selection(&self) -> Selection {
        match self.criterion {
            Criterion::SlowestDecay => Selection::SlowestDecay,
            Criterion::LargestMagnitude => Selection::LargestMagnitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub tolerance: f64,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self { tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    #[default]
    Binary,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub format: DataFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// `v` then `w`, each on the midpoint grid of `[0, length]`.
    #[default]
    Fhn,
    /// One field indexed by coordinate number.
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSection {
    pub layout: Layout,
    pub length: f64,
}

impl Default for ExportSection {
    fn default() -> Self {
        Self {
            layout: Layout::Fhn,
            length: 20.0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }
}
