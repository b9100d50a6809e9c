//! Argument parsing and dispatch.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands;
use crate::config::{Criterion, DataFormat, Layout, RunConfig};
use crate::decomposition::Method;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(
    name = "kkdmd",
    version,
    about = "Kernel-based Koopman spectral analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate FitzHugh-Nagumo snapshot files.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        format: Option<DataFormat>,
    },
    /// Fit a decomposition to a snapshot file.
    Fit {
        /// Snapshot file (`.kdmd`, or the `.x.csv` half of a CSV pair).
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
    /// Evaluate eigenfunctions and one-step predictions at given states.
    Eval {
        /// Decomposition metadata (`.toml`).
        decomposition: Option<PathBuf>,
        /// States, one per row (`.csv` or a snapshot file).
        states: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Pair up the spectra of two decompositions.
    Compare {
        a: Option<PathBuf>,
        b: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        /// Largest distance between paired eigenvalues.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Write eigenvalue scatter and mode profile tables.
    ExportPlots {
        decomposition: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        layout: Option<Layout>,
        #[arg(long, value_enum)]
        criterion: Option<Criterion>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `polynomial:ALPHA`, `gaussian:SIGMA`, `gaussian` (median heuristic) or `linear`.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Keep this many leading directions.
    #[arg(long, conflicts_with = "threshold")]
    pub rank: Option<usize>,
    /// Keep directions whose Gramian eigenvalue is at least this fraction of the largest.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub normalize: Option<Toggle>,
    /// Base seed for the FitzHugh-Nagumo kicks; trajectory `i` uses `seed + i`
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of tuples to report or export.
    #[arg(long)]
    pub top: Option<usize>,
}

impl Common {
    /// The configuration file with these flags applied on top.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        if let Some(k) = &self.kernel {
            cfg.fit.kernel = k.clone();
        }
        if let Some(r) = self.rank {
            cfg.fit.rank = Some(r);
            cfg.fit.threshold = None;
        }
        if let Some(t) = self.threshold {
            cfg.fit.threshold = Some(t);
            cfg.fit.rank = None;
        }
        if let Some(n) = self.normalize {
            cfg.fit.normalize = n == Toggle::On;
        }
        if let Some(s) = self.seed {
            cfg.fhn.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.paths.out = o.clone();
        }
        if let Some(t) = self.top {
            cfg.select.top = Some(t);
        }
        Ok(cfg)
    }
}

/// Runs one parsed command and returns its summary.
pub fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Simulate { common, format } => {
            let mut cfg = common.resolve()?;
            if let Some(f) = format {
                cfg.simulate.format = f;
            }
            commands::simulate(&cfg)
        }
        Command::Fit {
            input,
            common,
            method,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(m) = method {
                cfg.fit.method = m;
            }
            commands::fit_command(&cfg, input)
        }
        Command::Eval {
            decomposition,
            states,
            common,
        } => commands::eval(&common.resolve()?, decomposition, states),
        Command::Compare { a, b, common, tol } => {
            let mut cfg = common.resolve()?;
            if let Some(t) = tol {
                cfg.compare.tolerance = t;
            }
            commands::compare(&cfg, a, b)
        }
        Command::ExportPlots {
            decomposition,
            common,
            layout,
            criterion,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(l) = layout {
                cfg.export.layout = l;
            }
            if let Some(c) = criterion {
                cfg.select.criterion = c;
            }
            commands::export_plots(&cfg, decomposition)
        }
    }
}
