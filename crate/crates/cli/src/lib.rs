//! Command-line workflow around `kernel-koopman`: simulate FitzHugh-Nagumo
//! data, fit decompositions, evaluate them on new states, compare spectra
//! and export plot-ready tables.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.

pub mod cli;
pub mod commands;
pub mod config;
pub mod decomposition;
pub mod error;
pub mod formats;

pub use cli::{run, Cli};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
