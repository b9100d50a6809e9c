use thiserror::Error;

/// Errors raised by the decomposition pipeline and the data generator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e} relative to {scale:e})")]
    NotSymmetric { asymmetry: f64, scale: f64 },

    #[error("truncation retained no eigenvalues")]
    RankZero,

    #[error("eigenvector matrix is numerically singular (condition number {condition:e})")]
    DefectiveMatrix { condition: f64 },

    #[error("singular value {value:e} at index {index} is not strictly positive")]
    ZeroSingularValue { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid snapshot set: {0}")]
    InvalidSnapshots(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("imaginary residue {residue:e} exceeds 1e-6 of the prediction norm {norm:e}")]
    ConjugateImbalance { residue: f64, norm: f64 },

    #[error("dictionary with {terms} terms over {rows} rows exceeds the materialization guard")]
    DictionaryTooLarge { terms: usize, rows: usize },

    #[error("integration became unstable at t = {time}")]
    Instability { time: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("dense decomposition failed: {0}")]
    Decomposition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
