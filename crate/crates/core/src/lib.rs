//! Kernel-based approximation of Koopman eigenvalues, eigenfunctions and
//! modes from snapshot pairs (kernel Extended DMD).
//!
//! The cost of a fit is set by the number of snapshots `M`: the kernel
//! supplies every feature-space inner product, so the `M × M` Gramians and
//! an `r × r` projected operator are all that is ever formed.
//!
//! Modules:
//! - [`numerics`]: truncated symmetric and general eigendecompositions.
//! - [`kernels`]: kernel functions, snapshot sets, Gram assembly.
//! - [`koopman`]: the fit and everything derived from it.
//! - [`edmd`]: explicit-dictionary Extended DMD, used as an oracle.
//! - [`fhn`]: FitzHugh-Nagumo data generation and linearization.

pub mod edmd;
pub mod error;
pub mod fhn;
pub mod kernels;
pub mod koopman;
pub mod numerics;

pub use error::{Error, Result};
pub use kernels::{GramPair, KernelSpec, SnapshotSet};
pub use koopman::{fit, FitOptions, KoopmanDecomposition, Selection};
pub use numerics::{TruncatedBasis, TruncationPolicy};
