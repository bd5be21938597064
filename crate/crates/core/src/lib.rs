//! Reconstruction of input-to-output (ItO) matrices of PDE inverse problems
//! from structure-aware partial samples, and parameter reconstruction from
//! the completed matrix.
//!
//! The pipeline: a forward solver produces a dense ItO matrix (the
//! Dirichlet-to-Neumann map of the conductivity equation, or the albedo map
//! of radiative transfer). The matrix is partitioned hierarchically over the
//! cyclic boundary index set; diagonal blocks are observed in full while
//! admissible off-diagonal blocks — numerically low-rank — are subsampled
//! and recovered by nuclear-norm matrix completion. The completed matrix
//! then feeds a Gauss-Newton reconstruction of the PDE coefficient.

pub mod completion;
pub mod container;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod grid;
pub mod hpartition;
pub mod inversion;
pub mod lowrank;
pub mod rte;
pub mod sampling;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
