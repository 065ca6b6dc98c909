//! Compatibility analysis for sequences of per-pattern covariance matrices.
//!
//! When data are observed under several missingness patterns, each pattern
//! carries its own marginal moments. If the per-pattern correlation matrices
//! cannot all be obtained by marginalising a single full correlation matrix,
//! the data cannot be Missing Completely At Random. This crate computes a
//! numerical incompatibility index `R` for such sequences by solving a
//! structured semidefinite program, together with companion indices for
//! variance and mean inconsistency, and builds hypothesis tests on top:
//! an oracle threshold test, a sample-splitting test, a bootstrap omnibus
//! test, and a likelihood-ratio baseline with its EM estimator.
//!
//! Modules:
//! - [`patterns`]: pattern-set algebra and the marginalisation operators;
//! - [`sdp`]: the conic problem builders and the interior-point solver;
//! - [`measures`]: the indices `R`, `R~`, `V`, `M`, `T` and the dual
//!   decomposition into compatible and maximally incompatible parts;
//! - [`analytic`]: closed forms and bounds for cycles and related families,
//!   usable as fast paths and as independent oracles against the solver;
//! - [`estimation`]: per-pattern sample moments from incomplete datasets;
//! - [`testing`]: the hypothesis tests;
//! - [`simulate`]: synthetic data generation, deletion mechanisms and
//!   Monte-Carlo power estimation.

pub mod analytic;
pub mod estimation;
pub mod measures;
pub mod patterns;
pub mod rng;
pub mod sdp;
pub mod simulate;
pub mod testing;
#[cfg(test)]
pub(crate) mod testutil;

pub use patterns::{CorrSeq, MatrixSeq, MeanSeq, PatternSet, VarSeq};
pub use sdp::{ConicProblem, ConicSolution, SolveStatus, SolverConfig};
