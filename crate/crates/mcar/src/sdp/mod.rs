//! Structured semidefinite programming over products of PSD blocks.
//!
//! Problems are stated in the equality standard form
//!
//! ```text
//! maximize   <C, X>
//! subject to <A_i, X> = b_i   for i in [m]
//!            X block-diagonal PSD
//! ```
//!
//! whose conic dual is `min b'y  s.t.  sum_i y_i A_i - C >= 0`. The
//! constraint matrices arising here are sparse combinations of elementary
//! symmetric matrices, which the solver exploits when forming the Schur
//! complement. [`build`] contains the problem constructions for the
//! incompatibility indices.

mod build;
mod problem;
mod solver;

pub use build::{build_r_dual, build_r_primal, build_rtilde_dual, witness_from_multipliers};
pub use problem::{ConicProblem, Constraint, ConstraintTerm, SdpError};
pub use solver::{solve, ConicSolution, SolveStatus, SolverConfig};
