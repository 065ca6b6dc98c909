//! Problem data for block-diagonal SDPs with sparse constraints.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("constraint {0} has no terms")]
    EmptyConstraint(usize),
    #[error("constraint {cons} references block {block}, entry ({row},{col}) outside its dimension")]
    BadTerm { cons: usize, block: usize, row: usize, col: usize },
    #[error("objective block {block} is {got}x{got2}, expected {want}x{want}")]
    ObjectiveDim { block: usize, got: usize, got2: usize, want: usize },
    #[error("solver failed: {0}")]
    Numerical(String),
    #[error("solver reached the iteration limit (relative gap {gap:e})")]
    MaxIter { gap: f64 },
    #[error("{0}")]
    Precondition(String),
}

/// One elementary term `coeff * E_{row,col}` in a constraint matrix, where
/// `E_{rc}` is the symmetric matrix with 1/2 at `(r,c)` and `(c,r)` for
/// `r != c`, and 1 at `(r,r)` otherwise. Requires `row <= col`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintTerm {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub coeff: f64,
}

impl ConstraintTerm {
    pub fn new(block: usize, row: usize, col: usize, coeff: f64) -> Self {
        debug_assert!(row <= col);
        Self { block, row, col, coeff }
    }
}

/// A single equality constraint `<A, X> = rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub terms: Vec<ConstraintTerm>,
    pub rhs: f64,
}

/// A block-diagonal SDP in equality standard form.
#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub block_dims: Vec<usize>,
    /// The cost `C`, one dense symmetric matrix per block.
    pub objective: Vec<DMatrix<f64>>,
    pub eq_constraints: Vec<Constraint>,
}

impl ConicProblem {
    pub fn new(
        block_dims: Vec<usize>,
        objective: Vec<DMatrix<f64>>,
        eq_constraints: Vec<Constraint>,
    ) -> Result<Self, SdpError> {
        assert_eq!(block_dims.len(), objective.len());
        for (bi, (c, &dim)) in objective.iter().zip(&block_dims).enumerate() {
            if c.nrows() != dim || c.ncols() != dim {
                return Err(SdpError::ObjectiveDim {
                    block: bi,
                    got: c.nrows(),
                    got2: c.ncols(),
                    want: dim,
                });
            }
        }
        for (ci, cons) in eq_constraints.iter().enumerate() {
            if cons.terms.is_empty() {
                return Err(SdpError::EmptyConstraint(ci));
            }
            for t in &cons.terms {
                if t.block >= block_dims.len()
                    || t.row > t.col
                    || t.col >= block_dims[t.block]
                {
                    return Err(SdpError::BadTerm {
                        cons: ci,
                        block: t.block,
                        row: t.row,
                        col: t.col,
                    });
                }
            }
        }
        Ok(Self { block_dims, objective, eq_constraints })
    }

    pub fn num_constraints(&self) -> usize {
        self.eq_constraints.len()
    }

    /// Total order of the block-diagonal matrix variable.
    pub fn total_dim(&self) -> usize {
        self.block_dims.iter().sum()
    }

    /// `<A_i, B>` for a symmetric block matrix `B`.
    pub fn constraint_dot(&self, i: usize, blocks: &[DMatrix<f64>]) -> f64 {
        self.eq_constraints[i]
            .terms
            .iter()
            .map(|t| t.coeff * blocks[t.block][(t.row, t.col)])
            .sum()
    }

    /// Accumulates `sum_i y_i A_i` as a dense symmetric block matrix.
    pub fn combine_multipliers(&self, y: &[f64]) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> =
            self.block_dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (cons, &yi) in self.eq_constraints.iter().zip(y) {
            for t in &cons.terms {
                if t.row == t.col {
                    out[t.block][(t.row, t.row)] += yi * t.coeff;
                } else {
                    out[t.block][(t.row, t.col)] += 0.5 * yi * t.coeff;
                    out[t.block][(t.col, t.row)] += 0.5 * yi * t.coeff;
                }
            }
        }
        out
    }

    /// Frobenius norm of constraint matrix `A_i`.
    pub fn constraint_norm(&self, i: usize) -> f64 {
        let mut sq = 0.0;
        for t in &self.eq_constraints[i].terms {
            // E_rc has Frobenius norm 1 on the diagonal, 1/sqrt(2) off it;
            // cross terms at identical positions are rare and ignored here,
            // which is fine for scaling purposes.
            sq += if t.row == t.col { t.coeff * t.coeff } else { 0.5 * t.coeff * t.coeff };
        }
        sq.sqrt()
    }
}
