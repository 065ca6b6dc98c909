//! Conic problem constructions for the incompatibility indices.

use nalgebra::DMatrix;

use super::problem::{ConicProblem, Constraint, ConstraintTerm, SdpError};
use crate::patterns::{bar_trace, CorrSeq, MatrixSeq};

/// Completion-side program for the correlation index: maximise `tr(Sigma)`
/// over PSD `Sigma` with constant diagonal and `A Sigma <= Sigma_S`
/// blockwise. With optimal value `v`, the index is `R = 1 - v/d`.
///
/// Variable blocks are `(Sigma, Z_S for each pattern)`; the constraints
/// encode `Sigma_jj = Sigma_11` for `j >= 2` and
/// `Sigma_{jj'} + (Z_S)_{jj'} = (Sigma_S)_{jj'}` for every pattern entry.
pub fn build_r_dual(corr: &CorrSeq) -> ConicProblem {
    let ps = corr.pattern_set();
    let d = ps.dim();
    let mut block_dims = vec![d];
    block_dims.extend(ps.patterns().iter().map(|p| p.len()));

    let mut objective: Vec<DMatrix<f64>> =
        block_dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    objective[0] = DMatrix::identity(d, d);

    let mut constraints = Vec::new();
    for j in 1..d {
        constraints.push(Constraint {
            terms: vec![
                ConstraintTerm::new(0, j, j, 1.0),
                ConstraintTerm::new(0, 0, 0, -1.0),
            ],
            rhs: 0.0,
        });
    }
    push_marginal_constraints(corr.as_seq(), &mut constraints);
    ConicProblem::new(block_dims, objective, constraints).expect("well-formed construction")
}

/// Trace-normalised variant: same as [`build_r_dual`] without the
/// equal-diagonal constraints. Requires `bar_trace(cov) = d` within 1e-6.
pub fn build_rtilde_dual(cov: &MatrixSeq) -> Result<ConicProblem, SdpError> {
    let d = cov.pattern_set().dim() as f64;
    let bt = bar_trace(cov);
    if (bt - d).abs() > 1e-6 {
        return Err(SdpError::Precondition(format!(
            "generalised trace is {bt}, expected {d} (renormalise first)"
        )));
    }
    let ps = cov.pattern_set();
    let d = ps.dim();
    let mut block_dims = vec![d];
    block_dims.extend(ps.patterns().iter().map(|p| p.len()));
    let mut objective: Vec<DMatrix<f64>> =
        block_dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    objective[0] = DMatrix::identity(d, d);
    let mut constraints = Vec::new();
    push_marginal_constraints(cov, &mut constraints);
    Ok(ConicProblem::new(block_dims, objective, constraints).expect("well-formed construction"))
}

fn push_marginal_constraints(seq: &MatrixSeq, constraints: &mut Vec<Constraint>) {
    let ps = seq.pattern_set();
    for (pi, p) in ps.patterns().iter().enumerate() {
        let block = pi + 1;
        let s = seq.block(pi);
        for a in 0..p.len() {
            for bpos in a..p.len() {
                constraints.push(Constraint {
                    terms: vec![
                        ConstraintTerm::new(0, p[a], p[bpos], 1.0),
                        ConstraintTerm::new(block, a, bpos, 1.0),
                    ],
                    rhs: s[(a, bpos)],
                });
            }
        }
    }
}

/// Perturbation-side program for the correlation index: minimise
/// `<Sigma_S, Y_S>_S` over `Y_S >= 0` with `A* Y_S + Y >= I_d` for some
/// trace-free diagonal `Y`. Posing it as a maximisation of the negated
/// objective, the optimal value `v` gives `R = 1 + v/d`.
///
/// Blocks are `(W, Y_S for each pattern)` where `W = A* Y_S + Y - I_d`;
/// the trace-free `Y` is eliminated, leaving the off-diagonal equations
/// `(A* Y_S)_{jj'} = W_{jj'}` and one scalar trace constraint.
pub fn build_r_primal(corr: &CorrSeq) -> ConicProblem {
    let ps = corr.pattern_set();
    let d = ps.dim();
    let mut block_dims = vec![d];
    block_dims.extend(ps.patterns().iter().map(|p| p.len()));

    let mut objective: Vec<DMatrix<f64>> =
        block_dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    for (pi, s) in corr.blocks().iter().enumerate() {
        objective[pi + 1] = -s;
    }

    let mut constraints = Vec::new();
    for j in 0..d {
        for k in (j + 1)..d {
            let mut terms = vec![ConstraintTerm::new(0, j, k, -1.0)];
            for (pi, p) in ps.patterns().iter().enumerate() {
                if let (Ok(a), Ok(bpos)) = (p.binary_search(&j), p.binary_search(&k)) {
                    terms.push(ConstraintTerm::new(pi + 1, a, bpos, 1.0));
                }
            }
            constraints.push(Constraint { terms, rhs: 0.0 });
        }
    }
    // sum_j [(A* Y)_jj - W_jj] = d fixes the trace-free part of Y.
    let mut terms = Vec::new();
    for j in 0..d {
        terms.push(ConstraintTerm::new(0, j, j, -1.0));
    }
    for (pi, p) in ps.patterns().iter().enumerate() {
        for a in 0..p.len() {
            terms.push(ConstraintTerm::new(pi + 1, a, a, 1.0));
        }
    }
    constraints.push(Constraint { terms, rhs: d as f64 });

    ConicProblem::new(block_dims, objective, constraints).expect("well-formed construction")
}

/// Recovers the perturbation-side witness `X_S = Y_S - X_S^0` from the dual
/// multipliers of [`build_r_dual`] or [`build_rtilde_dual`].
///
/// The multiplier of the marginal constraint for `(S, j <= j')` equals
/// `(Y_S)_{jj'}` on the diagonal and `2 (Y_S)_{jj'}` off it; equal-diagonal
/// multipliers (present only in the correlation build) are skipped via
/// `skip`, the number of leading non-marginal constraints.
pub fn witness_from_multipliers(
    seq: &MatrixSeq,
    multipliers: &[f64],
    skip: usize,
) -> MatrixSeq {
    let ps = seq.pattern_set();
    let mut blocks: Vec<DMatrix<f64>> =
        ps.patterns().iter().map(|p| DMatrix::zeros(p.len(), p.len())).collect();
    let mut idx = skip;
    for (pi, p) in ps.patterns().iter().enumerate() {
        for a in 0..p.len() {
            for b in a..p.len() {
                let y = multipliers[idx];
                idx += 1;
                if a == b {
                    blocks[pi][(a, a)] = y;
                } else {
                    blocks[pi][(a, b)] = 0.5 * y;
                    blocks[pi][(b, a)] = 0.5 * y;
                }
            }
        }
    }
    let y_seq = MatrixSeq::new(ps.clone(), blocks).expect("witness blocks conform");
    let x0 = crate::patterns::x0_sequence(ps);
    y_seq.lin_comb(1.0, &x0, -1.0).expect("same pattern set")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::PatternSet;
    use crate::sdp::solver::{solve, SolverConfig};

    fn cycle3(rhos: [f64; 3]) -> CorrSeq {
        CorrSeq::cycle_from_correlations(&rhos).unwrap()
    }

    #[test]
    fn counts_match_construction() {
        let corr = cycle3([0.1, 0.2, 0.3]);
        let p = build_r_dual(&corr);
        assert_eq!(p.block_dims.len(), 1 + 3);
        assert_eq!(p.num_constraints(), 2 + 3 * 3);

        let ps = PatternSet::block3(2);
        let seq = crate::patterns::marginalize(&DMatrix::identity(6, 6), &ps).unwrap();
        let corr = CorrSeq::new(seq).unwrap();
        let p = build_r_dual(&corr);
        assert_eq!(p.block_dims.len(), 1 + 3);
        assert_eq!(p.num_constraints(), 5 + 3 * (4 * 5 / 2));
    }

    #[test]
    fn identity_cycle_is_compatible() {
        let corr = cycle3([0.0, 0.0, 0.0]);
        let p = build_r_dual(&corr);
        let sol = solve(&p, &SolverConfig::default()).unwrap().require_optimal().unwrap();
        assert!((sol.primal_objective - 3.0).abs() < 1e-6, "got {}", sol.primal_objective);
    }

    #[test]
    fn incompatible_cycle_loses_trace() {
        let corr = cycle3([-0.6, 0.6, 0.6]);
        let p = build_r_dual(&corr);
        let sol = solve(&p, &SolverConfig::default()).unwrap().require_optimal().unwrap();
        assert!(sol.primal_objective < 3.0 - 1e-3, "got {}", sol.primal_objective);
    }

    #[test]
    fn primal_and_dual_builds_agree() {
        for rhos in [[0.5, 0.5, -0.5], [-0.6, 0.6, 0.6], [0.3, -0.2, 0.8], [0.9, 0.9, 0.9]] {
            let corr = cycle3(rhos);
            let dual = solve(&build_r_dual(&corr), &SolverConfig::default())
                .unwrap()
                .require_optimal()
                .unwrap();
            let primal = solve(&build_r_primal(&corr), &SolverConfig::default())
                .unwrap()
                .require_optimal()
                .unwrap();
            let r_dual = 1.0 - dual.primal_objective / 3.0;
            let r_primal = 1.0 + primal.primal_objective / 3.0;
            assert!(
                (r_dual - r_primal).abs() <= 1e-6,
                "rhos {rhos:?}: dual {r_dual} vs primal {r_primal}"
            );
        }
    }

    #[test]
    fn witness_reproduces_index_value() {
        let corr = cycle3([-0.6, 0.6, 0.6]);
        let p = build_r_dual(&corr);
        let sol = solve(&p, &SolverConfig::default()).unwrap().require_optimal().unwrap();
        let r = 1.0 - sol.primal_objective / 3.0;
        let witness = witness_from_multipliers(corr.as_seq(), &sol.dual_multipliers, 2);
        let inner = crate::patterns::seq_inner(&witness, corr.as_seq()).unwrap();
        assert!(
            (-inner / 3.0 - r).abs() < 1e-6,
            "witness value {} vs R {}",
            -inner / 3.0,
            r
        );
    }

    #[test]
    fn rtilde_requires_normalised_trace() {
        let ps = PatternSet::cycle(3);
        let seq = MatrixSeq::identity(&ps);
        assert!(build_rtilde_dual(&seq).is_ok());
        let scaled = seq.lin_comb(2.0, &MatrixSeq::zeros(&ps), 0.0).unwrap();
        assert!(build_rtilde_dual(&scaled).is_err());
    }
}
