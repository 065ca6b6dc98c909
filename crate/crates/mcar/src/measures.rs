//! The population-level incompatibility and inconsistency indices.
//!
//! `R` measures how far a sequence of correlation matrices is from being the
//! marginals of one full correlation matrix, as the smallest mixture weight
//! `epsilon` such that the sequence is an `epsilon`-mixture of an arbitrary
//! correlation sequence with a compatible one. It is computed by solving the
//! completion-side SDP; the solution also yields the decomposition
//! `Sigma_S = lambda* Q_S + (1 - lambda*) Sigma'_S` into a compatible part
//! and a maximally incompatible remainder. `V` and `M` measure variance and
//! mean inconsistency, and `T` adds them up.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::patterns::{
    bar_trace, marginalize, min_eigenvalue, seq_inner, x0_sequence, CorrSeq, MatrixSeq, MeanSeq,
    PatternError, VarSeq,
};
use crate::sdp::{
    build_r_dual, build_r_primal, build_rtilde_dual, solve, witness_from_multipliers,
    ConicSolution, SdpError, SolveStatus, SolverConfig,
};

/// Below this, an index value is treated as exactly zero when choosing the
/// decomposition conventions.
pub const INDEX_TOL: f64 = 1e-7;

/// Reported index values are rounded at this resolution.
pub const INDEX_RESOLUTION: f64 = 1e-7;

/// Blocks whose smallest eigenvalue falls below this (relative) threshold
/// route through the perturbed solve: without strictly positive blocks the
/// perturbation side loses attainment and plain iterations stall early.
pub const SINGULAR_EIG_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Solver(#[from] SdpError),
    #[error("variance averages are not normalised: coordinate {j} has mean {avg}")]
    NotNormalised { j: usize, avg: f64 },
    #[error("coordinate {j} has non-positive variance average {avg}")]
    ZeroAverage { j: usize, avg: f64 },
    #[error("input sequence is identically zero")]
    ZeroInput,
}

/// Solver outcome attached to an [`IncompatibilityReport`].
#[derive(Debug, Clone, Serialize)]
pub struct SolverDiagnostics {
    pub status: SolveStatus,
    pub iterations: usize,
    pub rel_gap: f64,
    pub primal_infeas: f64,
    pub dual_infeas: f64,
    /// Frobenius distance moved by the PSD projection of near-degenerate
    /// input blocks, when it was applied.
    pub projection_distance: Option<f64>,
    /// Rescaling applied to meet the generalised-trace normalisation.
    pub rescale_factor: Option<f64>,
    /// Mixing weight towards identity blocks used for singular inputs; the
    /// reported index is extrapolated back to zero perturbation.
    pub perturbation: Option<f64>,
    /// Retries after a failed solve.
    pub retries: usize,
}

/// The index value together with the dual decomposition.
#[derive(Debug, Clone)]
pub struct IncompatibilityReport {
    /// Index value in `[0, 1]`.
    pub r: f64,
    /// `1 - r`: the weight of the compatible part.
    pub lambda_star: f64,
    /// The compatible part: exact marginals of one full PSD matrix
    /// (the input itself when `r` is zero, identity marginals when
    /// `lambda*` is zero).
    pub q_seq: MatrixSeq,
    /// The maximally incompatible remainder `(Sigma_S - lambda* Q_S) / r`,
    /// absent when `r` is zero.
    pub residual_seq: Option<MatrixSeq>,
    /// The optimiser of the completion-side program: PSD with constant
    /// diagonal `lambda*` (trace `d lambda*` for the trace-normalised index).
    pub certificate_full: DMatrix<f64>,
    /// Perturbation-side optimum, when the solver's multipliers certify the
    /// index value; absent for degenerate inputs where the supremum is not
    /// attained.
    pub primal_witness: Option<MatrixSeq>,
    /// Set when `lambda*` is below tolerance, in which case `q_seq` is the
    /// identity-marginal convention rather than a meaningful estimate.
    pub maximal_incompatibility: bool,
    pub diagnostics: SolverDiagnostics,
}

impl IncompatibilityReport {
    /// JSON form: `{"R": .., "lambda_star": .., "Q": [..], "residual": ..,
    /// "certificate": [[..]], "diagnostics": {..}}`.
    pub fn to_json(&self) -> serde_json::Value {
        let blocks_json = |seq: &MatrixSeq| {
            serde_json::Value::Array(seq.blocks().iter().map(matrix_json).collect())
        };
        serde_json::json!({
            "R": self.r,
            "lambda_star": self.lambda_star,
            "Q": blocks_json(&self.q_seq),
            "residual": self.residual_seq.as_ref().map(blocks_json),
            "certificate": matrix_json(&self.certificate_full),
            "witness": self.primal_witness.as_ref().map(blocks_json),
            "maximal_incompatibility": self.maximal_incompatibility,
            "diagnostics": serde_json::to_value(&self.diagnostics).expect("serialisable"),
        })
    }
}

pub(crate) fn matrix_json(m: &DMatrix<f64>) -> serde_json::Value {
    serde_json::Value::Array(
        (0..m.nrows())
            .map(|r| {
                serde_json::Value::Array(
                    (0..m.ncols()).map(|c| serde_json::json!(m[(r, c)])).collect(),
                )
            })
            .collect(),
    )
}

/// Projects blocks with slightly negative spectra onto the PSD cone with
/// unit diagonal: eigenvalues are clamped at zero and the diagonal rescaled.
/// Returns the total Frobenius distance moved.
fn project_near_psd(seq: &MatrixSeq) -> (MatrixSeq, f64) {
    let mut dist = 0.0f64;
    let blocks: Vec<DMatrix<f64>> = seq
        .blocks()
        .iter()
        .map(|b| {
            let min_eig = min_eigenvalue(b);
            if min_eig >= 0.0 {
                return b.clone();
            }
            let eig = b.clone().symmetric_eigen();
            let clamped = eig.eigenvalues.map(|e| e.max(0.0));
            let mut fixed =
                &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
            let d: Vec<f64> = (0..fixed.nrows()).map(|j| fixed[(j, j)].max(1e-300)).collect();
            for r in 0..fixed.nrows() {
                for c in 0..fixed.ncols() {
                    fixed[(r, c)] /= (d[r] * d[c]).sqrt();
                }
            }
            dist += (&fixed - b).norm();
            fixed
        })
        .collect();
    let out = MatrixSeq::new(seq.pattern_set().clone(), blocks).expect("projection keeps shape");
    (out, dist)
}

fn solve_with_retry(
    problem: &crate::sdp::ConicProblem,
    cfg: &SolverConfig,
) -> Result<(ConicSolution, usize), MeasureError> {
    let first = solve(problem, cfg)?;
    if first.status == SolveStatus::Optimal {
        return Ok((first, 0));
    }
    let mut alt = *cfg;
    alt.equilibrate = !cfg.equilibrate;
    alt.max_iter = cfg.max_iter.max(300);
    let second = solve(problem, &alt)?;
    if second.status == SolveStatus::Optimal {
        return Ok((second, 1));
    }
    // Accept a near-miss; otherwise surface the failure.
    let best = if second.rel_gap < first.rel_gap { second } else { first };
    if best.rel_gap <= cfg.rel_gap_tol * 100.0
        && best.primal_infeas <= cfg.feas_tol * 100.0
        && best.dual_infeas <= cfg.feas_tol * 100.0
    {
        Ok((best, 1))
    } else {
        best.require_optimal().map(|s| (s, 1)).map_err(MeasureError::from)
    }
}

/// Shared decomposition logic for both normalisations. `r_override`
/// substitutes an extrapolated index value while the decomposition is still
/// taken from the supplied solution.
#[allow(clippy::too_many_arguments)]
fn build_report(
    input: &MatrixSeq,
    sol: ConicSolution,
    retries: usize,
    skip_constraints: usize,
    projection_distance: Option<f64>,
    rescale_factor: Option<f64>,
    perturbation: Option<f64>,
    trace_normalised: bool,
    r_override: Option<f64>,
) -> IncompatibilityReport {
    let ps = input.pattern_set();
    let d = ps.dim();
    let raw_r = r_override.unwrap_or_else(|| 1.0 - sol.primal_objective / d as f64);
    let r = (raw_r.clamp(0.0, 1.0) / INDEX_RESOLUTION).round() * INDEX_RESOLUTION;
    let lambda = 1.0 - r;

    let mut certificate = sol.primal_blocks[0].clone();
    certificate = (&certificate + certificate.transpose()) * 0.5;

    let witness = {
        let w = witness_from_multipliers(input, &sol.dual_multipliers, skip_constraints);
        // The witness must reproduce the index value and satisfy the shifted
        // PSD constraint; degenerate inputs can defeat both.
        let value = -seq_inner(&w, input).unwrap() / d as f64;
        let x0 = x0_sequence(ps);
        let shifted = w.lin_comb(1.0, &x0, 1.0).unwrap();
        let min_eig = shifted
            .blocks()
            .iter()
            .map(min_eigenvalue)
            .fold(f64::INFINITY, f64::min);
        let scale = 1.0 + w.max_abs();
        if (value - r).abs() <= 1e-5 * (1.0 + r) && min_eig >= -1e-6 * scale {
            Some(w)
        } else {
            None
        }
    };

    let maximal = lambda <= INDEX_TOL;
    let (q_seq, residual_seq) = if r <= INDEX_TOL {
        (input.clone(), None)
    } else {
        let q_full = if maximal {
            DMatrix::identity(d, d)
        } else {
            let mut q = certificate.clone() / lambda;
            if trace_normalised {
                let tr = q.trace();
                if tr > 1e-300 {
                    q *= d as f64 / tr;
                }
            } else {
                // exact unit diagonal so Q is a genuine correlation matrix
                let diag: Vec<f64> = (0..d).map(|j| q[(j, j)].max(1e-300)).collect();
                for row in 0..d {
                    for col in 0..d {
                        q[(row, col)] /= (diag[row] * diag[col]).sqrt();
                    }
                }
            }
            q
        };
        let q_seq = marginalize(&q_full, ps).expect("certificate conforms");
        let residual = input
            .lin_comb(1.0 / r, &q_seq, -lambda / r)
            .expect("same pattern set");
        (q_seq, Some(residual))
    };

    IncompatibilityReport {
        r,
        lambda_star: lambda,
        q_seq,
        residual_seq,
        certificate_full: certificate,
        primal_witness: witness,
        maximal_incompatibility: maximal,
        diagnostics: SolverDiagnostics {
            status: sol.status,
            iterations: sol.iterations,
            rel_gap: sol.rel_gap,
            primal_infeas: sol.primal_infeas,
            dual_infeas: sol.dual_infeas,
            projection_distance,
            rescale_factor,
            perturbation,
            retries,
        },
    }
}

/// The correlation incompatibility index with its dual decomposition.
pub fn r_index(corr: &CorrSeq, cfg: &SolverConfig) -> Result<IncompatibilityReport, MeasureError> {
    let (projected, dist) = project_near_psd(corr.as_seq());
    let corr = CorrSeq::new(projected)?;
    let d = corr.pattern_set().dim();
    let dist = (dist > 0.0).then_some(dist);

    let scale = 1.0 + corr.as_seq().max_abs();
    let singular = corr
        .blocks()
        .iter()
        .any(|b| min_eigenvalue(b) < SINGULAR_EIG_TOL * scale);

    if !singular {
        let problem = build_r_dual(&corr);
        let (sol, retries) = solve_with_retry(&problem, cfg)?;
        return Ok(build_report(
            corr.as_seq(),
            sol,
            retries,
            d - 1,
            dist,
            None,
            None,
            false,
            None,
        ));
    }

    // Mixing with identity blocks restores strict feasibility on both
    // sides. The index behaves like a smooth function of sqrt(delta) near a
    // singular block (the angle of a correlation 1 - delta opens at rate
    // sqrt(2 delta)), so extrapolate quadratically in sqrt(delta) from
    // mixtures at ratios 16:4:1.
    let id = MatrixSeq::identity(corr.pattern_set());
    let mut values = [0.0f64; 3];
    let deltas = [1.6e-4, 4e-5, 1e-5];
    let mut last: Option<(ConicSolution, usize)> = None;
    for (slot, &delta) in deltas.iter().enumerate() {
        let mixed = CorrSeq::new(corr.as_seq().lin_comb(1.0 - delta, &id, delta)?)?;
        let problem = build_r_dual(&mixed);
        let (sol, retries) = solve_with_retry(&problem, cfg)?;
        values[slot] = 1.0 - sol.primal_objective / d as f64;
        last = Some((sol, retries));
    }
    let (sol, retries) = last.expect("perturbed solves ran");
    let extrapolated = values[0] / 3.0 - 2.0 * values[1] + 8.0 * values[2] / 3.0;
    Ok(build_report(
        corr.as_seq(),
        sol,
        retries,
        d - 1,
        dist,
        None,
        Some(deltas[1]),
        false,
        Some(extrapolated),
    ))
}

/// Solves the perturbation-side program independently; mainly a consistency
/// check against [`r_index`].
pub fn r_index_primal_value(corr: &CorrSeq, cfg: &SolverConfig) -> Result<f64, MeasureError> {
    let problem = build_r_primal(corr);
    let (sol, _) = solve_with_retry(&problem, cfg)?;
    let d = corr.pattern_set().dim() as f64;
    Ok((1.0 + sol.primal_objective / d).clamp(0.0, 1.0))
}

/// The trace-normalised incompatibility index. The input is rescaled so its
/// generalised trace equals `d`; the factor applied is reported.
pub fn rtilde_index(
    cov: &MatrixSeq,
    cfg: &SolverConfig,
) -> Result<IncompatibilityReport, MeasureError> {
    let d = cov.pattern_set().dim() as f64;
    let bt = bar_trace(cov);
    if bt.abs() <= 1e-300 {
        return Err(MeasureError::ZeroInput);
    }
    let factor = d / bt;
    let scaled = cov.lin_comb(factor, &MatrixSeq::zeros(cov.pattern_set()), 0.0)?;
    let problem = build_rtilde_dual(&scaled)?;
    let (sol, retries) = solve_with_retry(&problem, cfg)?;
    Ok(build_report(&scaled, sol, retries, 0, None, Some(factor), None, true, None))
}

/// Variance inconsistency `V = 1 - min_j min_{S in S_j} sigma^2_{S,j}`,
/// defined for sequences whose per-coordinate averages are 1.
pub fn v_index(vars: &VarSeq) -> Result<f64, MeasureError> {
    let ps = vars.pattern_set();
    for j in 0..ps.dim() {
        let avg = vars.coordinate_average(j);
        if (avg - 1.0).abs() > 1e-9 {
            return Err(MeasureError::NotNormalised { j, avg });
        }
    }
    let min = vars
        .vars()
        .iter()
        .flat_map(|v| v.iter().copied())
        .fold(f64::INFINITY, f64::min);
    Ok((1.0 - min).clamp(0.0, 1.0))
}

/// The explicit dual decomposition of the variance index:
/// `sigma^2 = (1 - V) * 1 + V * sigma'^2` with `av_j(sigma'^2) = 1`.
/// Returns `(V, sigma'^2)`; the remainder is the all-ones sequence when
/// `V = 0`.
pub fn v_decomposition(vars: &VarSeq) -> Result<(f64, VarSeq), MeasureError> {
    let v = v_index(vars)?;
    let ps = vars.pattern_set().clone();
    let remainder: Vec<nalgebra::DVector<f64>> = if v <= 0.0 {
        vars.vars().iter().map(|x| x.map(|_| 1.0)).collect()
    } else {
        vars.vars()
            .iter()
            .map(|x| x.map(|s| ((s - (1.0 - v)) / v).max(0.0)))
            .collect()
    };
    Ok((v, VarSeq::new(ps, remainder)?))
}

/// Mean inconsistency: the largest gap between two patterns' means of the
/// same coordinate.
pub fn m_index(means: &MeanSeq) -> f64 {
    let ps = means.pattern_set();
    let mut max_gap = 0.0f64;
    for j in 0..ps.dim() {
        let vals: Vec<f64> = ps
            .containing(j)
            .iter()
            .map(|&pi| {
                let pos = ps.pattern(pi).binary_search(&j).unwrap();
                means.means()[pi][pos]
            })
            .collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max_gap = max_gap.max(hi - lo);
    }
    max_gap
}

/// Rescales each coordinate so its average variance across patterns is 1.
/// Returns the original averages (the scales) and the normalised sequence.
pub fn normalize_variances(vars: &VarSeq) -> Result<(Vec<f64>, VarSeq), MeasureError> {
    let ps = vars.pattern_set();
    let mut scales = Vec::with_capacity(ps.dim());
    for j in 0..ps.dim() {
        let avg = vars.coordinate_average(j);
        if avg <= 0.0 {
            return Err(MeasureError::ZeroAverage { j, avg });
        }
        scales.push(avg);
    }
    let normalized: Vec<nalgebra::DVector<f64>> = vars
        .vars()
        .iter()
        .enumerate()
        .map(|(pi, v)| {
            nalgebra::DVector::from_iterator(
                v.len(),
                v.iter().zip(ps.pattern(pi)).map(|(&s, &j)| s / scales[j]),
            )
        })
        .collect();
    Ok((scales, VarSeq::new(ps.clone(), normalized)?))
}

/// Components of the combined index.
#[derive(Debug, Clone, Serialize)]
pub struct CombinedIndex {
    pub t: f64,
    pub r: f64,
    pub v: f64,
    pub m: Option<f64>,
}

/// `T = R + V (+ M when means are supplied)`.
pub fn t_index(
    corr: &CorrSeq,
    vars: &VarSeq,
    means: Option<&MeanSeq>,
    cfg: &SolverConfig,
) -> Result<(CombinedIndex, IncompatibilityReport), MeasureError> {
    let report = r_index(corr, cfg)?;
    let v = v_index(vars)?;
    let m = means.map(m_index);
    let t = report.r + v + m.unwrap_or(0.0);
    Ok((CombinedIndex { t, r: report.r, v, m }, report))
}

/// Blockwise reconstruction error of `Sigma_S = lambda* Q_S + r Sigma'_S`.
pub fn reconstruction_error(input: &MatrixSeq, report: &IncompatibilityReport) -> f64 {
    match &report.residual_seq {
        None => 0.0,
        Some(resid) => {
            let mix = report
                .q_seq
                .lin_comb(report.lambda_star, resid, report.r)
                .expect("same pattern set");
            input
                .blocks()
                .iter()
                .zip(mix.blocks())
                .map(|(a, b)| (a - b).abs().max())
                .fold(0.0, f64::max)
        }
    }
}

/// `(diagonal spread, smallest slack eigenvalue)` of the certificate: the
/// first must be ~0, the second >= -tolerance.
pub fn certificate_feasibility(input: &MatrixSeq, report: &IncompatibilityReport) -> (f64, f64) {
    let sigma = &report.certificate_full;
    let d = sigma.nrows();
    let diag_spread = (0..d)
        .map(|j| (sigma[(j, j)] - sigma[(0, 0)]).abs())
        .fold(0.0, f64::max);
    let marg = marginalize(sigma, input.pattern_set()).expect("dims agree");
    let slack_min_eig = input
        .blocks()
        .iter()
        .zip(marg.blocks())
        .map(|(s, m)| min_eigenvalue(&(s - m)))
        .fold(f64::INFINITY, f64::min);
    (diag_spread, slack_min_eig)
}

/// The index value of a sequence that is expected to be compatible.
pub fn verify_compatible(seq: &MatrixSeq, cfg: &SolverConfig) -> Result<f64, MeasureError> {
    let adjusted = project_near_psd(seq).0;
    let corr = CorrSeq::new(adjusted)?;
    Ok(r_index(&corr, cfg)?.r)
}
