//! Primal-dual path-following interior-point solver with Nesterov-Todd
//! scaling and a Mehrotra predictor-corrector step.
//!
//! The iterates `(X, y, Z)` satisfy `X, Z > 0` throughout; infeasibilities
//! and the duality gap are driven to zero together. The Schur complement
//! `M[i][k] = <A_i, W A_k W>` is assembled entrywise from the sparse
//! constraint terms, so its cost scales with the number of terms rather
//! than with the block orders.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use super::problem::{ConicProblem, SdpError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolverConfig {
    pub rel_gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    pub equilibrate: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { rel_gap_tol: 1e-8, feas_tol: 1e-8, max_iter: 200, equilibrate: true }
    }
}

/// Solution of a block-diagonal SDP.
///
/// `primal_objective` is `<C, X>` for the maximisation side and
/// `dual_objective` is `b'y` for the minimisation side, so weak duality
/// reads `primal_objective <= dual_objective` up to roundoff.
#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub primal_blocks: Vec<DMatrix<f64>>,
    pub dual_blocks: Vec<DMatrix<f64>>,
    pub dual_multipliers: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub rel_gap: f64,
    pub primal_infeas: f64,
    pub dual_infeas: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

impl ConicSolution {
    /// Converts non-optimal terminations into errors.
    pub fn require_optimal(self) -> Result<Self, SdpError> {
        match self.status {
            SolveStatus::Optimal => Ok(self),
            SolveStatus::MaxIter => Err(SdpError::MaxIter { gap: self.rel_gap }),
            SolveStatus::NumericalFailure => {
                Err(SdpError::Numerical(format!(
                    "no progress at iteration {} (rel gap {:e}, infeas {:e}/{:e})",
                    self.iterations, self.rel_gap, self.primal_infeas, self.dual_infeas
                )))
            }
        }
    }
}

struct BlockWorkspace {
    /// NT scaling matrix per block (W Z W = X).
    w: Vec<DMatrix<f64>>,
    z_inv: Vec<DMatrix<f64>>,
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn frob(blocks: &[DMatrix<f64>]) -> f64 {
    blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
}

/// `f(X)` per block via symmetric eigendecomposition, clamping eigenvalues
/// below at `floor` first.
fn sym_fn(m: &DMatrix<f64>, floor: f64, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = sym(m).symmetric_eigen();
    let vals = eig.eigenvalues.map(|e| f(e.max(floor)));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Largest step `alpha <= cap` with `X + alpha * dX` still PSD.
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>, cap: f64) -> f64 {
    if x.nrows() == 0 {
        return cap;
    }
    // X + a dX >= 0  <=>  I + a L^-1 dX L^-T >= 0 for X = L L^T.
    let chol = match Cholesky::new(sym(x)) {
        Some(c) => c,
        None => {
            let bump = sym(x) + DMatrix::identity(x.nrows(), x.ncols()) * (1e-14 + x.abs().max() * 1e-14);
            match Cholesky::new(bump) {
                Some(c) => c,
                None => return 0.0,
            }
        }
    };
    let l = chol.l();
    let li = l.clone().solve_lower_triangular(&DMatrix::identity(x.nrows(), x.ncols()))
        .expect("triangular solve with positive diagonal");
    let m = sym(&(&li * dx * li.transpose()));
    let min_eig = m.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig >= -1e-16 {
        cap
    } else {
        cap.min(-1.0 / min_eig)
    }
}

fn nt_scaling(x: &[DMatrix<f64>], z: &[DMatrix<f64>], mu: f64) -> BlockWorkspace {
    let floor = (mu * 1e-12).max(1e-300);
    let mut w = Vec::with_capacity(x.len());
    let mut z_inv = Vec::with_capacity(x.len());
    for (xb, zb) in x.iter().zip(z) {
        let x_half = sym_fn(xb, floor, f64::sqrt);
        let t = sym(&(&x_half * zb * &x_half));
        let t_inv_half = sym_fn(&t, floor, |e| 1.0 / e.sqrt());
        w.push(sym(&(&x_half * t_inv_half * x_half)));
        z_inv.push(sym_fn(zb, floor, |e| 1.0 / e));
    }
    BlockWorkspace { w, z_inv }
}

/// Schur complement `M[i][k] = <A_i, W A_k W>`, built from the identity
/// `[W E_rc W]_{ab} = (W_ar W_cb + W_ac W_rb) / 2` for `r != c` and
/// `W_ar W_rb` for `r = c`.
fn schur_complement(p: &ConicProblem, ws: &BlockWorkspace) -> DMatrix<f64> {
    let m = p.num_constraints();
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        for k in i..m {
            let mut acc = 0.0;
            for s in &p.eq_constraints[i].terms {
                for t in &p.eq_constraints[k].terms {
                    if s.block != t.block {
                        continue;
                    }
                    let w = &ws.w[s.block];
                    let (a, b) = (s.row, s.col);
                    let (r, c) = (t.row, t.col);
                    let v = if r == c {
                        w[(a, r)] * w[(r, b)]
                    } else {
                        0.5 * (w[(a, r)] * w[(c, b)] + w[(a, c)] * w[(r, b)])
                    };
                    acc += s.coeff * t.coeff * v;
                }
            }
            out[(i, k)] = acc;
            out[(k, i)] = acc;
        }
    }
    out
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dy: DVector<f64>,
    dz: Vec<DMatrix<f64>>,
}

/// Solves the Newton system for a given complementarity target `rc`:
/// `A(dX) = rp`, `Rd + sum_i dy_i A_i - dZ = 0`, `dX + W dZ W = rc`.
fn newton_direction(
    p: &ConicProblem,
    ws: &BlockWorkspace,
    schur: &Cholesky<f64, nalgebra::Dyn>,
    rp: &DVector<f64>,
    rd: &[DMatrix<f64>],
    rc: &[DMatrix<f64>],
) -> Direction {
    // dZ = sum dy A + Rd and dX = rc - W dZ W, so the Schur system reads
    // M dy = <A_i, rc - W Rd W> - rp_i.
    let g: Vec<DMatrix<f64>> = rc
        .iter()
        .zip(rd)
        .zip(&ws.w)
        .map(|((rcb, rdb), wb)| rcb - wb * rdb * wb)
        .collect();
    let m = p.num_constraints();
    let rhs = DVector::from_fn(m, |i, _| p.constraint_dot(i, &g) - rp[i]);
    let dy = schur.solve(&rhs);

    let mut dz = p.combine_multipliers(dy.as_slice());
    for (dzb, rdb) in dz.iter_mut().zip(rd) {
        *dzb += rdb;
    }
    let dx: Vec<DMatrix<f64>> = rc
        .iter()
        .zip(&dz)
        .zip(&ws.w)
        .map(|((rcb, dzb), wb)| sym(&(rcb - wb * dzb * wb)))
        .collect();
    Direction { dx, dy, dz }
}

/// Solves a block-diagonal SDP in equality standard form.
pub fn solve(problem: &ConicProblem, cfg: &SolverConfig) -> Result<ConicSolution, SdpError> {
    let mut p = problem.clone();

    // Diagonal equilibration: scale each constraint to unit Frobenius norm.
    let mut row_scale = vec![1.0f64; p.num_constraints()];
    if cfg.equilibrate {
        for (i, s) in row_scale.iter_mut().enumerate() {
            let nrm = p.constraint_norm(i);
            if nrm > 1e-300 {
                *s = nrm;
                for t in &mut p.eq_constraints[i].terms {
                    t.coeff /= nrm;
                }
                p.eq_constraints[i].rhs /= nrm;
            }
        }
    }

    let m = p.num_constraints();
    let n_total = p.total_dim() as f64;
    let b = DVector::from_fn(m, |i, _| p.eq_constraints[i].rhs);
    let b_norm = b.norm();
    let c_norm = frob(&p.objective);

    // CSDP-style starting point: comfortably interior multiples of I.
    let mut amax = 0.0f64;
    for i in 0..m {
        let an = p.constraint_norm(i);
        amax = amax.max((1.0 + b[i].abs()) / (1.0 + an));
    }
    let xi = (10.0f64).max(n_total.sqrt()).max(n_total * amax);
    let eta = (10.0f64)
        .max(n_total.sqrt())
        .max(c_norm)
        .max((0..m).map(|i| p.constraint_norm(i)).fold(0.0, f64::max));

    let mut x: Vec<DMatrix<f64>> =
        p.block_dims.iter().map(|&n| DMatrix::identity(n, n) * xi).collect();
    let mut z: Vec<DMatrix<f64>> =
        p.block_dims.iter().map(|&n| DMatrix::identity(n, n) * eta).collect();
    let mut y = DVector::zeros(m);

    let mut stalls = 0usize;
    let mut iterations = 0usize;
    let mut status = SolveStatus::MaxIter;
    // Best iterate by scaled worst-violation; degenerate problems can
    // wander after near-convergence, so the last iterate is not always
    // the one to report.
    let mut best: Option<(f64, Vec<DMatrix<f64>>, DVector<f64>, Vec<DMatrix<f64>>, usize)> = None;
    let mut since_best = 0usize;

    let finish = |x: &Vec<DMatrix<f64>>,
                      y: &DVector<f64>,
                      z: &Vec<DMatrix<f64>>,
                      iterations: usize,
                      status: SolveStatus| {
        let pobj = p
            .objective
            .iter()
            .zip(x)
            .map(|(cb, xb)| cb.dot(xb))
            .sum::<f64>();
        let dobj = b.dot(y);
        let rp = DVector::from_fn(m, |i, _| b[i] - p.constraint_dot(i, x));
        let mut rd = p.combine_multipliers(y.as_slice());
        for ((rdb, zb), cb) in rd.iter_mut().zip(z).zip(&p.objective) {
            *rdb -= zb;
            *rdb -= cb;
        }
        let gap = dobj - pobj;
        let dual_multipliers: Vec<f64> =
            y.iter().zip(&row_scale).map(|(yi, s)| yi / s).collect();
        ConicSolution {
            primal_blocks: x.clone(),
            dual_blocks: z.clone(),
            dual_multipliers,
            primal_objective: pobj,
            dual_objective: dobj,
            gap,
            rel_gap: gap.abs() / (1.0 + pobj.abs() + dobj.abs()),
            primal_infeas: rp.norm() / (1.0 + b_norm),
            dual_infeas: frob(&rd) / (1.0 + c_norm),
            iterations,
            status,
        }
    };

    for iter in 0..cfg.max_iter {
        iterations = iter;
        let mu = x.iter().zip(&z).map(|(xb, zb)| xb.dot(zb)).sum::<f64>() / n_total;

        let rp = DVector::from_fn(m, |i, _| b[i] - p.constraint_dot(i, &x));
        let mut rd = p.combine_multipliers(y.as_slice());
        for ((rdb, zb), cb) in rd.iter_mut().zip(&z).zip(&p.objective) {
            *rdb -= zb;
            *rdb -= cb;
        }

        let pobj = p.objective.iter().zip(&x).map(|(cb, xb)| cb.dot(xb)).sum::<f64>();
        let dobj = b.dot(&y);
        let rel_gap = (dobj - pobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let prim_infeas = rp.norm() / (1.0 + b_norm);
        let dual_infeas = frob(&rd) / (1.0 + c_norm);
        if std::env::var_os("MCAR_SDP_TRACE").is_some() {
            eprintln!(
                "it {iter:3} mu {mu:+.3e} pobj {pobj:+.6e} dobj {dobj:+.6e} gap {rel_gap:.3e} pinf {prim_infeas:.3e} dinf {dual_infeas:.3e}"
            );
        }
        if !mu.is_finite() {
            status = SolveStatus::NumericalFailure;
            break;
        }
        if rel_gap <= cfg.rel_gap_tol && prim_infeas <= cfg.feas_tol && dual_infeas <= cfg.feas_tol
        {
            status = SolveStatus::Optimal;
            return Ok(finish(&x, &y, &z, iter, status));
        }

        let merit = (rel_gap / cfg.rel_gap_tol)
            .max(prim_infeas / cfg.feas_tol)
            .max(dual_infeas / cfg.feas_tol);
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, x.clone(), y.clone(), z.clone(), iter));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= 20 {
                break;
            }
        }

        let ws = nt_scaling(&x, &z, mu);
        let schur_raw = schur_complement(&p, &ws);
        let mut ridge = 0.0;
        let mut schur_factor = None;
        while schur_factor.is_none() {
            let mut sm = schur_raw.clone();
            if ridge > 0.0 {
                for i in 0..m {
                    sm[(i, i)] += ridge;
                }
            }
            match Cholesky::new(sm) {
                Some(ch) => schur_factor = Some(ch),
                None => {
                    let trace_avg = schur_raw.trace().abs() / m as f64;
                    ridge = if ridge == 0.0 {
                        (trace_avg * 1e-14).max(1e-300)
                    } else {
                        ridge * 100.0
                    };
                    if ridge > trace_avg * 1e-4 + 1e-10 {
                        break;
                    }
                }
            }
        }
        let Some(schur) = schur_factor else {
            status = SolveStatus::NumericalFailure;
            break;
        };

        // Predictor: aim at mu = 0 with no correction.
        let rc_aff: Vec<DMatrix<f64>> = x.iter().map(|xb| -xb).collect();
        let aff = newton_direction(&p, &ws, &schur, &rp, &rd, &rc_aff);
        let tau = 0.98f64;
        let ap_aff: f64 = x
            .iter()
            .zip(&aff.dx)
            .map(|(xb, dxb)| max_step(xb, dxb, 1.0 / tau))
            .fold(f64::INFINITY, f64::min)
            * tau;
        let ad_aff: f64 = z
            .iter()
            .zip(&aff.dz)
            .map(|(zb, dzb)| max_step(zb, dzb, 1.0 / tau))
            .fold(f64::INFINITY, f64::min)
            * tau;
        let ap_aff = ap_aff.min(1.0);
        let ad_aff = ad_aff.min(1.0);

        let mu_aff = x
            .iter()
            .zip(&aff.dx)
            .zip(z.iter().zip(&aff.dz))
            .map(|((xb, dxb), (zb, dzb))| (xb + dxb * ap_aff).dot(&(zb + dzb * ad_aff)))
            .sum::<f64>()
            / n_total;
        let sigma = ((mu_aff / mu).powi(3)).clamp(1e-8, 0.999);

        // Corrector with Mehrotra second-order term.
        let rc: Vec<DMatrix<f64>> = x
            .iter()
            .zip(&ws.z_inv)
            .zip(aff.dx.iter().zip(&aff.dz))
            .map(|((xb, zinvb), (dxb, dzb))| {
                let so = sym(&(dxb * dzb * zinvb));
                zinvb * (sigma * mu) - xb - so
            })
            .collect();
        let mut dir = newton_direction(&p, &ws, &schur, &rp, &rd, &rc);
        let mut ap: f64 = x
            .iter()
            .zip(&dir.dx)
            .map(|(xb, dxb)| max_step(xb, dxb, 1.0 / tau))
            .fold(f64::INFINITY, f64::min)
            * tau;
        let mut ad: f64 = z
            .iter()
            .zip(&dir.dz)
            .map(|(zb, dzb)| max_step(zb, dzb, 1.0 / tau))
            .fold(f64::INFINITY, f64::min)
            * tau;
        ap = ap.min(1.0);
        ad = ad.min(1.0);

        // If the second-order term hurt badly, fall back to a plain
        // centering step.
        if ap * ad < 0.25 * ap_aff * ad_aff {
            let rc_plain: Vec<DMatrix<f64>> = x
                .iter()
                .zip(&ws.z_inv)
                .map(|(xb, zinvb)| zinvb * (sigma * mu) - xb)
                .collect();
            dir = newton_direction(&p, &ws, &schur, &rp, &rd, &rc_plain);
            ap = x
                .iter()
                .zip(&dir.dx)
                .map(|(xb, dxb)| max_step(xb, dxb, 1.0 / tau))
                .fold(f64::INFINITY, f64::min)
                * tau;
            ad = z
                .iter()
                .zip(&dir.dz)
                .map(|(zb, dzb)| max_step(zb, dzb, 1.0 / tau))
                .fold(f64::INFINITY, f64::min)
                * tau;
            ap = ap.min(1.0);
            ad = ad.min(1.0);
        }

        if ap < 1e-10 && ad < 1e-10 {
            stalls += 1;
            if stalls >= 5 {
                status = SolveStatus::NumericalFailure;
                break;
            }
        } else {
            stalls = 0;
        }

        for (xb, dxb) in x.iter_mut().zip(&dir.dx) {
            *xb += dxb * ap;
            *xb = sym(xb);
        }
        y += &dir.dy * ad;
        for (zb, dzb) in z.iter_mut().zip(&dir.dz) {
            *zb += dzb * ad;
            *zb = sym(zb);
        }
    }

    match best {
        Some((_, bx, by, bz, bit)) => Ok(finish(&bx, &by, &bz, bit.max(iterations), status)),
        None => Ok(finish(&x, &y, &z, iterations, status)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::problem::{Constraint, ConstraintTerm};

    #[test]
    fn scalar_problem() {
        // maximize x s.t. x = 0.5, x >= 0
        let p = ConicProblem::new(
            vec![1],
            vec![DMatrix::from_element(1, 1, 1.0)],
            vec![Constraint { terms: vec![ConstraintTerm::new(0, 0, 0, 1.0)], rhs: 0.5 }],
        )
        .unwrap();
        let sol = solve(&p, &SolverConfig::default()).unwrap().require_optimal().unwrap();
        assert!((sol.primal_objective - 0.5).abs() < 1e-7);
        assert!((sol.primal_blocks[0][(0, 0)] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn two_by_two_trace_bound() {
        // maximize <I, X> s.t. tr(X) = 2, X >= 0 -> 2, with free off-diagonal.
        let p = ConicProblem::new(
            vec![2],
            vec![DMatrix::identity(2, 2)],
            vec![Constraint {
                terms: vec![ConstraintTerm::new(0, 0, 0, 1.0), ConstraintTerm::new(0, 1, 1, 1.0)],
                rhs: 2.0,
            }],
        )
        .unwrap();
        let sol = solve(&p, &SolverConfig::default()).unwrap().require_optimal().unwrap();
        assert!((sol.primal_objective - 2.0).abs() < 1e-7);
        assert!(sol.gap.abs() <= 1e-6);
    }

    #[test]
    fn weak_duality_direction() {
        // maximize x11 s.t. x11 + x22 = 1: optimum 1, dual above primal.
        let p = ConicProblem::new(
            vec![2],
            vec![DMatrix::from_partial_diagonal(2, 2, &[1.0, 0.0])],
            vec![Constraint {
                terms: vec![ConstraintTerm::new(0, 0, 0, 1.0), ConstraintTerm::new(0, 1, 1, 1.0)],
                rhs: 1.0,
            }],
        )
        .unwrap();
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.primal_objective <= sol.dual_objective + 1e-9 * (1.0 + sol.primal_objective.abs()));
        assert!((sol.primal_objective - 1.0).abs() < 1e-7);
    }

    #[test]
    fn determinism() {
        let p = ConicProblem::new(
            vec![3],
            vec![DMatrix::identity(3, 3)],
            vec![
                Constraint {
                    terms: vec![
                        ConstraintTerm::new(0, 0, 0, 1.0),
                        ConstraintTerm::new(0, 1, 1, 1.0),
                        ConstraintTerm::new(0, 2, 2, 1.0),
                    ],
                    rhs: 3.0,
                },
                Constraint { terms: vec![ConstraintTerm::new(0, 0, 1, 1.0)], rhs: 0.25 },
            ],
        )
        .unwrap();
        let a = solve(&p, &SolverConfig::default()).unwrap();
        let b = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.primal_objective, b.primal_objective);
    }
}
