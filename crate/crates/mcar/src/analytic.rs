//! Closed forms, feasibility characterisations, reductions and lower bounds
//! for cycle patterns, block 3-cycles and two related pattern families.
//!
//! These serve both as fast paths (a cycle's index needs only a scalar root
//! find, not a full conic solve) and as independent oracles against the
//! solver. Cycle correlations are parametrised as `rho_j = cos(theta_j)`
//! with `theta_j in [0, pi]`: in that coordinate, completability is a finite
//! set of linear inequalities and the index solves a one-dimensional fixed
//! point.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::patterns::{CorrSeq, PatternSet};

/// Correlations within this distance of +-1 count as singular edges.
pub const SINGULAR_RHO_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AnalyticError {
    #[error("cycle needs at least 3 angles, got {0}")]
    TooShort(usize),
    #[error("angle {index} = {value} outside [0, pi]")]
    BadAngle { index: usize, value: f64 },
    #[error("block cycle requires ||P||_2 <= 1, got {0}")]
    SpectralNorm(f64),
    #[error("beta = {0} outside [0, 1]")]
    BadBeta(f64),
    #[error("fixed-point root not bracketed; fall back to the solver")]
    RootNotBracketed,
    #[error("pattern set is not the expected family: {0}")]
    WrongFamily(String),
    #[error("need at least two edges with 1 - rho^2 >= {floor}, found {found}")]
    TooSingular { floor: f64, found: usize },
    #[error("requires sigma1~^2 >= sigma1^2; relabel the patterns")]
    VarianceOrder,
    #[error("parameters out of range: {0}")]
    BadParameter(String),
}

/// A cycle of pairwise-observed variables, with correlation `cos(theta_j)`
/// on edge `{j, j+1}` (mod d).
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSpec {
    thetas: Vec<f64>,
}

impl CycleSpec {
    pub fn new(thetas: Vec<f64>) -> Result<Self, AnalyticError> {
        if thetas.len() < 3 {
            return Err(AnalyticError::TooShort(thetas.len()));
        }
        for (i, &t) in thetas.iter().enumerate() {
            if !(0.0..=std::f64::consts::PI).contains(&t) || !t.is_finite() {
                return Err(AnalyticError::BadAngle { index: i, value: t });
            }
        }
        Ok(Self { thetas })
    }

    pub fn from_correlations(rhos: &[f64]) -> Result<Self, AnalyticError> {
        let thetas = rhos
            .iter()
            .map(|&r| {
                if r.abs() > 1.0 + 1e-12 || !r.is_finite() {
                    Err(AnalyticError::BadParameter(format!("correlation {r}")))
                } else {
                    Ok(r.clamp(-1.0, 1.0).acos())
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(thetas)
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn correlations(&self) -> Vec<f64> {
        self.thetas.iter().map(|t| t.cos()).collect()
    }

    /// The correlation sequence over the d-cycle pattern set.
    pub fn to_corr_seq(&self) -> CorrSeq {
        CorrSeq::cycle_from_correlations(&self.correlations()).expect("angles give correlations")
    }
}

/// A block 3-cycle instance: off-diagonal blocks `P`, `-P` and `beta I`
/// over the pattern set [`PatternSet::block3`].
#[derive(Debug, Clone)]
pub struct BlockCycleSpec {
    d: usize,
    p: DMatrix<f64>,
    beta: f64,
}

impl BlockCycleSpec {
    pub fn new(p: DMatrix<f64>, beta: f64) -> Result<Self, AnalyticError> {
        let d = p.nrows();
        assert_eq!(d, p.ncols(), "P must be square");
        assert!(d >= 1);
        let norm = spectral_norm(&p);
        if norm > 1.0 + 1e-9 {
            return Err(AnalyticError::SpectralNorm(norm));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(AnalyticError::BadBeta(beta));
        }
        Ok(Self { d, p, beta })
    }

    pub fn block_dim(&self) -> usize {
        self.d
    }

    /// The corresponding correlation sequence on `3d` variables.
    pub fn to_corr_seq(&self) -> CorrSeq {
        let d = self.d;
        let ps = PatternSet::block3(d);
        let id = DMatrix::identity(d, d);
        let fill = |tr: &DMatrix<f64>| {
            let mut b = DMatrix::zeros(2 * d, 2 * d);
            b.view_mut((0, 0), (d, d)).copy_from(&id);
            b.view_mut((d, d), (d, d)).copy_from(&id);
            b.view_mut((0, d), (d, d)).copy_from(tr);
            b.view_mut((d, 0), (d, d)).copy_from(&tr.transpose());
            b
        };
        let blocks = vec![fill(&self.p), fill(&(-&self.p)), fill(&(&id * self.beta))];
        CorrSeq::new(crate::patterns::MatrixSeq::new(ps, blocks).expect("blocks conform"))
            .expect("block cycle blocks are correlations")
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// All violated odd-cardinality inequalities
/// `sum_{j in K} theta_j - (|K|-1) pi - sum_{j notin K} theta_j > 0`,
/// as `(|K|, violation)` pairs. The maximiser over subsets of a fixed size
/// takes the largest angles, so only sorted prefixes need checking.
pub fn barrett_violations(c: &CycleSpec) -> Vec<(usize, f64)> {
    let mut sorted = c.thetas.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let total: f64 = sorted.iter().sum();
    let mut out = Vec::new();
    let mut head = 0.0;
    for (idx, &t) in sorted.iter().enumerate() {
        head += t;
        let k = idx + 1;
        if k % 2 == 1 {
            let violation = head - (k as f64 - 1.0) * std::f64::consts::PI - (total - head);
            if violation > 0.0 {
                out.push((k, violation));
            }
        }
    }
    out
}

/// Whether the cycle's partial correlation matrix has a PSD completion.
/// After sign reduction a single inequality decides:
/// `2 max_j theta_j <= sum_j theta_j`.
pub fn barrett_feasible(c: &CycleSpec) -> bool {
    let (reduced, _) = reduce_signs(c);
    let max = reduced.thetas.iter().cloned().fold(0.0f64, f64::max);
    let sum: f64 = reduced.thetas.iter().sum();
    2.0 * max <= sum
}

/// Flips a subset of variables so that at most one correlation is negative
/// (at most one angle exceeds pi/2); the index is invariant under such
/// flips. Returns the transformed cycle and the per-variable signs.
pub fn reduce_signs(c: &CycleSpec) -> (CycleSpec, Vec<i8>) {
    let d = c.len();
    let negative: Vec<bool> =
        c.thetas.iter().map(|&t| t > std::f64::consts::FRAC_PI_2).collect();
    let n_neg = negative.iter().filter(|&&b| b).count();

    // Target edge signs: all positive when the count is even, otherwise a
    // single negative left on the widest edge.
    let mut must_flip = negative.clone();
    if n_neg % 2 == 1 {
        let keep = c
            .thetas
            .iter()
            .enumerate()
            .filter(|(j, _)| negative[*j])
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(j, _)| j)
            .expect("odd count has a maximum");
        must_flip[keep] = false;
    }

    // Edge j joins variables j and j+1; a variable flip toggles both its
    // edges, so the telescoping parity system determines the flips.
    let mut var_flip = vec![false; d];
    for j in 0..d - 1 {
        var_flip[j + 1] = var_flip[j] ^ must_flip[j];
    }
    debug_assert_eq!(var_flip[d - 1] ^ must_flip[d - 1], var_flip[0], "parity closes");

    let thetas = c
        .thetas
        .iter()
        .enumerate()
        .map(|(j, &t)| if must_flip[j] { std::f64::consts::PI - t } else { t })
        .collect();
    let flips = var_flip.iter().map(|&f| if f { -1 } else { 1 }).collect();
    (CycleSpec { thetas }, flips)
}

/// Removes edges with `|rho| >= 1 - tol`, transferring each removed edge's
/// sign onto the preceding edge; the index is unchanged. Keeps at least a
/// 3-cycle.
pub fn collapse_singular_edges(c: &CycleSpec, tol: f64) -> CycleSpec {
    let thetas = collapse_internal(c.thetas.clone(), tol, 3);
    CycleSpec { thetas }
}

fn collapse_internal(mut thetas: Vec<f64>, tol: f64, min_len: usize) -> Vec<f64> {
    loop {
        if thetas.len() <= min_len {
            return thetas;
        }
        let singular = thetas.iter().position(|&t| t.cos().abs() >= 1.0 - tol);
        match singular {
            None => return thetas,
            Some(j) => {
                let sign_negative = thetas[j].cos() < 0.0;
                let prev = (j + thetas.len() - 1) % thetas.len();
                if sign_negative {
                    thetas[prev] = std::f64::consts::PI - thetas[prev];
                }
                thetas.remove(j);
            }
        }
    }
}

/// How a cycle's index value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleMethod {
    Feasible,
    FixedPoint,
    CollapsedClosedForm,
}

/// The incompatibility index of a cycle, without touching the solver.
///
/// After sign reduction and collapse of singular edges: a completable cycle
/// returns 0; a remainder shorter than 3 uses the explicit two-angle forms;
/// otherwise the optimal completion angles satisfy
/// `phi_1* = sum_{j>=2} phi_j*` with
/// `cos(phi_j*) = 1 - (1 - cos theta_j)(1 + cos phi_1*)/(1 + cos theta_1)`,
/// a monotone scalar root in `phi_1* in (0, theta_1)`, and the index is
/// `1 - (1 + cos theta_1)/(1 + cos phi_1*)`.
pub fn cycle_r(c: &CycleSpec, tol: f64) -> Result<(f64, CycleMethod), AnalyticError> {
    let (reduced, _) = reduce_signs(c);
    let thetas = collapse_internal(reduced.thetas, tol.max(SINGULAR_RHO_TOL), 1);

    if thetas.len() == 1 {
        return Ok(((1.0 - thetas[0].cos()) / 2.0, CycleMethod::CollapsedClosedForm));
    }
    if thetas.len() == 2 {
        let (a, b) = (thetas[0].cos(), thetas[1].cos());
        return Ok(((a - b).abs() / 2.0, CycleMethod::CollapsedClosedForm));
    }

    let max = thetas.iter().cloned().fold(0.0f64, f64::max);
    let sum: f64 = thetas.iter().sum();
    if 2.0 * max <= sum {
        return Ok((0.0, CycleMethod::Feasible));
    }

    // rotate so the largest angle leads
    let lead = thetas
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(j, _)| j)
        .expect("nonempty");
    let mut rot = thetas[lead..].to_vec();
    rot.extend_from_slice(&thetas[..lead]);

    let theta1 = rot[0];
    let rest = &rot[1..];
    let one_plus_c1 = 1.0 + theta1.cos();
    debug_assert!(one_plus_c1 > 0.0, "singular leading edge survived collapse");

    let residual = |phi1: f64| -> f64 {
        let ratio = (1.0 + phi1.cos()) / one_plus_c1;
        let sum_rest: f64 = rest
            .iter()
            .map(|&tj| (1.0 - (1.0 - tj.cos()) * ratio).clamp(-1.0, 1.0).acos())
            .sum();
        phi1 - sum_rest
    };

    // residual is increasing on (0, theta1); incompatibility makes
    // residual(theta1) > 0 while residual(0) < 0.
    let (mut lo, mut hi) = (0.0f64, theta1);
    let (rlo, rhi) = (residual(lo), residual(hi));
    if !(rlo <= 0.0 && rhi >= 0.0) {
        return Err(AnalyticError::RootNotBracketed);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 {
            break;
        }
    }
    let phi1 = 0.5 * (lo + hi);
    let lambda = one_plus_c1 / (1.0 + phi1.cos());
    Ok(((1.0 - lambda).clamp(0.0, 1.0), CycleMethod::FixedPoint))
}

/// Linear lower bound for an incompatible cycle, from the violation of the
/// completability inequalities.
#[derive(Debug, Clone, Copy)]
pub struct CycleLowerBound {
    pub bound: f64,
    /// The slope `(cos b - cos a) / (2 (a - b))` from the three-angle base
    /// case, evaluated at the widest angle `a` and the widest other
    /// well-conditioned angle `b`.
    pub c_prime: f64,
    /// Largest violation among the odd-subset inequalities.
    pub violation: f64,
}

pub fn cycle_r_lower_bound(c: &CycleSpec, c_floor: f64) -> Result<CycleLowerBound, AnalyticError> {
    let (reduced, _) = reduce_signs(c);
    let well_conditioned: Vec<usize> = reduced
        .thetas
        .iter()
        .enumerate()
        .filter(|(_, &t)| {
            let rho = t.cos();
            1.0 - rho * rho >= c_floor
        })
        .map(|(j, _)| j)
        .collect();
    if well_conditioned.len() < 2 {
        return Err(AnalyticError::TooSingular {
            floor: c_floor,
            found: well_conditioned.len(),
        });
    }

    let violation = barrett_violations(&reduced)
        .into_iter()
        .map(|(_, v)| v)
        .fold(0.0f64, f64::max);
    if violation <= 0.0 {
        return Ok(CycleLowerBound { bound: 0.0, c_prime: 0.0, violation: 0.0 });
    }

    let lead = reduced
        .thetas
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(j, _)| j)
        .expect("nonempty");
    let theta_a = reduced.thetas[lead];
    let theta_b = well_conditioned
        .iter()
        .filter(|&&j| j != lead)
        .map(|&j| reduced.thetas[j])
        .fold(0.0f64, f64::max);
    let denom = theta_a - theta_b;
    if denom <= 0.0 {
        return Ok(CycleLowerBound { bound: 0.0, c_prime: 0.0, violation });
    }
    let c_prime = (theta_b.cos() - theta_a.cos()) / (2.0 * denom);
    let bound = (c_prime * violation).clamp(0.0, 1.0);
    Ok(CycleLowerBound { bound, c_prime, violation })
}

/// Compatibility verdict and singular-value lower bound for the block
/// 3-cycle: compatible iff `||P||_2^2 <= (1 - beta)/2`; the index is at
/// least `3/(4d) sum_j (sigma_j(P)^2 - (1 - beta)/2)_+`.
pub fn block3_analysis(b: &BlockCycleSpec) -> (bool, f64) {
    let svals = b.p.clone().svd(false, false).singular_values;
    let threshold = (1.0 - b.beta) / 2.0;
    let top = svals.iter().copied().fold(0.0f64, f64::max);
    let compatible = top * top <= threshold + 1e-12;
    let bound = 3.0 / (4.0 * b.d as f64)
        * svals.iter().map(|s| (s * s - threshold).max(0.0)).sum::<f64>();
    (compatible, bound)
}

/// For the family of all `(d-1)`-subsets: half the largest discrepancy
/// between two patterns' values for the same correlation entry. A lower
/// bound for the index; needs `d >= 4` so every pair has two witnesses.
pub fn allbutone_bounds(corr: &CorrSeq) -> Result<f64, AnalyticError> {
    let ps = corr.pattern_set();
    let d = ps.dim();
    if d < 4 {
        return Err(AnalyticError::WrongFamily(format!(
            "all-but-one bound needs d >= 4, got {d}"
        )));
    }
    let mut missing_of = vec![usize::MAX; ps.len()];
    for (pi, p) in ps.patterns().iter().enumerate() {
        if p.len() != d - 1 {
            return Err(AnalyticError::WrongFamily("pattern of wrong cardinality".into()));
        }
        let skip = (0..d).find(|j| p.binary_search(j).is_err()).expect("one index missing");
        missing_of[pi] = skip;
    }
    if ps.len() != d {
        return Err(AnalyticError::WrongFamily(format!(
            "expected {d} patterns, got {}",
            ps.len()
        )));
    }

    let entry = |pi: usize, i: usize, j: usize| -> f64 {
        let p = ps.pattern(pi);
        let a = p.binary_search(&i).expect("contained");
        let b = p.binary_search(&j).expect("contained");
        corr.blocks()[pi][(a, b)]
    };

    let mut theta = 0.0f64;
    for i in 0..d {
        for j in (i + 1)..d {
            let witnesses: Vec<usize> = (0..ps.len())
                .filter(|&pi| missing_of[pi] != i && missing_of[pi] != j)
                .collect();
            for (wa, &pa) in witnesses.iter().enumerate() {
                for &pb in &witnesses[wa + 1..] {
                    theta = theta.max((entry(pa, i, j) - entry(pb, i, j)).abs());
                }
            }
        }
    }
    Ok(theta / 2.0)
}

/// For two patterns overlapping in the first `d - 2` coordinates: the
/// nuclear norm of the overlap-block difference over `2d`.
pub fn twopattern_schatten_lb(corr: &CorrSeq) -> Result<f64, AnalyticError> {
    let ps = corr.pattern_set();
    let d = ps.dim();
    if ps.len() != 2 || d < 3 {
        return Err(AnalyticError::WrongFamily("expected exactly two patterns".into()));
    }
    let overlap: Vec<usize> = (0..d - 2).collect();
    let expected_a: Vec<usize> = overlap.iter().copied().chain([d - 2]).collect();
    let expected_b: Vec<usize> = overlap.iter().copied().chain([d - 1]).collect();
    if ps.pattern(0) != expected_a.as_slice() || ps.pattern(1) != expected_b.as_slice() {
        return Err(AnalyticError::WrongFamily(
            "patterns must share the first d-2 coordinates and split the last two".into(),
        ));
    }
    let k = d - 2;
    let diff =
        DMatrix::from_fn(k, k, |r, c| corr.blocks()[1][(r, c)] - corr.blocks()[0][(r, c)]);
    let nuclear: f64 = diff.svd(false, false).singular_values.iter().sum();
    Ok(nuclear / (2.0 * d as f64))
}

/// Closed form of the trace-normalised index for the two-pattern family
/// `{{1,2},{1,3}}` with covariance blocks
/// `[[s1, r12 sqrt(s1 s2)], [., s2]]` and `[[s1t, r13 sqrt(s1t s3)], [., s3]]`,
/// `s1t >= s1`.
///
/// Variances are first rescaled so the generalised trace is 3, matching the
/// index computation; with `cos(theta) = sqrt(s1/s1t)` and
/// `cos(phi) = |r13|` the value is
/// `(s1t - s1)/6 + (s3/3) sin^2((theta - phi)_+)` in the rescaled units.
pub fn twopattern_rtilde_closed_form(
    s1: f64,
    s2: f64,
    s1t: f64,
    s3: f64,
    _r12: f64,
    r13: f64,
) -> Result<f64, AnalyticError> {
    if !(s1 > 0.0 && s2 > 0.0 && s1t > 0.0 && s3 > 0.0) {
        return Err(AnalyticError::BadParameter("variances must be positive".into()));
    }
    if r13.abs() > 1.0 {
        return Err(AnalyticError::BadParameter(format!("correlation {r13}")));
    }
    if s1t < s1 {
        return Err(AnalyticError::VarianceOrder);
    }
    let trace = 0.5 * (s1 + s1t) + s2 + s3;
    let scale = 3.0 / trace;
    let (v1, v1t, v3) = (s1 * scale, s1t * scale, s3 * scale);
    let theta = (v1.sqrt() / v1t.sqrt()).clamp(-1.0, 1.0).acos();
    let phi = r13.abs().clamp(0.0, 1.0).acos();
    Ok((v1t - v1) / 6.0 + v3 / 3.0 * (theta - phi).max(0.0).sin().powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{r_index, rtilde_index};
    use crate::patterns::MatrixSeq;
    use crate::sdp::SolverConfig;
    use crate::testutil::random_corr_seq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_6, PI};

    fn sdp_r(c: &CycleSpec) -> f64 {
        r_index(&c.to_corr_seq(), &SolverConfig::default()).unwrap().r
    }

    #[test]
    fn barrett_examples() {
        assert!(barrett_feasible(&CycleSpec::new(vec![FRAC_PI_3; 3]).unwrap()));
        assert!(!barrett_feasible(
            &CycleSpec::new(vec![5.0 * PI / 6.0, FRAC_PI_6, FRAC_PI_6]).unwrap()
        ));
        assert!(barrett_feasible(&CycleSpec::new(vec![0.0; 4]).unwrap()));
        // the violated K = {1} inequality is reported
        let v = barrett_violations(
            &reduce_signs(&CycleSpec::new(vec![5.0 * PI / 6.0, FRAC_PI_6, FRAC_PI_6]).unwrap()).0,
        );
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].0, 1);
    }

    #[test]
    fn reduce_signs_examples() {
        // at most one large angle already: identity
        let c = CycleSpec::new(vec![2.0, 0.3, 0.4]).unwrap();
        let (r, flips) = reduce_signs(&c);
        assert_eq!(r.thetas(), c.thetas());
        assert!(flips.iter().all(|&f| f == 1));

        // two large angles cancel
        let c = CycleSpec::new(vec![2.0 * PI / 3.0, 2.0 * PI / 3.0, FRAC_PI_6]).unwrap();
        let (r, _) = reduce_signs(&c);
        let n_large = r.thetas().iter().filter(|&&t| t > FRAC_PI_2).count();
        assert!(n_large <= 1);
        assert!((sdp_r(&c) - sdp_r(&r)).abs() < 1e-6, "index not preserved");
    }

    #[test]
    fn single_flip_changes_large_count_by_even() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..50 {
            let d = rng.gen_range(3..7);
            let thetas: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..PI)).collect();
            let count = |ts: &[f64]| ts.iter().filter(|&&t| t > FRAC_PI_2).count() as i64;
            let var = rng.gen_range(0..d);
            // flipping variable `var` toggles edges var-1 and var
            let mut flipped = thetas.clone();
            let e1 = (var + d - 1) % d;
            for e in [e1, var % d] {
                flipped[e] = PI - flipped[e];
            }
            let diff = (count(&flipped) - count(&thetas)).abs();
            assert!(diff % 2 == 0, "parity changed oddly: {diff}");
        }
    }

    #[test]
    fn collapse_examples() {
        // positive singular edge: drop it
        let c = CycleSpec::new(vec![1.0, 0.8, 0.6, 0.0]).unwrap();
        let r = collapse_singular_edges(&c, 1e-9);
        assert_eq!(r.thetas(), &[1.0, 0.8, 0.6]);

        // negative singular edge: the preceding edge flips
        let c = CycleSpec::new(vec![1.0, 0.8, 0.6, PI]).unwrap();
        let r = collapse_singular_edges(&c, 1e-9);
        assert_eq!(r.len(), 3);
        assert!((r.thetas()[2] - (PI - 0.6)).abs() < 1e-12);
        assert!((sdp_r(&c) - sdp_r(&r)).abs() < 1e-6);

        // nothing singular: identity
        let c = CycleSpec::new(vec![1.0, 0.8, 0.6, 0.5]).unwrap();
        assert_eq!(collapse_singular_edges(&c, 1e-9).thetas(), c.thetas());
    }

    #[test]
    fn cycle_r_closed_forms() {
        // one singular edge: (cos t2 - cos t1)/2
        let c = CycleSpec::new(vec![FRAC_PI_2, FRAC_PI_3, 0.0]).unwrap();
        let (r, method) = cycle_r(&c, 1e-9).unwrap();
        assert_eq!(method, CycleMethod::CollapsedClosedForm);
        assert!((r - 0.25).abs() < 1e-12);

        // feasible cycle
        let c = CycleSpec::new(vec![FRAC_PI_3; 3]).unwrap();
        assert_eq!(cycle_r(&c, 1e-9).unwrap().0, 0.0);

        // maximal incompatibility
        let c = CycleSpec::from_correlations(&[-1.0, 1.0, 1.0]).unwrap();
        assert!((cycle_r(&c, 1e-9).unwrap().0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cycle_r_matches_solver_on_random_incompatible_cycles() {
        let mut rng = StdRng::seed_from_u64(97);
        let mut checked = 0;
        while checked < 12 {
            let d = rng.gen_range(3..6);
            let mut thetas: Vec<f64> = (0..d).map(|_| rng.gen_range(0.05..0.45)).collect();
            thetas[0] = rng.gen_range(1.8..2.9); // force a violation
            let c = CycleSpec::new(thetas).unwrap();
            if barrett_feasible(&c) {
                continue;
            }
            let (r_fp, _) = cycle_r(&c, 1e-9).unwrap();
            let r_sdp = sdp_r(&c);
            assert!(
                (r_fp - r_sdp).abs() <= 1e-5,
                "fixed point {r_fp} vs solver {r_sdp} at {:?}",
                c.thetas()
            );
            checked += 1;
        }
    }

    #[test]
    fn cycle_r_is_continuous_in_angles() {
        let base = CycleSpec::new(vec![2.4, 0.3, 0.25, 0.2]).unwrap();
        let (r0, _) = cycle_r(&base, 1e-9).unwrap();
        for j in 0..4 {
            let mut t = base.thetas().to_vec();
            t[j] += 1e-6;
            let (r1, _) = cycle_r(&CycleSpec::new(t).unwrap(), 1e-9).unwrap();
            assert!((r1 - r0).abs() <= 1e-4, "jump at angle {j}: {}", (r1 - r0).abs());
        }
    }

    #[test]
    fn lower_bound_behaviour() {
        // feasible: zero
        let c = CycleSpec::new(vec![FRAC_PI_3; 3]).unwrap();
        let lb = cycle_r_lower_bound(&c, 0.05).unwrap();
        assert_eq!(lb.bound, 0.0);

        // dominated by the index, positive when violated
        let mut rng = StdRng::seed_from_u64(11);
        let mut seen_positive = false;
        for _ in 0..40 {
            let d = rng.gen_range(3..6);
            let mut thetas: Vec<f64> = (0..d).map(|_| rng.gen_range(0.2..0.6)).collect();
            thetas[0] = rng.gen_range(2.0..2.8);
            let c = CycleSpec::new(thetas).unwrap();
            let Ok(lb) = cycle_r_lower_bound(&c, 0.05) else { continue };
            let (r, _) = cycle_r(&c, 1e-9).unwrap();
            assert!(lb.bound <= r + 1e-6, "bound {} exceeds index {r}", lb.bound);
            if lb.violation > 0.0 {
                assert!(lb.bound > 0.0);
                seen_positive = true;
            }
        }
        assert!(seen_positive);

        // precondition: two well-conditioned edges
        let c = CycleSpec::from_correlations(&[1.0, 1.0, 0.3]).unwrap();
        assert!(matches!(
            cycle_r_lower_bound(&c, 0.05),
            Err(AnalyticError::TooSingular { .. })
        ));
    }

    #[test]
    fn block3_examples() {
        let half = BlockCycleSpec::new(DMatrix::identity(3, 3) * 0.5, 0.0).unwrap();
        let (compat, bound) = block3_analysis(&half);
        assert!(compat);
        assert_eq!(bound, 0.0);

        let strong = BlockCycleSpec::new(DMatrix::identity(4, 4) * 0.8, 0.0).unwrap();
        let (compat, bound) = block3_analysis(&strong);
        assert!(!compat);
        assert!((bound - 0.105).abs() < 1e-12);
    }

    #[test]
    fn block3_verdict_and_bound_match_solver() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..6 {
            let d = rng.gen_range(1..4usize);
            let raw = DMatrix::<f64>::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
            let norm = spectral_norm(&raw);
            let target = rng.gen_range(0.3..0.98);
            let p = raw * (target / norm.max(1e-12));
            let beta = rng.gen_range(0.0..0.6);
            let spec = BlockCycleSpec::new(p, beta).unwrap();
            let (compat, bound) = block3_analysis(&spec);
            let r = r_index(&spec.to_corr_seq(), &SolverConfig::default()).unwrap().r;
            assert_eq!(compat, r <= 1e-6, "verdict mismatch: R = {r}");
            assert!(bound <= r + 1e-6, "bound {bound} above index {r}");
        }
    }

    #[test]
    fn allbutone_behaviour() {
        // consistent marginals: zero
        let ps = PatternSet::all_but_one(4);
        let corr = CorrSeq::new(
            MatrixSeq::new(
                ps.clone(),
                ps.patterns().iter().map(|p| DMatrix::identity(p.len(), p.len())).collect(),
            )
            .unwrap(),
        )
        .unwrap();
        assert_eq!(allbutone_bounds(&corr).unwrap(), 0.0);

        // tridiagonal family with a dominant entry: the index equals the
        // bound (with several comparable entries the index can exceed it)
        let mut rng = StdRng::seed_from_u64(17);
        for d in [4usize, 5] {
            let ps = PatternSet::all_but_one(d);
            let eps = dominant_entry_vector(&mut rng, d - 2);
            let mut blocks: Vec<DMatrix<f64>> =
                (0..d).map(|_| DMatrix::identity(d - 1, d - 1)).collect();
            for (i, &e) in eps.iter().enumerate() {
                blocks[d - 1][(i, i + 1)] = e;
                blocks[d - 1][(i + 1, i)] = e;
            }
            let corr = CorrSeq::new(MatrixSeq::new(ps, blocks).unwrap()).unwrap();
            let theta = allbutone_bounds(&corr).unwrap();
            let expected = eps.iter().fold(0.0f64, |m, e| m.max(e.abs())) / 2.0;
            assert!((theta - expected).abs() < 1e-12);
            let r = r_index(&corr, &SolverConfig::default()).unwrap().r;
            assert!((r - expected).abs() <= 1e-5, "index {r} vs closed form {expected}");
        }

        // wrong family is rejected
        let bad = CorrSeq::cycle_from_correlations(&[0.0, 0.0, 0.0]).unwrap();
        assert!(allbutone_bounds(&bad).is_err());
    }

    #[test]
    fn schatten_bound_behaviour() {
        let d = 4;
        let ps = PatternSet::new(d, vec![vec![0, 1, 2], vec![0, 1, 3]]).unwrap();
        // identical overlap blocks: zero
        let blocks = vec![DMatrix::identity(3, 3), DMatrix::identity(3, 3)];
        let corr = CorrSeq::new(MatrixSeq::new(ps.clone(), blocks).unwrap()).unwrap();
        assert_eq!(twopattern_schatten_lb(&corr).unwrap(), 0.0);

        // overlap difference 0.2 (E_01 + E_10): singular values (0.2, 0.2),
        // nuclear norm 0.4, bound 0.4 / (2*4) = 0.05
        let b1 = DMatrix::identity(3, 3);
        let mut b2 = DMatrix::identity(3, 3);
        b2[(0, 1)] = 0.2;
        b2[(1, 0)] = 0.2;
        let corr = CorrSeq::new(MatrixSeq::new(ps.clone(), vec![b1, b2]).unwrap()).unwrap();
        let lb = twopattern_schatten_lb(&corr).unwrap();
        assert!((lb - 0.05).abs() < 1e-12);

        // dominated by the index
        let mut rng = StdRng::seed_from_u64(19);
        for _ in 0..5 {
            let base = random_corr_seq(&mut rng, &ps, 0.6);
            let lb = twopattern_schatten_lb(&base).unwrap();
            let r = r_index(&base, &SolverConfig::default()).unwrap().r;
            assert!(lb <= r + 1e-6, "bound {lb} above index {r}");
        }
    }

    #[test]
    fn rtilde_closed_form_examples() {
        // equal first variances: zero
        let v = twopattern_rtilde_closed_form(0.9, 1.0, 0.9, 0.8, 0.2, 0.4).unwrap();
        assert_eq!(v, 0.0);

        // phi >= theta: only the variance-gap term survives
        let (s1, s1t) = (0.8, 1.0);
        let v = twopattern_rtilde_closed_form(s1, 1.0, s1t, 0.9, 0.0, 0.95).unwrap();
        let scale = 3.0 / (0.5 * (s1 + s1t) + 1.0 + 0.9);
        assert!((v - scale * (s1t - s1) / 6.0).abs() < 1e-12);

        // ordering precondition
        assert!(matches!(
            twopattern_rtilde_closed_form(1.2, 1.0, 0.9, 0.8, 0.0, 0.0),
            Err(AnalyticError::VarianceOrder)
        ));
    }

    #[test]
    fn rtilde_closed_form_matches_solver() {
        let mut rng = StdRng::seed_from_u64(23);
        let ps = PatternSet::new(3, vec![vec![0, 1], vec![0, 2]]).unwrap();
        for _ in 0..8 {
            let s1 = rng.gen_range(0.4..1.0);
            let s1t = s1 + rng.gen_range(0.0..0.8);
            let s2 = rng.gen_range(0.4..1.4);
            let s3 = rng.gen_range(0.4..1.4);
            let r12 = rng.gen_range(-0.9..0.9);
            let r13 = rng.gen_range(-0.9..0.9);
            let closed = twopattern_rtilde_closed_form(s1, s2, s1t, s3, r12, r13).unwrap();
            let b1 = DMatrix::from_row_slice(
                2,
                2,
                &[s1, r12 * (s1 * s2).sqrt(), r12 * (s1 * s2).sqrt(), s2],
            );
            let b2 = DMatrix::from_row_slice(
                2,
                2,
                &[s1t, r13 * (s1t * s3).sqrt(), r13 * (s1t * s3).sqrt(), s3],
            );
            let seq = MatrixSeq::new(ps.clone(), vec![b1, b2]).unwrap();
            let rt = rtilde_index(&seq, &SolverConfig::default()).unwrap().r;
            assert!(
                (rt - closed).abs() <= 1e-5,
                "solver {rt} vs closed form {closed} at s1={s1} s1t={s1t} r13={r13}"
            );
        }
    }
}
