//! Pattern sets and the linear algebra of per-pattern matrix sequences.
//!
//! A pattern is a subset `S` of the variable indices `{0, .., d-1}` whose
//! coordinates are observed together. The marginalisation operator sends a
//! full `d x d` symmetric matrix to the sequence of its `S x S` submatrices;
//! its adjoint scatters a sequence back, summing overlaps. Everything here is
//! immutable after construction and all operations are pure.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Symmetry tolerance at construction; inputs are symmetrised and the
/// asymmetry magnitude recorded.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Relative eigenvalue floor for PSD validation.
pub const PSD_TOL: f64 = 1e-8;

/// Tolerance on the unit diagonal of correlation blocks.
pub const UNIT_DIAG_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("pattern set must contain at least one pattern")]
    Empty,
    #[error("pattern {0} is empty")]
    EmptyPattern(usize),
    #[error("pattern {pattern} has out-of-range or non-increasing index {index} (1-based, d = {d})")]
    BadIndex { pattern: usize, index: usize, d: usize },
    #[error("patterns {0} and {1} are identical")]
    Duplicate(usize, usize),
    #[error("block {block} has dimension {got}, pattern has {want} indices")]
    BlockDim { block: usize, got: usize, want: usize },
    #[error("block {block} is asymmetric beyond tolerance: |X - X^T| = {asym:e}")]
    Asymmetric { block: usize, asym: f64 },
    #[error("block {block} diagonal entry {entry} deviates from 1 by {dev:e}")]
    NotUnitDiagonal { block: usize, entry: usize, dev: f64 },
    #[error("block {block} has eigenvalue {eig:e} below the PSD tolerance")]
    NotPsd { block: usize, eig: f64 },
    #[error("matrix is {got_rows}x{got_cols}, expected {d}x{d}")]
    DimensionMismatch { got_rows: usize, got_cols: usize, d: usize },
    #[error("sequences are defined over different pattern sets")]
    PatternMismatch,
    #[error("variance entry ({block}, {entry}) is negative: {value}")]
    NegativeVariance { block: usize, entry: usize, value: f64 },
    #[error("entry ({block}, {entry}) is not finite")]
    NotFinite { block: usize, entry: usize },
    #[error("invalid pattern JSON: {0}")]
    Json(String),
}

/// The collection of observed-variable subsets of `{0, .., d-1}`.
///
/// Indices are 0-based internally; the JSON serialisation is 1-based.
/// Every index in `0..d` is covered by at least one pattern: uncovered
/// indices are compacted away at construction and the original positions
/// kept in `original_indices`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternSet {
    d: usize,
    patterns: Vec<Vec<usize>>,
    /// For each compacted index, the index in the caller's original space.
    original_indices: Vec<usize>,
    /// `membership[j]` lists the patterns containing `j` (the set S_j).
    membership: Vec<Vec<usize>>,
}

impl PatternSet {
    /// Builds a pattern set over `{0, .., d-1}`; patterns must be strictly
    /// increasing, non-empty, distinct index lists. Indices never observed
    /// shrink the ambient dimension.
    pub fn new(d: usize, patterns: Vec<Vec<usize>>) -> Result<Self, PatternError> {
        if patterns.is_empty() {
            return Err(PatternError::Empty);
        }
        for (pi, p) in patterns.iter().enumerate() {
            if p.is_empty() {
                return Err(PatternError::EmptyPattern(pi));
            }
            let mut prev = None;
            for &j in p {
                if j >= d || prev.is_some_and(|q| j <= q) {
                    return Err(PatternError::BadIndex { pattern: pi, index: j + 1, d });
                }
                prev = Some(j);
            }
        }
        for i in 0..patterns.len() {
            for k in (i + 1)..patterns.len() {
                if patterns[i] == patterns[k] {
                    return Err(PatternError::Duplicate(i, k));
                }
            }
        }

        let mut covered = vec![false; d];
        for p in &patterns {
            for &j in p {
                covered[j] = true;
            }
        }
        let original_indices: Vec<usize> =
            (0..d).filter(|&j| covered[j]).collect();
        let remap: Vec<Option<usize>> = {
            let mut r = vec![None; d];
            for (new, &old) in original_indices.iter().enumerate() {
                r[old] = Some(new);
            }
            r
        };
        let d_new = original_indices.len();
        let patterns: Vec<Vec<usize>> = patterns
            .into_iter()
            .map(|p| p.into_iter().map(|j| remap[j].unwrap()).collect())
            .collect();

        let mut membership = vec![Vec::new(); d_new];
        for (pi, p) in patterns.iter().enumerate() {
            for &j in p {
                membership[j].push(pi);
            }
        }
        Ok(Self { d: d_new, patterns, original_indices, membership })
    }

    /// The d-cycle `{{1,2}, {2,3}, .., {d,1}}` (0-based internally).
    pub fn cycle(d: usize) -> Self {
        assert!(d >= 3, "a cycle needs at least 3 variables");
        let patterns = (0..d)
            .map(|j| {
                let mut p = vec![j, (j + 1) % d];
                p.sort_unstable();
                p
            })
            .collect();
        Self::new(d, patterns).expect("cycle patterns are valid")
    }

    /// All subsets of cardinality `d - 1`, ordered as `S_{-1}, .., S_{-d}`.
    pub fn all_but_one(d: usize) -> Self {
        assert!(d >= 2);
        let patterns = (0..d)
            .map(|skip| (0..d).filter(|&j| j != skip).collect())
            .collect();
        Self::new(d, patterns).expect("all-but-one patterns are valid")
    }

    /// The block 3-cycle on `3b` variables: `[2b]`, `[b] u ([3b]\[2b])`,
    /// `[3b]\[b]`.
    pub fn block3(b: usize) -> Self {
        assert!(b >= 1);
        let d = 3 * b;
        let p1: Vec<usize> = (0..2 * b).collect();
        let p2: Vec<usize> = (0..b).chain(2 * b..3 * b).collect();
        let p3: Vec<usize> = (b..3 * b).collect();
        Self::new(d, vec![p1, p2, p3]).expect("block 3-cycle patterns are valid")
    }

    /// The single complete pattern `{1, .., d}`.
    pub fn complete(d: usize) -> Self {
        Self::new(d, vec![(0..d).collect()]).expect("complete pattern is valid")
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn pattern(&self, i: usize) -> &[usize] {
        &self.patterns[i]
    }

    pub fn patterns(&self) -> &[Vec<usize>] {
        &self.patterns
    }

    pub fn original_indices(&self) -> &[usize] {
        &self.original_indices
    }

    /// The patterns containing index `j` (the set S_j).
    pub fn containing(&self, j: usize) -> &[usize] {
        &self.membership[j]
    }

    /// |S_j|: the number of patterns observing coordinate `j`.
    pub fn multiplicity(&self, j: usize) -> usize {
        self.membership[j].len()
    }

    /// |S_jj'|: the number of patterns observing `j` and `k` together.
    pub fn pair_multiplicity(&self, j: usize, k: usize) -> usize {
        self.patterns
            .iter()
            .filter(|p| p.binary_search(&j).is_ok() && p.binary_search(&k).is_ok())
            .count()
    }

    /// Whether every pair of indices is observed together in some pattern.
    pub fn pairs_covered(&self) -> bool {
        for j in 0..self.d {
            for k in (j + 1)..self.d {
                if self.pair_multiplicity(j, k) == 0 {
                    return false;
                }
            }
        }
        true
    }

    /// Serialises as a JSON array of 1-based index arrays.
    pub fn to_json(&self) -> String {
        let one_based: Vec<Vec<usize>> = self
            .patterns
            .iter()
            .map(|p| p.iter().map(|&j| j + 1).collect())
            .collect();
        serde_json::to_string(&one_based).expect("pattern serialisation cannot fail")
    }

    /// Parses a JSON array of 1-based index arrays, e.g. `[[1,2],[2,3],[3,1]]`.
    /// Patterns are sorted; the ambient dimension is the largest index seen.
    pub fn from_json(s: &str) -> Result<Self, PatternError> {
        let raw: Vec<Vec<usize>> =
            serde_json::from_str(s).map_err(|e| PatternError::Json(e.to_string()))?;
        let d = raw.iter().flatten().copied().max().unwrap_or(0);
        let patterns = raw
            .into_iter()
            .map(|mut p| {
                p.sort_unstable();
                p.iter().map(|&j| j.checked_sub(1)).collect::<Option<Vec<_>>>()
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| PatternError::Json("indices are 1-based".into()))?;
        Self::new(d, patterns)
    }
}

impl Serialize for PatternSet {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let one_based: Vec<Vec<usize>> = self
            .patterns
            .iter()
            .map(|p| p.iter().map(|&j| j + 1).collect())
            .collect();
        one_based.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for PatternSet {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let raw: Vec<Vec<usize>> = Vec::deserialize(de)?;
        let d = raw.iter().flatten().copied().max().unwrap_or(0);
        let patterns: Vec<Vec<usize>> = raw
            .into_iter()
            .map(|mut p| {
                p.sort_unstable();
                p.into_iter().map(|j| j - 1).collect()
            })
            .collect();
        Self::new(d, patterns).map_err(serde::de::Error::custom)
    }
}

/// A sequence of real symmetric matrices, one block per pattern.
#[derive(Debug, Clone)]
pub struct MatrixSeq {
    pattern_set: PatternSet,
    blocks: Vec<DMatrix<f64>>,
    /// Largest asymmetry removed at construction, for diagnostics.
    asymmetry: f64,
}

impl MatrixSeq {
    /// Wraps per-pattern blocks, symmetrising each as `(X + X^T)/2`.
    /// Blocks more asymmetric than [`SYMMETRY_TOL`] are rejected.
    pub fn new(pattern_set: PatternSet, blocks: Vec<DMatrix<f64>>) -> Result<Self, PatternError> {
        if blocks.len() != pattern_set.len() {
            return Err(PatternError::PatternMismatch);
        }
        let mut sym_blocks = Vec::with_capacity(blocks.len());
        let mut worst = 0.0f64;
        for (i, b) in blocks.into_iter().enumerate() {
            let want = pattern_set.pattern(i).len();
            if b.nrows() != want || b.ncols() != want {
                return Err(PatternError::BlockDim { block: i, got: b.nrows(), want });
            }
            for r in 0..want {
                for c in 0..want {
                    if !b[(r, c)].is_finite() {
                        return Err(PatternError::NotFinite { block: i, entry: r * want + c });
                    }
                }
            }
            let bt = b.transpose();
            let asym = (&b - &bt).abs().max();
            let scale = 1.0 + b.abs().max();
            if asym > SYMMETRY_TOL * scale {
                return Err(PatternError::Asymmetric { block: i, asym });
            }
            worst = worst.max(asym);
            sym_blocks.push((b + bt) * 0.5);
        }
        Ok(Self { pattern_set, blocks: sym_blocks, asymmetry: worst })
    }

    pub fn pattern_set(&self) -> &PatternSet {
        &self.pattern_set
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &DMatrix<f64> {
        &self.blocks[i]
    }

    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    /// A sequence of zero blocks over `ps`.
    pub fn zeros(ps: &PatternSet) -> Self {
        let blocks = ps
            .patterns()
            .iter()
            .map(|p| DMatrix::zeros(p.len(), p.len()))
            .collect();
        Self::new(ps.clone(), blocks).expect("zero blocks are valid")
    }

    /// A sequence of identity blocks over `ps`.
    pub fn identity(ps: &PatternSet) -> Self {
        let blocks = ps
            .patterns()
            .iter()
            .map(|p| DMatrix::identity(p.len(), p.len()))
            .collect();
        Self::new(ps.clone(), blocks).expect("identity blocks are valid")
    }

    /// Blockwise linear combination `a*self + b*other`.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self, PatternError> {
        if self.pattern_set != other.pattern_set {
            return Err(PatternError::PatternMismatch);
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(x, y)| x * a + y * b)
            .collect();
        Self::new(self.pattern_set.clone(), blocks)
    }

    /// Largest absolute entry across blocks.
    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().map(|b| b.abs().max()).fold(0.0, f64::max)
    }
}

/// A sequence of correlation matrices: unit diagonal, PSD within tolerance.
#[derive(Debug, Clone)]
pub struct CorrSeq(MatrixSeq);

impl CorrSeq {
    pub fn new(seq: MatrixSeq) -> Result<Self, PatternError> {
        for (i, b) in seq.blocks.iter().enumerate() {
            for j in 0..b.nrows() {
                let dev = (b[(j, j)] - 1.0).abs();
                if dev > UNIT_DIAG_TOL {
                    return Err(PatternError::NotUnitDiagonal { block: i, entry: j, dev });
                }
            }
            let min_eig = min_eigenvalue(b);
            let floor = -PSD_TOL * (1.0 + b.abs().max());
            if min_eig < floor {
                return Err(PatternError::NotPsd { block: i, eig: min_eig });
            }
        }
        Ok(Self(seq))
    }

    /// Construction for the d-cycle from off-diagonal correlations.
    pub fn cycle_from_correlations(rhos: &[f64]) -> Result<Self, PatternError> {
        let d = rhos.len();
        let ps = PatternSet::cycle(d);
        let blocks = rhos
            .iter()
            .map(|&r| DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0]))
            .collect();
        Self::new(MatrixSeq::new(ps, blocks)?)
    }

    pub fn as_seq(&self) -> &MatrixSeq {
        &self.0
    }

    pub fn into_seq(self) -> MatrixSeq {
        self.0
    }

    pub fn pattern_set(&self) -> &PatternSet {
        self.0.pattern_set()
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        self.0.blocks()
    }
}

/// Per-pattern variance vectors.
#[derive(Debug, Clone)]
pub struct VarSeq {
    pattern_set: PatternSet,
    vars: Vec<DVector<f64>>,
}

impl VarSeq {
    pub fn new(pattern_set: PatternSet, vars: Vec<DVector<f64>>) -> Result<Self, PatternError> {
        if vars.len() != pattern_set.len() {
            return Err(PatternError::PatternMismatch);
        }
        for (i, v) in vars.iter().enumerate() {
            if v.len() != pattern_set.pattern(i).len() {
                return Err(PatternError::BlockDim {
                    block: i,
                    got: v.len(),
                    want: pattern_set.pattern(i).len(),
                });
            }
            for (k, &x) in v.iter().enumerate() {
                if !x.is_finite() {
                    return Err(PatternError::NotFinite { block: i, entry: k });
                }
                if x < 0.0 {
                    return Err(PatternError::NegativeVariance { block: i, entry: k, value: x });
                }
            }
        }
        Ok(Self { pattern_set, vars })
    }

    pub fn pattern_set(&self) -> &PatternSet {
        &self.pattern_set
    }

    pub fn vars(&self) -> &[DVector<f64>] {
        &self.vars
    }

    /// The per-coordinate average over the patterns containing it.
    pub fn coordinate_average(&self, j: usize) -> f64 {
        let members = self.pattern_set.containing(j);
        let sum: f64 = members
            .iter()
            .map(|&pi| {
                let pos = self.pattern_set.pattern(pi).binary_search(&j).unwrap();
                self.vars[pi][pos]
            })
            .sum();
        sum / members.len() as f64
    }
}

/// Per-pattern mean vectors.
#[derive(Debug, Clone)]
pub struct MeanSeq {
    pattern_set: PatternSet,
    means: Vec<DVector<f64>>,
}

impl MeanSeq {
    pub fn new(pattern_set: PatternSet, means: Vec<DVector<f64>>) -> Result<Self, PatternError> {
        if means.len() != pattern_set.len() {
            return Err(PatternError::PatternMismatch);
        }
        for (i, v) in means.iter().enumerate() {
            if v.len() != pattern_set.pattern(i).len() {
                return Err(PatternError::BlockDim {
                    block: i,
                    got: v.len(),
                    want: pattern_set.pattern(i).len(),
                });
            }
            for (k, &x) in v.iter().enumerate() {
                if !x.is_finite() {
                    return Err(PatternError::NotFinite { block: i, entry: k });
                }
            }
        }
        Ok(Self { pattern_set, means })
    }

    pub fn pattern_set(&self) -> &PatternSet {
        &self.pattern_set
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Extracts the `S x S` submatrix for every pattern: `(A X)_S = (X_{jj'})_{j,j' in S}`.
pub fn marginalize(full: &DMatrix<f64>, ps: &PatternSet) -> Result<MatrixSeq, PatternError> {
    let d = ps.dim();
    if full.nrows() != d || full.ncols() != d {
        return Err(PatternError::DimensionMismatch {
            got_rows: full.nrows(),
            got_cols: full.ncols(),
            d,
        });
    }
    let blocks = ps
        .patterns()
        .iter()
        .map(|p| {
            DMatrix::from_fn(p.len(), p.len(), |r, c| full[(p[r], p[c])])
        })
        .collect();
    MatrixSeq::new(ps.clone(), blocks)
}

/// The adjoint of marginalisation: entry `(j,j')` sums `(X_S)_{jj'}` over the
/// patterns containing both indices; pairs never observed together get 0.
pub fn adjoint(seq: &MatrixSeq) -> DMatrix<f64> {
    let ps = seq.pattern_set();
    let d = ps.dim();
    let mut out = DMatrix::zeros(d, d);
    for (pi, p) in ps.patterns().iter().enumerate() {
        let b = seq.block(pi);
        for (r, &j) in p.iter().enumerate() {
            for (c, &k) in p.iter().enumerate() {
                out[(j, k)] += b[(r, c)];
            }
        }
    }
    out
}

/// Sum of blockwise Frobenius inner products.
pub fn seq_inner(a: &MatrixSeq, b: &MatrixSeq) -> Result<f64, PatternError> {
    if a.pattern_set() != b.pattern_set() {
        return Err(PatternError::PatternMismatch);
    }
    Ok(a.blocks()
        .iter()
        .zip(b.blocks())
        .map(|(x, y)| x.dot(y))
        .sum())
}

/// The generalised trace: each coordinate's diagonal entries are averaged over
/// the patterns containing it, then summed across coordinates.
pub fn bar_trace(seq: &MatrixSeq) -> f64 {
    let ps = seq.pattern_set();
    let mut total = 0.0;
    for j in 0..ps.dim() {
        let members = ps.containing(j);
        let sum: f64 = members
            .iter()
            .map(|&pi| {
                let pos = ps.pattern(pi).binary_search(&j).unwrap();
                seq.block(pi)[(pos, pos)]
            })
            .sum();
        total += sum / members.len() as f64;
    }
    total
}

/// `(sum of per-block nuclear norms, max of per-block spectral norms)`.
pub fn seq_norms(seq: &MatrixSeq) -> (f64, f64) {
    let mut nuclear_sum = 0.0;
    let mut spectral_max = 0.0f64;
    for b in seq.blocks() {
        let eigs = b.clone().symmetric_eigen().eigenvalues;
        nuclear_sum += eigs.iter().map(|e| e.abs()).sum::<f64>();
        spectral_max = spectral_max.max(eigs.iter().fold(0.0f64, |m, e| m.max(e.abs())));
    }
    (nuclear_sum, spectral_max)
}

/// The reference sequence with blocks `diag(1/|S_j| : j in S)`; its adjoint is
/// the identity for any pattern set.
pub fn x0_sequence(ps: &PatternSet) -> MatrixSeq {
    let blocks = ps
        .patterns()
        .iter()
        .map(|p| {
            DMatrix::from_diagonal(&DVector::from_iterator(
                p.len(),
                p.iter().map(|&j| 1.0 / ps.multiplicity(j) as f64),
            ))
        })
        .collect();
    MatrixSeq::new(ps.clone(), blocks).expect("reference sequence is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_symmetric(rng: &mut StdRng, n: usize) -> DMatrix<f64> {
        let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        (&raw + raw.transpose()) * 0.5
    }

    fn random_seq(rng: &mut StdRng, ps: &PatternSet) -> MatrixSeq {
        let blocks = ps
            .patterns()
            .iter()
            .map(|p| random_symmetric(rng, p.len()))
            .collect();
        MatrixSeq::new(ps.clone(), blocks).unwrap()
    }

    #[test]
    fn construction_rejects_bad_patterns() {
        assert!(PatternSet::new(3, vec![]).is_err());
        assert!(PatternSet::new(3, vec![vec![]]).is_err());
        assert!(PatternSet::new(3, vec![vec![0, 3]]).is_err());
        assert!(PatternSet::new(3, vec![vec![1, 0]]).is_err());
        assert!(PatternSet::new(3, vec![vec![0, 1], vec![0, 1]]).is_err());
    }

    #[test]
    fn uncovered_indices_shrink_dimension() {
        let ps = PatternSet::new(5, vec![vec![0, 1], vec![3]]).unwrap();
        assert_eq!(ps.dim(), 3);
        assert_eq!(ps.original_indices(), &[0, 1, 3]);
        assert_eq!(ps.pattern(1), &[2]);
    }

    #[test]
    fn marginalize_identity_on_cycle() {
        let ps = PatternSet::cycle(3);
        let seq = marginalize(&DMatrix::identity(3, 3), &ps).unwrap();
        for b in seq.blocks() {
            assert_eq!(b, &DMatrix::identity(2, 2));
        }
    }

    #[test]
    fn marginalize_extracts_submatrix() {
        let ps = PatternSet::new(2, vec![vec![0, 1]]).unwrap();
        let mut full = DMatrix::identity(2, 2);
        full[(0, 1)] = 0.7;
        full[(1, 0)] = 0.7;
        let seq = marginalize(&full, &ps).unwrap();
        assert_eq!(seq.block(0)[(0, 1)], 0.7);
        assert_eq!(seq.block(0)[(0, 0)], 1.0);
    }

    #[test]
    fn marginalize_dimension_mismatch() {
        let ps = PatternSet::cycle(3);
        assert!(marginalize(&DMatrix::identity(4, 4), &ps).is_err());
    }

    #[test]
    fn adjoint_of_identity_blocks_on_cycle() {
        let ps = PatternSet::cycle(3);
        let seq = MatrixSeq::identity(&ps);
        let a = adjoint(&seq);
        assert_eq!(a, DMatrix::from_diagonal(&DVector::from_element(3, 2.0)));
    }

    #[test]
    fn adjoint_of_single_block() {
        let ps = PatternSet::new(3, vec![vec![0, 1], vec![2]]).unwrap();
        let blocks = vec![
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            DMatrix::zeros(1, 1),
        ];
        let seq = MatrixSeq::new(ps, blocks).unwrap();
        let a = adjoint(&seq);
        assert_eq!(a[(0, 1)], 1.0);
        assert_eq!(a[(1, 0)], 1.0);
        assert_eq!(a[(0, 0)], 0.0);
        assert_eq!(a[(2, 2)], 0.0);
    }

    #[test]
    fn adjoint_identity_holds_on_random_inputs() {
        let mut rng = StdRng::seed_from_u64(7);
        for trial in 0..120 {
            let d = 3 + trial % 4;
            let ps = PatternSet::cycle(d);
            let x = random_symmetric(&mut rng, d);
            let y = random_seq(&mut rng, &ps);
            let lhs = seq_inner(&marginalize(&x, &ps).unwrap(), &y).unwrap();
            let rhs = x.dot(&adjoint(&y));
            assert!((lhs - rhs).abs() <= 1e-10, "adjoint identity off by {}", lhs - rhs);
        }
    }

    #[test]
    fn round_trip_counts_pair_multiplicity() {
        let mut rng = StdRng::seed_from_u64(11);
        let ps = PatternSet::cycle(4);
        let x = random_symmetric(&mut rng, 4);
        let back = adjoint(&marginalize(&x, &ps).unwrap());
        for j in 0..4 {
            for k in 0..4 {
                let mult = ps.pair_multiplicity(j, k) as f64;
                assert!((back[(j, k)] - mult * x[(j, k)]).abs() < 1e-12);
            }
        }
        // all-ones input reads off |S_jj'| directly
        let ones = DMatrix::from_element(4, 4, 1.0);
        let counts = adjoint(&marginalize(&ones, &ps).unwrap());
        for j in 0..4 {
            for k in 0..4 {
                assert_eq!(counts[(j, k)], ps.pair_multiplicity(j, k) as f64);
            }
        }
    }

    #[test]
    fn seq_inner_identity_blocks() {
        let ps = PatternSet::cycle(3);
        let id = MatrixSeq::identity(&ps);
        assert_eq!(seq_inner(&id, &id).unwrap(), 6.0);
        let zero = MatrixSeq::zeros(&ps);
        assert_eq!(seq_inner(&zero, &id).unwrap(), 0.0);
    }

    #[test]
    fn seq_inner_is_symmetric() {
        let mut rng = StdRng::seed_from_u64(3);
        let ps = PatternSet::all_but_one(4);
        for _ in 0..20 {
            let a = random_seq(&mut rng, &ps);
            let b = random_seq(&mut rng, &ps);
            assert!(
                (seq_inner(&a, &b).unwrap() - seq_inner(&b, &a).unwrap()).abs() < 1e-12
            );
        }
    }

    #[test]
    fn bar_trace_identity_is_dimension() {
        for d in 3..7 {
            let ps = PatternSet::cycle(d);
            assert!((bar_trace(&MatrixSeq::identity(&ps)) - d as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn bar_trace_of_consistent_sequence_is_trace() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..30 {
            let ps = PatternSet::all_but_one(5);
            let x = random_symmetric(&mut rng, 5);
            let seq = marginalize(&x, &ps).unwrap();
            assert!((bar_trace(&seq) - x.trace()).abs() < 1e-10);
        }
    }

    #[test]
    fn bar_trace_half_credits_doubled_diagonal() {
        let ps = PatternSet::cycle(3); // every |S_j| = 2
        let mut seq = MatrixSeq::identity(&ps);
        let before = bar_trace(&seq);
        let mut b0 = seq.blocks()[0].clone();
        b0[(0, 0)] = 2.0; // adds mass 1 to a coordinate with |S_j| = 2
        let blocks = vec![b0, seq.blocks()[1].clone(), seq.blocks()[2].clone()];
        seq = MatrixSeq::new(ps, blocks).unwrap();
        assert!((bar_trace(&seq) - before - 0.5).abs() < 1e-12);
    }

    #[test]
    fn seq_norms_identity_and_rank_one() {
        let ps = PatternSet::cycle(3);
        assert_eq!(seq_norms(&MatrixSeq::identity(&ps)), (6.0, 1.0));

        let u = DVector::from_column_slice(&[2.0, 0.0]);
        let blocks = vec![
            &u * u.transpose(),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
        ];
        let seq = MatrixSeq::new(ps, blocks).unwrap();
        let (nuc, spec) = seq_norms(&seq);
        assert!((nuc - 4.0).abs() < 1e-12);
        assert!((spec - 4.0).abs() < 1e-12);
    }

    #[test]
    fn hoelder_inequality_on_random_pairs() {
        let mut rng = StdRng::seed_from_u64(13);
        for trial in 0..120 {
            let d = 3 + trial % 3;
            let ps = PatternSet::cycle(d);
            let a = random_seq(&mut rng, &ps);
            let b = random_seq(&mut rng, &ps);
            let (nuc_a, _) = seq_norms(&a);
            let (_, spec_b) = seq_norms(&b);
            let inner = seq_inner(&a, &b).unwrap();
            assert!(inner.abs() <= nuc_a * spec_b + 1e-10);
        }
    }

    #[test]
    fn x0_sequence_cycle_and_complete() {
        let ps = PatternSet::cycle(3);
        for b in x0_sequence(&ps).blocks() {
            assert_eq!(b, &(DMatrix::identity(2, 2) * 0.5));
        }
        let ps = PatternSet::complete(4);
        assert_eq!(x0_sequence(&ps).blocks()[0], DMatrix::identity(4, 4));
    }

    #[test]
    fn adjoint_of_x0_is_identity() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..40 {
            let d = rng.gen_range(3..7);
            let n_pat = rng.gen_range(2..5);
            let mut patterns: Vec<Vec<usize>> = Vec::new();
            for _ in 0..n_pat {
                let mut p: Vec<usize> =
                    (0..d).filter(|_| rng.gen_bool(0.6)).collect();
                if p.is_empty() {
                    p = vec![rng.gen_range(0..d)];
                }
                if !patterns.contains(&p) {
                    patterns.push(p);
                }
            }
            let Ok(ps) = PatternSet::new(d, patterns) else { continue };
            let a = adjoint(&x0_sequence(&ps));
            assert!((a - DMatrix::identity(ps.dim(), ps.dim())).abs().max() < 1e-12);
        }
    }

    #[test]
    fn corr_seq_validates_diagonal_and_psd() {
        let ps = PatternSet::new(2, vec![vec![0, 1]]).unwrap();
        let bad_diag = MatrixSeq::new(
            ps.clone(),
            vec![DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 1.0])],
        )
        .unwrap();
        assert!(CorrSeq::new(bad_diag).is_err());

        let not_psd = MatrixSeq::new(
            ps.clone(),
            vec![DMatrix::from_row_slice(2, 2, &[1.0, 1.2, 1.2, 1.0])],
        )
        .unwrap();
        assert!(CorrSeq::new(not_psd).is_err());

        let ok = MatrixSeq::new(
            ps,
            vec![DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])],
        )
        .unwrap();
        assert!(CorrSeq::new(ok).is_ok(), "singular blocks are still valid");
    }

    #[test]
    fn pattern_json_round_trip() {
        let ps = PatternSet::cycle(3);
        let json = ps.to_json();
        assert_eq!(json, "[[1,2],[2,3],[1,3]]");
        let back = PatternSet::from_json(&json).unwrap();
        assert_eq!(ps, back);
    }
}
