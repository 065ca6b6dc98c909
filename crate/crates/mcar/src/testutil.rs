//! Shared helpers for in-crate tests.

use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::Rng;

use crate::patterns::{marginalize, CorrSeq, MatrixSeq, PatternSet};

/// Random correlation matrix: normalised Gram matrix of a random square
/// factor, kept away from singularity.
pub fn random_correlation(rng: &mut StdRng, d: usize) -> DMatrix<f64> {
    let raw = DMatrix::<f64>::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let gram = &raw * raw.transpose() + DMatrix::identity(d, d) * 0.2;
    DMatrix::from_fn(d, d, |r, c| gram[(r, c)] / (gram[(r, r)] * gram[(c, c)]).sqrt())
}

/// Random correlation sequence: marginals of a random correlation matrix
/// mixed with an arbitrary (generally incompatible) correlation sequence.
pub fn random_corr_seq(rng: &mut StdRng, ps: &PatternSet, mix: f64) -> CorrSeq {
    let full = random_correlation(rng, ps.dim());
    let compatible = marginalize(&full, ps).unwrap();
    let arbitrary: Vec<DMatrix<f64>> = ps
        .patterns()
        .iter()
        .map(|p| random_correlation(rng, p.len()))
        .collect();
    let arb = MatrixSeq::new(ps.clone(), arbitrary).unwrap();
    let seq = compatible.lin_comb(1.0 - mix, &arb, mix).unwrap();
    CorrSeq::new(seq).unwrap()
}
