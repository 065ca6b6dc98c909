//! Maps where the tridiagonal closed form R = max|entry|/2 actually holds.

use mcar::measures::r_index;
use mcar::patterns::{CorrSeq, MatrixSeq, PatternSet};
use mcar::sdp::SolverConfig;
use nalgebra::DMatrix;

fn r_of(d: usize, entries: &[f64]) -> f64 {
    let ps = PatternSet::all_but_one(d);
    let mut blocks: Vec<DMatrix<f64>> = (0..d).map(|_| DMatrix::identity(d - 1, d - 1)).collect();
    for (i, &e) in entries.iter().enumerate() {
        blocks[d - 1][(i, i + 1)] = e;
        blocks[d - 1][(i + 1, i)] = e;
    }
    let corr = CorrSeq::new(MatrixSeq::new(ps, blocks).unwrap()).unwrap();
    r_index(&corr, &SolverConfig::default()).unwrap().r
}

fn main() {
    println!("d=4: vary b2 with b1 = 0.3");
    for k in 0..8 {
        let b1 = 0.3;
        let b2 = 0.05 + 0.05 * k as f64;
        let r = r_of(4, &[b1, b2]);
        let closed = 0.5 * b1.max(b2);
        println!("  b=({b1:.2},{b2:.2}): R={r:.7} closed={closed:.4} diff={:+.1e}", r - closed);
    }
    println!("d=4: equal entries");
    for k in 1..6 {
        let b = 0.08 * k as f64;
        let r = r_of(4, &[b, b]);
        println!("  b=({b:.2},{b:.2}): R={r:.7} closed={:.4} ratio={:.4}", 0.5 * b, r / b);
    }
    println!("d=5: triples");
    for (b1, b2, b3) in [(0.3, 0.1, 0.3), (0.3, 0.3, 0.3), (0.4, 0.1, 0.05), (0.2, 0.4, 0.2)] {
        let r = r_of(5, &[b1, b2, b3]);
        let closed: f64 = 0.5 * b1.max(b2).max(b3);
        println!("  b=({b1},{b2},{b3}): R={r:.7} closed={closed:.4} diff={:+.1e}", r - closed);
    }
    println!("d=4 with negative mix");
    for (b1, b2) in [(0.3, -0.1), (0.3, -0.3), (-0.2, 0.35)] {
        let r = r_of(4, &[b1, b2]);
        let closed = 0.5 * b1.abs().max(b2.abs());
        println!("  b=({b1},{b2}): R={r:.7} closed={closed:.4} diff={:+.1e}", r - closed);
    }

    println!("d=5 region rule: equality iff sum of other |b| <= max?");
    for (b1, b2, b3) in [
        (0.4, 0.15, 0.2),  // others 0.35 <= 0.4: predict equal
        (0.4, 0.25, 0.25), // others 0.50 > 0.4: predict gap
        (0.1, 0.45, 0.2),  // others 0.30 <= 0.45: predict equal
        (0.25, 0.1, -0.3), // others 0.35 > 0.3: predict gap
        (-0.1, 0.35, 0.2), // others 0.30 <= 0.35: predict equal
    ] {
        let r = r_of(5, &[b1, b2, b3]);
        let m = b1.abs().max(b2.abs()).max(b3.abs());
        let others = b1.abs() + b2.abs() + b3.abs() - m;
        println!(
            "  b=({b1},{b2},{b3}): R={r:.7} closed={:.4} diff={:+.1e} others<=max: {}",
            0.5 * m,
            r - 0.5 * m,
            others <= m + 1e-12
        );
    }

    println!("d=3 with complete-case pattern added");
    for eps in [0.2f64, 0.5, -0.4, 0.8] {
        let ps = PatternSet::new(3, vec![vec![0, 1, 2], vec![1, 2], vec![0, 2], vec![0, 1]]).unwrap();
        let mut a = DMatrix::identity(2, 2);
        a[(0, 1)] = eps;
        a[(1, 0)] = eps;
        let blocks = vec![
            DMatrix::identity(3, 3),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            a,
        ];
        let corr = CorrSeq::new(MatrixSeq::new(ps, blocks).unwrap()).unwrap();
        let r = r_index(&corr, &SolverConfig::default()).unwrap().r;
        println!("  eps={eps}: R={r:.7} vs |eps|/2={:.4} diff={:+.1e}", eps.abs() / 2.0, r - eps.abs() / 2.0);
    }
}
