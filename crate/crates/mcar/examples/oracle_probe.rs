//! Numerical probes for the closed-form oracles, used during bring-up to pin
//! down constants before freezing them into tests.

use mcar::patterns::{CorrSeq, MatrixSeq, PatternSet};
use mcar::sdp::{build_r_dual, build_rtilde_dual, solve, SolverConfig};
use nalgebra::DMatrix;

fn r_of(corr: &CorrSeq) -> f64 {
    let sol = solve(&build_r_dual(corr), &SolverConfig::default())
        .unwrap()
        .require_optimal()
        .unwrap();
    1.0 - sol.primal_objective / corr.pattern_set().dim() as f64
}

fn main() {
    // ---- all-but-one tridiagonal family ----
    for d in [3usize, 4, 5] {
        let ps = PatternSet::all_but_one(d);
        for &scale in &[1.0f64, 0.5] {
            let eps: Vec<f64> = (0..d.saturating_sub(2))
                .map(|i| 0.35 * (1.0 + i as f64 * 0.5) / (1.0 + 0.5 * (d as f64 - 3.0)))
                .collect();
            let mut blocks: Vec<DMatrix<f64>> = (0..d)
                .map(|_| DMatrix::identity(d - 1, d - 1))
                .collect();
            let mut a = DMatrix::identity(d - 1, d - 1);
            for (i, &e) in eps.iter().enumerate() {
                a[(i, i + 1)] = e * scale;
                a[(i + 1, i)] = e * scale;
            }
            blocks[d - 1] = a;
            let corr = CorrSeq::new(MatrixSeq::new(ps.clone(), blocks).unwrap()).unwrap();
            let r = r_of(&corr);
            let max_eps = eps.iter().cloned().fold(0.0f64, f64::max);
            println!(
                "tridiag d={d} entries=eps*{scale}: R_sdp={r:.8}  max_eps={max_eps:.4}  R/max_eps={:.5}",
                r / max_eps
            );
        }
    }

    // ---- two-pattern trace-normalised closed form ----
    // patterns {1,2}, {1,3}; parameters (s1, s1t, s2, s3, rho12, rho13)
    let cases = [
        (0.8f64, 1.3f64, 0.9f64, 0.7f64, 0.3f64, 0.5f64),
        (0.8, 1.3, 0.9, 0.7, 0.3, 0.9),
        (1.0, 1.0, 1.1, 0.9, -0.4, 0.2),
        (0.6, 1.5, 1.0, 0.8, 0.0, -0.6),
        (0.9, 1.1, 0.8, 1.0, 0.5, 0.05),
    ];
    for (s1, s1t, s2, s3, r12, r13) in cases {
        // rescale so the generalised trace is exactly d = 3
        let bt = 0.5 * (s1 + s1t) + s2 + s3;
        let c = 3.0 / bt;
        let (v1, v1t, v2, v3) = (s1 * c, s1t * c, s2 * c, s3 * c);
        let ps = PatternSet::new(3, vec![vec![0, 1], vec![0, 2]]).unwrap();
        let b1 = DMatrix::from_row_slice(
            2,
            2,
            &[v1, r12 * (v1 * v2).sqrt(), r12 * (v1 * v2).sqrt(), v2],
        );
        let b2 = DMatrix::from_row_slice(
            2,
            2,
            &[v1t, r13 * (v1t * v3).sqrt(), r13 * (v1t * v3).sqrt(), v3],
        );
        let seq = MatrixSeq::new(ps, vec![b1, b2]).unwrap();
        let sol = solve(&build_rtilde_dual(&seq).unwrap(), &SolverConfig::default())
            .unwrap()
            .require_optimal()
            .unwrap();
        let rt = 1.0 - sol.primal_objective / 3.0;
        let theta = (v1.sqrt() / v1t.sqrt()).min(1.0).acos();
        let phi = r13.abs().min(1.0).acos();
        let closed = (v1t - v1) / 6.0 + v3 / 3.0 * (theta - phi).max(0.0).sin().powi(2);
        println!(
            "two-pattern: Rt_sdp={rt:.8} closed={closed:.8} diff={:+.2e}",
            rt - closed
        );
    }

    // ---- block 3-cycle ----
    for d in [2usize, 3, 4] {
        for (pscale, beta) in [(0.5f64, 0.0f64), (0.8, 0.0), (0.6, 0.3), (0.9, 0.5)] {
            let ps = PatternSet::block3(d);
            let p_mat = DMatrix::identity(d, d) * pscale;
            let mk = |tl: &DMatrix<f64>, tr: &DMatrix<f64>| {
                let mut b = DMatrix::zeros(2 * d, 2 * d);
                b.view_mut((0, 0), (d, d)).copy_from(tl);
                b.view_mut((d, d), (d, d)).copy_from(tl);
                b.view_mut((0, d), (d, d)).copy_from(tr);
                b.view_mut((d, 0), (d, d)).copy_from(&tr.transpose());
                b
            };
            let id = DMatrix::identity(d, d);
            let blocks = vec![
                mk(&id, &p_mat),
                mk(&id, &(-&p_mat)),
                mk(&id, &(&id * beta)),
            ];
            let corr = CorrSeq::new(MatrixSeq::new(ps, blocks).unwrap()).unwrap();
            let r = r_of(&corr);
            let compat = pscale * pscale <= (1.0 - beta) / 2.0;
            let bound = 3.0 / (4.0 * d as f64)
                * (0..d)
                    .map(|_| (pscale * pscale - (1.0 - beta) / 2.0).max(0.0))
                    .sum::<f64>();
            println!(
                "block3 d={d} |P|={pscale} beta={beta}: R_sdp={r:.8} compat_pred={compat} bound={bound:.6} ok={}",
                bound <= r + 1e-6
            );
        }
    }
}
