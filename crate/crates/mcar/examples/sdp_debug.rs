//! Scratch driver for solver bring-up. Run with MCAR_SDP_TRACE=1 to see
//! per-iteration diagnostics.

use mcar::patterns::CorrSeq;
use mcar::sdp::{build_r_dual, solve, SolverConfig};

fn main() {
    let cases: Vec<(&str, [f64; 3])> = vec![
        ("identity", [0.0, 0.0, 0.0]),
        ("boundary", [0.5, 0.5, -0.5]),
        ("incompatible", [-0.6, 0.6, 0.6]),
        ("strong", [0.9, 0.9, 0.9]),
        ("maximal", [-1.0, 1.0, 1.0]),
    ];
    for (name, rhos) in cases {
        let corr = CorrSeq::cycle_from_correlations(&rhos).unwrap();
        let p = build_r_dual(&corr);
        let t0 = std::time::Instant::now();
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        println!(
            "{name:>14}: status {:?} iters {:3} obj {:+.9} R {:+.9} gap {:+.2e} pinf {:.2e} dinf {:.2e} ({:?})",
            sol.status,
            sol.iterations,
            sol.primal_objective,
            1.0 - sol.primal_objective / 3.0,
            sol.rel_gap,
            sol.primal_infeas,
            sol.dual_infeas,
            t0.elapsed(),
        );
    }
}
