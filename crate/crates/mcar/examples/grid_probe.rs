//! Accuracy probe for the singular-edge grid and the maximal case.

use mcar::measures::r_index;
use mcar::patterns::CorrSeq;
use mcar::sdp::SolverConfig;

fn main() {
    let cfg = SolverConfig::default();
    let mut worst = 0.0f64;
    let mut count = 0;
    for i in 0..5 {
        for k in 0..4 {
            let t1 = 0.4 + 0.55 * i as f64; // up to ~2.6
            let t2 = t1 * (0.15 + 0.2 * k as f64); // below t1
            let corr = CorrSeq::cycle_from_correlations(&[t1.cos(), t2.cos(), 1.0]).unwrap();
            let rep = r_index(&corr, &cfg).unwrap();
            let closed = ((t2.cos() - t1.cos()) / 2.0).max(0.0);
            let err = (rep.r - closed).abs();
            worst = worst.max(err);
            count += 1;
            if err > 1e-5 {
                println!("MISS t1={t1:.3} t2={t2:.3}: sdp={:.8} closed={closed:.8} err={err:.2e}", rep.r);
            }
        }
    }
    println!("grid points: {count}, worst error: {worst:.3e}");

    let rep = r_index(
        &CorrSeq::cycle_from_correlations(&[-1.0, 1.0, 1.0]).unwrap(),
        &cfg,
    )
    .unwrap();
    println!("maximal: R = {:.9} (err {:.2e})", rep.r, (rep.r - 1.0).abs());

    // timing: single solve on a nonsingular 3-cycle
    let corr = CorrSeq::cycle_from_correlations(&[-0.6, 0.6, 0.6]).unwrap();
    let t0 = std::time::Instant::now();
    let n = 200;
    for _ in 0..n {
        let _ = r_index(&corr, &cfg).unwrap();
    }
    println!("nonsingular r_index: {:?} per call", t0.elapsed() / n);
}
