use mcar::patterns::CorrSeq;
use mcar::sdp::{build_r_dual, solve, SolverConfig};
fn main() {
    let t1 = std::f64::consts::FRAC_PI_2;
    let t2 = std::f64::consts::FRAC_PI_3;
    let corr = CorrSeq::cycle_from_correlations(&[t1.cos(), t2.cos(), 1.0]).unwrap();
    let sol = solve(&build_r_dual(&corr), &SolverConfig::default()).unwrap();
    println!("status {:?} obj {} R {}", sol.status, sol.primal_objective, 1.0 - sol.primal_objective/3.0);
}
