use std::time::Instant;

use popcon::meanfield::{default_step, MeanFieldState};
use popcon::potentials::{run_phases, PotentialParams, DEFAULT_LAMBDA};

fn main() {
    let s: usize = std::env::args().nth(1).and_then(|x| x.parse().ok()).unwrap_or(32);
    let rho: f64 = std::env::args().nth(2).and_then(|x| x.parse().ok()).unwrap_or(0.1);
    let init = MeanFieldState::initial(s, rho);
    let pp = PotentialParams::for_state(&init, DEFAULT_LAMBDA);
    let start = Instant::now();
    let run = run_phases(&init, &pp, default_step(s), |_| {}).expect("integration");
    println!("{:#?}", run.summary);
    for r in &run.bound_reports {
        println!(
            "{:<22} holds={:<5} asserted={:<5} evaluated={:<9} worst_margin={:e} first_violation={:?}",
            r.bound_name, r.holds, r.asserted, r.evaluated, r.worst_margin, r.first_violation_time
        );
    }
    println!("{} steps in {:.1?}", run.steps, start.elapsed());
}
