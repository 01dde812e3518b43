//! Communication cost of the protocol against the three-state protocol on
//! paired seeds.
//!
//! cargo run --release --example baseline -- [n] [trials]

use popcon::model::ProtocolParams;
use popcon::sim::{run_ensemble, three_state_baseline, TrialOptions};

fn main() {
    let n: u64 = std::env::args().nth(1).and_then(|x| x.parse().ok()).unwrap_or(3000);
    let trials: usize = std::env::args().nth(2).and_then(|x| x.parse().ok()).unwrap_or(10);
    let params = ProtocolParams::new(n, 5, 0.1, 1, 400.0).expect("valid parameters");
    let runs = run_ensemble(&params, trials, &TrialOptions::new(1.0)).expect("ensemble");
    println!("{:>20} {:>10} {:>12} {:>10} {:>12} {:>8}", "seed", "t ours", "comms ours", "t 3-state", "comms 3-st", "ratio");
    for r in &runs {
        let b = three_state_baseline(n, params.rho, r.seed, params.horizon_time).expect("baseline");
        println!(
            "{:>20} {:>10.2} {:>12} {:>10.2} {:>12} {:>8.3}",
            r.seed,
            r.consensus_time.unwrap_or(f64::NAN),
            r.total_communications,
            b.consensus_time.unwrap_or(f64::NAN),
            b.total_communications,
            b.total_communications as f64 / r.total_communications as f64
        );
    }
}
