//! Seeded ensemble of the protocol: consensus times and communication cost.
//!
//! cargo run --release --example consensus_ensemble -- [n] [s] [rho] [trials]

use popcon::model::ProtocolParams;
use popcon::sim::{run_ensemble, three_state_baseline, TrialOptions};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|x| x.parse().ok()).unwrap_or(default)
}

fn main() {
    let n: u64 = arg(1, 3000);
    let s: usize = arg(2, 5);
    let rho: f64 = arg(3, 0.1);
    let trials: usize = arg(4, 20);
    let params = ProtocolParams::new(n, s, rho, 1, 200.0).expect("valid parameters");
    let results = run_ensemble(&params, trials, &TrialOptions::new(1.0)).expect("ensemble");
    let ln_n = (n as f64).ln();
    println!("{:>20} {:>8} {:>10} {:>12} {:>10} {:>12}", "seed", "correct", "t/ln n", "comms", "comms·s/nt", "3-state/ours");
    for r in &results {
        let t = r.consensus_time.unwrap_or(f64::NAN);
        let base = three_state_baseline(n, rho, r.seed, 200.0).expect("baseline");
        println!(
            "{:>20} {:>8} {:>10.3} {:>12} {:>10.3} {:>12.2}",
            r.seed,
            r.consensus_correct.map_or("-".into(), |c| c.to_string()),
            t / ln_n,
            r.total_communications,
            r.total_communications as f64 * s as f64 / (n as f64 * t),
            base.total_communications as f64 / r.total_communications as f64,
        );
    }
    let ok = results.iter().filter(|r| r.succeeded()).count();
    println!("{ok}/{} reached the majority bit", results.len());
}
