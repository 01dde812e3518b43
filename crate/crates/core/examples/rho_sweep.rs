//! Median consensus time as the initial advantage shrinks.
//!
//! cargo run --release --example rho_sweep -- [n] [s] [trials]

use popcon::experiments::{run_sweep, SweepGrid};
use popcon::model::ProtocolParams;
use popcon::sim::TrialOptions;

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|x| x.parse().ok()).unwrap_or(default)
}

fn main() {
    let n: u64 = arg(1, 3000);
    let s: usize = arg(2, 5);
    let trials: usize = arg(3, 32);
    let base = ProtocolParams::new(n, s, 0.1, 1, 400.0).expect("valid parameters");
    let grid = SweepGrid { n: vec![n], s: vec![s], rho: vec![0.1, 0.05, 0.025, 0.0125] };
    let (cells, fits) = run_sweep(&base, &grid, trials, &TrialOptions::new(1.0), |c| {
        let st = c.stats.as_ref().expect("cell ran");
        println!(
            "ρ = {:<7} |ln ρ| = {:.3}  median time {:>7.2}  correct {}/{}  comms/(n t) {:.3}",
            c.rho,
            c.rho.ln().abs(),
            st.median_consensus_time.unwrap_or(f64::NAN),
            st.correct,
            st.trials,
            st.median_comm_rate.unwrap_or(f64::NAN)
        );
    });
    for f in &fits {
        println!("slope of time vs |ln ρ|: {:?}, increments {:?}", f.slope, f.increments);
    }
    println!("{} cells", cells.len());
}
