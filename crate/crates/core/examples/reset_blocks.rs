//! Restart the mean-field system from the random census at regular block
//! boundaries and report how far the two drift apart inside each block.
//!
//! cargo run --release --example reset_blocks -- [block_length] [seed]

use popcon::coupling::reset_experiment;
use popcon::model::ProtocolParams;

fn main() {
    let block: f64 = std::env::args().nth(1).and_then(|x| x.parse().ok()).unwrap_or(5.0);
    let seed: u64 = std::env::args().nth(2).and_then(|x| x.parse().ok()).unwrap_or(1);
    let s = 5;
    // minority 0.49
    let params = ProtocolParams::new(2500, s, 0.02, seed, 400.0).expect("valid parameters");
    let res = reset_experiment(&params, block).expect("reset experiment");
    println!("consensus: {:?} at t = {:?}", res.trial.consensus_correct, res.trial.consensus_time);
    println!("{:>5} {:>8} {:>8} {:>14} {:>12} {:>12}", "block", "t_start", "t_end", "sup|Δα|·s", "Λ2 random", "Λ2 ode");
    for b in &res.blocks {
        println!(
            "{:>5} {:>8.2} {:>8.2} {:>14.4} {:>12.4e} {:>12.4e}",
            b.index,
            b.t_start,
            b.t_end,
            b.deviation.sup("alpha") * s as f64,
            b.lambda2_random_end,
            b.lambda2_ode_end
        );
    }
    println!("max sup|Δα|·s = {:.4}", res.max_alpha_deviation() * s as f64);
}
