//! Single wakes of the transition kernel on a tiny population, and the exact
//! one-step expectation next to the mean-field vector field.
//!
//! cargo run --example kernel_step

use popcon::meanfield::{rhs, MeanFieldState};
use popcon::model::{AgentClass, AgentCounts, Coin, ProtocolParams};
use popcon::verify::kernel_expectation;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let params = ProtocolParams::new(24, 2, 0.25, 3, 1.0).expect("valid parameters");
    let mut counts = AgentCounts::init_population(&params).expect("population");
    println!("initial census: {counts:?}");

    // a wrong leader pulls from a correct follower and becomes undecided
    let mut c = counts.clone();
    let out = c.transition(AgentClass::LeaderWrong, Some(AgentClass::Follower { bin: 1, wrong: false }), Coin::Tails);
    println!("pull mismatch: {out:?}, undecided leaders now {}", c.leaders_undecided);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    for k in 0..5 {
        let out = counts.wake(&mut rng);
        println!("wake {k}: {:?} communicated={}", out.wake_class, out.communicated);
    }

    let expect = kernel_expectation(&counts);
    let field = rhs(&MeanFieldState::from_counts(&counts, 0.0)).expect("valid state");
    let names = MeanFieldState::from_counts(&counts, 0.0).layout().column_names();
    println!("{:>10} {:>12} {:>12}", "count", "E[change]", "f(x)");
    for ((name, e), f) in names.iter().zip(&expect).zip(&field).take(6) {
        println!("{name:>10} {e:>12.5} {f:>12.5}");
    }
    let worst = expect.iter().zip(&field).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("largest gap {worst:.4} (1/n = {:.4})", 1.0 / params.n as f64);
}
