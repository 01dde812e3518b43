//! Integrate the mean-field system and print the leader-side variables and
//! the majority advantage at a few times.
//!
//! cargo run --release --example meanfield_trajectory -- [s] [rho] [t_end]

use popcon::meanfield::{advantages, default_step, integrate_sampled, phi, MeanFieldState};
use popcon::potentials::{lambda2, phi_of};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|x| x.parse().ok()).unwrap_or(default)
}

fn main() {
    let s: usize = arg(1, 5);
    let rho: f64 = arg(2, 0.1);
    let t_end: f64 = arg(3, 150.0);
    let init = MeanFieldState::initial(s, rho);
    let h = default_step(s);
    let trace = integrate_sampled(&init, t_end, h, (10.0 / h).round() as usize).expect("integration");
    println!("Φ(0) = {:.4}", phi_of(&init));
    println!("{:>7} {:>12} {:>12} {:>12} {:>10} {:>12}", "t", "α·s", "δ·s", "β informed", "Φ", "Λ2");
    for snap in &trace.samples {
        let st = MeanFieldState::from_snapshot(snap, s);
        let adv = advantages(&st).map(|v| phi(&v)).unwrap_or(f64::NAN);
        println!(
            "{:>7.1} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.6} {:>12.4e}",
            snap.t,
            st.alpha() * s as f64,
            st.delta() * s as f64,
            st.beta_informed(),
            adv,
            lambda2(&st)
        );
    }
}
