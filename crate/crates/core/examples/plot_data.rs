//! Columnar plot files for a mean-field run and a random run of the same
//! setting; render them with `scripts/plot.py`.
//!
//! cargo run --release --example plot_data -- [dir]

use std::path::PathBuf;

use popcon::meanfield::{default_step, integrate_sampled, MeanFieldState};
use popcon::model::ProtocolParams;
use popcon::plot::write_panels;
use popcon::sim::run_trial;

fn main() {
    let dir: PathBuf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("plots"));
    std::fs::create_dir_all(&dir).expect("output dir");
    let s = 5;
    let h = default_step(s);
    let ode = integrate_sampled(&MeanFieldState::initial(s, 0.1), 150.0, h, (0.5 / h).round() as usize).expect("integration");
    let params = ProtocolParams::new(3000, s, 0.1, 1, 150.0).expect("valid parameters");
    let random = run_trial(&params, 0.5).expect("trial").trace;
    for (stem, trace) in [("meanfield", &ode), ("random", &random)] {
        for f in write_panels(trace, &dir, stem).expect("write") {
            println!("{} rows={} omitted={}", f.path.display(), f.rows, f.omitted);
        }
    }
}
