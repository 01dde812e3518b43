//! Write a random trace and a mean-field trace to disk and read them back.
//!
//! cargo run --example trace_roundtrip -- [dir]

use std::path::PathBuf;

use popcon::meanfield::{integrate_sampled, MeanFieldState};
use popcon::model::ProtocolParams;
use popcon::sim::run_trial;
use popcon::trace::{read_trace, write_trace};

fn main() {
    let dir: PathBuf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let params = ProtocolParams::new(60, 3, 0.2, 5, 10.0).expect("valid parameters");
    let random = run_trial(&params, 1.0).expect("trial").trace;
    let ode = integrate_sampled(&MeanFieldState::initial(3, 0.2), 10.0, 0.01, 100).expect("integration");
    for (name, trace) in [("random.trace", &random), ("meanfield.trace", &ode)] {
        let path = dir.join(name);
        write_trace(trace, &path).expect("write");
        let back = read_trace(&path).expect("read");
        println!("{}: {} samples, identical after reload: {}", path.display(), back.len(), &back == trace);
    }
    let bad = dir.join("truncated.trace");
    let text = std::fs::read_to_string(dir.join("random.trace")).expect("read back");
    std::fs::write(&bad, &text[..text.len() - 5]).expect("write");
    match read_trace(&bad) {
        Ok(_) => println!("truncated file parsed"),
        Err(e) => println!("truncated file rejected: {e}"),
    }
}
