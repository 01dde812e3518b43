//! Drive a run from a TOML config, as the `popcon` binary does.
//!
//! cargo run --release --example experiment_config -- [out_dir]

use popcon::experiments::{run, ExperimentConfig};

const CONFIG: &str = r#"
command = "ensemble"
trials = 8
comm_window = 5.0

[params]
n = 1500
s = 5
rho = 0.1
seed = 1
horizon_time = 300.0
"#;

fn main() {
    let mut config = ExperimentConfig::from_toml_str(CONFIG).expect("valid config");
    if let Some(dir) = std::env::args().nth(1) {
        config.output_dir = dir.into();
    }
    let outcome = run(&config, |line| println!("{line}")).expect("run");
    println!("{}", serde_json::to_string_pretty(&outcome.summary.results["stats"]).expect("json"));
    println!("files: {:?}", outcome.manifest.files);
}
