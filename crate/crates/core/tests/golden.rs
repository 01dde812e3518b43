//! Fixed-seed summaries compared with stored copies. Set `UPDATE_GOLDEN=1`
//! to rewrite them after an intended behaviour change.

use std::path::{Path, PathBuf};

use popcon::experiments::{run, Command, ExperimentConfig};
use popcon::model::ProtocolParams;

fn check(name: &str, config: ExperimentConfig) {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig { output_dir: dir.path().to_path_buf(), ..config };
    let outcome = run(&config, |_| {}).unwrap();
    let got = serde_json::to_string_pretty(&outcome.summary.results).unwrap() + "\n";
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.json"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &got).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert_eq!(got, want, "{name} drifted from {}", path.display());
    // same seed, same bytes
    let again = run(&config, |_| {}).unwrap();
    assert_eq!(again.summary, outcome.summary);
}

fn base(command: Command) -> ExperimentConfig {
    ExperimentConfig {
        command,
        params: ProtocolParams::new(600, 3, 0.2, 7, 80.0).unwrap(),
        output_dir: PathBuf::new(),
        ..Default::default()
    }
}

#[test]
fn sim_summary() {
    check("sim", ExperimentConfig { comm_window: Some(5.0), ..base(Command::Sim) });
}

#[test]
fn ensemble_summary() {
    check("ensemble", ExperimentConfig { trials: 4, ..base(Command::Ensemble) });
}

#[test]
fn baseline_summary() {
    check("baseline", ExperimentConfig { trials: 3, ..base(Command::Baseline) });
}
