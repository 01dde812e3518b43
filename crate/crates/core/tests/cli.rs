use std::path::Path;
use std::process::Command;

fn popcon(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_popcon")).args(args).output().expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_command_is_a_usage_error() {
    let out = popcon(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_parameters_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = popcon(&["sim", "--n", "7", "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n must be at least"));
}

#[test]
fn corrupt_trace_error_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("broken.trace");
    std::fs::write(&bad, "# popcon-trace v1\nnot a header\n").unwrap();
    let out = popcon(&["plotdata", arg(&bad), "--out", arg(&dir.path().join("plots"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.trace"));
}

#[test]
fn unreadable_config_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "trials = \"many\"\n").unwrap();
    let out = popcon(&["sim", "--config", arg(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("c.toml"));
}

#[test]
fn unanimous_verify_passes_fast() {
    let dir = tempfile::tempdir().unwrap();
    let start = std::time::Instant::now();
    let out = popcon(&[
        "verify", "--suite", "config", "--n", "200", "--s", "2", "--rho", "1", "--horizon", "20", "--trials", "2",
        "--out", arg(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(start.elapsed().as_secs_f64() < 1.0);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["results"]["passed"], true);
    assert!(summary["bound_reports"].as_array().unwrap().len() > 10);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "command = \"ode\"\n[params]\nn = 500\ns = 5\nrho = 0.3\nhorizon_time = 10.0\n").unwrap();
    let out = popcon(&["sim", "--config", arg(&cfg), "--seed", "9", "--print-config"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("command = \"sim\""));
    assert!(text.contains("seed = 9"));
    assert!(text.contains("n = 500"));
}

#[test]
fn ode_then_plotdata() {
    let dir = tempfile::tempdir().unwrap();
    let ode_dir = dir.path().join("ode");
    let out = popcon(&["ode", "--s", "3", "--rho", "0.2", "--n", "300", "--horizon", "20", "--out", arg(&ode_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = ode_dir.join("ode.trace");
    let plots = dir.path().join("plots");
    let out = popcon(&["plotdata", arg(&trace), "--out", arg(&plots)]);
    assert_eq!(out.status.code(), Some(0));
    for panel in ["leaders", "logratios", "advantages", "bins"] {
        let text = std::fs::read_to_string(plots.join(format!("ode.{panel}.dat"))).unwrap();
        assert!(text.starts_with("# t "));
        assert_eq!(text.lines().count(), 22);
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(plots.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "plotdata");
    assert_eq!(manifest["files"].as_array().unwrap().len(), 6);
}
