//! Declarative experiment runs: a TOML config names a command and its
//! parameters; a run writes `summary.json`, `manifest.json` and any traces or
//! plot files into the output directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::coupling::{compare, coupled_pair, reset_experiment, CouplingError, DeviationReport};
use crate::meanfield::{default_step, integrate_observed, IntegrationError, MeanFieldState};
use crate::model::{AgentCounts, ParamError, ProtocolParams};
use crate::plot::{write_panels, PlotFile};
use crate::potentials::{phi_of, BoundMonitor, BoundReport, InvariantMonitor, PotentialParams, SlopeFit, DEFAULT_LAMBDA};
use crate::sim::{median, mix_seed, run_ensemble, run_trial_with, three_state_baseline, SimError, TrialOptions, TrialResult};
use crate::trace::{read_trace, write_trace, SystemTag, TraceError, TrajectoryTrace};
use crate::verify::{run_config_checks, run_full_suite, CriterionResult, SuiteReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Ode,
    Sim,
    Ensemble,
    Compare,
    Reset,
    Sweep,
    Baseline,
    Verify,
    Plotdata,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Ode => "ode",
            Command::Sim => "sim",
            Command::Ensemble => "ensemble",
            Command::Compare => "compare",
            Command::Reset => "reset",
            Command::Sweep => "sweep",
            Command::Baseline => "baseline",
            Command::Verify => "verify",
            Command::Plotdata => "plotdata",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, String> {
        serde_json::from_value(Value::String(text.to_string())).map_err(|_| format!("unknown command `{text}`"))
    }
}

/// What `verify` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    /// The fixed acceptance suite; `params` are ignored.
    #[default]
    Acceptance,
    /// Mean-field checks and an ensemble for `params`.
    Config,
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, String> {
        serde_json::from_value(Value::String(text.to_string())).map_err(|_| format!("unknown suite `{text}`"))
    }
}

/// Grid of a `sweep`; every combination is one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub n: Vec<u64>,
    pub s: Vec<usize>,
    pub rho: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub params: ProtocolParams,
    pub lambda_target: f64,
    pub theta: f64,
    pub output_dir: PathBuf,
    /// Snapshot spacing of written traces.
    pub sample_interval: f64,
    pub trials: usize,
    /// RK4 step; `min(0.01, 1/(10 s))` when absent.
    pub step: Option<f64>,
    /// Restart length of `reset`.
    pub block_length: f64,
    /// Window of the communication-rate record in `sim` and `ensemble`.
    pub comm_window: Option<f64>,
    pub suite: Suite,
    pub sweep: Option<SweepGrid>,
    /// Inputs of `plotdata`.
    pub traces: Vec<PathBuf>,
    /// Also write one trace per trial in `ensemble`.
    pub write_traces: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            command: Command::Verify,
            params: ProtocolParams::default(),
            lambda_target: DEFAULT_LAMBDA,
            theta: 1.0,
            output_dir: PathBuf::from("out"),
            sample_interval: 1.0,
            trials: 20,
            step: None,
            block_length: 5.0,
            comm_window: None,
            suite: Suite::default(),
            sweep: None,
            traces: Vec::new(),
            write_traces: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml_str(&text)
            .map_err(|e| ExperimentError::ConfigFile { path: path.to_path_buf(), message: e.message().to_string() })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn step(&self) -> f64 {
        self.step.unwrap_or_else(|| default_step(self.params.s))
    }

    /// Command-specific requirements.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(ExperimentError::Config(format!("{name} must be positive (got {x})")))
            }
        };
        positive("sample_interval", self.sample_interval)?;
        positive("block_length", self.block_length)?;
        positive("theta", self.theta)?;
        if let Some(h) = self.step {
            positive("step", h)?;
        }
        if let Some(w) = self.comm_window {
            positive("comm_window", w)?;
        }
        if !(self.lambda_target > 0.0 && self.lambda_target < 1.0) {
            return Err(ExperimentError::Config(format!("lambda_target must lie in (0, 1) (got {})", self.lambda_target)));
        }
        match self.command {
            Command::Plotdata if self.traces.is_empty() => {
                Err(ExperimentError::Config("plotdata needs at least one trace file".into()))
            }
            Command::Plotdata => Ok(()),
            Command::Sweep => {
                let g = self.sweep.as_ref().ok_or_else(|| ExperimentError::Config("sweep needs a [sweep] grid".into()))?;
                if g.n.is_empty() || g.s.is_empty() || g.rho.is_empty() {
                    return Err(ExperimentError::Config("sweep grid axes must be non-empty".into()));
                }
                self.need_trials()
            }
            Command::Verify if self.suite == Suite::Acceptance => Ok(()),
            Command::Ensemble | Command::Baseline => {
                self.params.validate()?;
                self.need_trials()
            }
            _ => Ok(self.params.validate()?),
        }
    }

    fn need_trials(&self) -> Result<(), ExperimentError> {
        if self.trials == 0 {
            return Err(ExperimentError::Config("trials must be at least 1".into()));
        }
        Ok(())
    }

    fn trial_options(&self) -> TrialOptions {
        let opts = TrialOptions::new(self.sample_interval);
        match self.comm_window {
            Some(w) => opts.with_comm_window(w),
            None => opts,
        }
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub results: Value,
    pub bound_reports: Vec<BoundReport>,
    pub deviation_reports: Vec<DeviationReport>,
}

/// Contents of `manifest.json`: enough to regenerate every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub package: String,
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub files: Vec<PathBuf>,
}

/// A finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub summary: Summary,
    pub manifest: Manifest,
    /// False when an asserted check failed (`verify`, or a violated asserted
    /// bound in `ode`).
    pub passed: bool,
}

struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
    seeds: Vec<u64>,
}

impl Output {
    fn trace(&mut self, name: &str, trace: &TrajectoryTrace) -> Result<(), ExperimentError> {
        let path = self.dir.join(name);
        write_trace(trace, &path)?;
        self.files.push(path);
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<(), ExperimentError> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(io_err(&path))?;
        self.files.push(path);
        Ok(())
    }
}

struct Produced {
    results: Value,
    bound_reports: Vec<BoundReport>,
    deviation_reports: Vec<DeviationReport>,
    passed: bool,
}

impl Produced {
    fn results(results: Value) -> Self {
        Produced { results, bound_reports: Vec::new(), deviation_reports: Vec::new(), passed: true }
    }
}

/// Run `config`, writing every output file. `progress` receives one line per
/// finished unit of work (criteria, sweep cells).
pub fn run(config: &ExperimentConfig, mut progress: impl FnMut(&str)) -> Result<RunOutcome, ExperimentError> {
    config.validate()?;
    let dir = config.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut out = Output { dir, files: Vec::new(), seeds: Vec::new() };
    let produced = match config.command {
        Command::Ode => cmd_ode(config, &mut out)?,
        Command::Sim => cmd_sim(config, &mut out)?,
        Command::Ensemble => cmd_ensemble(config, &mut out)?,
        Command::Compare => cmd_compare(config, &mut out)?,
        Command::Reset => cmd_reset(config, &mut out)?,
        Command::Sweep => cmd_sweep(config, &mut out, &mut progress)?,
        Command::Baseline => cmd_baseline(config, &mut out)?,
        Command::Verify => cmd_verify(config, &mut out, &mut progress)?,
        Command::Plotdata => cmd_plotdata(config, &mut out)?,
    };
    let summary = Summary {
        config: config.clone(),
        results: produced.results,
        bound_reports: produced.bound_reports,
        deviation_reports: produced.deviation_reports,
    };
    let summary_path = out.dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(&summary_path, text + "\n").map_err(io_err(&summary_path))?;
    out.files.push(summary_path);
    let manifest_path = out.dir.join("manifest.json");
    out.files.push(manifest_path.clone());
    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: config.command.as_str().into(),
        config: config.clone(),
        seeds: out.seeds,
        files: out.files.iter().map(|p| p.strip_prefix(&out.dir).unwrap_or(p).to_path_buf()).collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, text + "\n").map_err(io_err(&manifest_path))?;
    Ok(RunOutcome { summary, manifest, passed: produced.passed })
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("results serialize")
}

/// Mean-field run from the initial census of `params`, streamed through the
/// phase and invariant monitors.
fn cmd_ode(config: &ExperimentConfig, out: &mut Output) -> Result<Produced, ExperimentError> {
    let p = &config.params;
    let init = MeanFieldState::from_counts(&AgentCounts::init_population(p)?, 0.0);
    let step = config.step();
    let pp = PotentialParams::for_state(&init, config.lambda_target).with_horizon(config.theta, p.n);
    let mut bounds = BoundMonitor::new(pp);
    let mut invariants = InvariantMonitor::new(p.s);
    let every = ((config.sample_interval / step).round() as u64).max(1);
    let mut trace = TrajectoryTrace::new(SystemTag::Meanfield, p.s, Some(p.n), phi_of(&init), None, step);
    let mut k = 0u64;
    let last = integrate_observed(&init, p.horizon_time, step, |st| {
        bounds.observe(st);
        invariants.observe(st);
        if k.is_multiple_of(every) {
            trace.samples.push(st.to_snapshot());
        }
        k += 1;
    })?;
    if trace.last().is_some_and(|x| x.t < last.t) {
        trace.samples.push(last.to_snapshot());
    }
    out.trace("ode.trace", &trace)?;
    let mut reports = bounds.reports();
    reports.extend(invariants.reports());
    let passed = reports.iter().all(|b| !b.failed());
    Ok(Produced {
        results: json!({
            "phase_summary": to_value(&bounds.summary()),
            "step": step,
            "steps": k.saturating_sub(1),
            "samples": trace.len(),
            "passed": passed,
        }),
        bound_reports: reports,
        deviation_reports: Vec::new(),
        passed,
    })
}

fn cmd_sim(config: &ExperimentConfig, out: &mut Output) -> Result<Produced, ExperimentError> {
    let r = run_trial_with(&config.params, &config.trial_options())?;
    out.seeds.push(r.seed);
    out.trace("sim.trace", &r.trace)?;
    Ok(Produced::results(to_value(&r)))
}

/// Aggregates of one ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub n: u64,
    pub s: usize,
    pub rho: f64,
    pub trials: usize,
    pub reached_consensus: usize,
    pub correct: usize,
    pub success_rate: f64,
    pub median_consensus_time: Option<f64>,
    pub median_communications: Option<f64>,
    /// Median of `communications / (n · t_consensus)` over agreeing trials.
    pub median_comm_rate: Option<f64>,
}

pub fn ensemble_stats(params: &ProtocolParams, runs: &[TrialResult]) -> EnsembleStats {
    let agreed: Vec<&TrialResult> = runs.iter().filter(|r| r.reached_consensus).collect();
    let times: Vec<f64> = agreed.iter().filter_map(|r| r.consensus_time).collect();
    let comms: Vec<f64> = agreed.iter().map(|r| r.total_communications as f64).collect();
    let rates: Vec<f64> = agreed
        .iter()
        .filter_map(|r| r.consensus_time.filter(|&t| t > 0.0).map(|t| r.total_communications as f64 / (params.n as f64 * t)))
        .collect();
    let correct = runs.iter().filter(|r| r.succeeded()).count();
    EnsembleStats {
        n: params.n,
        s: params.s,
        rho: params.rho,
        trials: runs.len(),
        reached_consensus: agreed.len(),
        correct,
        success_rate: correct as f64 / runs.len().max(1) as f64,
        median_consensus_time: median(&times),
        median_communications: median(&comms),
        median_comm_rate: median(&rates),
    }
}

fn cmd_ensemble(config: &ExperimentConfig, out: &mut Output) -> Result<Produced, ExperimentError> {
    let runs = run_ensemble(&config.params, config.trials, &config.trial_options())?;
    out.seeds.extend(runs.iter().map(|r| r.seed));
    if config.write_traces {
        for (k, r) in runs.iter().enumerate() {
            out.trace(&format!("trial_{k:03}.trace"), &r.trace)?;
        }
    }
    Ok(Produced::results(json!({
        "stats": to_value(&ensemble_stats(&config.params, &runs)),
        "trials": to_value(&runs),
    })))
}

/// Random trial against the mean-field trajectory from its initial census,
/// over the whole horizon.
fn cmd_compare(config: &ExperimentConfig, out: &mut Output) -> Result<Produced, ExperimentError> {
    let p = &config.params;
    let (trial, ode) = coupled_pair(p, config.sample_interval)?;
    let report = compare(&trial.trace, &ode, (0.0, p.horizon_time))?;
    out.seeds.push(trial.seed);
    out.trace("random.trace", &trial.trace)?;
    out.trace("ode.trace", &ode)?;
    Ok(Produced {
        results: json!({ "trial": to_value(&trial), "alpha_sup": report.sup("alpha"), "overall_sup": report.overall() }),
        bound_reports: Vec::new(),
        deviation_reports: vec![report],
        passed: true,
    })
}

fn cmd_reset(config: &ExperimentConfig, out: &mut Output) -> Result<Produced, ExperimentError> {
    let p = &config.params;
    let res = reset_experiment(p, config.block_length)?;
    out.seeds.push(res.trial.seed);
    out.trace("random.trace", &res.trial.trace)?;
    // piecewise mean-field trace: each block after the first drops its
    // restart sample, which duplicates the previous block's end time
    let mut piecewise = TrajectoryTrace::new(SystemTag::Meanfield, p.s, Some(p.n), p.rho, Some(p.seed), res.step);
    for (k, b) in res.blocks.iter().enumerate() {
        piecewise.samples.extend(b.ode_trace.samples.iter().skip(usize::from(k > 0)).cloned());
    }
    out.trace("piecewise_ode.trace", &piecewise)?;
    let blocks: Vec<Value> = res
        .blocks
        .iter()
        .map(|b| {
            json!({
                "index": b.index,
                "t_start": b.t_start,
                "t_end": b.t_end,
                "alpha_sup_times_s": b.deviation.sup("alpha") * p.s as f64,
                "lambda2_random_end": b.lambda2_random_end,
                "lambda2_ode_end": b.lambda2_ode_end,
            })
        })
        .collect();
    Ok(Produced {
        results: json!({
            "trial": to_value(&res.trial),
            "block_length": res.block_length,
            "max_alpha_sup_times_s": res.max_alpha_deviation() * p.s as f64,
            "blocks": blocks,
        }),
        bound_reports: Vec::new(),
        deviation_reports: res.blocks.into_iter().map(|b| b.deviation).collect(),
        passed: true,
    })
}

/// One cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub n: u64,
    pub s: usize,
    pub rho: f64,
    pub stats: Option<EnsembleStats>,
    pub error: Option<String>,
}

/// Least-squares fit of median consensus time against `|ln ρ|` at one `(n, s)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoFit {
    pub n: u64,
    pub s: usize,
    pub slope: Option<f64>,
    /// Differences of successive median times along the `ρ` axis.
    pub increments: Vec<f64>,
}

pub fn run_sweep(
    base: &ProtocolParams,
    grid: &SweepGrid,
    trials: usize,
    opts: &TrialOptions,
    mut progress: impl FnMut(&SweepCell),
) -> (Vec<SweepCell>, Vec<RhoFit>) {
    let mut cells = Vec::new();
    let mut fits = Vec::new();
    for &n in &grid.n {
        for &s in &grid.s {
            let mut fit = SlopeFit::default();
            let mut meds = Vec::new();
            for &rho in &grid.rho {
                let params = ProtocolParams { n, s, rho, ..*base };
                let cell = match run_ensemble(&params, trials, opts) {
                    Ok(runs) => {
                        let stats = ensemble_stats(&params, &runs);
                        if let Some(m) = stats.median_consensus_time {
                            fit.push(rho.ln().abs(), m);
                            meds.push(m);
                        }
                        SweepCell { n, s, rho, stats: Some(stats), error: None }
                    }
                    Err(e) => SweepCell { n, s, rho, stats: None, error: Some(e.to_string()) },
                };
                progress(&cell);
                cells.push(cell);
            }
            fits.push(RhoFit { n, s, slope: fit.slope(), increments: meds.windows(2).map(|w| w[1] - w[0]).collect() });
        }
    }
    (cells, fits)
}

fn cmd_sweep(
    config: &ExperimentConfig,
    out: &mut Output,
    progress: &mut impl FnMut(&str),
) -> Result<Produced, ExperimentError> {
    let grid = config.sweep.as_ref().expect("validated");
    let (cells, fits) = run_sweep(&config.params, grid, config.trials, &config.trial_options(), |c| {
        progress(&match (&c.stats, &c.error) {
            (Some(st), _) => format!(
                "n={} s={} rho={}: {}/{} correct, median time {:?}",
                c.n, c.s, c.rho, st.correct, st.trials, st.median_consensus_time
            ),
            (None, e) => format!("n={} s={} rho={}: failed: {}", c.n, c.s, c.rho, e.as_deref().unwrap_or("")),
        })
    });
    out.seeds.extend((0..config.trials as u64).map(|k| mix_seed(config.params.seed, k)));
    let col = |f: &dyn Fn(&SweepCell) -> f64| cells.iter().map(f).collect::<Vec<f64>>();
    let stat = |f: fn(&EnsembleStats) -> Option<f64>| col(&|c| c.stats.as_ref().and_then(f).unwrap_or(f64::NAN));
    let table = crate::plot::render_columns(&[
        ("n", &col(&|c| c.n as f64)),
        ("s", &col(&|c| c.s as f64)),
        ("rho", &col(&|c| c.rho)),
        ("median_time", &stat(|s| s.median_consensus_time)),
        ("median_comms", &stat(|s| s.median_communications)),
        ("median_comm_rate", &stat(|s| s.median_comm_rate)),
        ("success_rate", &stat(|s| Some(s.success_rate))),
    ]);
    out.text("sweep.dat", &table)?;
    Ok(Produced::results(json!({ "cells": to_value(&cells), "fits": to_value(&fits) })))
}

/// Paired seeds of the protocol and the three-state baseline.
fn cmd_baseline(config: &ExperimentConfig, out: &mut Output) -> Result<Produced, ExperimentError> {
    let p = &config.params;
    let runs = run_ensemble(p, config.trials, &config.trial_options())?;
    let mut pairs = Vec::new();
    let (mut ours, mut theirs) = (0u64, 0u64);
    for r in &runs {
        let base = three_state_baseline(p.n, p.rho, r.seed, p.horizon_time)?;
        out.seeds.push(r.seed);
        if r.reached_consensus && base.reached_consensus {
            ours += r.total_communications;
            theirs += base.total_communications;
        }
        pairs.push(json!({
            "seed": r.seed,
            "popcon": to_value(r),
            "three_state": to_value(&base),
            "ratio": base.total_communications as f64 / r.total_communications.max(1) as f64,
        }));
    }
    Ok(Produced::results(json!({
        "stats": to_value(&ensemble_stats(p, &runs)),
        "total_ratio": theirs as f64 / ours.max(1) as f64,
        "pairs": pairs,
    })))
}

fn cmd_verify(
    config: &ExperimentConfig,
    out: &mut Output,
    progress: &mut impl FnMut(&str),
) -> Result<Produced, ExperimentError> {
    let mut show = |c: &CriterionResult| progress(&c.line());
    let report: SuiteReport = match config.suite {
        Suite::Acceptance => run_full_suite(&mut show),
        Suite::Config => run_config_checks(&config.params, config.lambda_target, config.theta, config.trials, &mut show),
    };
    let lines: String = report.criteria.iter().map(|c| c.line() + "\n").collect();
    out.text("verify.txt", &lines)?;
    Ok(Produced {
        passed: report.passed(),
        bound_reports: report.bound_reports().cloned().collect(),
        deviation_reports: report.deviation_reports().cloned().collect(),
        results: json!({
            "passed": report.passed(),
            "criteria": report.criteria.iter().map(|c| json!({
                "id": c.id,
                "name": c.name,
                "passed": c.passed,
                "asserted": c.asserted,
                "detail": c.detail,
                "elapsed_secs": c.elapsed_secs,
            })).collect::<Vec<_>>(),
        }),
    })
}

fn cmd_plotdata(config: &ExperimentConfig, out: &mut Output) -> Result<Produced, ExperimentError> {
    let mut written: Vec<PlotFile> = Vec::new();
    for path in &config.traces {
        let trace = read_trace(path)?;
        let stem = path.file_stem().and_then(|x| x.to_str()).unwrap_or("trace");
        let files = write_panels(&trace, &out.dir, stem).map_err(io_err(&out.dir))?;
        out.files.extend(files.iter().map(|f| f.path.clone()));
        written.extend(files);
    }
    Ok(Produced::results(json!({ "files": to_value(&written) })))
}
