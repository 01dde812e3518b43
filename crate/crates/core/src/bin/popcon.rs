//! Command-line front end: load a config, apply flag overrides, run.
//!
//! Exit codes: 0 all checks passed, 1 an asserted check failed, 2 usage,
//! config or I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use popcon::experiments::{run, Command, ExperimentConfig, Suite, SweepGrid};

#[derive(Debug, Parser)]
#[command(name = "popcon", version, about = "Majority consensus: simulation, mean-field limit and bound checks")]
struct Cli {
    /// ode, sim, ensemble, compare, reset, sweep, baseline, verify or plotdata
    command: Command,
    /// Trace files for plotdata.
    traces: Vec<PathBuf>,
    /// TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long = "out")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    sample_interval: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long = "block")]
    block_length: Option<f64>,
    #[arg(long)]
    comm_window: Option<f64>,
    /// acceptance or config
    #[arg(long)]
    suite: Option<Suite>,
    #[arg(long)]
    write_traces: bool,
    #[arg(long, value_delimiter = ',')]
    grid_n: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    grid_s: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    grid_rho: Vec<f64>,
    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

impl Cli {
    fn resolve(self) -> Result<ExperimentConfig, popcon::experiments::ExperimentError> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        c.command = self.command;
        let p = &mut c.params;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(p.n, self.n);
        set!(p.s, self.s);
        set!(p.rho, self.rho);
        set!(p.seed, self.seed);
        set!(p.horizon_time, self.horizon);
        set!(c.lambda_target, self.lambda);
        set!(c.theta, self.theta);
        set!(c.output_dir, self.output_dir);
        set!(c.sample_interval, self.sample_interval);
        set!(c.trials, self.trials);
        set!(c.block_length, self.block_length);
        set!(c.suite, self.suite);
        if self.step.is_some() {
            c.step = self.step;
        }
        if self.comm_window.is_some() {
            c.comm_window = self.comm_window;
        }
        c.write_traces |= self.write_traces;
        if !self.traces.is_empty() {
            c.traces = self.traces;
        }
        if !(self.grid_n.is_empty() && self.grid_s.is_empty() && self.grid_rho.is_empty()) {
            let mut g = c.sweep.take().unwrap_or(SweepGrid { n: vec![c.params.n], s: vec![c.params.s], rho: vec![c.params.rho] });
            if !self.grid_n.is_empty() {
                g.n = self.grid_n;
            }
            if !self.grid_s.is_empty() {
                g.s = self.grid_s;
            }
            if !self.grid_rho.is_empty() {
                g.rho = self.grid_rho;
            }
            c.sweep = Some(g);
        }
        Ok(c)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let print_config = cli.print_config;
    let config = match cli.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if print_config {
        print!("{}", config.to_toml());
        return ExitCode::SUCCESS;
    }
    match run(&config, |line| eprintln!("{line}")) {
        Ok(outcome) => {
            println!("wrote {}", config.output_dir.join("summary.json").display());
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("assertion failure");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
