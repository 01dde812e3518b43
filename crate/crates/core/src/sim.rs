//! Seeded trials of the random system, ensembles, and the three-state
//! baseline protocol.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{wrong_share, AgentCounts, ParamError, ProtocolParams};
use crate::trace::{Layout, Snapshot, SystemTag, TrajectoryTrace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("sample interval must be positive (got {0})")]
    SampleInterval(f64),
    #[error("communication window must be positive (got {0})")]
    Window(f64),
    #[error("at least one trial is required")]
    NoTrials,
}

/// How a trial is run and recorded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOptions {
    /// Snapshot spacing in time units (`t = steps / n`).
    pub sample_interval: f64,
    /// Stop as soon as every agent agrees.
    pub stop_at_consensus: bool,
    /// Record communication counts over consecutive windows of this length.
    pub comm_window: Option<f64>,
}

impl TrialOptions {
    pub fn new(sample_interval: f64) -> Self {
        TrialOptions { sample_interval, stop_at_consensus: true, comm_window: None }
    }

    pub fn full_horizon(mut self) -> Self {
        self.stop_at_consensus = false;
        self
    }

    pub fn with_comm_window(mut self, length: f64) -> Self {
        self.comm_window = Some(length);
        self
    }

    fn validate(&self) -> Result<(), SimError> {
        if !(self.sample_interval > 0.0 && self.sample_interval.is_finite()) {
            return Err(SimError::SampleInterval(self.sample_interval));
        }
        match self.comm_window {
            Some(w) if !(w > 0.0 && w.is_finite()) => Err(SimError::Window(w)),
            _ => Ok(()),
        }
    }
}

impl Default for TrialOptions {
    fn default() -> Self {
        TrialOptions::new(1.0)
    }
}

/// Communication count over one full window of steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommWindow {
    pub t_start: f64,
    pub t_end: f64,
    pub steps: u64,
    pub communications: u64,
    /// Largest uninformed fraction `ũ/n` seen inside the window.
    pub max_uninformed: f64,
}

impl CommWindow {
    pub fn rate(&self) -> f64 {
        self.communications as f64 / self.steps as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub seed: u64,
    pub reached_consensus: bool,
    /// Whether the agreed bit is the initial majority; `None` without consensus.
    pub consensus_correct: Option<bool>,
    pub consensus_step: Option<u64>,
    /// `consensus_step / n`.
    pub consensus_time: Option<f64>,
    pub steps_executed: u64,
    pub total_communications: u64,
    #[serde(skip)]
    pub trace: TrajectoryTrace,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub windows: Vec<CommWindow>,
}

impl TrialResult {
    pub fn succeeded(&self) -> bool {
        self.consensus_correct == Some(true)
    }
}

/// What a trial loop needs from a protocol.
trait Engine {
    fn n(&self) -> u64;
    /// One wake; returns (communicated, some belief changed).
    fn step(&mut self, rng: &mut ChaCha8Rng) -> (bool, bool);
    /// `Some(true)` on correct consensus, `Some(false)` on wrong consensus.
    fn agreement(&self) -> Option<bool>;
    fn uninformed(&self) -> u64;
    fn snapshot(&self, t: f64, comms: u64) -> Snapshot;
}

impl Engine for AgentCounts {
    fn n(&self) -> u64 {
        self.n
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> (bool, bool) {
        let out = self.wake(rng);
        (out.communicated, out.consensus_relevant_change)
    }

    fn agreement(&self) -> Option<bool> {
        if self.consensus_reached() {
            Some(true)
        } else if self.wrong_consensus_reached() {
            Some(false)
        } else {
            None
        }
    }

    fn uninformed(&self) -> u64 {
        self.uninformed_wrong + self.uninformed_correct
    }

    fn snapshot(&self, t: f64, comms: u64) -> Snapshot {
        AgentCounts::snapshot(self, t, comms)
    }
}

/// Splitmix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `k` of an ensemble with base seed `base`.
pub fn mix_seed(base: u64, k: u64) -> u64 {
    splitmix64(base.wrapping_add(k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Median of a sample; `None` when empty.
pub fn median(xs: &[f64]) -> Option<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    match v.len() {
        0 => None,
        len if len % 2 == 1 => Some(v[m]),
        _ => Some((v[m - 1] + v[m]) / 2.0),
    }
}

/// First step at or after time `t`.
fn step_at(t: f64, n: u64) -> u64 {
    (t * n as f64 - 1e-9).ceil().max(0.0) as u64
}

fn run_engine<E: Engine>(
    mut engine: E,
    mut trace: TrajectoryTrace,
    seed: u64,
    horizon_steps: u64,
    opts: &TrialOptions,
) -> TrialResult {
    let n = engine.n();
    let nf = n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut comms = 0u64;
    let mut step = 0u64;
    let mut agreement = engine.agreement();
    let mut consensus_step = agreement.map(|_| 0);
    trace.samples.push(engine.snapshot(0.0, 0));
    let mut last_sampled = 0u64;
    let mut sample_k = 1u64;
    let mut next_sample = step_at(opts.sample_interval, n).max(1);

    let window_steps = opts.comm_window.map(|w| ((w * nf).round() as u64).max(1));
    let mut windows = Vec::new();
    let (mut win_start, mut win_comms, mut win_max_u) = (0u64, 0u64, engine.uninformed());

    let stop = |agreement: Option<bool>| opts.stop_at_consensus && agreement.is_some();
    while step < horizon_steps && !stop(agreement) {
        let (communicated, changed) = engine.step(&mut rng);
        step += 1;
        comms += communicated as u64;
        if changed {
            agreement = engine.agreement();
            if agreement.is_some() && consensus_step.is_none() {
                consensus_step = Some(step);
            }
        }
        if let Some(w) = window_steps {
            win_comms += communicated as u64;
            win_max_u = win_max_u.max(engine.uninformed());
            if step - win_start == w {
                windows.push(CommWindow {
                    t_start: win_start as f64 / nf,
                    t_end: step as f64 / nf,
                    steps: w,
                    communications: win_comms,
                    max_uninformed: win_max_u as f64 / nf,
                });
                win_start = step;
                win_comms = 0;
                win_max_u = engine.uninformed();
            }
        }
        if step >= next_sample {
            trace.samples.push(engine.snapshot(step as f64 / nf, comms));
            last_sampled = step;
            while next_sample <= step {
                sample_k += 1;
                next_sample = step_at(sample_k as f64 * opts.sample_interval, n);
            }
        }
    }
    if last_sampled != step {
        trace.samples.push(engine.snapshot(step as f64 / nf, comms));
    }
    TrialResult {
        seed,
        reached_consensus: consensus_step.is_some(),
        consensus_correct: consensus_step.map(|_| agreement.unwrap_or(true)),
        consensus_step,
        consensus_time: consensus_step.map(|k| k as f64 / nf),
        steps_executed: step,
        total_communications: comms,
        trace,
        windows,
    }
}

/// One trial of the protocol with the default options at `sample_interval`.
pub fn run_trial(params: &ProtocolParams, sample_interval: f64) -> Result<TrialResult, SimError> {
    run_trial_with(params, &TrialOptions::new(sample_interval))
}

pub fn run_trial_with(params: &ProtocolParams, opts: &TrialOptions) -> Result<TrialResult, SimError> {
    opts.validate()?;
    let counts = AgentCounts::init_population(params)?;
    let trace = TrajectoryTrace::new(
        SystemTag::Random,
        params.s,
        Some(params.n),
        params.rho,
        Some(params.seed),
        opts.sample_interval,
    );
    Ok(run_engine(counts, trace, params.seed, params.steps(), opts))
}

/// Trials `0..trials`, trial `k` seeded with `mix_seed(params.seed, k)`.
/// Results are in trial order whatever the execution schedule.
pub fn run_ensemble(params: &ProtocolParams, trials: usize, opts: &TrialOptions) -> Result<Vec<TrialResult>, SimError> {
    if trials == 0 {
        return Err(SimError::NoTrials);
    }
    params.validate()?;
    opts.validate()?;
    (0..trials as u64)
        .into_par_iter()
        .map(|k| run_trial_with(&params.with_seed(mix_seed(params.seed, k)), opts))
        .collect()
}

/// Continuous-time stamp of discrete step `step`: a sum of `step`
/// independent exponential gaps of rate `n`.
pub fn poisson_time_of<R: Rng + ?Sized>(step: u64, n: u64, rng: &mut R) -> f64 {
    if step == 0 {
        return 0.0;
    }
    Gamma::new(step as f64, 1.0 / n as f64).expect("positive shape and scale").sample(rng)
}

/// Running continuous-time clock over consecutive steps.
#[derive(Debug, Clone)]
pub struct PoissonClock {
    gap: Exp<f64>,
    pub t: f64,
    pub steps: u64,
}

impl PoissonClock {
    pub fn new(n: u64) -> Self {
        PoissonClock { gap: Exp::new(n as f64).expect("positive rate"), t: 0.0, steps: 0 }
    }

    /// Time of the next step.
    pub fn tick<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        self.t += self.gap.sample(rng);
        self.steps += 1;
        self.t
    }
}

/// Census of the three-state protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeState {
    pub n: u64,
    pub correct: u64,
    pub wrong: u64,
    pub undecided: u64,
}

impl ThreeState {
    pub fn new(n: u64, rho: f64) -> Self {
        let wrong = wrong_share(n, rho);
        ThreeState { n, correct: n - wrong, wrong, undecided: 0 }
    }

    fn class_at(&self, rank: u64) -> u8 {
        if rank < self.correct {
            0
        } else if rank < self.correct + self.wrong {
            1
        } else {
            2
        }
    }
}

impl Engine for ThreeState {
    fn n(&self) -> u64 {
        self.n
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> (bool, bool) {
        let i = self.class_at(rng.random_range(0..self.n));
        let mut rank = rng.random_range(0..self.n - 1);
        // skip the initiator itself
        let offsets = [self.correct, self.wrong, self.undecided];
        let mut j = 0u8;
        for (k, &c) in offsets.iter().enumerate() {
            let c = if k as u8 == i { c - 1 } else { c };
            if rank < c {
                j = k as u8;
                break;
            }
            rank -= c;
        }
        let changed = match (i, j) {
            (0, 2) => {
                self.undecided -= 1;
                self.correct += 1;
                true
            }
            (1, 2) => {
                self.undecided -= 1;
                self.wrong += 1;
                true
            }
            (0, 1) => {
                self.wrong -= 1;
                self.undecided += 1;
                true
            }
            (1, 0) => {
                self.correct -= 1;
                self.undecided += 1;
                true
            }
            _ => false,
        };
        (true, changed)
    }

    fn agreement(&self) -> Option<bool> {
        if self.wrong == 0 && self.undecided == 0 {
            Some(true)
        } else if self.correct == 0 && self.undecided == 0 {
            Some(false)
        } else {
            None
        }
    }

    fn uninformed(&self) -> u64 {
        0
    }

    /// Mapped onto the shared layout with `s = 1`: every node counts as a
    /// leader, `alpha` is the wrong fraction and `delta` the undecided one.
    fn snapshot(&self, t: f64, comms: u64) -> Snapshot {
        let layout = Layout::new(1);
        let mut fractions = vec![0.0; layout.len()];
        fractions[Layout::ALPHA] = self.wrong as f64 / self.n as f64;
        fractions[Layout::DELTA] = self.undecided as f64 / self.n as f64;
        Snapshot { t, fractions, comms, scale_exp2: 0 }
    }
}

/// The three-state protocol on `n` nodes, every wake a communication.
pub fn three_state_baseline(n: u64, rho: f64, seed: u64, horizon: f64) -> Result<TrialResult, SimError> {
    three_state_baseline_with(n, rho, seed, horizon, &TrialOptions::default())
}

pub fn three_state_baseline_with(
    n: u64,
    rho: f64,
    seed: u64,
    horizon: f64,
    opts: &TrialOptions,
) -> Result<TrialResult, SimError> {
    opts.validate()?;
    if n < 2 {
        return Err(ParamError::SmallN { n, min: 2 }.into());
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(ParamError::Rho(rho).into());
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(ParamError::Horizon(horizon).into());
    }
    let trace = TrajectoryTrace::new(SystemTag::Random, 1, Some(n), rho, Some(seed), opts.sample_interval);
    let steps = (horizon * n as f64).round() as u64;
    Ok(run_engine(ThreeState::new(n, rho), trace, seed, steps, opts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: u64, s: usize, rho: f64, horizon: f64) -> ProtocolParams {
        ProtocolParams::new(n, s, rho, 7, horizon).unwrap()
    }

    #[test]
    fn unanimous_start_is_immediate_consensus() {
        let r = run_trial(&params(3000, 5, 1.0, 10.0), 1.0).unwrap();
        assert_eq!(r.consensus_step, Some(0));
        assert_eq!(r.consensus_correct, Some(true));
        assert_eq!(r.total_communications, 0);
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn single_step_bookkeeping() {
        let r = run_trial(&params(20, 2, 0.5, 0.05), 1.0).unwrap();
        assert_eq!(r.steps_executed, 1);
        assert!(!r.trace.is_empty() && r.trace.len() <= 3);
        assert!(r.total_communications <= 1);
        assert_eq!(r.trace.last().unwrap().t, 0.05);
    }

    #[test]
    fn same_seed_same_result() {
        let p = params(600, 3, 0.2, 30.0);
        let a = run_trial(&p, 0.5).unwrap();
        let b = run_trial(&p, 0.5).unwrap();
        assert_eq!(a, b);
        let c = run_trial(&p.with_seed(8), 0.5).unwrap();
        assert_ne!(a.trace, c.trace);
    }

    #[test]
    fn samples_land_on_the_grid() {
        let r = run_trial_with(&params(1000, 5, 0.1, 3.0), &TrialOptions::new(0.25).full_horizon()).unwrap();
        let times: Vec<f64> = r.trace.sample_times().collect();
        assert_eq!(times.len(), 13);
        for (k, t) in times.iter().enumerate() {
            assert!((t - 0.25 * k as f64).abs() < 1e-12, "{t}");
        }
        for pair in times.windows(2) {
            assert!(pair[1] > pair[0]);
        }
        let layout = r.trace.layout();
        for snap in &r.trace.samples {
            assert!(snap.mass_defect(&layout).abs() < 1e-12);
        }
    }

    #[test]
    fn consensus_is_constant_afterwards() {
        let p = params(300, 3, 0.6, 200.0);
        let r = run_trial_with(&p, &TrialOptions::new(1.0).full_horizon()).unwrap();
        let tc = r.consensus_time.expect("consensus");
        let layout = r.trace.layout();
        for snap in r.trace.samples.iter().filter(|x| x.t >= tc) {
            for idx in 0..layout.len() - 1 {
                if layout.is_wrong_side(idx) {
                    assert_eq!(snap.fractions[idx], 0.0);
                }
            }
        }
        assert!(r.total_communications <= r.steps_executed);
    }

    #[test]
    fn ensemble_is_ordered_and_reproducible() {
        let p = params(300, 3, 0.3, 50.0);
        let opts = TrialOptions::new(1.0);
        let a = run_ensemble(&p, 4, &opts).unwrap();
        let b = run_ensemble(&p, 4, &opts).unwrap();
        assert_eq!(a, b);
        let one = run_ensemble(&p, 1, &opts).unwrap();
        let direct = run_trial_with(&p.with_seed(mix_seed(p.seed, 0)), &opts).unwrap();
        assert_eq!(one[0], direct);
        assert_eq!(a[0], direct);
        assert_eq!(run_ensemble(&p, 0, &opts).unwrap_err(), SimError::NoTrials);
    }

    #[test]
    fn windows_cover_full_steps_only() {
        let p = params(1000, 5, 0.1, 10.5);
        let r = run_trial_with(&p, &TrialOptions::new(1.0).full_horizon().with_comm_window(2.0)).unwrap();
        assert_eq!(r.windows.len(), 5);
        let total: u64 = r.windows.iter().map(|w| w.communications).sum();
        assert!(total <= r.total_communications);
        assert!(r.windows.iter().all(|w| w.steps == 2000));
    }

    #[test]
    fn bad_options_are_rejected() {
        let p = params(100, 2, 0.5, 1.0);
        assert_eq!(run_trial(&p, 0.0).unwrap_err(), SimError::SampleInterval(0.0));
        let opts = TrialOptions::new(1.0).with_comm_window(-1.0);
        assert_eq!(run_trial_with(&p, &opts).unwrap_err(), SimError::Window(-1.0));
    }

    #[test]
    fn baseline_communicates_every_step() {
        let r = three_state_baseline(1000, 0.2, 3, 50.0).unwrap();
        assert_eq!(r.total_communications, r.steps_executed);
        assert!(r.reached_consensus);
        let u = three_state_baseline(1000, 1.0, 3, 50.0).unwrap();
        assert_eq!(u.consensus_step, Some(0));
        let layout = Layout::new(1);
        assert!(r.trace.samples.iter().all(|x| x.mass_defect(&layout).abs() < 1e-12));
    }

    #[test]
    fn poisson_stamps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(poisson_time_of(0, 100, &mut rng), 0.0);
        let n = 100u64;
        let t = 100.0;
        let draws = 10_000;
        let mean = (0..draws).map(|_| poisson_time_of(n * 100, n, &mut rng)).sum::<f64>() / draws as f64;
        assert!((mean - t).abs() < 0.05 * t, "{mean}");
        let mut clock = PoissonClock::new(n);
        let mut prev = 0.0;
        for _ in 0..1000 {
            let now = clock.tick(&mut rng);
            assert!(now > prev);
            prev = now;
        }
        assert!((clock.t - 10.0).abs() < 1.5);
    }

    /// `P(J(T) <= k)` for `J(T)` Poisson with mean `mu`.
    fn poisson_cdf(k: u64, mu: f64) -> f64 {
        let mut term = (-mu).exp();
        let mut total = term;
        for i in 1..=k {
            term *= mu / i as f64;
            total += term;
        }
        total
    }

    #[test]
    fn poisson_tail_matches_closed_form() {
        // J(T) <= k exactly when the (k+1)-th ring comes after T
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 20_000;
        let mut prev_freq = 1.0;
        for &n in &[10u64, 40, 160] {
            let t = 1.0;
            let k = (0.8 * n as f64) as u64;
            let freq = (0..draws).filter(|_| poisson_time_of(k + 1, n, &mut rng) > t).count() as f64 / draws as f64;
            let exact = poisson_cdf(k, n as f64 * t);
            assert!((freq - exact).abs() < 0.015, "n = {n}: {freq} vs {exact}");
            assert!(freq < prev_freq);
            prev_freq = freq;
        }
    }
}
