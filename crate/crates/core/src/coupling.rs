//! How closely the random system follows the mean-field one.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::meanfield::{default_step, integrate, IntegrationError, MeanFieldState};
use crate::model::ProtocolParams;
use crate::potentials::ln_lambda2;
use crate::sim::{run_trial_with, SimError, TrialOptions, TrialResult};
use crate::trace::{Layout, Snapshot, TrajectoryTrace, TIME_EPS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CouplingError {
    #[error("traces disagree on s ({0} vs {1})")]
    LayoutMismatch(usize, usize),
    #[error("sampling grids differ: no matching sample for t = {0}")]
    MismatchedGrid(f64),
    #[error("window [{0}, {1}] holds no common samples")]
    EmptyWindow(f64, f64),
    #[error("block length must be positive (got {0})")]
    BlockLength(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

/// Largest gap between two traces over a time window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    /// Sup of `|a_k(t) - b_k(t)|` per column, plus the aggregates `beta`
    /// (informed wrong followers) and `Gamma`.
    pub per_variable_sup: BTreeMap<String, f64>,
    pub window: (f64, f64),
    pub n: Option<u64>,
    /// `3 n^{-1/8}`.
    pub bound_reference: Option<f64>,
    pub samples: usize,
    /// Largest `δ/2 + u` of the first trace over the window.
    pub max_delta_half_plus_u: f64,
}

impl DeviationReport {
    pub fn sup(&self, name: &str) -> f64 {
        self.per_variable_sup.get(name).copied().unwrap_or(f64::NAN)
    }

    /// Largest sup over all variables.
    pub fn overall(&self) -> f64 {
        self.per_variable_sup.values().fold(0.0, |m, &x| m.max(x))
    }
}

fn aggregates(snap: &Snapshot, layout: &Layout) -> (f64, f64) {
    let beta = (1..=layout.bins()).map(|j| snap.value(layout, layout.beta(j))).sum();
    let gamma = (1..=layout.bins()).map(|j| snap.fractions[layout.gamma(j)]).sum();
    (beta, gamma)
}

/// Pairs of samples sharing a time inside the window. Every sample of the
/// sparser trace must find a partner.
fn matched<'a>(
    a: &'a TrajectoryTrace,
    b: &'a TrajectoryTrace,
    window: (f64, f64),
) -> Result<Vec<(&'a Snapshot, &'a Snapshot)>, CouplingError> {
    let xs: Vec<&Snapshot> = a.window(window.0, window.1).collect();
    let ys: Vec<&Snapshot> = b.window(window.0, window.1).collect();
    let swap = xs.len() > ys.len();
    let (sparse, dense) = if swap { (&ys, &xs) } else { (&xs, &ys) };
    let mut pairs = Vec::with_capacity(sparse.len());
    let mut k = 0;
    for s in sparse.iter() {
        while k < dense.len() && dense[k].t < s.t - TIME_EPS {
            k += 1;
        }
        match dense.get(k) {
            Some(d) if (d.t - s.t).abs() <= TIME_EPS => {
                pairs.push(if swap { (*d, *s) } else { (*s, *d) });
            }
            _ => return Err(CouplingError::MismatchedGrid(s.t)),
        }
    }
    if pairs.is_empty() {
        return Err(CouplingError::EmptyWindow(window.0, window.1));
    }
    Ok(pairs)
}

/// Per-variable sup deviation between two traces over `window`.
pub fn compare(
    random_trace: &TrajectoryTrace,
    ode_trace: &TrajectoryTrace,
    window: (f64, f64),
) -> Result<DeviationReport, CouplingError> {
    if random_trace.s != ode_trace.s {
        return Err(CouplingError::LayoutMismatch(random_trace.s, ode_trace.s));
    }
    let layout = random_trace.layout();
    let names = layout.column_names();
    let pairs = matched(random_trace, ode_trace, window)?;
    let mut sups = vec![0.0f64; layout.len() + 2];
    let mut max_dq = 0.0f64;
    for (x, y) in &pairs {
        for (idx, sup) in sups.iter_mut().enumerate().take(layout.len()) {
            *sup = sup.max((x.value(&layout, idx) - y.value(&layout, idx)).abs());
        }
        let (bx, gx) = aggregates(x, &layout);
        let (by, gy) = aggregates(y, &layout);
        sups[layout.len()] = sups[layout.len()].max((bx - by).abs());
        sups[layout.len() + 1] = sups[layout.len() + 1].max((gx - gy).abs());
        max_dq = max_dq.max(x.value(&layout, Layout::DELTA) / 2.0 + x.fractions[layout.u()]);
    }
    let mut per_variable_sup: BTreeMap<String, f64> = names.into_iter().zip(sups.iter().copied()).collect();
    per_variable_sup.insert("beta".into(), sups[layout.len()]);
    per_variable_sup.insert("Gamma".into(), sups[layout.len() + 1]);
    let n = random_trace.n.or(ode_trace.n);
    Ok(DeviationReport {
        per_variable_sup,
        window,
        n,
        bound_reference: n.map(|n| 3.0 * (n as f64).powf(-0.125)),
        samples: pairs.len(),
        max_delta_half_plus_u: max_dq,
    })
}

/// Random trial and the mean-field trajectory started from its initial
/// census, both sampled on the same grid of spacing `step`.
pub fn coupled_pair(
    params: &ProtocolParams,
    step: f64,
) -> Result<(TrialResult, TrajectoryTrace), CouplingError> {
    let trial = run_trial_with(params, &TrialOptions::new(step).full_horizon())?;
    let init = MeanFieldState::from_snapshot(&trial.trace.samples[0], params.s);
    let mut ode = integrate(&init, params.horizon_time, step)?;
    ode.n = Some(params.n);
    ode.rho = params.rho;
    Ok((trial, ode))
}

/// One block of the reset experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResetBlock {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    #[serde(skip)]
    pub ode_trace: TrajectoryTrace,
    pub deviation: DeviationReport,
    /// `Λ2` of the random system at the block end.
    pub lambda2_random_end: f64,
    /// `Λ2` of the restarted mean-field system at the block end.
    pub lambda2_ode_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResetResult {
    pub block_length: f64,
    pub step: f64,
    pub trial: TrialResult,
    pub blocks: Vec<ResetBlock>,
}

impl ResetResult {
    /// Largest `sup |α̃/n - α|` over all blocks.
    pub fn max_alpha_deviation(&self) -> f64 {
        self.blocks.iter().map(|b| b.deviation.sup("alpha")).fold(0.0, f64::max)
    }
}

/// Run one random trial and restart the mean-field system from the random
/// census every `block_length` time units.
///
/// Block boundaries are rounded to the sampling grid (spacing
/// [`default_step`]), so each restart uses an actual random sample.
pub fn reset_experiment(params: &ProtocolParams, block_length: f64) -> Result<ResetResult, CouplingError> {
    if !(block_length > 0.0 && block_length.is_finite()) {
        return Err(CouplingError::BlockLength(block_length));
    }
    let step = default_step(params.s);
    let trial = run_trial_with(params, &TrialOptions::new(step))?;
    let t_last = trial.trace.last().map_or(0.0, |x| x.t);
    let per_block = ((block_length / step).round() as usize).max(1);
    let mut blocks = Vec::new();
    let mut start = 0usize;
    while start + 1 < trial.trace.len() {
        let end = (start + per_block).min(trial.trace.len() - 1);
        let first = &trial.trace.samples[start];
        let last = &trial.trace.samples[end];
        let init = MeanFieldState::from_snapshot(first, params.s);
        let mut ode = integrate(&init, last.t, step)?;
        ode.n = Some(params.n);
        ode.rho = params.rho;
        let deviation = compare(&trial.trace, &ode, (first.t, last.t))?;
        let ode_end = MeanFieldState::from_snapshot(ode.last().expect("non-empty"), params.s);
        blocks.push(ResetBlock {
            index: blocks.len(),
            t_start: first.t,
            t_end: last.t,
            lambda2_random_end: ln_lambda2(&MeanFieldState::from_snapshot(last, params.s)).exp(),
            lambda2_ode_end: ln_lambda2(&ode_end).exp(),
            ode_trace: ode,
            deviation,
        });
        start = end;
    }
    debug_assert!(blocks.last().is_none_or(|b| (b.t_end - t_last).abs() < TIME_EPS));
    Ok(ResetResult { block_length, step, trial, blocks })
}
