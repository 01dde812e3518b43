//! Potential functions, phase boundaries and the inequalities that hold along
//! mean-field trajectories.
//!
//! Bounds are checked by streaming monitors fed one state at a time, so a run
//! over tens of millions of integrator steps never has to be stored. Decay
//! checks on the wrong-side potentials work with logarithms because those
//! quantities drop far below the `f64` range (see [`crate::meanfield`]).

use serde::Serialize;
use thiserror::Error;

use crate::meanfield::{integrate_observed, integrate_until, AdvantageView, IntegrationError, MeanFieldState};
use crate::trace::{SystemTag, TrajectoryTrace};

/// Default advantage threshold that ends the first phase.
pub const DEFAULT_LAMBDA: f64 = 31.0 / 32.0;

/// Multiplicative slack of the exponential envelopes.
pub const ENVELOPE_SLACK: f64 = 1e-6;

/// Relative slack of the pointwise late-phase decay check.
pub const DECAY_SLACK: f64 = 1e-3;

/// Allowed per-step decrease of `Φ`.
pub const PHI_TOL: f64 = 1e-9;

/// The `ε` of the `γ_j`/`u` envelopes.
pub const GAMMA_ENVELOPE_EPS: f64 = 1.0 / 50.0;

/// Smallest `s` for which the structural lemmas are proven.
pub const PROVEN_S: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("T1 not attained in horizon (Φ never exceeded {lambda} up to t = {horizon})")]
    T1NotAttained { lambda: f64, horizon: f64 },
    #[error("trace holds {0:?} samples, expected a mean-field trajectory")]
    WrongSystem(SystemTag),
    #[error("{quantity} is not positive at t = {t}")]
    NonPositive { quantity: &'static str, t: f64 },
    #[error("fit window [{0}, {1}] holds fewer than two samples")]
    EmptyWindow(f64, f64),
}

/// Constants of the potential functions for one `(s, ρ, λ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialParams {
    pub s: usize,
    /// `Φ(0)`.
    pub rho: f64,
    pub lambda_target: f64,
    /// `(1 + λ) / 2`.
    pub lambda1: f64,
    /// `ρ (1 - λ1²) / 8`.
    pub epsilon: f64,
    /// `v_j = 2(3 + 2j)/(3 + 16s)`, `j = 1..=8s`.
    pub v: Vec<f64>,
    pub zeta2: f64,
    pub zeta3: f64,
    /// Weights of `β_1..β_{8s+1}` in `Λ2`.
    pub a2: Vec<f64>,
    pub d2: f64,
    /// Weights of `β_1..β_{8s+1}` in `Λ3`.
    pub a3: Vec<f64>,
    pub d3: f64,
    /// Late-phase length knob: `T3 = T2 + (1 + θ)/ζ3 · ln n`.
    pub theta: f64,
    /// Population size used for `ln n` in `T3`.
    pub n: u64,
}

impl PotentialParams {
    pub fn new(s: usize, rho: f64, lambda_target: f64) -> Self {
        let sf = s as f64;
        let bins = 8 * s;
        let lambda1 = (1.0 + lambda_target) / 2.0;
        let v = (1..=bins).map(|j| 2.0 * (3.0 + 2.0 * j as f64) / (3.0 + 16.0 * sf)).collect();
        let mut a2 = vec![0.25; bins + 1];
        a2[bins] = 0.0;
        let a3 = (1..=bins + 1).map(|j| 2f64.powi(1 - j as i32) / sf).collect();
        PotentialParams {
            s,
            rho,
            lambda_target,
            lambda1,
            epsilon: rho * (1.0 - lambda1 * lambda1) / 8.0,
            v,
            zeta2: 1.0 / (8.0 * sf),
            zeta3: 0.5 - 2.0 / sf,
            a2,
            d2: 1.0 / 16.0,
            a3,
            d3: 2f64.powi(1 - bins as i32) / sf,
            theta: 1.0,
            n: 1 << 20,
        }
    }

    /// Parameters for the trajectory starting at `initial`, with `ρ = Φ(initial)`.
    pub fn for_state(initial: &MeanFieldState, lambda_target: f64) -> Self {
        PotentialParams::new(initial.s, phi_of(initial), lambda_target)
    }

    pub fn with_horizon(mut self, theta: f64, n: u64) -> Self {
        self.theta = theta;
        self.n = n;
        self
    }

    /// Proven bound on the first-phase length, `144 s / (ρ (1 - λ))`.
    pub fn t1_bound(&self) -> f64 {
        144.0 * self.s as f64 / (self.rho * (1.0 - self.lambda_target))
    }

    /// Length of the second phase, `64 s²`.
    pub fn phase2_length(&self) -> f64 {
        64.0 * (self.s * self.s) as f64
    }

    /// Length of the third phase, `(1 + θ)/ζ3 · ln n`; zero when `ζ3 ≤ 0`
    /// (`s ≤ 4`), where the late phase has no proven rate.
    pub fn phase3_length(&self) -> f64 {
        if self.zeta3 <= 0.0 {
            return 0.0;
        }
        (1.0 + self.theta) / self.zeta3 * (self.n as f64).ln()
    }
}

/// `Ψ = min(ξ, η_j + ε v_j)`.
pub fn psi(view: &AdvantageView, pp: &PotentialParams) -> f64 {
    view.eta.iter().zip(&pp.v).fold(view.xi, |m, (&e, &v)| m.min(e + pp.epsilon * v))
}

pub use crate::meanfield::phi;

/// `Φ` straight from the state, without building an [`AdvantageView`].
pub fn phi_of(state: &MeanFieldState) -> f64 {
    advantage_min(state, |_| 0.0)
}

/// `Ψ` straight from the state.
pub fn psi_of(state: &MeanFieldState, pp: &PotentialParams) -> f64 {
    advantage_min(state, |j| pp.epsilon * pp.v[j])
}

fn advantage_min(state: &MeanFieldState, offset: impl Fn(usize) -> f64) -> f64 {
    let decisive = 1.0 / state.s as f64 - state.delta();
    let scale = state.wrong_scale();
    let mut m = 1.0 - 2.0 * state.alpha() / decisive;
    for (j, (&g, &b)) in state.gammas().iter().zip(state.stored_beta()).enumerate() {
        m = m.min(1.0 - 2.0 * b * scale / g + offset(j));
    }
    m
}

/// `(Φ, Ψ)` in one pass.
fn phi_psi(state: &MeanFieldState, pp: &PotentialParams) -> (f64, f64) {
    let decisive = 1.0 / state.s as f64 - state.delta();
    let scale = state.wrong_scale();
    let xi = 1.0 - 2.0 * state.alpha() / decisive;
    let (mut phi, mut psi) = (xi, xi);
    for ((&g, &b), &v) in state.gammas().iter().zip(state.stored_beta()).zip(&pp.v) {
        let eta = 1.0 - 2.0 * b * scale / g;
        phi = phi.min(eta);
        psi = psi.min(eta + pp.epsilon * v);
    }
    (phi, psi)
}

fn weighted_wrong(state: &MeanFieldState, d: f64, a: &[f64]) -> f64 {
    let beta: f64 = state.stored_beta().iter().zip(a).map(|(b, w)| b * w).sum();
    state.stored_alpha() + d * state.stored_delta() + beta
}

/// `Λ2 = α + δ/16 + β/4`.
pub fn lambda2(state: &MeanFieldState) -> f64 {
    ln_lambda2(state).exp()
}

/// `ln Λ2`, finite even when `Λ2` itself underflows.
pub fn ln_lambda2(state: &MeanFieldState) -> f64 {
    let stored = state.stored_alpha() + state.stored_delta() / 16.0 + state.stored_beta_informed() / 4.0;
    stored.ln() + state.ln_wrong_scale()
}

/// `Λ3 = α + d δ + Σ_{j=1}^{8s+1} a_j β_j`.
pub fn lambda3(state: &MeanFieldState, pp: &PotentialParams) -> f64 {
    ln_lambda3(state, pp).exp()
}

pub fn ln_lambda3(state: &MeanFieldState, pp: &PotentialParams) -> f64 {
    weighted_wrong(state, pp.d3, &pp.a3).ln() + state.ln_wrong_scale()
}

/// First snapshot time with `Φ > λ`.
pub fn detect_t1(trace: &TrajectoryTrace, lambda: f64) -> Result<f64, AnalysisError> {
    if trace.system != SystemTag::Meanfield {
        return Err(AnalysisError::WrongSystem(trace.system));
    }
    for snap in &trace.samples {
        if phi_of(&MeanFieldState::from_snapshot(snap, trace.s)) > lambda {
            return Ok(snap.t);
        }
    }
    Err(AnalysisError::T1NotAttained { lambda, horizon: trace.last().map_or(0.0, |x| x.t) })
}

/// Outcome of one inequality along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub bound_name: String,
    pub holds: bool,
    pub first_violation_time: Option<f64>,
    /// Smallest `rhs - lhs` seen (log units for log-space checks); infinite
    /// when the bound was never evaluated.
    pub worst_margin: f64,
    /// Whether the premises are met, so a violation is a failure rather than
    /// an observation.
    pub asserted: bool,
    /// Number of points at which the inequality was evaluated.
    pub evaluated: u64,
}

impl BoundReport {
    /// Violated while asserted.
    pub fn failed(&self) -> bool {
        self.asserted && !self.holds
    }
}

#[derive(Debug, Clone)]
struct Check {
    report: BoundReport,
}

impl Check {
    fn new(name: &str, asserted: bool) -> Self {
        Check {
            report: BoundReport {
                bound_name: name.to_string(),
                holds: true,
                first_violation_time: None,
                worst_margin: f64::INFINITY,
                asserted,
                evaluated: 0,
            },
        }
    }

    fn record(&mut self, t: f64, margin: f64, ok: bool) {
        let r = &mut self.report;
        r.evaluated += 1;
        if margin < r.worst_margin || margin.is_nan() {
            r.worst_margin = margin;
        }
        if !ok && r.holds {
            r.holds = false;
            r.first_violation_time = Some(t);
        }
    }

    /// Strict `lhs < rhs`.
    fn lt(&mut self, t: f64, lhs: f64, rhs: f64) {
        self.record(t, rhs - lhs, lhs < rhs);
    }

    /// `lhs <= rhs`.
    fn le(&mut self, t: f64, lhs: f64, rhs: f64) {
        self.record(t, rhs - lhs, lhs <= rhs);
    }
}

/// Online least-squares slope of `y` against `t` (Welford update).
#[derive(Debug, Clone, Default)]
pub struct SlopeFit {
    count: u64,
    mean_t: f64,
    mean_y: f64,
    m2_t: f64,
    c_ty: f64,
}

impl SlopeFit {
    pub fn push(&mut self, t: f64, y: f64) {
        self.count += 1;
        let k = self.count as f64;
        let dt = t - self.mean_t;
        self.mean_t += dt / k;
        self.mean_y += (y - self.mean_y) / k;
        self.m2_t += dt * (t - self.mean_t);
        self.c_ty += dt * (y - self.mean_y);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn slope(&self) -> Option<f64> {
        (self.count >= 2 && self.m2_t > 0.0).then(|| self.c_ty / self.m2_t)
    }
}

/// Phase boundaries and fitted decay rates seen by a [`BoundMonitor`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSummary {
    pub rho: f64,
    pub lambda_target: f64,
    pub t1: Option<f64>,
    pub t1_bound: f64,
    pub t2: Option<f64>,
    pub t3: Option<f64>,
    pub final_time: f64,
    /// Fitted decay rate of `Λ2` on `[T1, T2]`.
    pub lambda2_rate: Option<f64>,
    /// Fitted decay rate of `Λ3` after `T2`.
    pub lambda3_rate: Option<f64>,
    pub zeta2: f64,
    pub zeta3: f64,
    pub ln_lambda2_at_t1: Option<f64>,
    pub ln_beta_at_end: f64,
}

#[derive(Debug, Clone)]
struct Previous {
    t: f64,
    phi: f64,
    psi: f64,
    ln_lambda3: f64,
}

/// Streams states of one trajectory through every inequality of the phase
/// analysis.
#[derive(Debug, Clone)]
pub struct BoundMonitor {
    pp: PotentialParams,
    gamma_caps: Vec<f64>,
    u_cap: f64,
    phi_nondecreasing: Check,
    delta_upper: Check,
    gamma_ratio: Check,
    gamma_total_range: Check,
    r_lower: Check,
    gamma_upper: Check,
    u_upper: Check,
    psi_progress: Check,
    phase1_time: Check,
    beta_after_t1: Check,
    phase2_envelope: Check,
    phase2_endpoint: Check,
    phase3_decay: Check,
    prev: Option<Previous>,
    t1: Option<f64>,
    ln_lambda2_t1: f64,
    lambda2_fit: SlopeFit,
    lambda3_fit: SlopeFit,
    last_t: f64,
    ln_beta_last: f64,
}

impl BoundMonitor {
    pub fn new(pp: PotentialParams) -> Self {
        let s = pp.s;
        let sf = s as f64;
        let proven = s >= PROVEN_S;
        let eps = GAMMA_ENVELOPE_EPS;
        let gamma_caps = (1..=8 * s).map(|j| (1.0 - eps) / sf * (-(j as f64) / (4.0 * sf)).exp()).collect();
        let e2 = std::f64::consts::E.powi(2);
        BoundMonitor {
            u_cap: (1.0 - eps) / (sf * e2) * (1.0 + 3.0 / sf),
            gamma_caps,
            phi_nondecreasing: Check::new("phi_nondecreasing", true),
            delta_upper: Check::new("delta_upper", true),
            gamma_ratio: Check::new("gamma_ratio", proven),
            gamma_total_range: Check::new("gamma_total_range", proven),
            r_lower: Check::new("r_lower", proven),
            gamma_upper: Check::new("gamma_upper", proven),
            u_upper: Check::new("u_upper", proven),
            psi_progress: Check::new("psi_progress", proven),
            phase1_time: Check::new("phase1_time", proven),
            beta_after_t1: Check::new("beta_after_t1", proven),
            phase2_envelope: Check::new("phase2_envelope", proven),
            phase2_endpoint: Check::new("phase2_endpoint", proven),
            phase3_decay: Check::new("phase3_decay", proven),
            prev: None,
            t1: None,
            ln_lambda2_t1: f64::NAN,
            lambda2_fit: SlopeFit::default(),
            lambda3_fit: SlopeFit::default(),
            last_t: f64::NEG_INFINITY,
            ln_beta_last: f64::NAN,
            pp,
        }
    }

    pub fn params(&self) -> &PotentialParams {
        &self.pp
    }

    pub fn t1(&self) -> Option<f64> {
        self.t1
    }

    pub fn t2(&self) -> Option<f64> {
        self.t1.map(|t| t + self.pp.phase2_length())
    }

    pub fn t3(&self) -> Option<f64> {
        self.t2().map(|t| t + self.pp.phase3_length())
    }

    /// Feed the next state. States at or before the last seen time are
    /// ignored, so consecutive integration legs can share an endpoint.
    pub fn observe(&mut self, st: &MeanFieldState) {
        let t = st.t;
        if t <= self.last_t {
            return;
        }
        self.last_t = t;
        let pp = &self.pp;
        let sf = pp.s as f64;

        let (phi, psi) = phi_psi(st, pp);
        let ln_l3 = ln_lambda3(st, pp);
        let gamma_total = st.gamma_total();
        let u = st.u();
        let delta = st.delta();

        self.delta_upper.lt(t, delta, 0.2 / sf);
        self.gamma_total_range.lt(t, 1.0 - 2.0 / sf, gamma_total);
        self.gamma_total_range.le(t, gamma_total, 1.0 - 1.0 / sf + 1e-15);
        let gammas = st.gammas();
        // smallest γ_{j-1}/γ_j, compared by cross-multiplication
        let (mut num, mut den) = (f64::INFINITY, 1.0);
        for pair in gammas.windows(2) {
            if pair[0] * den < num * pair[1] {
                num = pair[0];
                den = pair[1];
            }
        }
        if gammas.len() > 1 {
            self.gamma_ratio.lt(t, 0.5, num / den);
        }
        let cap_margin = gammas.iter().zip(&self.gamma_caps).fold(f64::INFINITY, |m, (g, c)| m.min(c - g));
        self.gamma_upper.lt(t, -cap_margin, 0.0);
        self.u_upper.lt(t, u, self.u_cap);
        if u <= (1.0 / (sf * std::f64::consts::E.powi(2))) * (1.0 + 3.0 / sf) {
            self.r_lower.le(t, (1.0 / (4.0 * sf)).exp(), st.r());
        }

        let ln_beta = st.stored_beta_informed().ln() + st.ln_wrong_scale();
        self.ln_beta_last = ln_beta;

        if let Some(prev) = &self.prev {
            let h = t - prev.t;
            self.phi_nondecreasing.le(t, prev.phi - PHI_TOL, phi);
            if prev.psi < pp.lambda1 {
                self.psi_progress.le(t, pp.epsilon / (9.0 * sf) * h - 1e-12, psi - prev.psi);
            }
            if let Some(t2) = self.t1.map(|t1| t1 + pp.phase2_length()) {
                if prev.t >= t2 {
                    let rel_change = (ln_l3 - prev.ln_lambda3).exp_m1() / h;
                    self.phase3_decay.le(t, rel_change, -pp.zeta3 * (1.0 - DECAY_SLACK));
                }
            }
        }

        if self.t1.is_none() && phi > pp.lambda_target {
            self.t1 = Some(t);
            self.ln_lambda2_t1 = ln_lambda2(st);
        }
        if let Some(t1) = self.t1 {
            let t2 = t1 + pp.phase2_length();
            self.beta_after_t1.lt(t, 2.0 * ln_beta.exp(), 1.0 - pp.lambda_target);
            if t <= t2 {
                let ln_l2 = ln_lambda2(st);
                let envelope = self.ln_lambda2_t1 - (t - t1) * pp.zeta2 + ENVELOPE_SLACK.ln_1p();
                self.phase2_envelope.le(t, ln_l2, envelope);
                self.lambda2_fit.push(t, ln_l2);
            }
            if t >= t2 {
                self.phase2_endpoint.le(t, ln_beta, (32.0 * sf).ln() - 8.0 * sf);
                self.lambda3_fit.push(t, ln_l3);
            }
        }

        self.prev = Some(Previous { t, phi, psi, ln_lambda3: ln_l3 });
    }

    pub fn summary(&self) -> PhaseSummary {
        PhaseSummary {
            rho: self.pp.rho,
            lambda_target: self.pp.lambda_target,
            t1: self.t1,
            t1_bound: self.pp.t1_bound(),
            t2: self.t2(),
            t3: self.t3(),
            final_time: self.last_t,
            lambda2_rate: self.lambda2_fit.slope().map(|x| -x),
            lambda3_rate: self.lambda3_fit.slope().map(|x| -x),
            zeta2: self.pp.zeta2,
            zeta3: self.pp.zeta3,
            ln_lambda2_at_t1: self.t1.map(|_| self.ln_lambda2_t1),
            ln_beta_at_end: self.ln_beta_last,
        }
    }

    /// One report per inequality, in a fixed order.
    pub fn reports(&self) -> Vec<BoundReport> {
        let mut phase1_time = self.phase1_time.clone();
        let bound = self.pp.t1_bound();
        match self.t1 {
            Some(t1) => phase1_time.le(t1, t1, bound),
            // not attained: a violation only once the horizon passed the bound
            None if self.last_t > bound => phase1_time.record(self.last_t, bound - self.last_t, false),
            None => {}
        }
        [
            &self.phi_nondecreasing,
            &self.delta_upper,
            &self.gamma_ratio,
            &self.gamma_total_range,
            &self.r_lower,
            &self.gamma_upper,
            &self.u_upper,
            &self.psi_progress,
            &phase1_time,
            &self.beta_after_t1,
            &self.phase2_envelope,
            &self.phase2_endpoint,
            &self.phase3_decay,
        ]
        .into_iter()
        .map(|c| c.report.clone())
        .collect()
    }
}

/// Everything measured along one phase run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseRun {
    pub params: PotentialParams,
    pub step: f64,
    pub steps: u64,
    pub summary: PhaseSummary,
    pub bound_reports: Vec<BoundReport>,
}

/// Integrate from `initial` until `Φ > λ` (giving up at the proven `T1`
/// bound), then on to `T3`, checking every inequality at every step.
///
/// `sample` receives every state, for callers that keep a thinned trace.
pub fn run_phases(
    initial: &MeanFieldState,
    pp: &PotentialParams,
    step: f64,
    mut sample: impl FnMut(&MeanFieldState),
) -> Result<PhaseRun, IntegrationError> {
    let mut bounds = BoundMonitor::new(pp.clone());
    let mut steps = 0u64;
    let mut feed = |st: &MeanFieldState, bounds: &mut BoundMonitor| {
        if st.t > bounds.last_t {
            steps += 1;
            sample(st);
        }
        bounds.observe(st);
    };
    let reached = integrate_until(initial, initial.t + pp.t1_bound(), step, |st| {
        feed(st, &mut bounds);
        bounds.t1().is_none()
    })?;
    if let Some(t3) = bounds.t3() {
        integrate_observed(&reached, t3, step, |st| feed(st, &mut bounds))?;
    }
    Ok(PhaseRun {
        params: pp.clone(),
        step,
        steps: steps.saturating_sub(1),
        summary: bounds.summary(),
        bound_reports: bounds.reports(),
    })
}

/// Integrate from `initial` to `t_end` checking the positivity and envelope
/// invariants at every step.
pub fn run_invariants(initial: &MeanFieldState, t_end: f64, step: f64) -> Result<Vec<BoundReport>, IntegrationError> {
    let mut m = InvariantMonitor::new(initial.s);
    integrate_observed(initial, t_end, step, |st| m.observe(st))?;
    Ok(m.reports())
}

/// Run every phase inequality over a stored mean-field trace.
pub fn check_bounds(trace: &TrajectoryTrace, pp: &PotentialParams) -> Result<Vec<BoundReport>, AnalysisError> {
    if trace.system != SystemTag::Meanfield {
        return Err(AnalysisError::WrongSystem(trace.system));
    }
    let mut monitor = BoundMonitor::new(pp.clone());
    let mut invariants = InvariantMonitor::new(trace.s);
    for snap in &trace.samples {
        let st = MeanFieldState::from_snapshot(snap, trace.s);
        monitor.observe(&st);
        invariants.observe(&st);
    }
    let mut reports = monitor.reports();
    reports.extend(invariants.reports());
    Ok(reports)
}

/// Relative per-step tolerance of the envelope-monotonicity checks.
const ENVELOPE_MONOTONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
struct EnvelopePrev {
    t: f64,
    ln_g: Vec<f64>,
}

/// Positivity and exponential-envelope invariants of the mean-field flow.
#[derive(Debug, Clone)]
pub struct InvariantMonitor {
    s: usize,
    positivity: Check,
    envelopes: Vec<Check>,
    alpha_lower: Check,
    mass_identity: Check,
    ln_alpha0: Option<f64>,
    interior: bool,
    prev: Option<EnvelopePrev>,
}

const ENVELOPE_NAMES: [&str; 7] = [
    "envelope_alpha",
    "envelope_delta",
    "envelope_beta",
    "envelope_u",
    "envelope_gamma",
    "envelope_w",
    "envelope_w_j",
];

impl InvariantMonitor {
    pub fn new(s: usize) -> Self {
        InvariantMonitor {
            s,
            positivity: Check::new("positivity", true),
            envelopes: ENVELOPE_NAMES.iter().map(|n| Check::new(n, true)).collect(),
            alpha_lower: Check::new("alpha_lower_envelope", true),
            mass_identity: Check::new("mass_identity", true),
            ln_alpha0: None,
            interior: false,
            prev: None,
        }
    }

    pub fn observe(&mut self, st: &MeanFieldState) {
        let t = st.t;
        if self.prev.as_ref().is_some_and(|p| t <= p.t) {
            return;
        }
        let sf = self.s as f64;
        let bins = 8 * self.s;
        let scale = st.wrong_scale();
        let ln_scale = st.ln_wrong_scale();
        let started = self.prev.is_some();
        if !started {
            // positivity is a property of interior starts only
            let interior = st.stored_alpha() > 0.0
                && st.stored_beta()[..bins].iter().zip(st.gammas()).all(|(&b, &g)| b > 0.0 && b * scale < g);
            self.interior = interior;
            self.positivity.report.asserted = interior;
            self.alpha_lower.report.asserted = interior;
        }

        // positivity: δ and u may vanish at the initial point only
        let mut min_pos = f64::INFINITY;
        let mut note = |v: f64, strict: bool| {
            if strict || started {
                min_pos = min_pos.min(v);
            }
        };
        note(st.stored_alpha(), true);
        note(st.stored_delta(), false);
        for (j, &b) in st.stored_beta().iter().enumerate() {
            note(b, j < bins);
        }
        let u = st.u();
        note(u, false);
        let w = 1.0 / sf - st.delta() - st.alpha();
        note(w, true);
        for (&g, &b) in st.gammas().iter().zip(st.stored_beta()) {
            note(g, true);
            note(g - b * scale, true);
        }
        if min_pos.is_finite() && self.interior {
            self.positivity.record(t, min_pos, min_pos > 0.0);
        }

        let mass = st.gamma_total() + u - (1.0 - 1.0 / sf);
        self.mass_identity.le(t, mass.abs(), 1e-12);

        let ln_alpha = st.stored_alpha().ln() + ln_scale;
        match self.ln_alpha0 {
            None => self.ln_alpha0 = Some(ln_alpha),
            Some(a0) if self.interior => self.alpha_lower.lt(t, a0 - t / 2.0 * (1.0 - 1.0 / sf), ln_alpha),
            Some(_) => {}
        }

        // ln g for each family; per-bin families keep one entry per bin
        let slow = t / 2.0 * (1.0 - 1.0 / sf);
        let mid = t * (1.0 - 1.0 / sf);
        let fast = t * (1.0 + 0.5 / sf);
        let mut ln_g = Vec::with_capacity(4 + 3 * bins);
        ln_g.push(ln_alpha + slow);
        ln_g.push(st.stored_delta().ln() + ln_scale + mid);
        ln_g.push(u.ln() + mid);
        ln_g.push(w.ln() + slow);
        for (&g, &b) in st.gammas().iter().zip(st.stored_beta()) {
            ln_g.push(b.ln() + ln_scale + fast);
            ln_g.push(g.ln() + fast);
            ln_g.push((g - b * scale).ln() + fast);
        }
        if let Some(prev) = &self.prev {
            // family index per slot: alpha, delta, u, w, then (beta, gamma, w_j) per bin
            for (k, (&now, &before)) in ln_g.iter().zip(&prev.ln_g).enumerate() {
                let family = match k {
                    0 => 0,
                    1 => 1,
                    2 => 3,
                    3 => 5,
                    _ => [2, 4, 6][(k - 4) % 3],
                };
                if before.is_finite() {
                    self.envelopes[family].le(t, before - ENVELOPE_MONOTONE_TOL, now);
                }
            }
        }
        self.prev = Some(EnvelopePrev { t, ln_g });
    }

    pub fn reports(&self) -> Vec<BoundReport> {
        let mut out = vec![self.positivity.report.clone()];
        out.extend(self.envelopes.iter().map(|c| c.report.clone()));
        out.push(self.alpha_lower.report.clone());
        out.push(self.mass_identity.report.clone());
        out
    }
}

/// Run the positivity and envelope invariants over a stored trace.
pub fn check_invariants(trace: &TrajectoryTrace) -> Vec<BoundReport> {
    let mut m = InvariantMonitor::new(trace.s);
    for snap in &trace.samples {
        m.observe(&MeanFieldState::from_snapshot(snap, trace.s));
    }
    m.reports()
}

/// Quantities whose exponential decay rate can be fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayQuantity {
    Lambda2,
    Lambda3,
    Alpha,
    Beta,
}

impl DecayQuantity {
    pub fn name(self) -> &'static str {
        match self {
            DecayQuantity::Lambda2 => "lambda2",
            DecayQuantity::Lambda3 => "lambda3",
            DecayQuantity::Alpha => "alpha",
            DecayQuantity::Beta => "beta",
        }
    }

    /// Natural logarithm of the quantity at `st`.
    pub fn ln_value(self, st: &MeanFieldState, pp: &PotentialParams) -> f64 {
        let ln_scale = st.ln_wrong_scale();
        match self {
            DecayQuantity::Lambda2 => ln_lambda2(st),
            DecayQuantity::Lambda3 => ln_lambda3(st, pp),
            DecayQuantity::Alpha => st.stored_alpha().ln() + ln_scale,
            DecayQuantity::Beta => st.stored_beta_informed().ln() + ln_scale,
        }
    }
}

/// Least-squares decay rate (negated slope of the log) over `[t_a, t_b]`.
pub fn fit_decay_rate(
    trace: &TrajectoryTrace,
    quantity: DecayQuantity,
    window: (f64, f64),
) -> Result<f64, AnalysisError> {
    let pp = PotentialParams::new(trace.s, trace.rho, DEFAULT_LAMBDA);
    let mut fit = SlopeFit::default();
    for snap in trace.window(window.0, window.1) {
        let st = MeanFieldState::from_snapshot(snap, trace.s);
        let y = quantity.ln_value(&st, &pp);
        if !y.is_finite() {
            return Err(AnalysisError::NonPositive { quantity: quantity.name(), t: snap.t });
        }
        fit.push(snap.t, y);
    }
    fit.slope().map(|x| -x).ok_or(AnalysisError::EmptyWindow(window.0, window.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::{advantages, integrate, integrate_sampled};
    use crate::trace::Layout;

    #[test]
    fn v_schedule() {
        let pp = PotentialParams::new(5, 0.1, DEFAULT_LAMBDA);
        assert!((pp.v[0] - 10.0 / 83.0).abs() < 1e-15);
        assert_eq!(pp.v[39], 2.0);
        for j in 1..pp.v.len() {
            assert!(pp.v[j] > pp.v[j - 1]);
            assert!((pp.v[0] / 5.0 - (pp.v[j] - pp.v[j - 1]) / 2.0).abs() < 1e-15);
        }
        assert_eq!(PotentialParams::new(32, 0.1, DEFAULT_LAMBDA).zeta3, 0.4375);
    }

    #[test]
    fn phi_and_psi_at_start() {
        let st = MeanFieldState::initial(5, 0.1);
        let pp = PotentialParams::for_state(&st, DEFAULT_LAMBDA);
        let view = advantages(&st).unwrap();
        assert!((phi(&view) - 0.1).abs() < 1e-14);
        assert!((psi(&view, &pp) - 0.1).abs() < 1e-14);
        assert!((psi_of(&st, &pp) - 0.1).abs() < 1e-14);
        let mut zero = pp.clone();
        zero.epsilon = 0.0;
        let later = crate::meanfield::integrate_observed(&st, 5.0, 0.01, |_| {}).unwrap();
        let v = advantages(&later).unwrap();
        assert_eq!(psi(&v, &zero), phi(&v));
    }

    #[test]
    fn phi_is_min() {
        let view = AdvantageView { xi: 0.5, eta: vec![0.9; 16], eta_bar: 0.9, w: 0.0, w_j: vec![0.0; 16] };
        assert_eq!(phi(&view), 0.5);
    }

    #[test]
    fn lambda2_by_hand() {
        // α = 0.1, δ = 0.016, β = 0.04 spread over two bins
        let mut st = MeanFieldState::initial(2, 1.0);
        let l = st.layout();
        st.coords[Layout::ALPHA] = 0.1;
        st.coords[Layout::DELTA] = 0.016;
        st.coords[l.beta(1)] = 0.03;
        st.coords[l.beta(2)] = 0.01;
        assert!((lambda2(&st) - 0.111).abs() < 1e-15);
        let clean = MeanFieldState::initial(2, 1.0);
        let pp = PotentialParams::new(2, 1.0, DEFAULT_LAMBDA);
        assert_eq!(lambda2(&clean), 0.0);
        assert_eq!(lambda3(&clean, &pp), 0.0);
    }

    #[test]
    fn t1_detection() {
        let trace = integrate(&MeanFieldState::initial(2, 0.99), 1.0, 0.1).unwrap();
        assert_eq!(detect_t1(&trace, 0.5).unwrap(), 0.0);
        let trace = integrate_sampled(&MeanFieldState::initial(5, 0.1), 200.0, 0.02, 5).unwrap();
        let a = detect_t1(&trace, 0.5).unwrap();
        let b = detect_t1(&trace, 0.9).unwrap();
        assert!(a > 0.0 && b >= a);
        let short = integrate(&MeanFieldState::initial(5, 0.1), 10.0, 0.02).unwrap();
        match detect_t1(&short, 0.9).unwrap_err() {
            AnalysisError::T1NotAttained { horizon, .. } => assert!((horizon - 10.0).abs() < 1e-9),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn s5_reports_unasserted_but_measured() {
        let init = MeanFieldState::initial(5, 0.1);
        let trace = integrate(&init, 40.0, 0.02).unwrap();
        let pp = PotentialParams::for_state(&init, DEFAULT_LAMBDA);
        let reports = check_bounds(&trace, &pp).unwrap();
        let by = |n: &str| reports.iter().find(|r| r.bound_name == n).unwrap().clone();
        assert!(by("phi_nondecreasing").holds && by("phi_nondecreasing").asserted);
        assert!(by("delta_upper").holds);
        assert!(by("gamma_ratio").holds && !by("gamma_ratio").asserted);
        assert!(by("gamma_total_range").holds);
        assert!(reports.iter().all(|r| !r.failed()), "{reports:#?}");
    }

    #[test]
    fn unanimous_trace_passes_everything() {
        let init = MeanFieldState::initial(32, 1.0);
        let trace = integrate_sampled(&init, 5.0, 1.0 / 320.0, 10).unwrap();
        let pp = PotentialParams::for_state(&init, DEFAULT_LAMBDA);
        let reports = check_bounds(&trace, &pp).unwrap();
        assert!(reports.iter().all(|r| !r.failed()), "{reports:#?}");
    }

    #[test]
    fn violations_keep_first_time() {
        let mut c = Check::new("x", true);
        c.lt(1.0, 0.0, 1.0);
        c.lt(2.0, 3.0, 1.0);
        c.lt(3.0, 5.0, 1.0);
        assert!(!c.report.holds);
        assert_eq!(c.report.first_violation_time, Some(2.0));
        assert_eq!(c.report.worst_margin, -4.0);
        assert_eq!(c.report.evaluated, 3);
    }

    #[test]
    fn fit_recovers_synthetic_rate() {
        let s = 2;
        let mut trace = TrajectoryTrace::new(SystemTag::Meanfield, s, None, 0.5, None, 0.1);
        let base = MeanFieldState::initial(s, 0.5);
        for k in 0..100 {
            let t = k as f64 * 0.1;
            let mut st = base.clone();
            st.t = t;
            st.coords[Layout::ALPHA] *= (-t / 2.0).exp();
            trace.samples.push(st.to_snapshot());
        }
        let rate = fit_decay_rate(&trace, DecayQuantity::Alpha, (0.0, 10.0)).unwrap();
        assert!((rate - 0.5).abs() < 1e-9, "{rate}");
        let mut bad = trace.clone();
        bad.samples[3].fractions[Layout::ALPHA] = 0.0;
        assert!(matches!(
            fit_decay_rate(&bad, DecayQuantity::Alpha, (0.0, 10.0)),
            Err(AnalysisError::NonPositive { .. })
        ));
    }

    #[test]
    fn invariants_hold_on_short_run() {
        for &(s, rho) in &[(5usize, 0.1), (5, 0.02)] {
            let init = MeanFieldState::initial(s, rho);
            let trace = integrate(&init, 30.0, crate::meanfield::default_step(s)).unwrap();
            let reports = check_invariants(&trace);
            assert!(reports.iter().all(|r| r.holds), "{reports:#?}");
        }
    }
}
