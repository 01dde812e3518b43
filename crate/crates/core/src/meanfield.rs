//! The deterministic large-population limit of the protocol.
//!
//! State coordinates, all fractions of `n`:
//! `alpha` wrong decisive leaders, `delta` undecided leaders, `beta_j` wrong
//! informed followers in bin `j` (`beta_{8s+1}` = wrong uninformed), `gamma_j`
//! informed followers in bin `j`. `u = 1 - 1/s - sum(gamma_j)` is derived.
//!
//! Wrong-side coordinates decay exponentially forever and leave the `f64`
//! range long before the late phases finish. They are therefore stored as
//! mantissas with a shared power-of-two exponent (`scale_exp2`): the true
//! value is `stored * 2^-scale_exp2`. The right-hand side is written for the
//! stored coordinates, so rescaling is exact and the integration is the same
//! as the unscaled one up to terms that are below `f64` resolution anyway.

use serde::Serialize;
use thiserror::Error;

use crate::model::AgentCounts;
use crate::trace::{exp2i, Layout, Snapshot, SystemTag, TrajectoryTrace};

/// Tolerance of the closed-domain check.
pub const DOMAIN_TOL: f64 = 1e-12;

/// Wrong-side mantissas are renormalized once they all drop below `2^-RESCALE_BITS`.
const RESCALE_BITS: i32 = 256;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("state leaves the domain: {inequality} violated (value {value:e})")]
pub struct DomainError {
    pub inequality: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("step must be positive and finite (got {0})")]
    BadStep(f64),
    #[error("integration left the domain at t = {t}: {source}")]
    Domain {
        t: f64,
        #[source]
        source: DomainError,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdvantageError {
    #[error("gamma_{0} is zero")]
    EmptyBin(usize),
    #[error("no decisive leaders (delta = 1/s)")]
    NoDecisiveLeaders,
}

/// A point of the mean-field system.
///
/// `coords` holds `alpha, delta, beta_1..beta_{8s+1}, gamma_1..gamma_{8s}`;
/// the first `8s + 3` are stored multiplied by `2^scale_exp2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState {
    pub s: usize,
    pub t: f64,
    pub coords: Vec<f64>,
    pub scale_exp2: i32,
}

impl MeanFieldState {
    /// The standard start: no undecided leaders or uninformed followers,
    /// followers evenly spread, wrong share `(1-rho)/2` in every class.
    pub fn initial(s: usize, rho: f64) -> Self {
        let layout = Layout::new(s);
        let sf = s as f64;
        let wrong = (1.0 - rho) / 2.0;
        let per_bin = (1.0 - 1.0 / sf) / layout.bins() as f64;
        let mut coords = vec![0.0; layout.len() - 1];
        coords[Layout::ALPHA] = wrong / sf;
        for j in 1..=layout.bins() {
            coords[layout.beta(j)] = wrong * per_bin;
            coords[layout.gamma(j)] = per_bin;
        }
        MeanFieldState { s, t: 0.0, coords, scale_exp2: 0 }
    }

    /// The point matching a random census exactly (`y(0) = Ỹ(0)/n`).
    pub fn from_counts(counts: &AgentCounts, t: f64) -> Self {
        let mut coords = counts.fractions();
        coords.pop();
        MeanFieldState { s: counts.s, t, coords, scale_exp2: 0 }
    }

    pub fn from_snapshot(snap: &Snapshot, s: usize) -> Self {
        let mut coords = snap.fractions.clone();
        coords.pop();
        MeanFieldState { s, t: snap.t, coords, scale_exp2: snap.scale_exp2 }
    }

    pub fn to_snapshot(&self) -> Snapshot {
        let mut fractions = self.coords.clone();
        fractions.push(self.u());
        Snapshot { t: self.t, fractions, comms: 0, scale_exp2: self.scale_exp2 }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.s)
    }

    pub fn bins(&self) -> usize {
        8 * self.s
    }

    /// `2^-scale_exp2`: multiply a stored wrong-side coordinate by this to get
    /// its true value.
    pub fn wrong_scale(&self) -> f64 {
        exp2i(-self.scale_exp2)
    }

    /// `ln 2^-scale_exp2`.
    pub fn ln_wrong_scale(&self) -> f64 {
        -f64::from(self.scale_exp2) * std::f64::consts::LN_2
    }

    pub fn alpha(&self) -> f64 {
        self.coords[Layout::ALPHA] * self.wrong_scale()
    }

    pub fn delta(&self) -> f64 {
        self.coords[Layout::DELTA] * self.wrong_scale()
    }

    /// `beta_j` for `j` in `1..=8s+1`.
    pub fn beta(&self, j: usize) -> f64 {
        self.coords[self.layout().beta(j)] * self.wrong_scale()
    }

    /// `gamma_j` for `j` in `1..=8s`.
    pub fn gamma(&self, j: usize) -> f64 {
        self.coords[self.layout().gamma(j)]
    }

    pub fn stored_alpha(&self) -> f64 {
        self.coords[Layout::ALPHA]
    }

    pub fn stored_delta(&self) -> f64 {
        self.coords[Layout::DELTA]
    }

    /// Stored `beta_1..=beta_{8s+1}`.
    pub fn stored_beta(&self) -> &[f64] {
        &self.coords[self.layout().beta_range()]
    }

    pub fn gammas(&self) -> &[f64] {
        &self.coords[self.layout().gamma_range()]
    }

    /// `Γ`, the informed-follower fraction.
    pub fn gamma_total(&self) -> f64 {
        lane_sum(self.gammas())
    }

    pub fn u(&self) -> f64 {
        1.0 - 1.0 / self.s as f64 - self.gamma_total()
    }

    /// Wrong informed followers `β = sum_{j<=8s} beta_j`, stored scale.
    pub fn stored_beta_informed(&self) -> f64 {
        lane_sum(&self.stored_beta()[..self.bins()])
    }

    pub fn beta_informed(&self) -> f64 {
        self.stored_beta_informed() * self.wrong_scale()
    }

    /// `R = 1 + 1/(2s) - delta/2 - u`.
    pub fn r(&self) -> f64 {
        1.0 + 0.5 / self.s as f64 - self.delta() / 2.0 - self.u()
    }

    /// Closed version of the domain `0 <= alpha, delta; alpha + delta <= 1/s;
    /// 0 <= beta_j <= gamma_j; sum gamma_j <= 1 - 1/s; beta_{8s+1} <= u`.
    pub fn check_domain(&self) -> Result<(), DomainError> {
        check_domain(self.s, &self.coords, self.wrong_scale())
    }

    /// Multiply wrong-side mantissas by a power of two when they all got tiny.
    fn renormalize(&mut self) {
        let wrong = &mut self.coords[..8 * self.s + 3];
        let max = wrong.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        if max > 0.0 && max < exp2i(-RESCALE_BITS) {
            let factor = exp2i(RESCALE_BITS);
            wrong.iter_mut().for_each(|x| *x *= factor);
            self.scale_exp2 += RESCALE_BITS;
        }
    }
}

fn check_domain(s: usize, y: &[f64], scale: f64) -> Result<(), DomainError> {
    let layout = Layout::new(s);
    let bins = layout.bins();
    let fail = |inequality: String, value: f64| Err(DomainError { inequality, value });
    if let Some(i) = y.iter().position(|&v| !(v >= -DOMAIN_TOL && v.is_finite())) {
        let v = y[i];
        if !v.is_finite() {
            return fail(format!("{} is finite", layout.column_names()[i]), v);
        }
        return fail(format!("{} >= 0", layout.column_names()[i]), v);
    }
    let leaders_off = (y[Layout::ALPHA] + y[Layout::DELTA]) * scale;
    if leaders_off > 1.0 / s as f64 + DOMAIN_TOL {
        return fail("alpha + delta <= 1/s".into(), leaders_off);
    }
    let beta = &y[layout.beta_range()];
    let gamma = &y[layout.gamma_range()];
    if let Some(j) = beta.iter().zip(gamma).position(|(&b, &g)| b * scale > g + DOMAIN_TOL) {
        return fail(format!("beta_{0} <= gamma_{0}", j + 1), beta[j] * scale - gamma[j]);
    }
    let u = 1.0 - 1.0 / s as f64 - lane_sum(gamma);
    if u < -DOMAIN_TOL {
        return fail("sum gamma_j <= 1 - 1/s".into(), u);
    }
    let stale = beta[bins] * scale;
    if stale > u + DOMAIN_TOL {
        return fail(format!("beta_{} <= u", bins + 1), stale - u);
    }
    Ok(())
}

/// Sum with four independent accumulators, so long reductions are not bound
/// by floating-point add latency.
pub(crate) fn lane_sum(xs: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = xs.chunks_exact(4);
    let rest: f64 = chunks.remainder().iter().sum();
    for c in chunks {
        for k in 0..4 {
            acc[k] += c[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + rest
}

/// Time derivative of the stored coordinates; `scale = 2^-scale_exp2`.
fn deriv(s: usize, y: &[f64], scale: f64, out: &mut [f64]) {
    let bins = 8 * s;
    let sf = s as f64;
    let alpha = y[0];
    let delta = y[1];
    let beta = &y[2..bins + 3];
    let gamma = &y[bins + 3..2 * bins + 3];
    let gamma_total = lane_sum(gamma);
    let beta_total = lane_sum(&beta[..bins]);
    let u = 1.0 - 1.0 / sf - gamma_total;
    let delta_true = delta * scale;
    let r = 1.0 + 0.5 / sf - delta_true / 2.0 - u;
    let correct_pull = gamma_total - scale * beta_total;

    out[0] = -alpha / 2.0 * correct_pull + scale * delta * beta_total;
    out[1] = alpha / 2.0 * correct_pull + (1.0 / sf - scale * (alpha + delta)) / 2.0 * beta_total
        - delta * gamma_total;

    let (dbeta, dgamma) = out[2..].split_at_mut(bins + 1);
    dbeta[0] = -beta[0] * r + alpha / 2.0 * gamma_total;
    for (d, pair) in dbeta[1..bins].iter_mut().zip(beta[..bins].windows(2)) {
        *d = pair[0] - pair[1] * r;
    }
    dbeta[bins] = beta[bins - 1] - beta[bins] * gamma_total;

    dgamma[0] = -gamma[0] * r + (0.5 / sf - delta_true / 2.0) * gamma_total;
    for (d, pair) in dgamma[1..].iter_mut().zip(gamma.windows(2)) {
        *d = pair[0] - pair[1] * r;
    }
}

/// `(α̇, δ̇, β̇_1..β̇_{8s+1}, γ̇_1..γ̇_{8s})` at `state`, for the stored
/// coordinates (identical to the true derivative when `scale_exp2 == 0`).
pub fn rhs(state: &MeanFieldState) -> Result<Vec<f64>, DomainError> {
    state.check_domain()?;
    let mut out = vec![0.0; state.coords.len()];
    deriv(state.s, &state.coords, state.wrong_scale(), &mut out);
    Ok(out)
}

/// `min(0.01, 1/(10 s))`.
pub fn default_step(s: usize) -> f64 {
    (0.01f64).min(0.1 / s as f64)
}

struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    fn new(len: usize) -> Self {
        Rk4Scratch { k1: vec![0.0; len], k2: vec![0.0; len], k3: vec![0.0; len], k4: vec![0.0; len], tmp: vec![0.0; len] }
    }

    fn step(&mut self, s: usize, y: &mut [f64], scale: f64, h: f64) {
        fn axpy(out: &mut [f64], y: &[f64], a: f64, k: &[f64]) {
            for ((o, &y), &k) in out.iter_mut().zip(y).zip(k) {
                *o = y + a * k;
            }
        }
        deriv(s, y, scale, &mut self.k1);
        axpy(&mut self.tmp, y, 0.5 * h, &self.k1);
        deriv(s, &self.tmp, scale, &mut self.k2);
        axpy(&mut self.tmp, y, 0.5 * h, &self.k2);
        deriv(s, &self.tmp, scale, &mut self.k3);
        axpy(&mut self.tmp, y, h, &self.k3);
        deriv(s, &self.tmp, scale, &mut self.k4);
        let w = h / 6.0;
        for ((((y, &a), &b), &c), &d) in y.iter_mut().zip(&self.k1).zip(&self.k2).zip(&self.k3).zip(&self.k4) {
            *y += w * (a + 2.0 * (b + c) + d);
        }
    }
}

/// Classical fixed-step RK4 from `initial` to `t_end`, calling `observe` on
/// the initial state and after every step.
///
/// Step `k` lands on `t0 + k*step`; the last step is shortened to end exactly
/// on `t_end`. Returns the final state.
pub fn integrate_observed<F>(
    initial: &MeanFieldState,
    t_end: f64,
    step: f64,
    mut observe: F,
) -> Result<MeanFieldState, IntegrationError>
where
    F: FnMut(&MeanFieldState),
{
    integrate_until(initial, t_end, step, |st| {
        observe(st);
        true
    })
}

/// Like [`integrate_observed`], but stops early after the first state for
/// which `observe` returns `false`.
pub fn integrate_until<F>(
    initial: &MeanFieldState,
    t_end: f64,
    step: f64,
    mut observe: F,
) -> Result<MeanFieldState, IntegrationError>
where
    F: FnMut(&MeanFieldState) -> bool,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(IntegrationError::BadStep(step));
    }
    let mut state = initial.clone();
    state.check_domain().map_err(|source| IntegrationError::Domain { t: state.t, source })?;
    if !observe(&state) {
        return Ok(state);
    }
    let t0 = initial.t;
    let steps = ((t_end - t0) / step - 1e-9).ceil().max(0.0) as u64;
    let mut scratch = Rk4Scratch::new(state.coords.len());
    for k in 1..=steps {
        let t_next = if k == steps { t_end } else { t0 + k as f64 * step };
        let h = t_next - state.t;
        let scale = state.wrong_scale();
        scratch.step(state.s, &mut state.coords, scale, h);
        state.t = t_next;
        state.check_domain().map_err(|source| IntegrationError::Domain { t: t_next, source })?;
        state.renormalize();
        if !observe(&state) {
            break;
        }
    }
    Ok(state)
}

/// [`integrate_observed`] keeping every `every`-th step (and the last one) as
/// a snapshot.
pub fn integrate_sampled(
    initial: &MeanFieldState,
    t_end: f64,
    step: f64,
    every: usize,
) -> Result<TrajectoryTrace, IntegrationError> {
    let every = every.max(1);
    let rho = advantages(initial).map(|v| phi(&v)).unwrap_or(0.0);
    let mut trace = TrajectoryTrace::new(SystemTag::Meanfield, initial.s, None, rho, None, step);
    let mut k = 0usize;
    let mut last: Option<MeanFieldState> = None;
    let final_state = integrate_observed(initial, t_end, step, |st| {
        if k.is_multiple_of(every) {
            trace.samples.push(st.to_snapshot());
            last = None;
        } else {
            last = Some(st.clone());
        }
        k += 1;
    })?;
    if let Some(st) = last {
        trace.samples.push(st.to_snapshot());
    }
    debug_assert_eq!(trace.last().map(|x| x.t), Some(final_state.t));
    Ok(trace)
}

/// RK4 trajectory with a snapshot at every step.
pub fn integrate(initial: &MeanFieldState, t_end: f64, step: f64) -> Result<TrajectoryTrace, IntegrationError> {
    integrate_sampled(initial, t_end, step, 1)
}

/// Normalized majority advantages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdvantageView {
    /// Among decisive leaders, `(1/s - delta - 2 alpha) / (1/s - delta)`.
    pub xi: f64,
    /// Per bin, `(gamma_j - 2 beta_j) / gamma_j`, `j = 1..=8s`.
    pub eta: Vec<f64>,
    /// Among all informed followers, `(Γ - 2β) / Γ`.
    pub eta_bar: f64,
    /// Correct decisive leaders `1/s - delta - alpha`.
    pub w: f64,
    /// Correct informed followers per bin `gamma_j - beta_j`.
    pub w_j: Vec<f64>,
}

pub fn advantages(state: &MeanFieldState) -> Result<AdvantageView, AdvantageError> {
    let sf = state.s as f64;
    let decisive = 1.0 / sf - state.delta();
    if decisive.is_nan() || decisive <= 0.0 {
        return Err(AdvantageError::NoDecisiveLeaders);
    }
    let alpha = state.alpha();
    let scale = state.wrong_scale();
    let mut eta = Vec::with_capacity(state.bins());
    let mut w_j = Vec::with_capacity(state.bins());
    for (j, (&g, &b)) in state.gammas().iter().zip(state.stored_beta()).enumerate() {
        if g.is_nan() || g <= 0.0 {
            return Err(AdvantageError::EmptyBin(j + 1));
        }
        let b = b * scale;
        eta.push((g - 2.0 * b) / g);
        w_j.push(g - b);
    }
    let gamma_total = state.gamma_total();
    let beta = state.beta_informed();
    Ok(AdvantageView {
        xi: (decisive - 2.0 * alpha) / decisive,
        eta,
        eta_bar: (gamma_total - 2.0 * beta) / gamma_total,
        w: decisive - alpha,
        w_j,
    })
}

/// `Φ = min(ξ, η_1, …, η_{8s})`.
pub fn phi(view: &AdvantageView) -> f64 {
    view.eta.iter().fold(view.xi, |m, &x| m.min(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric_s5() -> MeanFieldState {
        // alpha = 0.1, delta = 0, gamma_j = 0.02, beta_j = 0.01, u = 0
        let mut st = MeanFieldState::initial(5, 0.0);
        let l = st.layout();
        st.coords[Layout::ALPHA] = 0.1;
        for j in 1..=40 {
            st.coords[l.beta(j)] = 0.01;
            st.coords[l.gamma(j)] = 0.02;
        }
        st
    }

    #[test]
    fn hand_evaluated_symmetric_point() {
        let st = symmetric_s5();
        assert!((st.gamma_total() - 0.8).abs() < 1e-15);
        assert!((st.r() - 1.1).abs() < 1e-15);
        let d = rhs(&st).unwrap();
        let l = st.layout();
        // alpha' = -0.1/2 * (0.8 - 0.4) = -0.02
        assert!((d[Layout::ALPHA] + 0.02).abs() < 1e-15, "{}", d[0]);
        // beta_1' = -0.01 * 1.1 + 0.1/2 * 0.8 = 0.029
        assert!((d[l.beta(1)] - 0.029).abs() < 1e-15, "{}", d[l.beta(1)]);
    }

    #[test]
    fn unanimity_is_fixed_on_the_wrong_side() {
        let st = MeanFieldState::initial(5, 1.0);
        let d = rhs(&st).unwrap();
        let l = st.layout();
        assert_eq!(d[Layout::ALPHA], 0.0);
        assert_eq!(d[Layout::DELTA], 0.0);
        for j in 1..=41 {
            assert_eq!(d[l.beta(j)], 0.0);
        }
    }

    #[test]
    fn leader_mass_is_conserved() {
        // correct-leader rate: undecided adopting a correct bit minus correct
        // leaders pulling a wrong bit
        let st = MeanFieldState::initial(4, 0.3);
        let mut st = integrate_observed(&st, 1.0, 0.01, |_| {}).unwrap();
        st.t = 0.0;
        let d = rhs(&st).unwrap();
        let (a, de, g) = (st.alpha(), st.delta(), st.gamma_total());
        let b = st.beta_informed();
        let correct = 1.0 / 4.0 - a - de;
        let correct_rate = de * (g - b) - correct / 2.0 * b;
        assert!((d[0] + d[1] + correct_rate).abs() < 1e-15);
    }

    #[test]
    fn domain_violation_names_the_inequality() {
        let mut st = MeanFieldState::initial(2, 0.5);
        let l = st.layout();
        st.coords[l.beta(3)] = st.coords[l.gamma(3)] * 1.5;
        let err = rhs(&st).unwrap_err();
        assert_eq!(err.inequality, "beta_3 <= gamma_3");
        st = MeanFieldState::initial(2, 0.5);
        st.coords[Layout::ALPHA] = -0.1;
        assert_eq!(rhs(&st).unwrap_err().inequality, "alpha >= 0");
    }

    #[test]
    fn integration_exit_reports_time() {
        let err = integrate(&MeanFieldState::initial(2, 0.5), 1.0, -0.1).unwrap_err();
        assert_eq!(err, IntegrationError::BadStep(-0.1));
        let mut bad = MeanFieldState::initial(2, 0.5);
        bad.coords[Layout::DELTA] = 1.0;
        match integrate(&bad, 1.0, 0.1).unwrap_err() {
            IntegrationError::Domain { t, .. } => assert_eq!(t, 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let init = MeanFieldState::initial(5, 0.1);
        let t_end = 10.0;
        let coarse = integrate_observed(&init, t_end, 0.2, |_| {}).unwrap();
        let mid = integrate_observed(&init, t_end, 0.1, |_| {}).unwrap();
        let fine = integrate_observed(&init, t_end, 0.05, |_| {}).unwrap();
        let diff = |a: &MeanFieldState, b: &MeanFieldState| {
            a.coords.iter().zip(&b.coords).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        let e1 = diff(&coarse, &mid);
        let e2 = diff(&mid, &fine);
        let ratio = e1 / e2;
        assert!(ratio > 12.0 && ratio < 20.0, "error ratio {ratio} ({e1:e} / {e2:e})");
    }

    #[test]
    fn advantages_at_start_equal_rho() {
        let view = advantages(&MeanFieldState::initial(5, 0.1)).unwrap();
        assert!((view.xi - 0.1).abs() < 1e-14);
        assert!(view.eta.iter().all(|e| (e - 0.1).abs() < 1e-14));
        assert!((phi(&view) - 0.1).abs() < 1e-14);
        let full = advantages(&MeanFieldState::initial(5, 1.0)).unwrap();
        assert_eq!(full.xi, 1.0);
        assert!(full.eta.iter().all(|&e| e == 1.0));
    }

    #[test]
    fn advantage_guards() {
        let mut st = MeanFieldState::initial(2, 0.5);
        let l = st.layout();
        st.coords[l.gamma(4)] = 0.0;
        st.coords[l.beta(4)] = 0.0;
        assert_eq!(advantages(&st).unwrap_err(), AdvantageError::EmptyBin(4));
    }

    #[test]
    fn eta_bar_is_gamma_weighted_mean() {
        let st = integrate_observed(&MeanFieldState::initial(5, 0.1), 7.3, 0.01, |_| {}).unwrap();
        let v = advantages(&st).unwrap();
        let weighted: f64 = st.gammas().iter().zip(&v.eta).map(|(g, e)| g * e).sum::<f64>() / st.gamma_total();
        assert!((weighted - v.eta_bar).abs() < 1e-12);
        // change of variables
        let sf = 5.0;
        assert!((2.0 * st.alpha() - (1.0 - v.xi) * (1.0 / sf - st.delta())).abs() < 1e-15);
    }

    #[test]
    fn xi_derivative_matches_closed_form() {
        // finite difference of xi against the derivative identity
        let h = 1e-5;
        let st = integrate_observed(&MeanFieldState::initial(5, 0.1), 3.0, 0.01, |_| {}).unwrap();
        let next = integrate_observed(&st, st.t + h, h, |_| {}).unwrap();
        let v0 = advantages(&st).unwrap();
        let v1 = advantages(&next).unwrap();
        let fd = (v1.xi - v0.xi) / h;
        let d = st.delta();
        let g = st.gamma_total();
        let closed = d * g / (0.2 - d) * (v0.eta_bar - v0.xi) + g / 4.0 * (1.0 - v0.xi * v0.xi) * v0.eta_bar;
        assert!((fd - closed).abs() < 1e-4, "fd {fd} closed {closed}");
        // eta_1 and eta_2 identities
        let fd1 = (v1.eta[0] - v0.eta[0]) / h;
        let closed1 = g / (2.0 * st.gamma(1)) * (0.2 - d) * (v0.xi - v0.eta[0]);
        assert!((fd1 - closed1).abs() < 1e-4, "{fd1} {closed1}");
        let fd2 = (v1.eta[1] - v0.eta[1]) / h;
        let closed2 = st.gamma(1) / st.gamma(2) * (v0.eta[0] - v0.eta[1]);
        assert!((fd2 - closed2).abs() < 1e-4, "{fd2} {closed2}");
    }

    #[test]
    fn rescaling_is_exact() {
        let mut st = MeanFieldState::initial(2, 0.4);
        st = integrate_observed(&st, 2.0, 0.01, |_| {}).unwrap();
        let mut scaled = st.clone();
        let k = 300;
        for x in &mut scaled.coords[..19] {
            *x *= exp2i(k);
        }
        scaled.scale_exp2 = k;
        let a = integrate_observed(&st, 4.0, 0.01, |_| {}).unwrap();
        let b = integrate_observed(&scaled, 4.0, 0.01, |_| {}).unwrap();
        for i in 0..a.coords.len() {
            let va = a.coords[i];
            let vb = if i < 19 { b.coords[i] * exp2i(-b.scale_exp2) } else { b.coords[i] };
            assert!((va - vb).abs() <= 1e-12 * va.abs().max(1e-300), "i = {i}: {va} vs {vb}");
        }
    }

    #[test]
    fn long_runs_renormalize_instead_of_underflowing() {
        let st = integrate_observed(&MeanFieldState::initial(2, 0.5), 4000.0, 0.05, |_| {}).unwrap();
        assert!(st.scale_exp2 > 0);
        assert!(st.stored_alpha() > 0.0);
        assert!(st.stored_beta().iter().all(|&b| b > 0.0));
        assert_eq!(st.alpha(), 0.0);
    }
}
