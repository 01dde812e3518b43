//! Independent reference computations for the acceptance suite.
//!
//! Written straight from the protocol rules and the mean-field equations,
//! with plain vectors and per-agent state. Nothing here calls the library's
//! kernel or integrator.

/// Mean-field derivative; state `[α, δ, β_1..β_{8s+1}, γ_1..γ_{8s}]`.
pub fn meanfield_rhs(s: usize, y: &[f64]) -> Vec<f64> {
    let m = 8 * s;
    let sf = s as f64;
    let alpha = y[0];
    let delta = y[1];
    let beta = |j: usize| y[1 + j];
    let gamma = |j: usize| y[2 + m + j];
    let big_gamma: f64 = (1..=m).map(gamma).sum();
    let small_beta: f64 = (1..=m).map(beta).sum();
    let u = 1.0 - 1.0 / sf - big_gamma;
    let r = 1.0 + 1.0 / (2.0 * sf) - delta / 2.0 - u;

    let mut d = vec![0.0; y.len()];
    d[0] = -alpha / 2.0 * (big_gamma - small_beta) + delta * small_beta;
    d[1] = alpha / 2.0 * (big_gamma - small_beta) + (1.0 / sf - alpha - delta) / 2.0 * small_beta
        - delta * big_gamma;
    d[2] = -beta(1) * r + alpha / 2.0 * big_gamma;
    for j in 2..=m {
        d[1 + j] = beta(j - 1) - beta(j) * r;
    }
    d[2 + m] = beta(m) - beta(m + 1) * big_gamma;
    d[3 + m] = -gamma(1) * r + (1.0 / (2.0 * sf) - delta / 2.0) * big_gamma;
    for j in 2..=m {
        d[2 + m + j] = gamma(j - 1) - gamma(j) * r;
    }
    d
}

/// Forward Euler with a fixed step; returns the state at each multiple of
/// `every` steps.
pub fn euler(s: usize, y0: &[f64], h: f64, steps: usize, every: usize) -> Vec<Vec<f64>> {
    let mut y = y0.to_vec();
    let mut out = vec![y.clone()];
    for k in 1..=steps {
        let d = meanfield_rhs(s, &y);
        for (a, b) in y.iter_mut().zip(&d) {
            *a += h * b;
        }
        if k % every == 0 {
            out.push(y.clone());
        }
    }
    out
}

/// Belief of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Belief {
    Majority,
    Minority,
    Undecided,
}

/// One agent: leaders have `counter == 0`, informed followers `1..=8s`,
/// uninformed followers `8s + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Agent {
    pub leader: bool,
    pub belief: Belief,
    pub counter: usize,
}

/// Apply the protocol rules for waker `i`, partner `j` and coin `heads`.
fn interact(agents: &mut [Agent], i: usize, j: usize, heads: bool, s: usize) {
    let last = 8 * s;
    let me = agents[i];
    let other = agents[j];
    let other_informed = !other.leader && other.counter <= last;
    if !me.leader {
        if me.counter <= last {
            // silent ageing
            agents[i].counter += 1;
        } else if other_informed {
            agents[i].belief = other.belief;
            agents[i].counter = other.counter;
        }
        return;
    }
    if !other_informed {
        return;
    }
    match me.belief {
        Belief::Undecided => agents[i].belief = other.belief,
        b if heads => {
            agents[j].belief = b;
            agents[j].counter = 1;
        }
        b => {
            if other.belief != b {
                agents[i].belief = Belief::Undecided;
            }
        }
    }
}

/// Tracked counts `(α̃, δ̃, β̃_1..β̃_{8s+1}, γ̃_1..γ̃_{8s})`.
pub fn tracked_counts(agents: &[Agent], s: usize) -> Vec<f64> {
    let last = 8 * s;
    let mut y = vec![0.0; 16 * s + 3];
    for a in agents {
        if a.leader {
            match a.belief {
                Belief::Minority => y[0] += 1.0,
                Belief::Undecided => y[1] += 1.0,
                Belief::Majority => {}
            }
        } else {
            if a.belief == Belief::Minority {
                y[1 + a.counter] += 1.0;
            }
            if a.counter <= last {
                y[2 + last + a.counter] += 1.0;
            }
        }
    }
    y
}

/// Exact one-step expected change of the tracked counts: average over every
/// waker, every partner other than the waker, and both coin faces.
pub fn expected_change(agents: &[Agent], s: usize) -> Vec<f64> {
    let n = agents.len();
    let before = tracked_counts(agents, s);
    let mut total = vec![0.0; before.len()];
    let mut outcomes = 0.0;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            for heads in [false, true] {
                let mut next = agents.to_vec();
                interact(&mut next, i, j, heads, s);
                for (t, (a, b)) in total.iter_mut().zip(tracked_counts(&next, s).iter().zip(&before)) {
                    *t += a - b;
                }
                outcomes += 1.0;
            }
        }
    }
    total.iter().map(|x| x / outcomes).collect()
}
