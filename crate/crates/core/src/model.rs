//! Protocol state space and the single-wake transition kernel.
//!
//! The dynamics depend only on the census of agents by (role, belief, counter
//! bin), so the state is a vector of counts rather than an array of agents.
//! A wake samples the waker's class from the counts and, when the waker
//! communicates, the partner's class from the counts minus the waker.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{Layout, Snapshot};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("s must be at least 2 (got {0})")]
    SmallS(usize),
    #[error("n must be at least 2s = {min} (got {n})")]
    SmallN { n: u64, min: u64 },
    #[error("s = {s} must divide n = {n}")]
    NotDivisible { n: u64, s: usize },
    #[error("rho must lie in (0, 1] (got {0})")]
    Rho(f64),
    #[error("horizon_time must be positive and finite (got {0})")]
    Horizon(f64),
}

/// Run parameters shared by every engine. Missing fields deserialize to the
/// [`Default`] values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    /// Population size.
    pub n: u64,
    /// Memory parameter: `n/s` leaders, `8s` counter bins.
    pub s: usize,
    /// Initial relative advantage of the majority bit.
    pub rho: f64,
    pub seed: u64,
    /// Continuous-time horizon; the random system runs `n * horizon_time` wakes.
    pub horizon_time: f64,
}

impl Default for ProtocolParams {
    /// `n = 3000`, `s = 5`, `ρ = 0.1`, seed 1, horizon 200.
    fn default() -> Self {
        ProtocolParams { n: 3000, s: 5, rho: 0.1, seed: 1, horizon_time: 200.0 }
    }
}

impl ProtocolParams {
    pub fn new(n: u64, s: usize, rho: f64, seed: u64, horizon_time: f64) -> Result<Self, ParamError> {
        let p = ProtocolParams { n, s, rho, seed, horizon_time };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.s < 2 {
            return Err(ParamError::SmallS(self.s));
        }
        if self.n < 2 * self.s as u64 {
            return Err(ParamError::SmallN { n: self.n, min: 2 * self.s as u64 });
        }
        if !self.n.is_multiple_of(self.s as u64) {
            return Err(ParamError::NotDivisible { n: self.n, s: self.s });
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(ParamError::Rho(self.rho));
        }
        if !(self.horizon_time > 0.0 && self.horizon_time.is_finite()) {
            return Err(ParamError::Horizon(self.horizon_time));
        }
        Ok(())
    }

    pub fn leaders(&self) -> u64 {
        self.n / self.s as u64
    }

    pub fn followers(&self) -> u64 {
        self.n - self.leaders()
    }

    pub fn bins(&self) -> usize {
        8 * self.s
    }

    /// Number of wakes covering the horizon.
    pub fn steps(&self) -> u64 {
        (self.n as f64 * self.horizon_time).round() as u64
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_horizon(mut self, horizon_time: f64) -> Self {
        self.horizon_time = horizon_time;
        self
    }
}

/// Wrong share of `count` agents: nearest integer to `(1-rho)/2 * count`,
/// ties toward the correct side.
pub fn wrong_share(count: u64, rho: f64) -> u64 {
    let x = (1.0 - rho) / 2.0 * count as f64;
    ((x - 0.5).ceil().max(0.0) as u64).min(count)
}

/// Census of the population.
///
/// `followers_wrong[j-1]` / `followers_correct[j-1]` count informed followers
/// in counter bin `j`, for `j` in `1..=8s`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentCounts {
    pub s: usize,
    pub n: u64,
    pub leaders_correct: u64,
    pub leaders_wrong: u64,
    pub leaders_undecided: u64,
    pub followers_wrong: Vec<u64>,
    pub followers_correct: Vec<u64>,
    pub uninformed_wrong: u64,
    pub uninformed_correct: u64,
}

/// The class of a single agent; everything the kernel needs to know about it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentClass {
    LeaderCorrect,
    LeaderWrong,
    LeaderUndecided,
    /// Informed follower in counter bin `bin` (1-based).
    Follower { bin: usize, wrong: bool },
    Uninformed { wrong: bool },
}

impl AgentClass {
    pub fn is_informed_follower(self) -> bool {
        matches!(self, AgentClass::Follower { .. })
    }

    pub fn wake_class(self) -> WakeClass {
        match self {
            AgentClass::LeaderCorrect | AgentClass::LeaderWrong => WakeClass::LeaderDecisive,
            AgentClass::LeaderUndecided => WakeClass::LeaderUndecided,
            AgentClass::Follower { .. } => WakeClass::FollowerInformed,
            AgentClass::Uninformed { .. } => WakeClass::Uninformed,
        }
    }

    /// Whether a waking agent of this class opens a channel.
    pub fn communicates(self) -> bool {
        !self.is_informed_follower()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WakeClass {
    LeaderDecisive,
    LeaderUndecided,
    FollowerInformed,
    Uninformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub communicated: bool,
    /// Some agent's belief changed (including to or from undecided).
    pub consensus_relevant_change: bool,
    pub wake_class: WakeClass,
}

/// Leader coin: heads pushes, tails pulls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coin {
    Heads,
    Tails,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CountsError {
    #[error("leader total {found} differs from n/s = {expected}")]
    LeaderTotal { expected: u64, found: u64 },
    #[error("population total {found} differs from n = {expected}")]
    Total { expected: u64, found: u64 },
    #[error("expected {expected} counter bins, found {found}")]
    Bins { expected: usize, found: usize },
}

impl AgentCounts {
    /// The deterministic initial census for `params`.
    ///
    /// Followers are spread as evenly as possible over bins `1..=8s` (any
    /// remainder goes to the lowest bins); within every class the wrong share
    /// is `(1-rho)/2`, rounded to nearest with ties to the correct side.
    pub fn init_population(params: &ProtocolParams) -> Result<Self, ParamError> {
        params.validate()?;
        let leaders = params.leaders();
        let followers = params.followers();
        let bins = params.bins();
        let leaders_wrong = wrong_share(leaders, params.rho);
        let base = followers / bins as u64;
        let extra = (followers % bins as u64) as usize;
        let mut followers_wrong = Vec::with_capacity(bins);
        let mut followers_correct = Vec::with_capacity(bins);
        for j in 0..bins {
            let in_bin = base + u64::from(j < extra);
            let wrong = wrong_share(in_bin, params.rho);
            followers_wrong.push(wrong);
            followers_correct.push(in_bin - wrong);
        }
        Ok(AgentCounts {
            s: params.s,
            n: params.n,
            leaders_correct: leaders - leaders_wrong,
            leaders_wrong,
            leaders_undecided: 0,
            followers_wrong,
            followers_correct,
            uninformed_wrong: 0,
            uninformed_correct: 0,
        })
    }

    pub fn bins(&self) -> usize {
        8 * self.s
    }

    pub fn leaders(&self) -> u64 {
        self.leaders_correct + self.leaders_wrong + self.leaders_undecided
    }

    /// Informed followers, `Γ̃`.
    pub fn informed(&self) -> u64 {
        self.followers_wrong.iter().sum::<u64>() + self.followers_correct.iter().sum::<u64>()
    }

    /// Informed followers holding the wrong bit, `β̃`.
    pub fn informed_wrong(&self) -> u64 {
        self.followers_wrong.iter().sum()
    }

    pub fn uninformed(&self) -> u64 {
        self.uninformed_wrong + self.uninformed_correct
    }

    /// Informed followers in bin `j` (1-based), `γ̃_j`.
    pub fn gamma(&self, j: usize) -> u64 {
        self.followers_wrong[j - 1] + self.followers_correct[j - 1]
    }

    pub fn total(&self) -> u64 {
        self.leaders() + self.informed() + self.uninformed()
    }

    pub fn check_invariants(&self) -> Result<(), CountsError> {
        let bins = self.bins();
        for v in [&self.followers_wrong, &self.followers_correct] {
            if v.len() != bins {
                return Err(CountsError::Bins { expected: bins, found: v.len() });
            }
        }
        let expected = self.n / self.s as u64;
        if self.leaders() != expected {
            return Err(CountsError::LeaderTotal { expected, found: self.leaders() });
        }
        if self.total() != self.n {
            return Err(CountsError::Total { expected: self.n, found: self.total() });
        }
        Ok(())
    }

    /// Number of agents holding the wrong bit or undecided. Zero iff
    /// [`consensus_reached`](Self::consensus_reached).
    pub fn wrong_or_undecided(&self) -> u64 {
        self.leaders_wrong + self.leaders_undecided + self.informed_wrong() + self.uninformed_wrong
    }

    /// Number of agents holding the correct bit or undecided.
    pub fn correct_or_undecided(&self) -> u64 {
        self.leaders_correct
            + self.leaders_undecided
            + self.followers_correct.iter().sum::<u64>()
            + self.uninformed_correct
    }

    /// Every agent, uninformed ones included, holds the majority bit.
    pub fn consensus_reached(&self) -> bool {
        self.wrong_or_undecided() == 0
    }

    /// Every agent holds the minority bit.
    pub fn wrong_consensus_reached(&self) -> bool {
        self.correct_or_undecided() == 0
    }

    pub fn count_of(&self, class: AgentClass) -> u64 {
        match class {
            AgentClass::LeaderCorrect => self.leaders_correct,
            AgentClass::LeaderWrong => self.leaders_wrong,
            AgentClass::LeaderUndecided => self.leaders_undecided,
            AgentClass::Follower { bin, wrong: true } => self.followers_wrong[bin - 1],
            AgentClass::Follower { bin, wrong: false } => self.followers_correct[bin - 1],
            AgentClass::Uninformed { wrong: true } => self.uninformed_wrong,
            AgentClass::Uninformed { wrong: false } => self.uninformed_correct,
        }
    }

    fn slot(&mut self, class: AgentClass) -> &mut u64 {
        match class {
            AgentClass::LeaderCorrect => &mut self.leaders_correct,
            AgentClass::LeaderWrong => &mut self.leaders_wrong,
            AgentClass::LeaderUndecided => &mut self.leaders_undecided,
            AgentClass::Follower { bin, wrong: true } => &mut self.followers_wrong[bin - 1],
            AgentClass::Follower { bin, wrong: false } => &mut self.followers_correct[bin - 1],
            AgentClass::Uninformed { wrong: true } => &mut self.uninformed_wrong,
            AgentClass::Uninformed { wrong: false } => &mut self.uninformed_correct,
        }
    }

    fn relabel(&mut self, from: AgentClass, to: AgentClass) {
        if from != to {
            *self.slot(from) -= 1;
            *self.slot(to) += 1;
        }
    }

    /// All classes in sampling order.
    pub fn classes(&self) -> impl Iterator<Item = AgentClass> {
        let bins = self.bins();
        [AgentClass::LeaderCorrect, AgentClass::LeaderWrong, AgentClass::LeaderUndecided]
            .into_iter()
            .chain((1..=bins).map(|bin| AgentClass::Follower { bin, wrong: true }))
            .chain((1..=bins).map(|bin| AgentClass::Follower { bin, wrong: false }))
            .chain([AgentClass::Uninformed { wrong: true }, AgentClass::Uninformed { wrong: false }])
    }

    /// Class of the agent at position `rank` when agents are listed class by
    /// class in [`classes`](Self::classes) order, skipping one member of
    /// `exclude` (the waker) if given.
    pub fn class_at(&self, mut rank: u64, exclude: Option<AgentClass>) -> AgentClass {
        for class in self.classes() {
            let mut c = self.count_of(class);
            if Some(class) == exclude {
                c -= 1;
            }
            if rank < c {
                return class;
            }
            rank -= c;
        }
        panic!("rank beyond population size");
    }

    /// Apply one wake with every random choice fixed.
    ///
    /// `partner` is ignored for informed followers (they never communicate)
    /// and `coin` is only consulted when a decisive leader meets an informed
    /// follower. The waker must be a class with a positive count.
    pub fn transition(&mut self, waker: AgentClass, partner: Option<AgentClass>, coin: Coin) -> StepOutcome {
        let bins = self.bins();
        let wake_class = waker.wake_class();
        let communicated = waker.communicates();
        let mut changed = false;
        match waker {
            AgentClass::Follower { bin, wrong } => {
                let to = if bin < bins {
                    AgentClass::Follower { bin: bin + 1, wrong }
                } else {
                    AgentClass::Uninformed { wrong }
                };
                self.relabel(waker, to);
            }
            AgentClass::Uninformed { wrong } => {
                if let Some(AgentClass::Follower { bin, wrong: pw }) = partner {
                    self.relabel(waker, AgentClass::Follower { bin, wrong: pw });
                    changed = pw != wrong;
                }
            }
            AgentClass::LeaderCorrect | AgentClass::LeaderWrong => {
                let leader_wrong = waker == AgentClass::LeaderWrong;
                if let Some(p @ AgentClass::Follower { wrong: pw, .. }) = partner {
                    match coin {
                        Coin::Heads => {
                            self.relabel(p, AgentClass::Follower { bin: 1, wrong: leader_wrong });
                            changed = pw != leader_wrong;
                        }
                        Coin::Tails => {
                            if pw != leader_wrong {
                                self.relabel(waker, AgentClass::LeaderUndecided);
                                changed = true;
                            }
                        }
                    }
                }
            }
            AgentClass::LeaderUndecided => {
                if let Some(AgentClass::Follower { wrong: pw, .. }) = partner {
                    let to = if pw { AgentClass::LeaderWrong } else { AgentClass::LeaderCorrect };
                    self.relabel(waker, to);
                    changed = true;
                }
            }
        }
        StepOutcome { communicated, consensus_relevant_change: changed, wake_class }
    }

    /// One uniformly random wake, in place.
    pub fn wake<R: Rng + ?Sized>(&mut self, rng: &mut R) -> StepOutcome {
        let waker = self.class_at(rng.random_range(0..self.n), None);
        let (partner, coin) = if waker.communicates() {
            let partner = self.class_at(rng.random_range(0..self.n - 1), Some(waker));
            let needs_coin = matches!(waker, AgentClass::LeaderCorrect | AgentClass::LeaderWrong)
                && partner.is_informed_follower();
            let coin = if needs_coin && rng.random::<bool>() { Coin::Heads } else { Coin::Tails };
            (Some(partner), coin)
        } else {
            (None, Coin::Tails)
        };
        self.transition(waker, partner, coin)
    }

    /// Value-semantics form of [`wake`](Self::wake).
    pub fn apply_wake<R: Rng + ?Sized>(&self, rng: &mut R) -> (AgentCounts, StepOutcome) {
        let mut next = self.clone();
        let outcome = next.wake(rng);
        (next, outcome)
    }

    /// Fractions in the shared snapshot layout.
    pub fn fractions(&self) -> Vec<f64> {
        let layout = Layout::new(self.s);
        let n = self.n as f64;
        let mut f = vec![0.0; layout.len()];
        f[Layout::ALPHA] = self.leaders_wrong as f64 / n;
        f[Layout::DELTA] = self.leaders_undecided as f64 / n;
        for j in 1..=self.bins() {
            f[layout.beta(j)] = self.followers_wrong[j - 1] as f64 / n;
            f[layout.gamma(j)] = self.gamma(j) as f64 / n;
        }
        f[layout.beta(self.bins() + 1)] = self.uninformed_wrong as f64 / n;
        f[layout.u()] = self.uninformed() as f64 / n;
        f
    }

    pub fn snapshot(&self, t: f64, comms: u64) -> Snapshot {
        Snapshot { t, fractions: self.fractions(), comms, scale_exp2: 0 }
    }

    /// The tracked count vector `(α̃, δ̃, β̃_1..β̃_{8s+1}, γ̃_1..γ̃_{8s})`
    /// in snapshot order (without `u`).
    pub fn tracked(&self) -> Vec<f64> {
        let mut f = self.fractions();
        f.pop();
        f.iter_mut().for_each(|x| *x *= self.n as f64);
        f
    }
}

/// Shorthand for [`AgentCounts::init_population`].
pub fn init_population(params: &ProtocolParams) -> Result<AgentCounts, ParamError> {
    AgentCounts::init_population(params)
}

/// Shorthand for [`AgentCounts::apply_wake`].
pub fn apply_wake<R: Rng + ?Sized>(state: &AgentCounts, rng: &mut R) -> (AgentCounts, StepOutcome) {
    state.apply_wake(rng)
}

pub fn consensus_reached(state: &AgentCounts) -> bool {
    state.consensus_reached()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(n: u64, s: usize, rho: f64) -> ProtocolParams {
        ProtocolParams::new(n, s, rho, 1, 10.0).unwrap()
    }

    #[test]
    fn init_matches_figure_one_setup() {
        let c = init_population(&params(3000, 5, 0.1)).unwrap();
        assert_eq!(c.leaders(), 600);
        assert_eq!(c.leaders_wrong, 270);
        assert_eq!(c.leaders_correct, 330);
        assert_eq!(c.leaders_undecided, 0);
        assert_eq!(c.followers_wrong, vec![27; 40]);
        assert_eq!(c.followers_correct, vec![33; 40]);
        assert_eq!(c.uninformed(), 0);
        c.check_invariants().unwrap();
    }

    #[test]
    fn init_unanimous() {
        let c = init_population(&params(16, 2, 1.0)).unwrap();
        assert_eq!(c.leaders_correct, 8);
        assert_eq!(c.wrong_or_undecided(), 0);
        assert_eq!(c.informed(), 8);
        c.check_invariants().unwrap();
        assert!(c.consensus_reached());
    }

    #[test]
    fn init_rounds_toward_correct_side() {
        let c = init_population(&params(3000, 5, 0.02)).unwrap();
        assert_eq!(c.leaders_wrong, 294);
        assert_eq!(c.followers_wrong, vec![29; 40]);
        assert_eq!(c.followers_correct, vec![31; 40]);
        assert_eq!(wrong_share(3, 0.0), 1);
        assert_eq!(wrong_share(1, 0.0), 0);
    }

    #[test]
    fn params_are_validated() {
        assert_eq!(ProtocolParams::new(100, 1, 0.1, 0, 1.0), Err(ParamError::SmallS(1)));
        assert!(matches!(ProtocolParams::new(3, 2, 0.1, 0, 1.0), Err(ParamError::SmallN { .. })));
        assert!(matches!(ProtocolParams::new(101, 2, 0.1, 0, 1.0), Err(ParamError::NotDivisible { .. })));
        assert_eq!(ProtocolParams::new(100, 2, 0.0, 0, 1.0), Err(ParamError::Rho(0.0)));
        assert_eq!(ProtocolParams::new(100, 2, 1.5, 0, 1.0), Err(ParamError::Rho(1.5)));
        assert!(ProtocolParams::new(100, 2, 1.0, 0, 1.0).is_ok());
        assert!(matches!(ProtocolParams::new(100, 2, 0.5, 0, 0.0), Err(ParamError::Horizon(_))));
    }

    #[test]
    fn wrong_leader_pull_from_correct_follower_goes_undecided() {
        let mut c = init_population(&params(3000, 5, 0.1)).unwrap();
        let out = c.transition(
            AgentClass::LeaderWrong,
            Some(AgentClass::Follower { bin: 3, wrong: false }),
            Coin::Tails,
        );
        assert_eq!(c.leaders_wrong, 269);
        assert_eq!(c.leaders_undecided, 1);
        assert!(out.communicated);
        assert!(out.consensus_relevant_change);
        assert_eq!(out.wake_class, WakeClass::LeaderDecisive);
    }

    #[test]
    fn push_resets_counter_even_when_bits_match() {
        let mut c = init_population(&params(3000, 5, 0.1)).unwrap();
        let out = c.transition(
            AgentClass::LeaderCorrect,
            Some(AgentClass::Follower { bin: 7, wrong: false }),
            Coin::Heads,
        );
        assert_eq!(c.followers_correct[6], 32);
        assert_eq!(c.followers_correct[0], 34);
        assert!(!out.consensus_relevant_change);
        c.check_invariants().unwrap();
    }

    #[test]
    fn uninformed_adopts_bit_and_counter() {
        let mut c = init_population(&params(3000, 5, 0.1)).unwrap();
        c.followers_wrong[39] -= 1;
        c.uninformed_wrong += 1;
        let out = c.transition(
            AgentClass::Uninformed { wrong: true },
            Some(AgentClass::Follower { bin: 12, wrong: false }),
            Coin::Tails,
        );
        assert_eq!(c.uninformed_wrong, 0);
        assert_eq!(c.followers_correct[11], 34);
        assert!(out.communicated && out.consensus_relevant_change);
        // meeting a leader changes nothing but still costs a communication
        let before = c.clone();
        let out = c.transition(AgentClass::Uninformed { wrong: false }, Some(AgentClass::LeaderWrong), Coin::Tails);
        assert_eq!(c, before);
        assert!(out.communicated);
    }

    #[test]
    fn follower_ages_out_of_last_bin() {
        let mut c = init_population(&params(3000, 5, 0.1)).unwrap();
        let out = c.transition(AgentClass::Follower { bin: 40, wrong: true }, None, Coin::Tails);
        assert_eq!(c.uninformed_wrong, 1);
        assert_eq!(c.followers_wrong[39], 26);
        assert!(!out.communicated);
        assert_eq!(out.wake_class, WakeClass::FollowerInformed);
    }

    #[test]
    fn consensus_criterion() {
        let mut c = init_population(&params(16, 2, 1.0)).unwrap();
        assert!(consensus_reached(&c));
        c.followers_correct[0] -= 1;
        c.uninformed_wrong = 1;
        assert!(!consensus_reached(&c));
        let mut d = init_population(&params(16, 2, 1.0)).unwrap();
        d.leaders_correct -= 1;
        d.leaders_undecided = 1;
        assert!(!consensus_reached(&d));
    }

    #[test]
    fn class_at_skips_the_waker() {
        let c = init_population(&params(16, 2, 1.0)).unwrap();
        // 8 correct leaders; excluding one leaves 7 before the followers
        assert_eq!(c.class_at(6, Some(AgentClass::LeaderCorrect)), AgentClass::LeaderCorrect);
        assert_eq!(c.class_at(7, Some(AgentClass::LeaderCorrect)), AgentClass::Follower { bin: 1, wrong: false });
    }

    #[test]
    fn waker_frequencies_follow_counts() {
        let c = init_population(&params(3000, 5, 0.1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 200_000;
        let mut leader_wakes = 0u64;
        for _ in 0..draws {
            let (_, out) = c.apply_wake(&mut rng);
            if matches!(out.wake_class, WakeClass::LeaderDecisive) {
                leader_wakes += 1;
            }
        }
        let freq = leader_wakes as f64 / draws as f64;
        // p = 0.2, sd = 0.00089
        assert!((freq - 0.2).abs() < 0.005, "{freq}");
    }

    proptest! {
        #[test]
        fn wakes_conserve_population_and_respect_accounting(seed in any::<u64>(), rho in 0.01f64..1.0) {
            let mut c = init_population(&params(60, 3, rho)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..2000 {
                let before = c.clone();
                let out = c.wake(&mut rng);
                prop_assert!(c.check_invariants().is_ok());
                prop_assert_eq!(
                    out.communicated,
                    out.wake_class != WakeClass::FollowerInformed
                );
                if before.consensus_reached() {
                    prop_assert!(c.consensus_reached());
                }
            }
        }

        #[test]
        fn consensus_is_absorbing(seed in any::<u64>()) {
            let mut c = init_population(&params(40, 2, 1.0)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..1000 {
                c.wake(&mut rng);
                prop_assert_eq!(c.wrong_or_undecided(), 0);
            }
        }
    }
}
