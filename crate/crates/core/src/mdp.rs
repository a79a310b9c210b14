//! Ground-truth tabular MDPs, policies, exact evaluation and trajectory sampling.

use std::collections::BTreeSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};
use crate::linalg::{self, Evaluation, ModelView, SolveMethod};

const SUM_TOL: f64 = 1e-12;

/// Finite-support reward distribution, serialized as `[[value, prob], ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardDist {
    pub support: Vec<(f64, f64)>,
}

impl RewardDist {
    pub fn point(value: f64) -> Self {
        Self {
            support: vec![(value, 1.0)],
        }
    }

    pub fn bernoulli(p: f64) -> Self {
        Self {
            support: vec![(0.0, 1.0 - p), (1.0, p)],
        }
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().map(|(v, p)| v * p).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.support
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .fold(0.0, |m, (v, _)| m.max(v.abs()))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let probs: Vec<f64> = self.support.iter().map(|(_, p)| *p).collect();
        self.support[sample_index(&probs, rng)].0
    }
}

/// Draws an index from a discrete distribution by inverse CDF.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// A finite MDP `<S, A, R, T, mu0, gamma>` with bounded rewards.
///
/// Tables are stored flat: `transitions[(s*A + a)*S + s']` and `rewards[s*A + a]`.
/// The JSON form nests them as `transitions[s][a][s']` and `rewards[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpFile", into = "MdpFile")]
pub struct TabularMdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub transitions: Vec<f64>,
    pub rewards: Vec<RewardDist>,
    pub initial_dist: Vec<f64>,
    pub discount: f64,
    /// Absorbing states; their self-loop reward is whatever `rewards` says.
    pub terminal_states: BTreeSet<usize>,
    pub r_max: f64,
}

#[derive(Serialize, Deserialize)]
struct MdpFile {
    num_states: usize,
    num_actions: usize,
    transitions: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<RewardDist>>,
    initial_dist: Vec<f64>,
    discount: f64,
    #[serde(default)]
    terminal_states: BTreeSet<usize>,
    r_max: f64,
}

impl TryFrom<MdpFile> for TabularMdp {
    type Error = String;

    fn try_from(f: MdpFile) -> std::result::Result<Self, String> {
        let (ns, na) = (f.num_states, f.num_actions);
        if f.transitions.len() != ns || f.transitions.iter().any(|r| r.len() != na) {
            return Err(format!("transitions must be {ns} x {na} x {ns}"));
        }
        if f.rewards.len() != ns || f.rewards.iter().any(|r| r.len() != na) {
            return Err(format!("rewards must be {ns} x {na}"));
        }
        let mut transitions = Vec::with_capacity(ns * na * ns);
        for row in f.transitions.iter().flatten() {
            if row.len() != ns {
                return Err(format!("transition rows must have {ns} entries"));
            }
            transitions.extend_from_slice(row);
        }
        Ok(TabularMdp {
            num_states: ns,
            num_actions: na,
            transitions,
            rewards: f.rewards.into_iter().flatten().collect(),
            initial_dist: f.initial_dist,
            discount: f.discount,
            terminal_states: f.terminal_states,
            r_max: f.r_max,
        })
    }
}

impl From<TabularMdp> for MdpFile {
    fn from(m: TabularMdp) -> Self {
        let (ns, na) = (m.num_states, m.num_actions);
        let transitions = (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| m.transition_row(s, a).to_vec())
                    .collect()
            })
            .collect();
        let rewards = m.rewards.chunks(na).map(|c| c.to_vec()).collect();
        MdpFile {
            num_states: ns,
            num_actions: na,
            transitions,
            rewards,
            initial_dist: m.initial_dist,
            discount: m.discount,
            terminal_states: m.terminal_states,
            r_max: m.r_max,
        }
    }
}

/// One broken invariant found by [`TabularMdp::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape(String),
    TransitionSum { state: usize, action: usize, deficit: f64 },
    NegativeTransition { state: usize, action: usize, next: usize },
    RewardProbSum { state: usize, action: usize, deficit: f64 },
    RewardOutOfBounds { state: usize, action: usize, value: f64, r_max: f64 },
    InitialSum { deficit: f64 },
    Discount(f64),
    TerminalIndex(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(msg) => write!(f, "shape: {msg}"),
            Violation::TransitionSum { state, action, deficit } => {
                write!(f, "transition row (s={state}, a={action}) misses unit mass by {deficit:e}")
            }
            Violation::NegativeTransition { state, action, next } => {
                write!(f, "negative transition probability at (s={state}, a={action}, s'={next})")
            }
            Violation::RewardProbSum { state, action, deficit } => {
                write!(f, "reward distribution at (s={state}, a={action}) misses unit mass by {deficit:e}")
            }
            Violation::RewardOutOfBounds { state, action, value, r_max } => {
                write!(f, "reward {value} at (s={state}, a={action}) exceeds r_max = {r_max}")
            }
            Violation::InitialSum { deficit } => {
                write!(f, "initial distribution misses unit mass by {deficit:e}")
            }
            Violation::Discount(g) => write!(f, "discount {g} outside [0, 1)"),
            Violation::TerminalIndex(s) => write!(f, "terminal state {s} out of range"),
        }
    }
}

impl TabularMdp {
    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let ns = self.num_states;
        let sa = s * self.num_actions + a;
        &self.transitions[sa * ns..(sa + 1) * ns]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> &RewardDist {
        &self.rewards[s * self.num_actions + a]
    }

    pub fn mean_rewards(&self) -> Vec<f64> {
        self.rewards.iter().map(RewardDist::mean).collect()
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal_states.contains(&s)
    }

    pub fn with_discount(mut self, discount: f64) -> Self {
        self.discount = discount;
        self
    }

    /// Lists every violated invariant; empty when the MDP is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let (ns, na) = (self.num_states, self.num_actions);
        let mut out = Vec::new();
        if ns == 0 || na == 0 {
            out.push(Violation::Shape("state and action counts must be positive".into()));
            return out;
        }
        if self.transitions.len() != ns * na * ns {
            out.push(Violation::Shape(format!(
                "expected {} transition entries, found {}",
                ns * na * ns,
                self.transitions.len()
            )));
        }
        if self.rewards.len() != ns * na {
            out.push(Violation::Shape(format!(
                "expected {} reward distributions, found {}",
                ns * na,
                self.rewards.len()
            )));
        }
        if self.initial_dist.len() != ns {
            out.push(Violation::Shape(format!(
                "initial distribution has {} entries, expected {ns}",
                self.initial_dist.len()
            )));
        }
        if !out.is_empty() {
            return out;
        }
        for s in 0..ns {
            for a in 0..na {
                let row = self.transition_row(s, a);
                if let Some(next) = row.iter().position(|&p| p < 0.0) {
                    out.push(Violation::NegativeTransition { state: s, action: a, next });
                }
                let deficit = 1.0 - row.iter().sum::<f64>();
                if deficit.abs() > SUM_TOL {
                    out.push(Violation::TransitionSum { state: s, action: a, deficit });
                }
                let dist = self.reward(s, a);
                let deficit = 1.0 - dist.support.iter().map(|(_, p)| p).sum::<f64>();
                if deficit.abs() > SUM_TOL || dist.support.iter().any(|(_, p)| *p < 0.0) {
                    out.push(Violation::RewardProbSum { state: s, action: a, deficit });
                }
                for &(value, _) in &dist.support {
                    if value.abs() > self.r_max {
                        out.push(Violation::RewardOutOfBounds {
                            state: s,
                            action: a,
                            value,
                            r_max: self.r_max,
                        });
                    }
                }
            }
        }
        let deficit = 1.0 - self.initial_dist.iter().sum::<f64>();
        if deficit.abs() > SUM_TOL || self.initial_dist.iter().any(|&p| p < 0.0) {
            out.push(Violation::InitialSum { deficit });
        }
        if !(0.0..1.0).contains(&self.discount) {
            out.push(Violation::Discount(self.discount));
        }
        for &t in &self.terminal_states {
            if t >= ns {
                out.push(Violation::TerminalIndex(t));
            }
        }
        out
    }

    fn view<'a>(&'a self, mean_reward: &'a [f64]) -> ModelView<'a> {
        ModelView {
            num_states: self.num_states,
            num_actions: self.num_actions,
            transitions: &self.transitions,
            mean_reward,
            initial: &self.initial_dist,
            discount: self.discount,
        }
    }

    /// Solves the policy's Bellman system once and returns Q, V, d^pi and the value.
    pub fn evaluate(&self, policy: &Policy) -> Result<Evaluation> {
        let means = self.mean_rewards();
        linalg::evaluate(&self.view(&means), policy, SolveMethod::Auto)
    }
}

/// `rho(pi) = (1 - gamma) E[sum_t gamma^t r_t]`.
pub fn exact_policy_value(mdp: &TabularMdp, policy: &Policy) -> Result<f64> {
    Ok(mdp.evaluate(policy)?.value)
}

/// Discounted on-policy distribution `d^pi(s,a)`, flat `s*A + a`.
pub fn on_policy_distribution(mdp: &TabularMdp, policy: &Policy) -> Result<Vec<f64>> {
    Ok(mdp.evaluate(policy)?.visitation)
}

/// `Q^pi(s,a)`, flat `s*A + a`.
pub fn q_values(mdp: &TabularMdp, policy: &Policy) -> Result<Vec<f64>> {
    Ok(mdp.evaluate(policy)?.q)
}

/// Stochastic policy `pi(a|s)`, serialized as `{"probs": [[...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyFile", into = "PolicyFile")]
pub struct Policy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    probs: Vec<Vec<f64>>,
}

impl TryFrom<PolicyFile> for Policy {
    type Error = String;

    fn try_from(f: PolicyFile) -> std::result::Result<Self, String> {
        Policy::from_rows(f.probs).map_err(|e| e.to_string())
    }
}

impl From<Policy> for PolicyFile {
    fn from(p: Policy) -> Self {
        PolicyFile {
            probs: p.probs.chunks(p.num_actions).map(|c| c.to_vec()).collect(),
        }
    }
}

impl Policy {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_states = rows.len();
        let num_actions = rows.first().map_or(0, Vec::len);
        if num_states == 0 || num_actions == 0 {
            return Err(OpeError::InvalidArgument("policy table is empty".into()));
        }
        if rows.iter().any(|r| r.len() != num_actions) {
            return Err(OpeError::InvalidArgument("policy rows differ in length".into()));
        }
        let policy = Policy {
            num_states,
            num_actions,
            probs: rows.into_iter().flatten().collect(),
        };
        policy.check()?;
        Ok(policy)
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Policy {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    pub fn deterministic(actions: &[usize], num_actions: usize) -> Self {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * num_actions + a] = 1.0;
        }
        Policy {
            num_states: actions.len(),
            num_actions,
            probs,
        }
    }

    fn check(&self) -> Result<()> {
        for (s, row) in self.probs.chunks(self.num_actions).enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(OpeError::InvalidArgument(format!("policy row {s} has an entry outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(OpeError::InvalidArgument(format!("policy row {s} sums to {sum}")));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn check_compatible(&self, mdp: &TabularMdp) -> Result<()> {
        if self.num_states != mdp.num_states || self.num_actions != mdp.num_actions {
            return Err(OpeError::DimensionMismatch(format!(
                "policy is {}x{}, MDP is {}x{}",
                self.num_states, self.num_actions, mdp.num_states, mdp.num_actions
            )));
        }
        Ok(())
    }
}

/// Mixes each row with the uniform distribution over all actions.
pub fn perturb_policy_epsilon_greedy(policy: &Policy, epsilon: f64) -> Result<Policy> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(OpeError::InvalidArgument(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let uniform = 1.0 / policy.num_actions as f64;
    Ok(Policy {
        num_states: policy.num_states,
        num_actions: policy.num_actions,
        probs: policy
            .probs
            .iter()
            .map(|&p| (1.0 - epsilon) * p + epsilon * uniform)
            .collect(),
    })
}

/// Deterministic policy maximizing discounted value, by policy iteration.
/// Ties go to the lowest action index.
pub fn optimal_policy(mdp: &TabularMdp) -> Result<Policy> {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let mut actions = vec![0usize; ns];
    for _ in 0..10_000 {
        let policy = Policy::deterministic(&actions, na);
        let q = mdp.evaluate(&policy)?.q;
        let mut changed = false;
        for s in 0..ns {
            let row = &q[s * na..(s + 1) * na];
            let current = row[actions[s]];
            let (best, best_q) = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (a, &v)| if v > acc.1 { (a, v) } else { acc });
            // only switch on a clear improvement so round-off cannot cycle
            if best_q > current + 1e-12 * current.abs().max(1e-300) && best != actions[s] {
                actions[s] = best;
                changed = true;
            }
        }
        if !changed {
            return Ok(policy);
        }
    }
    Err(OpeError::NonConvergence {
        max_iters: 10_000,
        last_change: f64::NAN,
    })
}

/// One logged transition together with the behavior probability of its action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub behavior_prob: f64,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub initial_state: usize,
    pub steps: Vec<Step>,
}

impl Episode {
    /// Checks the chaining and positivity invariants.
    pub fn check(&self) -> Result<()> {
        if let Some(first) = self.steps.first() {
            if first.state != self.initial_state {
                return Err(OpeError::InvalidArgument(
                    "first step does not start at the initial state".into(),
                ));
            }
        }
        for (i, w) in self.steps.windows(2).enumerate() {
            if w[0].next_state != w[1].state {
                return Err(OpeError::InvalidArgument(format!("steps {i} and {} do not chain", i + 1)));
            }
        }
        for (i, step) in self.steps.iter().enumerate() {
            if !(step.behavior_prob > 0.0 && step.behavior_prob <= 1.0) {
                return Err(OpeError::InvalidArgument(format!(
                    "step {i} has behavior probability {}",
                    step.behavior_prob
                )));
            }
        }
        Ok(())
    }

    /// `(1 - gamma) * sum_t gamma^t r_t`.
    pub fn normalized_return(&self, discount: f64) -> f64 {
        let mut total = 0.0;
        let mut g = 1.0;
        for step in &self.steps {
            total += g * step.reward;
            g *= discount;
        }
        (1.0 - discount) * total
    }
}

pub type EpisodeSet = Vec<Episode>;

/// Rolls out `count` episodes of `policy`, each stopping on entering a terminal
/// state or after `max_horizon` steps. An episode that starts in a terminal
/// state has no steps.
pub fn sample_episodes(
    mdp: &TabularMdp,
    policy: &Policy,
    count: usize,
    max_horizon: usize,
    seed: u64,
) -> Result<EpisodeSet> {
    if max_horizon == 0 {
        return Err(OpeError::InvalidArgument("max_horizon must be at least 1".into()));
    }
    policy.check_compatible(mdp)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut episodes = Vec::with_capacity(count);
    for _ in 0..count {
        let s0 = sample_index(&mdp.initial_dist, &mut rng);
        let mut steps = Vec::new();
        let mut s = s0;
        while !mdp.is_terminal(s) && steps.len() < max_horizon {
            let a = sample_index(policy.row(s), &mut rng);
            let reward = mdp.reward(s, a).sample(&mut rng);
            let next = sample_index(mdp.transition_row(s, a), &mut rng);
            let terminal = mdp.is_terminal(next);
            steps.push(Step {
                state: s,
                action: a,
                reward,
                next_state: next,
                behavior_prob: policy.prob(s, a),
                terminal,
            });
            s = next;
        }
        episodes.push(Episode {
            initial_state: s0,
            steps,
        });
    }
    Ok(episodes)
}

pub const FROZEN_LAKE_4X4: [&str; 4] = ["SFFF", "FHFH", "FFFH", "HFFG"];

pub const FROZEN_LAKE_8X8: [&str; 8] = [
    "SFFFFFFF", "FFFFFFFF", "FFFHFFFF", "FFFFFHFF", "FFFHFFFF", "FHHFFFHF", "FHFFHFHF", "FFFHFFFG",
];

/// Slip mass of the classic slippery lake: each perpendicular move has 1/3.
pub const DEFAULT_SLIP_PROB: f64 = 2.0 / 3.0;

/// Frozen Lake gridworld.
///
/// States are the cells in row-major order plus one absorbing sink at index
/// `rows * cols`. Actions are left, down, right, up. The intended move happens
/// with probability `1 - slip_prob`; each perpendicular move gets half the slip
/// mass; moves off the grid stay put. Any action at a goal pays 1 and moves to
/// the sink. Holes and the sink are terminal self-loops paying 0.
pub fn make_frozen_lake<S: AsRef<str>>(map: &[S], slip_prob: f64, discount: f64) -> Result<TabularMdp> {
    if !(0.0..=1.0).contains(&slip_prob) {
        return Err(OpeError::InvalidArgument(format!("slip_prob {slip_prob} outside [0, 1]")));
    }
    let rows: Vec<&[u8]> = map.iter().map(|r| r.as_ref().as_bytes()).collect();
    let height = rows.len();
    let width = rows.first().map_or(0, |r| r.len());
    if height == 0 || width == 0 {
        return Err(OpeError::MalformedGrid("empty map".into()));
    }
    if rows.iter().any(|r| r.len() != width) {
        return Err(OpeError::MalformedGrid("rows differ in length".into()));
    }
    if let Some(c) = rows.iter().flat_map(|r| r.iter()).find(|c| !b"SFHG".contains(c)) {
        return Err(OpeError::MalformedGrid(format!("unknown cell '{}'", *c as char)));
    }
    let count = |ch: u8| rows.iter().flat_map(|r| r.iter()).filter(|&&c| c == ch).count();
    if count(b'S') != 1 {
        return Err(OpeError::MalformedGrid("need exactly one start cell".into()));
    }
    if count(b'G') == 0 {
        return Err(OpeError::MalformedGrid("need at least one goal cell".into()));
    }

    let cells = height * width;
    let ns = cells + 1;
    let sink = cells;
    let na = 4;
    let mut transitions = vec![0.0; ns * na * ns];
    let mut rewards = vec![RewardDist::point(0.0); ns * na];
    let mut initial_dist = vec![0.0; ns];
    let mut terminal_states = BTreeSet::from([sink]);

    // left, down, right, up
    const MOVES: [(isize, isize); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];
    let step = |r: usize, c: usize, dir: usize| -> usize {
        let (dr, dc) = MOVES[dir];
        let nr = r as isize + dr;
        let nc = c as isize + dc;
        if nr < 0 || nc < 0 || nr >= height as isize || nc >= width as isize {
            r * width + c
        } else {
            nr as usize * width + nc as usize
        }
    };

    for r in 0..height {
        for c in 0..width {
            let s = r * width + c;
            let kind = rows[r][c];
            if kind == b'S' {
                initial_dist[s] = 1.0;
            }
            for a in 0..na {
                let row = &mut transitions[(s * na + a) * ns..(s * na + a + 1) * ns];
                match kind {
                    b'H' => row[s] = 1.0,
                    b'G' => {
                        row[sink] = 1.0;
                        rewards[s * na + a] = RewardDist::point(1.0);
                    }
                    _ => {
                        row[step(r, c, a)] += 1.0 - slip_prob;
                        row[step(r, c, (a + 1) % 4)] += slip_prob / 2.0;
                        row[step(r, c, (a + 3) % 4)] += slip_prob / 2.0;
                    }
                }
            }
            if kind == b'H' {
                terminal_states.insert(s);
            }
        }
    }
    for a in 0..na {
        transitions[(sink * na + a) * ns + sink] = 1.0;
    }
    Ok(TabularMdp {
        num_states: ns,
        num_actions: na,
        transitions,
        rewards,
        initial_dist,
        discount,
        terminal_states,
        r_max: 1.0,
    })
}

/// Index of `s_start` in [`make_counterexample_chain`].
pub const CHAIN_START: usize = 0;
/// Index of `s_term` in [`make_counterexample_chain`].
pub const CHAIN_TERM: usize = 1;

/// Index of the intermediate state `s_n` (1-based `n`).
pub fn chain_state(n: usize) -> usize {
    n + 1
}

/// Branch probability `6 / (pi^2 n^2)` of the untruncated chain.
pub fn chain_branch_prob(n: usize) -> f64 {
    6.0 / (std::f64::consts::PI.powi(2) * (n * n) as f64)
}

/// Single-action chain `s_start -> s_n -> s_term` with `T(s_n|s_start) = 6/(pi^2 n^2)`.
///
/// Truncated at `n_intermediate` branches; the tail mass goes to the last
/// branch. Every branch pays 0 and leads to `s_term`, which loops paying 1, so
/// the truncation leaves the policy value unchanged.
pub fn make_counterexample_chain(n_intermediate: usize, discount: f64) -> Result<TabularMdp> {
    if n_intermediate == 0 {
        return Err(OpeError::InvalidArgument("need at least one intermediate state".into()));
    }
    let ns = n_intermediate + 2;
    let mut transitions = vec![0.0; ns * ns];
    let mut head = 0.0;
    for n in 1..n_intermediate {
        let p = chain_branch_prob(n);
        transitions[CHAIN_START * ns + chain_state(n)] = p;
        head += p;
    }
    transitions[CHAIN_START * ns + chain_state(n_intermediate)] = 1.0 - head;
    for n in 1..=n_intermediate {
        transitions[chain_state(n) * ns + CHAIN_TERM] = 1.0;
    }
    transitions[CHAIN_TERM * ns + CHAIN_TERM] = 1.0;

    let mut rewards = vec![RewardDist::point(0.0); ns];
    rewards[CHAIN_TERM] = RewardDist::point(1.0);
    let mut initial_dist = vec![0.0; ns];
    initial_dist[CHAIN_START] = 1.0;
    Ok(TabularMdp {
        num_states: ns,
        num_actions: 1,
        transitions,
        rewards,
        initial_dist,
        discount,
        terminal_states: BTreeSet::from([CHAIN_TERM]),
        r_max: 1.0,
    })
}

/// One-step bandit: state 0 offers `arm_means.len()` Bernoulli arms, every arm
/// moves to the terminal state 1, which loops paying 0.
pub fn make_bernoulli_bandit(arm_means: &[f64], discount: f64) -> Result<TabularMdp> {
    if arm_means.is_empty() {
        return Err(OpeError::InvalidArgument("bandit needs at least one arm".into()));
    }
    if arm_means.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(OpeError::InvalidArgument("arm means must lie in [0, 1]".into()));
    }
    let na = arm_means.len();
    let ns = 2;
    let mut transitions = vec![0.0; ns * na * ns];
    let mut rewards = Vec::with_capacity(ns * na);
    for a in 0..na {
        transitions[a * ns + 1] = 1.0;
        rewards.push(RewardDist::bernoulli(arm_means[a]));
    }
    for a in 0..na {
        transitions[(na + a) * ns + 1] = 1.0;
        rewards.push(RewardDist::point(0.0));
    }
    Ok(TabularMdp {
        num_states: ns,
        num_actions: na,
        transitions,
        rewards,
        initial_dist: vec![1.0, 0.0],
        discount,
        terminal_states: BTreeSet::from([1]),
        r_max: 1.0,
    })
}

/// Dense random MDP with two-point rewards in `[-1, 1]`; every entry of every
/// distribution is strictly positive.
pub fn random_mdp(num_states: usize, num_actions: usize, discount: f64, seed: u64) -> TabularMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let simplex = |len: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let raw: Vec<f64> = (0..len).map(|_| 0.05 + rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / total).collect()
    };
    let mut transitions = Vec::with_capacity(num_states * num_actions * num_states);
    let mut rewards = Vec::with_capacity(num_states * num_actions);
    for _ in 0..num_states * num_actions {
        transitions.extend(simplex(num_states, &mut rng));
        let p: f64 = 0.1 + 0.8 * rng.random::<f64>();
        let lo: f64 = rng.random_range(-1.0..1.0);
        let hi: f64 = rng.random_range(-1.0..1.0);
        rewards.push(RewardDist {
            support: vec![(lo, p), (hi, 1.0 - p)],
        });
    }
    let initial_dist = simplex(num_states, &mut rng);
    TabularMdp {
        num_states,
        num_actions,
        transitions,
        rewards,
        initial_dist,
        discount,
        terminal_states: BTreeSet::new(),
        r_max: 1.0,
    }
}

/// Random policy with every action probability at least `0.05 / A`-ish.
pub fn random_policy(num_states: usize, num_actions: usize, seed: u64) -> Policy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs = Vec::with_capacity(num_states * num_actions);
    for _ in 0..num_states {
        let raw: Vec<f64> = (0..num_actions).map(|_| 0.05 + rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        probs.extend(raw.into_iter().map(|x| x / total));
    }
    Policy {
        num_states,
        num_actions,
        probs,
    }
}
