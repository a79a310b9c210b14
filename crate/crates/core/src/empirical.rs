//! Logged-data containers, the empirical MDP with prior fallback and
//! kappa-regularization, noisy-reward augmentation, and resampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};
use crate::mdp::{sample_index, Episode, EpisodeSet, RewardDist, TabularMdp};

/// One logged experience tuple `(s0, s, a, r, s')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoggedTuple {
    pub s0: usize,
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TupleDataset {
    num_states: usize,
    num_actions: usize,
    tuples: Vec<LoggedTuple>,
}

impl TupleDataset {
    pub fn new(num_states: usize, num_actions: usize, tuples: Vec<LoggedTuple>) -> Result<Self> {
        if tuples.is_empty() {
            return Err(OpeError::EmptyInput("tuple dataset"));
        }
        for (j, t) in tuples.iter().enumerate() {
            if t.s0 >= num_states || t.s >= num_states || t.s_next >= num_states || t.a >= num_actions {
                return Err(OpeError::DimensionMismatch(format!(
                    "tuple {j} indexes outside {num_states} states x {num_actions} actions"
                )));
            }
            if !t.r.is_finite() {
                return Err(OpeError::InvalidArgument(format!("tuple {j} has a non-finite reward")));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            tuples,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn tuples(&self) -> &[LoggedTuple] {
        &self.tuples
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.tuples.iter().map(|t| t.r)
    }
}

/// One tuple per logged step, tagged with its own episode's start state.
pub fn tuples_from_episodes(episodes: &[Episode], num_states: usize, num_actions: usize) -> Result<TupleDataset> {
    if episodes.is_empty() {
        return Err(OpeError::EmptyInput("episode set"));
    }
    let tuples = episodes
        .iter()
        .flat_map(|ep| {
            ep.steps.iter().map(move |st| LoggedTuple {
                s0: ep.initial_state,
                s: st.state,
                a: st.action,
                r: st.reward,
                s_next: st.next_state,
            })
        })
        .collect();
    TupleDataset::new(num_states, num_actions, tuples)
}

/// Draws `count` tuples following the independent data model: `s0 ~ mu0`,
/// `(s, a)` cycled round-robin over all pairs so every pair is covered,
/// `r ~ R(s,a)`, `s' ~ T(s,a)`.
pub fn sample_covering_tuples(mdp: &TabularMdp, count: usize, seed: u64) -> Result<TupleDataset> {
    let pairs = mdp.num_states * mdp.num_actions;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tuples = (0..count)
        .map(|j| {
            let sa = j % pairs;
            let (s, a) = (sa / mdp.num_actions, sa % mdp.num_actions);
            LoggedTuple {
                s0: sample_index(&mdp.initial_dist, &mut rng),
                s,
                a,
                r: mdp.reward(s, a).sample(&mut rng),
                s_next: sample_index(mdp.transition_row(s, a), &mut rng),
            }
        })
        .collect();
    TupleDataset::new(mdp.num_states, mdp.num_actions, tuples)
}

/// Fallback reward and transition distributions for pairs without data.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    num_states: usize,
    num_actions: usize,
    rewards: Vec<RewardDist>,
    transitions: Vec<f64>,
}

impl PriorSpec {
    /// Zero-reward point mass and uniform next state everywhere.
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            rewards: vec![RewardDist::point(0.0); num_states * num_actions],
            transitions: vec![1.0 / num_states as f64; num_states * num_actions * num_states],
        }
    }

    /// The same reward distribution and next-state distribution at every pair.
    pub fn constant(num_states: usize, num_actions: usize, reward: RewardDist, next: &[f64]) -> Result<Self> {
        if next.len() != num_states {
            return Err(OpeError::DimensionMismatch("prior transition row length".into()));
        }
        let spec = Self {
            num_states,
            num_actions,
            rewards: vec![reward; num_states * num_actions],
            transitions: next.repeat(num_states * num_actions),
        };
        spec.check()?;
        Ok(spec)
    }

    /// Uniform priors, except that terminal states of `mdp` keep their known
    /// absorbing dynamics and self-loop reward. Episodes stop on entering a
    /// terminal state, so those pairs never appear in logged data.
    pub fn with_known_terminals(mdp: &TabularMdp) -> Self {
        let mut spec = Self::uniform(mdp.num_states, mdp.num_actions);
        for &s in &mdp.terminal_states {
            for a in 0..mdp.num_actions {
                spec.set_pair(s, a, mdp.reward(s, a).clone(), mdp.transition_row(s, a));
            }
        }
        spec
    }

    pub fn set_pair(&mut self, s: usize, a: usize, reward: RewardDist, next: &[f64]) {
        let sa = s * self.num_actions + a;
        let ns = self.num_states;
        self.rewards[sa] = reward;
        self.transitions[sa * ns..(sa + 1) * ns].copy_from_slice(next);
    }

    fn check(&self) -> Result<()> {
        for (sa, r) in self.rewards.iter().enumerate() {
            let mass: f64 = r.support.iter().map(|(_, p)| p).sum();
            if (mass - 1.0).abs() > 1e-12 {
                return Err(OpeError::InvalidArgument(format!("reward prior {sa} is not normalized")));
            }
        }
        for (sa, row) in self.transitions.chunks(self.num_states).enumerate() {
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 || row.iter().any(|&p| p < 0.0) {
                return Err(OpeError::InvalidArgument(format!("transition prior {sa} is not normalized")));
            }
        }
        Ok(())
    }

    pub fn reward(&self, s: usize, a: usize) -> &RewardDist {
        &self.rewards[s * self.num_actions + a]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let sa = s * self.num_actions + a;
        &self.transitions[sa * self.num_states..(sa + 1) * self.num_states]
    }
}

/// Empirical MDP `(mu0^D, R^kappa, T^kappa)` built from (weighted) tuples.
///
/// With total data weight `W`, pair weight `w(s,a)` and prior pseudo-weight
/// `kappa * W`, the reward mean is `(sum w r + kappa W Rprior) / (w + kappa W)`
/// and transitions blend the same way. At `kappa = 0` an unvisited pair takes
/// its priors verbatim.
#[derive(Debug, Clone)]
pub struct EmpiricalModel {
    num_states: usize,
    num_actions: usize,
    discount: f64,
    kappa: f64,
    total_weight: f64,
    pair_weight: Vec<f64>,
    reward_sum: Vec<f64>,
    next_weight: Vec<f64>,
    initial_weight: Vec<f64>,
    priors: PriorSpec,
    mean_reward: Vec<f64>,
    transitions: Vec<f64>,
    initial: Vec<f64>,
}

impl EmpiricalModel {
    /// Builds the model from tuples carrying nonnegative weights.
    pub fn from_weighted<'a, I>(
        num_states: usize,
        num_actions: usize,
        tuples: I,
        priors: &PriorSpec,
        kappa: f64,
        discount: f64,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a LoggedTuple, f64)>,
    {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(OpeError::InvalidArgument(format!("kappa must be finite and >= 0, got {kappa}")));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(OpeError::InvalidArgument(format!("discount {discount} outside [0, 1)")));
        }
        if priors.num_states != num_states || priors.num_actions != num_actions {
            return Err(OpeError::DimensionMismatch("priors do not match the data's spaces".into()));
        }
        let (ns, na) = (num_states, num_actions);
        let mut pair_weight = vec![0.0; ns * na];
        let mut reward_sum = vec![0.0; ns * na];
        let mut next_weight = vec![0.0; ns * na * ns];
        let mut initial_weight = vec![0.0; ns];
        let mut total_weight = 0.0;
        for (t, w) in tuples {
            if w == 0.0 {
                continue;
            }
            let sa = t.s * na + t.a;
            pair_weight[sa] += w;
            reward_sum[sa] += w * t.r;
            next_weight[sa * ns + t.s_next] += w;
            initial_weight[t.s0] += w;
            total_weight += w;
        }
        if !(total_weight > 0.0) {
            return Err(OpeError::EmptyInput("tuple weights"));
        }
        let mut model = Self {
            num_states,
            num_actions,
            discount,
            kappa,
            total_weight,
            pair_weight,
            reward_sum,
            next_weight,
            initial_weight,
            priors: priors.clone(),
            mean_reward: Vec::new(),
            transitions: Vec::new(),
            initial: Vec::new(),
        };
        model.derive();
        Ok(model)
    }

    fn derive(&mut self) {
        let (ns, na) = (self.num_states, self.num_actions);
        let pseudo = self.kappa * self.total_weight;
        self.mean_reward = vec![0.0; ns * na];
        self.transitions = vec![0.0; ns * na * ns];
        for s in 0..ns {
            for a in 0..na {
                let sa = s * na + a;
                let w = self.pair_weight[sa];
                let prior_row = self.priors.transition_row(s, a);
                let row = &mut self.transitions[sa * ns..(sa + 1) * ns];
                let counts = &self.next_weight[sa * ns..(sa + 1) * ns];
                if w == 0.0 {
                    self.mean_reward[sa] = self.priors.reward(s, a).mean();
                    row.copy_from_slice(prior_row);
                } else if pseudo == 0.0 {
                    self.mean_reward[sa] = self.reward_sum[sa] / w;
                    for (dst, c) in row.iter_mut().zip(counts) {
                        *dst = c / w;
                    }
                } else {
                    let denom = w + pseudo;
                    let prior_mean = self.priors.reward(s, a).mean();
                    self.mean_reward[sa] = (self.reward_sum[sa] + pseudo * prior_mean) / denom;
                    for ((dst, c), p) in row.iter_mut().zip(counts).zip(prior_row) {
                        *dst = (c + pseudo * p) / denom;
                    }
                }
            }
        }
        self.initial = self.initial_weight.iter().map(|w| w / self.total_weight).collect();
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn priors(&self) -> &PriorSpec {
        &self.priors
    }

    /// Total (unnormalized) weight of the data; `n` for unit weights.
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Visit count (weight) of `(s,a)`.
    pub fn count(&self, s: usize, a: usize) -> f64 {
        self.pair_weight[s * self.num_actions + a]
    }

    /// Data mass `d^D(s,a)`.
    pub fn mass(&self, s: usize, a: usize) -> f64 {
        self.count(s, a) / self.total_weight
    }

    /// Mass-weighted empirical reward `sum_{tuples at (s,a)} d(tuple) r`.
    pub fn reward_mass(&self, s: usize, a: usize) -> f64 {
        self.reward_sum[s * self.num_actions + a] / self.total_weight
    }

    /// Data mass of `(s, a, s')`.
    pub fn next_mass(&self, s: usize, a: usize, s_next: usize) -> f64 {
        let sa = s * self.num_actions + a;
        self.next_weight[sa * self.num_states + s_next] / self.total_weight
    }

    pub fn mean_reward(&self, s: usize, a: usize) -> f64 {
        self.mean_reward[s * self.num_actions + a]
    }

    pub fn mean_rewards(&self) -> &[f64] {
        &self.mean_reward
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let sa = s * self.num_actions + a;
        &self.transitions[sa * self.num_states..(sa + 1) * self.num_states]
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    /// `mu0^D`.
    pub fn initial_dist(&self) -> &[f64] {
        &self.initial
    }

    /// Largest `|r|` among the data means and the priors' supports.
    pub fn reward_bound(&self) -> f64 {
        let data = self.mean_reward.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let prior = self.priors.rewards.iter().fold(0.0f64, |m, r| m.max(r.max_abs()));
        data.max(prior)
    }
}

/// Unit-weight model of a dataset.
pub fn build_empirical_model(data: &TupleDataset, priors: &PriorSpec, kappa: f64, discount: f64) -> Result<EmpiricalModel> {
    EmpiricalModel::from_weighted(
        data.num_states,
        data.num_actions,
        data.tuples.iter().map(|t| (t, 1.0)),
        priors,
        kappa,
        discount,
    )
}

/// Population variance (divide by `m`).
pub fn population_variance<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    if values.is_empty() {
        return 0.0;
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m
}

/// The dataset tripled with rewards shifted by `+noise_scale` and `-noise_scale`.
///
/// Indices `0..n` are the originals, `n..2n` the `+` copies, `2n..3n` the `-` copies.
#[derive(Debug, Clone)]
pub struct AugmentedDataset<'a> {
    base: &'a TupleDataset,
    noise_scale: f64,
}

impl<'a> AugmentedDataset<'a> {
    pub fn base(&self) -> &TupleDataset {
        self.base
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn len(&self) -> usize {
        3 * self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn get(&self, index: usize) -> LoggedTuple {
        let n = self.base.len();
        let mut t = self.base.tuples[index % n];
        match index / n {
            0 => {}
            1 => t.r += self.noise_scale,
            _ => t.r -= self.noise_scale,
        }
        t
    }

    pub fn iter(&self) -> impl Iterator<Item = LoggedTuple> + '_ {
        (0..self.len()).map(|j| self.get(j))
    }

    pub fn materialize(&self) -> TupleDataset {
        TupleDataset {
            num_states: self.base.num_states,
            num_actions: self.base.num_actions,
            tuples: self.iter().collect(),
        }
    }
}

pub fn augment_noisy_rewards(data: &TupleDataset, noise_scale: f64) -> Result<AugmentedDataset<'_>> {
    if !(noise_scale >= 0.0) || !noise_scale.is_finite() {
        return Err(OpeError::InvalidArgument(format!("noise scale must be finite and >= 0, got {noise_scale}")));
    }
    Ok(AugmentedDataset {
        base: data,
        noise_scale,
    })
}

/// Default noise coefficient applied to the reward standard deviation.
pub const DEFAULT_NOISE_COEF: f64 = 0.25;

/// `coef * sqrt(Var[r])` over the dataset's rewards.
pub fn noise_scale_with_coef(data: &TupleDataset, coef: f64) -> f64 {
    coef * population_variance(data.rewards()).sqrt()
}

pub fn default_noise_scale(data: &TupleDataset) -> f64 {
    noise_scale_with_coef(data, DEFAULT_NOISE_COEF)
}

/// Noise level `sqrt(3/2) * r_max / (1 - gamma)` that is enough to compensate
/// for bootstrap under-coverage regardless of sample size.
pub fn sufficient_noise_scale(r_max: f64, discount: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&discount) {
        return Err(OpeError::InvalidArgument(format!("discount {discount} outside [0, 1)")));
    }
    Ok(1.5f64.sqrt() * r_max / (1.0 - discount))
}

/// `out_len` indices drawn uniformly with replacement from `0..pool_len`.
pub fn resample_indices(pool_len: usize, out_len: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..out_len).map(|_| rng.random_range(0..pool_len)).collect()
}

/// How many elements to draw when resampling an augmented dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentedDraw {
    /// `n` draws from the `3n` pool.
    #[default]
    BaseSize,
    /// `3n` draws from the `3n` pool.
    PoolSize,
}

pub fn resample_tuples(data: &TupleDataset, seed: u64) -> TupleDataset {
    let tuples = resample_indices(data.len(), data.len(), seed)
        .into_iter()
        .map(|j| data.tuples[j])
        .collect();
    TupleDataset {
        num_states: data.num_states,
        num_actions: data.num_actions,
        tuples,
    }
}

pub fn resample_augmented(data: &AugmentedDataset<'_>, draw: AugmentedDraw, seed: u64) -> TupleDataset {
    let out_len = match draw {
        AugmentedDraw::BaseSize => data.base.len(),
        AugmentedDraw::PoolSize => data.len(),
    };
    let tuples = resample_indices(data.len(), out_len, seed)
        .into_iter()
        .map(|j| data.get(j))
        .collect();
    TupleDataset {
        num_states: data.base.num_states,
        num_actions: data.base.num_actions,
        tuples,
    }
}

pub fn resample_episodes(episodes: &[Episode], seed: u64) -> EpisodeSet {
    resample_indices(episodes.len(), episodes.len(), seed)
        .into_iter()
        .map(|j| episodes[j].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{
        make_frozen_lake, perturb_policy_epsilon_greedy, sample_episodes, Policy, Step, DEFAULT_SLIP_PROB,
        FROZEN_LAKE_4X4,
    };
    use proptest::prelude::*;
    use rand::Rng;

    fn tuple(s0: usize, s: usize, a: usize, r: f64, s_next: usize) -> LoggedTuple {
        LoggedTuple { s0, s, a, r, s_next }
    }

    fn rewards_dataset(rewards: &[f64]) -> TupleDataset {
        TupleDataset::new(1, 1, rewards.iter().map(|&r| tuple(0, 0, 0, r, 0)).collect()).unwrap()
    }

    fn step(state: usize, next_state: usize) -> Step {
        Step {
            state,
            action: 0,
            reward: 0.0,
            next_state,
            behavior_prob: 1.0,
            terminal: false,
        }
    }

    #[test]
    fn episodes_flatten_to_tuples() {
        let one = Episode {
            initial_state: 2,
            steps: vec![step(2, 1), step(1, 0), step(0, 2)],
        };
        let data = tuples_from_episodes(std::slice::from_ref(&one), 3, 1).unwrap();
        assert_eq!(data.len(), 3);
        assert!(data.tuples().iter().all(|t| t.s0 == 2));
        let two = Episode {
            initial_state: 0,
            steps: vec![step(0, 1)],
        };
        let data = tuples_from_episodes(&[one, two], 3, 1).unwrap();
        assert_eq!(data.len(), 4);
        assert!(matches!(tuples_from_episodes(&[], 3, 1), Err(OpeError::EmptyInput(_))));
    }

    #[test]
    fn initial_distribution_matches_start_frequencies() {
        let lake = make_frozen_lake(&FROZEN_LAKE_4X4, DEFAULT_SLIP_PROB, 0.99).unwrap();
        let pi = Policy::uniform(lake.num_states, 4);
        let episodes = sample_episodes(&lake, &pi, 100, 1000, 5).unwrap();
        let data = tuples_from_episodes(&episodes, lake.num_states, 4).unwrap();
        let model = build_empirical_model(&data, &PriorSpec::with_known_terminals(&lake), 0.0, 0.99).unwrap();
        // independent recount: each episode contributes one s0 per step
        let mut counts = vec![0usize; lake.num_states];
        let mut total = 0usize;
        for ep in &episodes {
            counts[ep.initial_state] += ep.steps.len();
            total += ep.steps.len();
        }
        for (s, &c) in counts.iter().enumerate() {
            assert_eq!(model.initial_dist()[s], c as f64 / total as f64);
        }
    }

    #[test]
    fn single_tuple_model() {
        let data = TupleDataset::new(3, 2, vec![tuple(0, 1, 1, 1.0, 2)]).unwrap();
        let priors = PriorSpec::uniform(3, 2);
        let model = build_empirical_model(&data, &priors, 0.0, 0.9).unwrap();
        assert_eq!(model.mean_reward(1, 1), 1.0);
        assert_eq!(model.transition_row(1, 1), &[0.0, 0.0, 1.0]);
        for s in 0..3 {
            for a in 0..2 {
                if (s, a) != (1, 1) {
                    assert_eq!(model.mean_reward(s, a), 0.0);
                    assert_eq!(model.transition_row(s, a), priors.transition_row(s, a));
                }
            }
        }
        assert_eq!(model.initial_dist(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn kappa_blends_by_mass() {
        // half the data at (0,0) with reward 1, half at (1,0) with reward 0
        let data = TupleDataset::new(2, 1, vec![tuple(0, 0, 0, 1.0, 1), tuple(0, 1, 0, 0.0, 1)]).unwrap();
        let model = build_empirical_model(&data, &PriorSpec::uniform(2, 1), 0.5, 0.9).unwrap();
        assert!((model.mean_reward(0, 0) - 0.5).abs() < 1e-15);
        let row = model.transition_row(0, 0);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((row[1] - (0.5 + 0.5 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn huge_kappa_recovers_priors() {
        let lake = make_frozen_lake(&FROZEN_LAKE_4X4, DEFAULT_SLIP_PROB, 0.99).unwrap();
        let data = sample_covering_tuples(&lake, 500, 1).unwrap();
        let priors = PriorSpec::uniform(lake.num_states, 4);
        let model = build_empirical_model(&data, &priors, 1e9, 0.99).unwrap();
        for s in 0..lake.num_states {
            for a in 0..4 {
                assert!((model.mean_reward(s, a) - priors.reward(s, a).mean()).abs() < 1e-6);
                for (x, y) in model.transition_row(s, a).iter().zip(priors.transition_row(s, a)) {
                    assert!((x - y).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn unvisited_pairs_take_priors_bit_exactly() {
        let lake = make_frozen_lake(&FROZEN_LAKE_4X4, DEFAULT_SLIP_PROB, 0.99).unwrap();
        let behavior = perturb_policy_epsilon_greedy(&Policy::uniform(lake.num_states, 4), 0.0).unwrap();
        let episodes = sample_episodes(&lake, &behavior, 3, 50, 11).unwrap();
        let data = tuples_from_episodes(&episodes, lake.num_states, 4).unwrap();
        let mut priors = PriorSpec::with_known_terminals(&lake);
        priors.set_pair(5, 2, RewardDist { support: vec![(0.3, 0.5), (0.1, 0.5)] }, &[1.0 / 17.0; 17]);
        let model = build_empirical_model(&data, &priors, 0.0, 0.99).unwrap();
        for s in 0..lake.num_states {
            for a in 0..4 {
                if model.count(s, a) == 0.0 {
                    assert_eq!(model.mean_reward(s, a), priors.reward(s, a).mean());
                    assert_eq!(model.transition_row(s, a), priors.transition_row(s, a));
                }
            }
        }
    }

    #[test]
    fn regularized_mean_moves_little_when_one_tuple_moves() {
        let n = 200;
        let kappa = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tuples: Vec<LoggedTuple> = (0..n)
            .map(|j| tuple(0, j % 3, 0, rng.random::<f64>(), 0))
            .collect();
        let data = TupleDataset::new(3, 1, tuples.clone()).unwrap();
        let priors = PriorSpec::uniform(3, 1);
        let base = build_empirical_model(&data, &priors, kappa, 0.5).unwrap();
        for j in 0..n {
            let mut moved = tuples.clone();
            let from = moved[j].s;
            moved[j].s = (from + 1) % 3;
            let other = build_empirical_model(&TupleDataset::new(3, 1, moved).unwrap(), &priors, kappa, 0.5).unwrap();
            let delta = (other.mean_reward(from, 0) - base.mean_reward(from, 0)).abs();
            assert!(delta <= 1.0 / (n as f64 * kappa), "delta {delta}");
        }
    }

    #[test]
    fn noise_examples() {
        let zeros = rewards_dataset(&[0.0, 0.0, 0.0]);
        let aug = augment_noisy_rewards(&zeros, 1.0).unwrap();
        assert_eq!(aug.len(), 9);
        assert!((population_variance(aug.iter().map(|t| t.r)) - 2.0 / 3.0).abs() < 1e-12);

        let same = augment_noisy_rewards(&zeros, 0.0).unwrap();
        assert_eq!(same.len(), 9);
        assert_eq!(population_variance(same.iter().map(|t| t.r)), 0.0);

        let two = rewards_dataset(&[0.0, 2.0]);
        let aug = augment_noisy_rewards(&two, 3.0).unwrap();
        let mut rewards: Vec<f64> = aug.iter().map(|t| t.r).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![-3.0, -1.0, 0.0, 2.0, 3.0, 5.0]);
        assert!((population_variance(rewards) - 7.0).abs() < 1e-12);
        assert!(augment_noisy_rewards(&two, -1.0).is_err());
    }

    #[test]
    fn noise_scale_examples() {
        assert_eq!(default_noise_scale(&rewards_dataset(&[0.4, 0.4])), 0.0);
        assert!((default_noise_scale(&rewards_dataset(&[0.0, 2.0])) - 0.25).abs() < 1e-15);
        assert!((default_noise_scale(&rewards_dataset(&[-1.0, 1.0])) - 0.25).abs() < 1e-15);
        assert_eq!(sufficient_noise_scale(0.0, 0.5).unwrap(), 0.0);
        assert!((sufficient_noise_scale(1.0, 0.5).unwrap() - 2.449489742783178).abs() < 1e-12);
        assert!((sufficient_noise_scale(1.0, 0.999).unwrap() - 1000.0 * 1.5f64.sqrt()).abs() < 1e-9);
        assert!(sufficient_noise_scale(1.0, 1.0).is_err());
    }

    #[test]
    fn resampling_single_and_deterministic() {
        let one = rewards_dataset(&[0.7]);
        assert_eq!(resample_tuples(&one, 99), one);
        let data = rewards_dataset(&(0..50).map(f64::from).collect::<Vec<_>>());
        assert_eq!(resample_tuples(&data, 4), resample_tuples(&data, 4));
        assert_ne!(resample_tuples(&data, 4), resample_tuples(&data, 5));

        let aug = augment_noisy_rewards(&data, 0.5).unwrap();
        assert_eq!(resample_augmented(&aug, AugmentedDraw::BaseSize, 1).len(), 50);
        assert_eq!(resample_augmented(&aug, AugmentedDraw::PoolSize, 1).len(), 150);

        let ep = Episode {
            initial_state: 0,
            steps: vec![step(0, 0)],
        };
        assert_eq!(resample_episodes(std::slice::from_ref(&ep), 3), vec![ep]);
    }

    /// Chi-square goodness of fit of per-element multiplicities against Binomial(n, 1/n).
    fn multiplicity_chi_square(indices: &[usize], n: usize) -> (f64, usize) {
        let mut mult = vec![0usize; n];
        for &j in indices {
            mult[j] += 1;
        }
        let p = 1.0 / n as f64;
        let binom = |k: usize| -> f64 {
            let mut lg = 0.0;
            for i in 0..k {
                lg += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
            }
            (lg + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
        };
        // bins 0, 1, 2, 3, >= 4
        let mut observed = [0f64; 5];
        for &m in &mult {
            observed[m.min(4)] += 1.0;
        }
        let mut expected = [0f64; 5];
        for (k, e) in expected.iter_mut().enumerate().take(4) {
            *e = n as f64 * binom(k);
        }
        expected[4] = n as f64 - expected[..4].iter().sum::<f64>();
        let stat = observed
            .iter()
            .zip(&expected)
            .map(|(o, e)| (o - e).powi(2) / e)
            .sum();
        (stat, 4)
    }

    #[test]
    fn multiplicities_are_binomial() {
        // chi-square(4) critical value at p = 0.001
        const CRITICAL: f64 = 18.467;
        let n = 10_000;
        let data = rewards_dataset(&(0..n).map(|j| j as f64).collect::<Vec<_>>());
        let resampled = resample_tuples(&data, 17);
        let indices: Vec<usize> = resampled.rewards().map(|r| r as usize).collect();
        let (stat, dof) = multiplicity_chi_square(&indices, n);
        assert_eq!(dof, 4);
        assert!(stat < CRITICAL, "chi-square {stat}");

        let episodes: Vec<Episode> = (0..n)
            .map(|j| Episode {
                initial_state: j,
                steps: vec![],
            })
            .collect();
        let indices: Vec<usize> = resample_episodes(&episodes, 23).iter().map(|e| e.initial_state).collect();
        let (stat, _) = multiplicity_chi_square(&indices, n);
        assert!(stat < CRITICAL, "chi-square {stat}");
    }

    proptest! {
        #[test]
        fn augmented_variance_identity(rewards in prop::collection::vec(-5.0f64..5.0, 1..60), noise in 0.0f64..4.0) {
            let data = rewards_dataset(&rewards);
            let aug = augment_noisy_rewards(&data, noise).unwrap();
            let lhs = population_variance(aug.iter().map(|t| t.r));
            let rhs = 2.0 / 3.0 * noise * noise + population_variance(rewards.iter().copied());
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs));
        }

        #[test]
        fn resample_preserves_support(rewards in prop::collection::vec(-5.0f64..5.0, 1..40), seed in any::<u64>()) {
            let data = rewards_dataset(&rewards);
            let out = resample_tuples(&data, seed);
            prop_assert_eq!(out.len(), data.len());
            for t in out.tuples() {
                prop_assert!(data.tuples().contains(t));
            }
        }
    }
}
