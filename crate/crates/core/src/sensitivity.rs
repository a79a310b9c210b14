//! Closed-form influence of a single tuple on the direct-method value, its
//! finite-difference check, and probes of differentiability on the
//! countable-branch counterexample chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dm::dm_evaluate;
use crate::empirical::{sample_covering_tuples, EmpiricalModel, LoggedTuple, PriorSpec, TupleDataset};
use crate::error::{OpeError, Result};
use crate::linalg::Evaluation;
use crate::mdp::{self, make_counterexample_chain, random_mdp, random_policy, Policy, RewardDist};

/// Tuples with nonnegative weights; the distribution is the normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedData {
    pub num_states: usize,
    pub num_actions: usize,
    pub entries: Vec<(LoggedTuple, f64)>,
}

impl WeightedData {
    pub fn from_dataset(data: &TupleDataset) -> Self {
        Self {
            num_states: data.num_states(),
            num_actions: data.num_actions(),
            entries: data.tuples().iter().map(|t| (*t, 1.0)).collect(),
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w).sum()
    }

    /// `(1 - t) d + t delta_tuple`, with `d` the normalized current weights.
    pub fn mix_with(&self, tuple: LoggedTuple, t: f64) -> Self {
        let total = self.total_weight();
        let mut entries: Vec<(LoggedTuple, f64)> =
            self.entries.iter().map(|(x, w)| (*x, (1.0 - t) * w / total)).collect();
        entries.push((tuple, t));
        Self {
            num_states: self.num_states,
            num_actions: self.num_actions,
            entries,
        }
    }

    /// `(1 - t) d + t e` for another weighted distribution `e`.
    pub fn mix_distribution(&self, other: &WeightedData, t: f64) -> Self {
        let total = self.total_weight();
        let other_total = other.total_weight();
        let mut entries: Vec<(LoggedTuple, f64)> =
            self.entries.iter().map(|(x, w)| (*x, (1.0 - t) * w / total)).collect();
        entries.extend(other.entries.iter().map(|(x, w)| (*x, t * w / other_total)));
        Self {
            num_states: self.num_states,
            num_actions: self.num_actions,
            entries,
        }
    }

    pub fn model(&self, priors: &PriorSpec, kappa: f64, discount: f64) -> Result<EmpiricalModel> {
        EmpiricalModel::from_weighted(
            self.num_states,
            self.num_actions,
            self.entries.iter().map(|(t, w)| (t, *w)),
            priors,
            kappa,
            discount,
        )
    }
}

/// First-order effect on the DM value of moving the data toward one tuple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfluenceBreakdown {
    pub reward_term: f64,
    pub initial_state_term: f64,
    pub next_state_term: f64,
    pub total: f64,
    /// `d^pi(s,a) / d^D(s,a)` at the tuple's pair; infinite when the pair has no mass.
    pub weight_ratio: f64,
}

/// Precomputed pieces of the influence functional at one model.
///
/// Mixing toward a tuple rescales every pair's data mass by `1 - t`. With
/// `kappa > 0` the prior pseudo-mass does not rescale, so every visited pair
/// drifts toward its prior; those drifts are the same for all tuples and are
/// collected once here as `drift_reward` and `drift_next`.
#[derive(Debug, Clone)]
pub struct InfluenceContext<'a> {
    model: &'a EmpiricalModel,
    eval: Evaluation,
    /// `T^ V` per pair.
    next_value: Vec<f64>,
    drift_reward: f64,
    drift_next: f64,
}

impl<'a> InfluenceContext<'a> {
    pub fn new(model: &'a EmpiricalModel, policy: &Policy) -> Result<Self> {
        let eval = dm_evaluate(model, policy)?;
        let (ns, na) = (model.num_states(), model.num_actions());
        let kappa = model.kappa();
        let mut next_value = vec![0.0; ns * na];
        let mut drift_reward = 0.0;
        let mut drift_next = 0.0;
        for s in 0..ns {
            for a in 0..na {
                let sa = s * na + a;
                next_value[sa] = model.transition_row(s, a).iter().zip(&eval.v).map(|(t, v)| t * v).sum();
                let mass = model.mass(s, a);
                if mass == 0.0 || kappa == 0.0 {
                    continue;
                }
                let denom = mass + kappa;
                let reward_gap = model.reward_mass(s, a) - model.mean_reward(s, a) * mass;
                let next_mass_value: f64 = (0..ns).map(|s2| model.next_mass(s, a, s2) * eval.v[s2]).sum();
                let next_gap = next_mass_value - next_value[sa] * mass;
                drift_reward -= eval.visitation[sa] * reward_gap / denom;
                drift_next -= eval.visitation[sa] * next_gap / denom;
            }
        }
        Ok(Self {
            model,
            eval,
            next_value,
            drift_reward,
            drift_next,
        })
    }

    pub fn evaluation(&self) -> &Evaluation {
        &self.eval
    }

    pub fn influence(&self, tuple: &LoggedTuple) -> Result<InfluenceBreakdown> {
        let model = self.model;
        let (ns, na) = (model.num_states(), model.num_actions());
        if tuple.s0 >= ns || tuple.s >= ns || tuple.s_next >= ns || tuple.a >= na {
            return Err(OpeError::DimensionMismatch("tuple indexes outside the model".into()));
        }
        let gamma = model.discount();
        let sa = tuple.s * na + tuple.a;
        let mass = model.mass(tuple.s, tuple.a);
        let denom = mass + model.kappa();
        if denom == 0.0 {
            return Err(OpeError::ZeroDenominator {
                state: tuple.s,
                action: tuple.a,
            });
        }
        let d_pi = self.eval.visitation[sa];
        let v = &self.eval.v;
        let reward_term = d_pi * (tuple.r - model.mean_reward(tuple.s, tuple.a)) / denom + self.drift_reward;
        let next_state_term = gamma * (d_pi * (v[tuple.s_next] - self.next_value[sa]) / denom + self.drift_next);
        let initial_state_term = (1.0 - gamma) * v[tuple.s0] - self.eval.value;
        let weight_ratio = if mass > 0.0 { d_pi / mass } else { f64::INFINITY };
        Ok(InfluenceBreakdown {
            reward_term,
            initial_state_term,
            next_state_term,
            total: reward_term + initial_state_term + next_state_term,
            weight_ratio,
        })
    }
}

/// Gateaux derivative of the DM value at `model` in direction `delta_tuple - d`.
pub fn influence(model: &EmpiricalModel, policy: &Policy, tuple: &LoggedTuple) -> Result<InfluenceBreakdown> {
    InfluenceContext::new(model, policy)?.influence(tuple)
}

/// `(F((1 - t) d + t delta_tuple) - F(d)) / t`, evaluating both sides exactly.
pub fn finite_difference_influence(
    data: &WeightedData,
    priors: &PriorSpec,
    policy: &Policy,
    tuple: LoggedTuple,
    t: f64,
    kappa: f64,
    discount: f64,
) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(OpeError::InvalidArgument(format!("step t = {t} outside (0, 1]")));
    }
    let base = dm_evaluate(&data.model(priors, kappa, discount)?, policy)?.value;
    let mixed = dm_evaluate(&data.mix_with(tuple, t).model(priors, kappa, discount)?, policy)?.value;
    Ok((mixed - base) / t)
}

/// Data coverage of the random models in a gradient suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    /// Every `(s,a)` pair appears in the data.
    Full,
    /// Only about half of the pairs appear.
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSuite {
    pub seed: u64,
    pub cases: usize,
    pub tuples_per_case: usize,
    pub tol: f64,
    pub t: f64,
    pub kappa: f64,
    pub coverage: Coverage,
}

impl GradientSuite {
    pub fn new(seed: u64, cases: usize, tol: f64) -> Self {
        Self {
            seed,
            cases,
            tuples_per_case: 50,
            tol,
            t: 1e-6,
            kappa: 0.0,
            coverage: Coverage::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCase {
    pub case: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub discount: f64,
    pub max_relative_error: f64,
    pub passed: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub cases: Vec<GradientCase>,
    pub max_relative_error: f64,
    pub passed: bool,
}

/// Influence magnitudes below this are compared in absolute terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(RELATIVE_ERROR_FLOOR)
}

/// Compares closed-form influences with finite differences on seeded random
/// models and tuples.
pub fn check_gradients(suite: &GradientSuite) -> GradientReport {
    let cases: Vec<GradientCase> = (0..suite.cases).map(|case| run_gradient_case(suite, case)).collect();
    let max_relative_error = cases.iter().fold(0.0f64, |m, c| m.max(c.max_relative_error));
    let passed = cases.iter().all(|c| c.passed);
    GradientReport {
        cases,
        max_relative_error,
        passed,
    }
}

fn run_gradient_case(suite: &GradientSuite, case: usize) -> GradientCase {
    let mut rng = ChaCha8Rng::seed_from_u64(suite.seed);
    rng.set_stream(case as u64);
    let ns = rng.random_range(3..=6);
    let na = rng.random_range(2..=3);
    let discount = rng.random_range(0.5..0.95);
    let mut report = GradientCase {
        case,
        num_states: ns,
        num_actions: na,
        discount,
        max_relative_error: 0.0,
        passed: false,
        failure: None,
    };
    let result = (|| -> Result<f64> {
        let mdp = random_mdp(ns, na, discount, rng.random());
        let policy = random_policy(ns, na, rng.random());
        let pairs = ns * na;
        let data = match suite.coverage {
            Coverage::Full => sample_covering_tuples(&mdp, 30 * pairs, rng.random())?,
            Coverage::Sparse => {
                let full = sample_covering_tuples(&mdp, 30 * pairs, rng.random())?;
                let kept = full.tuples().iter().filter(|t| (t.s * na + t.a) % 2 == 0).copied().collect();
                TupleDataset::new(ns, na, kept)?
            }
        };
        let weighted = WeightedData::from_dataset(&data);
        let priors = PriorSpec::uniform(ns, na);
        let model = weighted.model(&priors, suite.kappa, discount)?;
        let ctx = InfluenceContext::new(&model, &policy)?;
        let mut worst = 0.0f64;
        for _ in 0..suite.tuples_per_case {
            let tuple = LoggedTuple {
                s0: rng.random_range(0..ns),
                s: rng.random_range(0..ns),
                a: rng.random_range(0..na),
                r: rng.random_range(-1.0..1.0),
                s_next: rng.random_range(0..ns),
            };
            let analytic = ctx.influence(&tuple)?.total;
            let numeric =
                finite_difference_influence(&weighted, &priors, &policy, tuple, suite.t, suite.kappa, discount)?;
            worst = worst.max(relative_error(analytic, numeric));
        }
        Ok(worst)
    })();
    match result {
        Ok(worst) => {
            report.max_relative_error = worst;
            report.passed = worst < suite.tol;
        }
        Err(e) => {
            report.max_relative_error = f64::INFINITY;
            report.failure = Some(e.to_string());
        }
    }
    report
}

/// One row of a differentiability probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub epsilon: f64,
    pub quotient: f64,
    pub kappa: f64,
}

/// Discount used by the counterexample probes.
pub const PROBE_DISCOUNT: f64 = 0.5;

/// Everything the probes need about the truncated chain.
struct ChainSetup {
    /// `d^pi` of the chain written as a tuple distribution, with the mass of
    /// the last branch moved onto a reward-1 tuple at `s_term`.
    shifted: WeightedData,
    priors: PriorSpec,
    last_branch: LoggedTuple,
    first_branch: LoggedTuple,
}

fn chain_setup(n_intermediate: usize) -> Result<ChainSetup> {
    let chain = make_counterexample_chain(n_intermediate, PROBE_DISCOUNT)?;
    let ns = chain.num_states;
    let policy = Policy::uniform(ns, 1);
    let visitation = mdp::on_policy_distribution(&chain, &policy)?;
    let start = mdp::CHAIN_START;
    let term = mdp::CHAIN_TERM;

    let branch = |n: usize| LoggedTuple {
        s0: start,
        s: mdp::chain_state(n),
        a: 0,
        r: 0.0,
        s_next: term,
    };
    let last_branch = branch(n_intermediate);
    let mut entries = Vec::new();
    for s in 0..ns {
        let mass = visitation[s];
        if mass == 0.0 {
            continue;
        }
        let r = chain.reward(s, 0).mean();
        for (s_next, &p) in chain.transition_row(s, 0).iter().enumerate() {
            if p > 0.0 {
                entries.push((LoggedTuple { s0: start, s, a: 0, r, s_next }, mass * p));
            }
        }
    }
    let moved = visitation[last_branch.s];
    entries.retain(|(t, _)| t.s != last_branch.s);
    entries.push((
        LoggedTuple {
            s0: start,
            s: term,
            a: 0,
            r: 1.0,
            s_next: term,
        },
        moved,
    ));
    let mut to_term = vec![0.0; ns];
    to_term[term] = 1.0;
    let priors = PriorSpec::constant(ns, 1, RewardDist::point(1.0), &to_term)?;
    Ok(ChainSetup {
        shifted: WeightedData {
            num_states: ns,
            num_actions: 1,
            entries,
        },
        priors,
        last_branch,
        first_branch: branch(1),
    })
}

fn probe(
    n_intermediate: usize,
    kappa: f64,
    steps: &[f64],
    direction: impl Fn(&ChainSetup, f64) -> WeightedData,
) -> Result<Vec<ProbeRow>> {
    if steps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(OpeError::InvalidArgument("probe steps must lie in (0, 1)".into()));
    }
    if steps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(OpeError::InvalidArgument("probe steps must be decreasing".into()));
    }
    let setup = chain_setup(n_intermediate)?;
    let policy = Policy::uniform(setup.shifted.num_states, 1);
    let base = dm_evaluate(&setup.shifted.model(&setup.priors, kappa, PROBE_DISCOUNT)?, &policy)?.value;
    steps
        .iter()
        .map(|&epsilon| {
            let target = direction(&setup, epsilon);
            let moved = setup.shifted.mix_distribution(&target, epsilon);
            let value = dm_evaluate(&moved.model(&setup.priors, kappa, PROBE_DISCOUNT)?, &policy)?.value;
            Ok(ProbeRow {
                epsilon,
                quotient: (value - base) / epsilon,
                kappa,
            })
        })
        .collect()
}

/// Difference quotients along the converging directions
/// `P_eps = eps delta_last + (1 - eps) delta_first - d`, with `eps` doubling as
/// the step size. At `kappa = 0` the last branch regains a sliver of data, its
/// reward snaps from the prior's 1 to the observed 0, and the quotient grows
/// like `1 / eps`. With `kappa > 0` the quotients settle to a finite limit.
pub fn counterexample_blowup_probe(n_intermediate: usize, kappa: f64, steps: &[f64]) -> Result<Vec<ProbeRow>> {
    probe(n_intermediate, kappa, steps, |setup, eps| WeightedData {
        num_states: setup.shifted.num_states,
        num_actions: 1,
        entries: vec![(setup.last_branch, eps), (setup.first_branch, 1.0 - eps)],
    })
}

/// Difference quotients along the fixed limit direction `P = delta_first - d`.
/// No conditional distribution changes, so every quotient is zero.
pub fn counterexample_limit_probe(n_intermediate: usize, kappa: f64, steps: &[f64]) -> Result<Vec<ProbeRow>> {
    probe(n_intermediate, kappa, steps, |setup, _| WeightedData {
        num_states: setup.shifted.num_states,
        num_actions: 1,
        entries: vec![(setup.first_branch, 1.0)],
    })
}

/// Writes probe rows as `epsilon,quotient,kappa` CSV.
pub fn write_probe_csv<W: std::io::Write>(rows: &[ProbeRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dm::empirical_on_policy_distribution;

    fn setup(seed: u64, kappa: f64) -> (WeightedData, EmpiricalModel, Policy, PriorSpec, f64) {
        let (ns, na, gamma) = (4, 2, 0.8);
        let m = random_mdp(ns, na, gamma, seed);
        let data = sample_covering_tuples(&m, 160, seed + 1).unwrap();
        let weighted = WeightedData::from_dataset(&data);
        let priors = PriorSpec::uniform(ns, na);
        let model = weighted.model(&priors, kappa, gamma).unwrap();
        (weighted, model, random_policy(ns, na, seed + 2), priors, gamma)
    }

    #[test]
    fn total_is_sum_of_terms() {
        let (_, model, pi, _, _) = setup(1, 0.0);
        let t = LoggedTuple { s0: 1, s: 2, a: 1, r: 0.3, s_next: 0 };
        let b = influence(&model, &pi, &t).unwrap();
        assert!((b.total - (b.reward_term + b.initial_state_term + b.next_state_term)).abs() < 1e-12);
    }

    #[test]
    fn closed_form_matches_finite_difference() {
        for kappa in [0.0, 0.2] {
            let (weighted, model, pi, priors, gamma) = setup(7, kappa);
            let ctx = InfluenceContext::new(&model, &pi).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..20 {
                let t = LoggedTuple {
                    s0: rng.random_range(0..4),
                    s: rng.random_range(0..4),
                    a: rng.random_range(0..2),
                    r: rng.random_range(-1.0..1.0),
                    s_next: rng.random_range(0..4),
                };
                let analytic = ctx.influence(&t).unwrap().total;
                let numeric = finite_difference_influence(&weighted, &priors, &pi, t, 1e-6, kappa, gamma).unwrap();
                assert!(relative_error(analytic, numeric) < 1e-4, "{analytic} vs {numeric}");
            }
        }
    }

    #[test]
    fn stationary_tuple_has_no_influence() {
        // reward at the empirical mean, s0 and s' chosen so the value terms vanish
        let chain_like = TupleDataset::new(
            2,
            1,
            vec![
                LoggedTuple { s0: 0, s: 0, a: 0, r: 0.5, s_next: 1 },
                LoggedTuple { s0: 0, s: 1, a: 0, r: 0.5, s_next: 0 },
            ],
        )
        .unwrap();
        let model = WeightedData::from_dataset(&chain_like)
            .model(&PriorSpec::uniform(2, 1), 0.0, 0.6)
            .unwrap();
        let pi = Policy::uniform(2, 1);
        // constant rewards make V constant, so every next state has mean value
        let t = LoggedTuple { s0: 0, s: 0, a: 0, r: 0.5, s_next: 0 };
        let b = influence(&model, &pi, &t).unwrap();
        assert!(b.total.abs() < 1e-12, "{b:?}");
    }

    #[test]
    fn reward_term_vanishes_with_constant_rewards() {
        let mut m = random_mdp(3, 2, 0.7, 5);
        m.rewards = vec![RewardDist::point(1.0); 6];
        let data = sample_covering_tuples(&m, 60, 6).unwrap();
        let model = WeightedData::from_dataset(&data).model(&PriorSpec::uniform(3, 2), 0.0, 0.7).unwrap();
        let pi = random_policy(3, 2, 1);
        let b = influence(&model, &pi, &LoggedTuple { s0: 2, s: 1, a: 0, r: 1.0, s_next: 2 }).unwrap();
        assert!(b.reward_term.abs() < 1e-12);
    }

    #[test]
    fn influence_has_zero_mean_under_the_data() {
        for kappa in [0.0, 0.5] {
            let (weighted, model, pi, _, _) = setup(11, kappa);
            let ctx = InfluenceContext::new(&model, &pi).unwrap();
            let total_w = weighted.total_weight();
            let mean: f64 = weighted
                .entries
                .iter()
                .map(|(t, w)| w / total_w * ctx.influence(t).unwrap().total)
                .sum();
            assert!(mean.abs() < 1e-9, "kappa {kappa}: mean {mean}");
        }
    }

    #[test]
    fn weight_ratio_sup_matches_distribution_ratio() {
        let (weighted, model, pi, _, _) = setup(13, 0.0);
        let ctx = InfluenceContext::new(&model, &pi).unwrap();
        let sup_from_tuples = weighted
            .entries
            .iter()
            .map(|(t, _)| ctx.influence(t).unwrap().weight_ratio)
            .fold(0.0f64, f64::max);
        let d_pi = empirical_on_policy_distribution(&model, &pi).unwrap();
        let mut sup = 0.0f64;
        for s in 0..4 {
            for a in 0..2 {
                sup = sup.max(d_pi[s * 2 + a] / model.mass(s, a));
            }
        }
        assert!((sup_from_tuples - sup).abs() < 1e-12 * sup);
    }

    #[test]
    fn unvisited_pair_without_kappa_is_rejected() {
        let data = TupleDataset::new(2, 2, vec![LoggedTuple { s0: 0, s: 0, a: 0, r: 0.0, s_next: 1 }]).unwrap();
        let model = WeightedData::from_dataset(&data).model(&PriorSpec::uniform(2, 2), 0.0, 0.5).unwrap();
        let t = LoggedTuple { s0: 0, s: 1, a: 1, r: 0.0, s_next: 0 };
        assert!(matches!(
            influence(&model, &Policy::uniform(2, 2), &t),
            Err(OpeError::ZeroDenominator { state: 1, action: 1 })
        ));
    }

    #[test]
    fn full_mix_onto_itself_is_flat() {
        let t = LoggedTuple { s0: 0, s: 0, a: 0, r: 0.4, s_next: 0 };
        let data = WeightedData::from_dataset(&TupleDataset::new(1, 1, vec![t]).unwrap());
        let q = finite_difference_influence(&data, &PriorSpec::uniform(1, 1), &Policy::uniform(1, 1), t, 1.0, 0.0, 0.5)
            .unwrap();
        assert_eq!(q, 0.0);
        assert!(finite_difference_influence(&data, &PriorSpec::uniform(1, 1), &Policy::uniform(1, 1), t, 0.0, 0.0, 0.5)
            .is_err());
    }

    #[test]
    fn difference_quotient_error_is_first_order() {
        let (weighted, _, pi, priors, gamma) = setup(17, 0.0);
        let t = LoggedTuple { s0: 3, s: 1, a: 1, r: 0.9, s_next: 2 };
        let q = |step: f64| finite_difference_influence(&weighted, &priors, &pi, t, step, 0.0, gamma).unwrap();
        let (q4, q5, q6) = (q(1e-4), q(1e-5), q(1e-6));
        let ratio = (q4 - q6) / (q5 - q6);
        assert!((ratio - 11.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn gradient_suite_pass_and_fail_modes() {
        assert!(check_gradients(&GradientSuite::new(5, 4, 1e-3)).passed);
        let mut sparse = GradientSuite::new(5, 3, 1e-3);
        sparse.coverage = Coverage::Sparse;
        let report = check_gradients(&sparse);
        assert!(!report.passed);
        assert!(report.cases.iter().any(|c| c.failure.is_some()));
        sparse.kappa = 0.1;
        assert!(check_gradients(&sparse).passed);
    }

    #[test]
    fn blowup_dichotomy() {
        let steps = [0.1, 0.01, 0.001];
        let raw = counterexample_blowup_probe(50, 0.0, &steps).unwrap();
        assert!(raw[2].quotient.abs() >= 50.0 * raw[0].quotient.abs(), "{raw:?}");
        let smooth = counterexample_blowup_probe(50, 1.0, &steps).unwrap();
        // differences shrink like eps
        let d1 = smooth[0].quotient - smooth[1].quotient;
        let d2 = smooth[1].quotient - smooth[2].quotient;
        assert!(d2.abs() < d1.abs() / 5.0, "{smooth:?}");
        assert!(smooth[2].quotient.is_finite() && smooth[2].quotient.abs() < 1.0);
        for w in raw.windows(2) {
            let ratio = w[1].quotient / w[0].quotient;
            assert!((ratio - 10.0).abs() < 1.0, "{raw:?}");
        }
        for row in counterexample_limit_probe(50, 0.0, &steps).unwrap() {
            assert!(row.quotient.abs() < 1e-9, "{row:?}");
        }
        assert!(counterexample_blowup_probe(50, 0.0, &[0.01, 0.1]).is_err());
    }

    #[test]
    fn probe_csv_layout() {
        let rows = counterexample_blowup_probe(5, 0.0, &[0.5, 0.25]).unwrap();
        let mut buf = Vec::new();
        write_probe_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epsilon,quotient,kappa\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
