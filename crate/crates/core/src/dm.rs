//! Direct-method policy value on an empirical model, by exact solve and by
//! iterated Q-evaluation backups.

use crate::empirical::EmpiricalModel;
use crate::error::{OpeError, Result};
use crate::linalg::{self, Evaluation, ModelView, SolveMethod};
use crate::mdp::Policy;

fn view(model: &EmpiricalModel) -> ModelView<'_> {
    ModelView {
        num_states: model.num_states(),
        num_actions: model.num_actions(),
        transitions: model.transitions(),
        mean_reward: model.mean_rewards(),
        initial: model.initial_dist(),
        discount: model.discount(),
    }
}

/// Q, V, visitation and value of `policy` inside the empirical MDP.
pub fn dm_evaluate(model: &EmpiricalModel, policy: &Policy) -> Result<Evaluation> {
    linalg::evaluate(&view(model), policy, SolveMethod::Auto)
}

pub fn dm_evaluate_with(model: &EmpiricalModel, policy: &Policy, method: SolveMethod) -> Result<Evaluation> {
    linalg::evaluate(&view(model), policy, method)
}

/// `(1 - gamma) R^T (I - gamma Pi T)^{-1} Pi mu0` under the empirical model.
pub fn dm_value(model: &EmpiricalModel, policy: &Policy) -> Result<f64> {
    Ok(dm_evaluate(model, policy)?.value)
}

pub fn dm_q(model: &EmpiricalModel, policy: &Policy) -> Result<Vec<f64>> {
    Ok(dm_evaluate(model, policy)?.q)
}

pub fn empirical_on_policy_distribution(model: &EmpiricalModel, policy: &Policy) -> Result<Vec<f64>> {
    Ok(dm_evaluate(model, policy)?.visitation)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QeOutcome {
    pub value: f64,
    pub q: Vec<f64>,
    pub iterations: usize,
}

/// Iterates `Q <- R + gamma T E_pi[Q]` starting from the priors' mean rewards.
///
/// Stops once `gamma * |Q_i - Q_{i-1}|_inf <= tolerance`, which bounds the
/// change any further backup could make.
pub fn q_evaluation(model: &EmpiricalModel, policy: &Policy, tolerance: f64, max_iters: usize) -> Result<QeOutcome> {
    if !(tolerance > 0.0) {
        return Err(OpeError::InvalidArgument(format!("tolerance must be positive, got {tolerance}")));
    }
    let (ns, na) = (model.num_states(), model.num_actions());
    if policy.num_states() != ns || policy.num_actions() != na {
        return Err(OpeError::DimensionMismatch(format!(
            "policy is {}x{}, model is {ns}x{na}",
            policy.num_states(),
            policy.num_actions()
        )));
    }
    let gamma = model.discount();
    let priors = model.priors();
    let mut q: Vec<f64> = (0..ns * na).map(|sa| priors.reward(sa / na, sa % na).mean()).collect();
    let mut v = vec![0.0; ns];
    let mut last_change = f64::INFINITY;
    for iteration in 1..=max_iters {
        for (s, vs) in v.iter_mut().enumerate() {
            *vs = (0..na).map(|a| policy.prob(s, a) * q[s * na + a]).sum();
        }
        let mut change = 0.0f64;
        for s in 0..ns {
            for a in 0..na {
                let sa = s * na + a;
                let next: f64 = model.transition_row(s, a).iter().zip(&v).map(|(t, x)| t * x).sum();
                let updated = model.mean_reward(s, a) + gamma * next;
                change = change.max((updated - q[sa]).abs());
                q[sa] = updated;
            }
        }
        last_change = change;
        if gamma * change <= tolerance {
            let value = (1.0 - gamma)
                * (0..ns)
                    .map(|s| model.initial_dist()[s] * (0..na).map(|a| policy.prob(s, a) * q[s * na + a]).sum::<f64>())
                    .sum::<f64>();
            return Ok(QeOutcome {
                value,
                q,
                iterations: iteration,
            });
        }
    }
    Err(OpeError::NonConvergence {
        max_iters,
        last_change,
    })
}

pub fn dm_value_via_qe(model: &EmpiricalModel, policy: &Policy, tolerance: f64, max_iters: usize) -> Result<f64> {
    Ok(q_evaluation(model, policy, tolerance, max_iters)?.value)
}
