//! Importance-sampling and doubly-robust per-episode estimates, and the
//! concentration-inequality intervals built on them.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bootstrap::{bootstrap_mean, BootstrapConfig, ConfidenceInterval};
use crate::dm::dm_q;
use crate::empirical::EmpiricalModel;
use crate::error::{OpeError, Result};
use crate::mdp::{Episode, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorTag {
    Pdis,
    TrajectoryIs,
    Dr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerEpisodeEstimates {
    pub values: Vec<f64>,
    pub estimator_tag: EstimatorTag,
    /// Width of an interval known to contain every single-episode estimate;
    /// infinite when no such bound is available.
    pub range_bound: f64,
}

impl PerEpisodeEstimates {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Unbiased sample variance.
    pub fn sample_variance(&self) -> f64 {
        let m = self.values.len() as f64;
        let mean = self.mean();
        self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IsOptions {
    /// Weight the whole return by the full-episode ratio product.
    #[serde(default)]
    pub trajectory: bool,
    /// Cap on each per-step ratio.
    #[serde(default)]
    pub clip: Option<f64>,
    /// Divide step-t weights by their mean over the episodes still running at t.
    #[serde(default)]
    pub self_normalize: bool,
    /// Known bound on |r|; the largest observed |r| when absent.
    #[serde(default)]
    pub reward_bound: Option<f64>,
}

/// Per-step ratios `pi(a|s) / b(a|s)` for one episode.
fn step_ratios(episode: &Episode, index: usize, target: &Policy, clip: Option<f64>) -> Result<Vec<f64>> {
    episode
        .steps
        .iter()
        .enumerate()
        .map(|(t, step)| {
            if step.behavior_prob <= 0.0 {
                return Err(OpeError::ZeroBehaviorProb { episode: index, step: t });
            }
            if step.state >= target.num_states() || step.action >= target.num_actions() {
                return Err(OpeError::DimensionMismatch(format!(
                    "episode {index} step {t} is outside the policy's {}x{} table",
                    target.num_states(),
                    target.num_actions()
                )));
            }
            let ratio = target.prob(step.state, step.action) / step.behavior_prob;
            if !ratio.is_finite() {
                return Err(OpeError::InfiniteWeight { episode: index, step: t });
            }
            Ok(clip.map_or(ratio, |c| ratio.min(c)))
        })
        .collect()
}

/// Cumulative products of the ratios, checked for overflow.
fn cumulative_weights(ratios: &[f64], index: usize) -> Result<Vec<f64>> {
    let mut w = 1.0;
    ratios
        .iter()
        .enumerate()
        .map(|(t, r)| {
            w *= r;
            if w.is_finite() {
                Ok(w)
            } else {
                Err(OpeError::InfiniteWeight { episode: index, step: t })
            }
        })
        .collect()
}

fn all_weights(episodes: &[Episode], target: &Policy, clip: Option<f64>) -> Result<Vec<Vec<f64>>> {
    episodes
        .iter()
        .enumerate()
        .map(|(i, ep)| cumulative_weights(&step_ratios(ep, i, target, clip)?, i))
        .collect()
}

/// `(1 - gamma) sum_{t<L} gamma^t rho^(t+1) r_max` (PDIS) or
/// `rho^L (1 - gamma) sum_{t<L} gamma^t r_max` (trajectory IS), doubled when
/// negative rewards occur.
fn analytic_range(episodes: &[Episode], target: &Policy, discount: f64, options: &IsOptions) -> Result<f64> {
    if options.self_normalize {
        return Ok(f64::INFINITY);
    }
    let mut rho: f64 = 0.0;
    let mut longest = 0;
    let mut observed_r: f64 = 0.0;
    let mut signed = false;
    for (i, ep) in episodes.iter().enumerate() {
        for r in step_ratios(ep, i, target, options.clip)? {
            rho = rho.max(r);
        }
        longest = longest.max(ep.steps.len());
        for step in &ep.steps {
            observed_r = observed_r.max(step.reward.abs());
            signed |= step.reward < 0.0;
        }
    }
    let r_max = options.reward_bound.unwrap_or(observed_r);
    let mut sum = 0.0;
    let mut g = 1.0;
    let mut w = 1.0;
    for _ in 0..longest {
        if options.trajectory {
            sum += g;
        } else {
            w *= rho;
            sum += g * w;
        }
        g *= discount;
    }
    if options.trajectory {
        sum *= rho.powi(longest as i32);
    }
    let magnitude = (1.0 - discount) * sum * r_max;
    Ok(if signed { 2.0 * magnitude } else { magnitude })
}

/// Per-decision IS: `(1 - gamma) sum_t gamma^t (prod_{k<=t} pi_k / b_k) r_t` per episode.
pub fn per_decision_is(episodes: &[Episode], target: &Policy, discount: f64) -> Result<PerEpisodeEstimates> {
    importance_sampling(episodes, target, discount, &IsOptions::default())
}

pub fn importance_sampling(
    episodes: &[Episode],
    target: &Policy,
    discount: f64,
    options: &IsOptions,
) -> Result<PerEpisodeEstimates> {
    if episodes.is_empty() {
        return Err(OpeError::EmptyInput("no episodes"));
    }
    let weights = all_weights(episodes, target, options.clip)?;
    let normalizers = if options.self_normalize {
        step_weight_means(&weights)
    } else {
        Vec::new()
    };
    let values = episodes
        .iter()
        .zip(&weights)
        .map(|(ep, w)| {
            let mut total = 0.0;
            let mut g = 1.0;
            let last = w.last().copied().unwrap_or(1.0);
            for (t, step) in ep.steps.iter().enumerate() {
                let mut weight = if options.trajectory { last } else { w[t] };
                if options.self_normalize {
                    weight /= normalizers[t];
                }
                total += g * weight * step.reward;
                g *= discount;
            }
            (1.0 - discount) * total
        })
        .collect();
    Ok(PerEpisodeEstimates {
        values,
        estimator_tag: if options.trajectory { EstimatorTag::TrajectoryIs } else { EstimatorTag::Pdis },
        range_bound: analytic_range(episodes, target, discount, options)?,
    })
}

/// Mean step-t weight over the episodes still running at step t.
fn step_weight_means(weights: &[Vec<f64>]) -> Vec<f64> {
    let longest = weights.iter().map(Vec::len).max().unwrap_or(0);
    (0..longest)
        .map(|t| {
            let alive: Vec<f64> = weights.iter().filter_map(|w| w.get(t).copied()).collect();
            let mean = alive.iter().sum::<f64>() / alive.len() as f64;
            if mean > 0.0 { mean } else { 1.0 }
        })
        .collect()
}

/// Doubly-robust estimate with `Q^` and `V^ = E_pi Q^` from `model`.
pub fn dr_estimate(episodes: &[Episode], target: &Policy, model: &EmpiricalModel) -> Result<PerEpisodeEstimates> {
    let q = dm_q(model, target)?;
    dr_estimate_with_q(episodes, target, &q, model.discount())
}

/// Recursive DR, `DR_t = V^(s_t) + rho_t (r_t + gamma DR_{t+1} - Q^(s_t, a_t))`,
/// reported as `(1 - gamma) DR_0`. Evaluated in the equivalent forward form
/// `sum_t gamma^t [w_t r_t - (w_t Q^_t - w_{t-1} V^_t)]`.
pub fn dr_estimate_with_q(episodes: &[Episode], target: &Policy, q: &[f64], discount: f64) -> Result<PerEpisodeEstimates> {
    if episodes.is_empty() {
        return Err(OpeError::EmptyInput("no episodes"));
    }
    let (ns, na) = (target.num_states(), target.num_actions());
    if q.len() != ns * na {
        return Err(OpeError::DimensionMismatch(format!("Q has {} entries, policy is {ns}x{na}", q.len())));
    }
    let v: Vec<f64> = (0..ns)
        .map(|s| (0..na).map(|a| target.prob(s, a) * q[s * na + a]).sum())
        .collect();
    let weights = all_weights(episodes, target, None)?;
    let values = episodes
        .iter()
        .zip(&weights)
        .map(|(ep, w)| {
            let mut total = 0.0;
            let mut g = 1.0;
            let mut prev = 1.0;
            for (t, step) in ep.steps.iter().enumerate() {
                total += g * w[t] * step.reward;
                total -= g * (w[t] * q[step.state * na + step.action] - prev * v[step.state]);
                prev = w[t];
                g *= discount;
            }
            (1.0 - discount) * total
        })
        .collect();
    Ok(PerEpisodeEstimates {
        values,
        estimator_tag: EstimatorTag::Dr,
        range_bound: f64::INFINITY,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(OpeError::InvalidArgument(format!("alpha = {alpha} outside (0, 1)")))
    }
}

fn finite_range(est: &PerEpisodeEstimates) -> Result<f64> {
    if est.range_bound.is_finite() {
        Ok(est.range_bound)
    } else {
        Err(OpeError::InvalidArgument("estimates have no finite range bound".into()))
    }
}

fn symmetric(mean: f64, half_width: f64, alpha: f64, replicas: usize) -> ConfidenceInterval {
    ConfidenceInterval {
        lower: mean - half_width,
        upper: mean + half_width,
        point_estimate: mean,
        confidence: 1.0 - alpha,
        replicas,
    }
}

/// `mean +- range sqrt(ln(2/alpha) / (2m))`.
pub fn hoeffding_interval(est: &PerEpisodeEstimates, alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    if est.is_empty() {
        return Err(OpeError::EmptyInput("no estimates"));
    }
    let range = finite_range(est)?;
    let m = est.len() as f64;
    Ok(symmetric(est.mean(), range * ((2.0 / alpha).ln() / (2.0 * m)).sqrt(), alpha, 0))
}

/// Maurer-Pontil: `mean +- [sqrt(2 V ln(2/alpha) / m) + 7 range ln(2/alpha) / (3 (m - 1))]`.
pub fn empirical_bernstein_interval(est: &PerEpisodeEstimates, alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    if est.len() < 2 {
        return Err(OpeError::InvalidArgument("empirical Bernstein needs at least 2 estimates".into()));
    }
    let range = finite_range(est)?;
    let m = est.len() as f64;
    let log_term = (2.0 / alpha).ln();
    let half = (2.0 * est.sample_variance() * log_term / m).sqrt() + 7.0 * range * log_term / (3.0 * (m - 1.0));
    Ok(symmetric(est.mean(), half, alpha, 0))
}

/// `t_{1-alpha/2, m-1}` from the Student-t inverse CDF.
pub fn student_t_quantile(p: f64, dof: f64) -> Result<f64> {
    let dist = StudentsT::new(0.0, 1.0, dof).map_err(|e| OpeError::InvalidArgument(e.to_string()))?;
    Ok(dist.inverse_cdf(p))
}

/// `mean +- t_{1-alpha/2, m-1} s / sqrt(m)`.
pub fn student_t_interval(est: &PerEpisodeEstimates, alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    if est.len() < 2 {
        return Err(OpeError::InvalidArgument("Student-t needs at least 2 estimates".into()));
    }
    let m = est.len() as f64;
    let t = student_t_quantile(1.0 - alpha / 2.0, m - 1.0)?;
    Ok(symmetric(est.mean(), t * est.sample_variance().sqrt() / m.sqrt(), alpha, 0))
}

/// Bootstrap over episodes of the mean per-episode IS estimate.
pub fn is_bootstrap_interval(
    episodes: &[Episode],
    target: &Policy,
    discount: f64,
    options: &IsOptions,
    config: &BootstrapConfig,
) -> Result<ConfidenceInterval> {
    bootstrap_mean(&importance_sampling(episodes, target, discount, options)?.values, config)
}

/// Bootstrap over episodes of the mean per-episode DR estimate, with `Q^` from `model`.
pub fn dr_bootstrap_interval(
    episodes: &[Episode],
    target: &Policy,
    model: &EmpiricalModel,
    config: &BootstrapConfig,
) -> Result<ConfidenceInterval> {
    bootstrap_mean(&dr_estimate(episodes, target, model)?.values, config)
}
