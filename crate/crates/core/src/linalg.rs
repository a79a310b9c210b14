//! Exact evaluation of a fixed policy on a dense tabular model.
//!
//! A policy collapses the state-action model onto a Markov chain over
//! states, `T_pi(s'|s) = sum_a pi(a|s) T(s'|s,a)`. Values solve
//! `(I - gamma T_pi) V = r_pi`; the discounted visitation solves
//! `(I - gamma T_pi)^T d = (1 - gamma) mu0`. Both systems share the chain and
//! are `|S| x |S|` instead of `|S||A| x |S||A|`.

use nalgebra::{DMatrix, DVector};

use crate::error::{OpeError, Result};
use crate::mdp::Policy;

/// Above this many states the dense LU is replaced by fixed-point iteration.
pub const DIRECT_SOLVE_MAX_STATES: usize = 4096;

const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Auto,
    DenseLu,
    Iterative,
}

/// Borrowed view of a tabular model: row-major `transitions[(s*A + a)*S + s']`,
/// `mean_reward[s*A + a]`, `initial[s]`.
#[derive(Debug, Clone, Copy)]
pub struct ModelView<'a> {
    pub num_states: usize,
    pub num_actions: usize,
    pub transitions: &'a [f64],
    pub mean_reward: &'a [f64],
    pub initial: &'a [f64],
    pub discount: f64,
}

/// Everything the direct solve produces for one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// `Q(s,a)`, unnormalized (sum of discounted rewards).
    pub q: Vec<f64>,
    /// `V(s) = E_{a~pi(s)} Q(s,a)`.
    pub v: Vec<f64>,
    /// Discounted on-policy distribution over `(s,a)`, sums to one.
    pub visitation: Vec<f64>,
    /// `(1 - gamma) * E_{mu0}[V]`.
    pub value: f64,
}

pub fn evaluate(model: &ModelView<'_>, policy: &Policy, method: SolveMethod) -> Result<Evaluation> {
    let ns = model.num_states;
    let na = model.num_actions;
    if policy.num_states() != ns || policy.num_actions() != na {
        return Err(OpeError::DimensionMismatch(format!(
            "policy is {}x{}, model is {}x{}",
            policy.num_states(),
            policy.num_actions(),
            ns,
            na
        )));
    }
    if model.transitions.len() != ns * na * ns
        || model.mean_reward.len() != ns * na
        || model.initial.len() != ns
    {
        return Err(OpeError::DimensionMismatch(
            "model tables do not match declared sizes".into(),
        ));
    }
    let gamma = model.discount;

    let mut chain = vec![0.0; ns * ns];
    let mut reward = vec![0.0; ns];
    for s in 0..ns {
        for a in 0..na {
            let p = policy.prob(s, a);
            if p == 0.0 {
                continue;
            }
            let sa = s * na + a;
            reward[s] += p * model.mean_reward[sa];
            let row = &model.transitions[sa * ns..(sa + 1) * ns];
            for (dst, &t) in chain[s * ns..(s + 1) * ns].iter_mut().zip(row) {
                *dst += p * t;
            }
        }
    }

    let use_lu = match method {
        SolveMethod::Auto => ns <= DIRECT_SOLVE_MAX_STATES,
        SolveMethod::DenseLu => true,
        SolveMethod::Iterative => false,
    };
    let start: Vec<f64> = model.initial.iter().map(|&m| (1.0 - gamma) * m).collect();
    let (v, state_visits) = if use_lu {
        (
            lu_solve(&chain, ns, gamma, &reward, false)?,
            lu_solve(&chain, ns, gamma, &start, true)?,
        )
    } else {
        (
            iterate(&chain, ns, gamma, &reward, false)?,
            iterate(&chain, ns, gamma, &start, true)?,
        )
    };

    let mut q = vec![0.0; ns * na];
    let mut visitation = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let sa = s * na + a;
            let row = &model.transitions[sa * ns..(sa + 1) * ns];
            let next: f64 = row.iter().zip(&v).map(|(t, vv)| t * vv).sum();
            q[sa] = model.mean_reward[sa] + gamma * next;
            visitation[sa] = state_visits[s] * policy.prob(s, a);
        }
    }
    let value = (1.0 - gamma) * model.initial.iter().zip(&v).map(|(m, vv)| m * vv).sum::<f64>();
    Ok(Evaluation {
        q,
        v,
        visitation,
        value,
    })
}

/// Solves `(I - gamma C) x = b`, or the transposed system when `transpose`.
fn lu_solve(chain: &[f64], ns: usize, gamma: f64, rhs: &[f64], transpose: bool) -> Result<Vec<f64>> {
    let system = DMatrix::from_fn(ns, ns, |i, j| {
        let c = if transpose { chain[j * ns + i] } else { chain[i * ns + j] };
        let id = if i == j { 1.0 } else { 0.0 };
        id - gamma * c
    });
    let b = DVector::from_column_slice(rhs);
    let x = system
        .clone()
        .lu()
        .solve(&b)
        .ok_or_else(|| OpeError::SolverFailure("singular policy system".into()))?;
    let residual = (&system * &x - &b).amax();
    let scale = b.amax().max(1.0);
    if !residual.is_finite() || residual > RESIDUAL_TOL * scale {
        return Err(OpeError::SolverFailure(format!(
            "relative residual {:e} exceeds {:e}",
            residual / scale,
            RESIDUAL_TOL
        )));
    }
    Ok(x.iter().copied().collect())
}

fn iterate(chain: &[f64], ns: usize, gamma: f64, rhs: &[f64], transpose: bool) -> Result<Vec<f64>> {
    const MAX_ITERS: usize = 10_000_000;
    let mut x = rhs.to_vec();
    let mut next = vec![0.0; ns];
    let scale = rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for _ in 0..MAX_ITERS {
        if transpose {
            next.copy_from_slice(rhs);
            for i in 0..ns {
                let xi = x[i];
                if xi == 0.0 {
                    continue;
                }
                for (j, c) in chain[i * ns..(i + 1) * ns].iter().enumerate() {
                    next[j] += gamma * c * xi;
                }
            }
        } else {
            for i in 0..ns {
                let row = &chain[i * ns..(i + 1) * ns];
                next[i] = rhs[i] + gamma * row.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();
            }
        }
        let change = x
            .iter()
            .zip(&next)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut x, &mut next);
        // the fixed point is within gamma/(1-gamma) * change of the iterate
        if change * gamma <= RESIDUAL_TOL * scale * (1.0 - gamma) {
            return Ok(x);
        }
    }
    Err(OpeError::NonConvergence {
        max_iters: MAX_ITERS,
        last_change: f64::NAN,
    })
}
