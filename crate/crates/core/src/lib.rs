//! Confidence intervals for off-policy evaluation in tabular MDPs.
//!
//! The direct method evaluates a target policy inside the empirical MDP
//! built from logged tuples; Efron's bias-corrected bootstrap turns that
//! (biased) estimate into an interval. Regularization toward priors and
//! noisy-reward augmentation address poor coverage and small samples.
//! Importance-sampling baselines and a seeded coverage harness are included.

pub mod baselines;
pub mod bootstrap;
pub mod dm;
pub mod empirical;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod mdp;
pub mod sensitivity;

pub use error::{OpeError, Result};
