//! Efron's bias-corrected percentile bootstrap over an arbitrary estimator.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::empirical::resample_indices;
use crate::error::{OpeError, Result};

pub const DEFAULT_REPLICAS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    /// `-inf` for an upper one-sided interval.
    pub lower: f64,
    /// `+inf` for a lower one-sided interval.
    pub upper: f64,
    pub point_estimate: f64,
    pub confidence: f64,
    pub replicas: usize,
}

impl ConfidenceInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    #[default]
    Two,
    /// Lower confidence bound only.
    Lower,
    /// Upper confidence bound only.
    Upper,
}

/// How replica estimates are turned into an interval. Only the basic
/// percentile form is implemented; BCa or ABC would slot in here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalStrategy {
    #[default]
    Percentile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub alpha: f64,
    pub replicas: usize,
    pub seed: u64,
    #[serde(default)]
    pub side: Side,
    #[serde(default)]
    pub strategy: IntervalStrategy,
}

impl BootstrapConfig {
    pub fn new(alpha: f64, replicas: usize, seed: u64) -> Self {
        Self {
            alpha,
            replicas,
            seed,
            side: Side::Two,
            strategy: IntervalStrategy::Percentile,
        }
    }

    pub fn with_side(mut self, side: Side) -> Self {
        self.side = side;
        self
    }

    fn check(&self) -> Result<()> {
        if self.replicas < 2 {
            return Err(OpeError::InvalidArgument(format!("need at least 2 replicas, got {}", self.replicas)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(OpeError::InvalidArgument(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

/// Seed for replica `index`: word 0 of ChaCha stream `index` keyed by `master`,
/// so any replica can be regenerated on its own.
pub fn replica_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64);
    rng.next_u64()
}

/// Order statistic with linear interpolation at position `q (m - 1)`.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(OpeError::EmptyInput("quantile of an empty sequence"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(OpeError::InvalidArgument(format!("quantile level {q} outside [0, 1]")));
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        return Ok(sorted[lo]);
    }
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Builds the interval from a point estimate and the replica estimates.
pub fn interval_from_replicas(point: f64, replicas: &[f64], config: &BootstrapConfig) -> Result<ConfidenceInterval> {
    config.check()?;
    let mut diffs: Vec<f64> = replicas.iter().map(|y| y - point).collect();
    diffs.sort_by(f64::total_cmp);
    let alpha = config.alpha;
    let (lower, upper) = match (config.strategy, config.side) {
        (IntervalStrategy::Percentile, Side::Two) => (
            point - quantile_sorted(&diffs, 1.0 - alpha / 2.0)?,
            point - quantile_sorted(&diffs, alpha / 2.0)?,
        ),
        (IntervalStrategy::Percentile, Side::Lower) => (point - quantile_sorted(&diffs, 1.0 - alpha)?, f64::INFINITY),
        (IntervalStrategy::Percentile, Side::Upper) => (f64::NEG_INFINITY, point - quantile_sorted(&diffs, alpha)?),
    };
    Ok(ConfidenceInterval {
        lower,
        upper,
        point_estimate: point,
        confidence: 1.0 - alpha,
        replicas: replicas.len(),
    })
}

/// Evaluates `replica(seed_k)` for `k = 0..b` in parallel and returns the
/// estimates in replica order. The first failing replica (by index) is reported.
pub fn bootstrap_replicas<R>(replica: R, config: &BootstrapConfig) -> Result<Vec<f64>>
where
    R: Fn(u64) -> Result<f64> + Sync,
{
    let results: Vec<Result<f64>> = (0..config.replicas)
        .into_par_iter()
        .map(|k| replica(replica_seed(config.seed, k)))
        .collect();
    results
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            r.map_err(|e| OpeError::Replica {
                replica: k,
                source: Box::new(e),
            })
        })
        .collect()
}

/// General form: the caller supplies the point estimate and a closure that
/// resamples with the given seed and re-evaluates the estimator.
pub fn bootstrap_interval_with<R>(point: f64, replica: R, config: &BootstrapConfig) -> Result<ConfidenceInterval>
where
    R: Fn(u64) -> Result<f64> + Sync,
{
    config.check()?;
    let replicas = bootstrap_replicas(replica, config)?;
    interval_from_replicas(point, &replicas, config)
}

/// `y = F(data)`, `y_k = F(resample(data, seed_k))`, then the quantiles of
/// `y_k - y` are reflected around `y`.
pub fn bootstrap_interval<D, R, F>(data: &D, resample: R, functional: F, config: &BootstrapConfig) -> Result<ConfidenceInterval>
where
    D: Sync,
    R: Fn(&D, u64) -> D + Sync,
    F: Fn(&D) -> Result<f64> + Sync,
{
    config.check()?;
    let point = functional(data)?;
    bootstrap_interval_with(point, |seed| functional(&resample(data, seed)), config)
}

/// Resamples a slice of per-unit values with replacement and bootstraps their mean.
pub fn bootstrap_mean(values: &[f64], config: &BootstrapConfig) -> Result<ConfidenceInterval> {
    if values.is_empty() {
        return Err(OpeError::EmptyInput("bootstrap over no values"));
    }
    let mean = |idx: &mut dyn Iterator<Item = f64>| idx.sum::<f64>() / values.len() as f64;
    let point = mean(&mut values.iter().copied());
    bootstrap_interval_with(
        point,
        |seed| {
            let idx = resample_indices(values.len(), values.len(), seed);
            Ok(mean(&mut idx.into_iter().map(|j| values[j])))
        },
        config,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dm::dm_value;
    use crate::empirical::{build_empirical_model, resample_tuples, LoggedTuple, PriorSpec, TupleDataset};
    use crate::mdp::Policy;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5).unwrap(), 2.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 1.0).unwrap(), 3.0);
        assert_eq!(quantile(&[10.0, 20.0], 0.25).unwrap(), 12.5);
        assert!(quantile(&[], 0.5).is_err());
        assert!(quantile(&[1.0], 1.5).is_err());
    }

    #[test]
    fn config_preconditions() {
        assert!(bootstrap_mean(&[1.0, 2.0], &BootstrapConfig::new(0.1, 1, 0)).is_err());
        assert!(bootstrap_mean(&[1.0, 2.0], &BootstrapConfig::new(0.0, 10, 0)).is_err());
        assert!(bootstrap_mean(&[1.0, 2.0], &BootstrapConfig::new(1.0, 10, 0)).is_err());
    }

    #[test]
    fn single_tuple_gives_point_interval() {
        let data = TupleDataset::new(1, 1, vec![LoggedTuple { s0: 0, s: 0, a: 0, r: 0.7, s_next: 0 }]).unwrap();
        let priors = PriorSpec::uniform(1, 1);
        let pi = Policy::uniform(1, 1);
        let ci = bootstrap_interval(
            &data,
            resample_tuples,
            |d: &TupleDataset| dm_value(&build_empirical_model(d, &priors, 0.0, 0.9)?, &pi),
            &BootstrapConfig::new(0.1, 50, 3),
        )
        .unwrap();
        assert_eq!(ci.lower, ci.point_estimate);
        assert_eq!(ci.upper, ci.point_estimate);
        assert!((ci.point_estimate - 0.7).abs() < 1e-12);
    }

    #[test]
    fn constant_functional() {
        let values: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let ci = bootstrap_interval(&values, |v, _| v.clone(), |_| Ok(7.0), &BootstrapConfig::new(0.05, 20, 1)).unwrap();
        assert_eq!((ci.lower, ci.upper), (7.0, 7.0));
    }

    #[test]
    fn replica_failure_names_the_replica() {
        let cfg = BootstrapConfig::new(0.1, 10, 0);
        let err = bootstrap_interval_with(0.0, |seed| if seed == replica_seed(0, 4) { Err(OpeError::EmptyInput("x")) } else { Ok(1.0) }, &cfg)
            .unwrap_err();
        assert!(matches!(err, OpeError::Replica { replica: 4, .. }));
    }

    #[test]
    fn one_sided_bounds() {
        let values: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let two = bootstrap_mean(&values, &BootstrapConfig::new(0.2, 400, 9)).unwrap();
        let lower = bootstrap_mean(&values, &BootstrapConfig::new(0.1, 400, 9).with_side(Side::Lower)).unwrap();
        let upper = bootstrap_mean(&values, &BootstrapConfig::new(0.1, 400, 9).with_side(Side::Upper)).unwrap();
        assert_eq!(lower.upper, f64::INFINITY);
        assert_eq!(upper.lower, f64::NEG_INFINITY);
        // one-sided at alpha uses the same quantiles as two-sided at 2 alpha
        assert_eq!(lower.lower, two.lower);
        assert_eq!(upper.upper, two.upper);
    }

    #[test]
    fn bernoulli_mean_coverage() {
        // 1000 outer trials of a 500-draw Bernoulli(0.5) mean; binomial sd of the
        // coverage estimate is about 0.0095
        let covered: usize = (0..1000u64)
            .into_par_iter()
            .map(|trial| {
                let mut rng = ChaCha8Rng::seed_from_u64(10_000 + trial);
                let draws: Vec<f64> = (0..500).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
                let ci = bootstrap_mean(&draws, &BootstrapConfig::new(0.1, 2000, trial)).unwrap();
                usize::from(ci.contains(0.5))
            })
            .sum();
        let coverage = covered as f64 / 1000.0;
        assert!((0.87..=0.93).contains(&coverage), "coverage {coverage}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn shift_equivariance(values in prop::collection::vec(-5.0f64..5.0, 2..40), c in -100.0f64..100.0, seed: u64) {
            let cfg = BootstrapConfig::new(0.1, 64, seed);
            let mean = |v: &Vec<f64>| Ok(v.iter().sum::<f64>() / v.len() as f64);
            let resample = |v: &Vec<f64>, s| resample_indices(v.len(), v.len(), s).into_iter().map(|j| v[j]).collect();
            let base = bootstrap_interval(&values, resample, mean, &cfg).unwrap();
            let shifted = bootstrap_interval(&values, resample, |v: &Vec<f64>| Ok(mean(v)? + c), &cfg).unwrap();
            let tol = 1e-9 * (1.0 + c.abs());
            prop_assert!((shifted.lower - base.lower - c).abs() < tol);
            prop_assert!((shifted.upper - base.upper - c).abs() < tol);
        }

        #[test]
        fn nesting_in_alpha(values in prop::collection::vec(-5.0f64..5.0, 2..40), seed: u64, a in 0.01f64..0.5, b in 0.01f64..0.5) {
            let (small, large) = if a < b { (a, b) } else { (b, a) };
            let wide = bootstrap_mean(&values, &BootstrapConfig::new(small, 64, seed)).unwrap();
            let narrow = bootstrap_mean(&values, &BootstrapConfig::new(large, 64, seed)).unwrap();
            prop_assert!(wide.lower <= narrow.lower && narrow.upper <= wide.upper);
            prop_assert!(wide.lower <= wide.upper);
        }

        #[test]
        fn deterministic_given_seed(values in prop::collection::vec(-5.0f64..5.0, 1..40), seed: u64) {
            let cfg = BootstrapConfig::new(0.1, 32, seed);
            let a = bootstrap_mean(&values, &cfg).unwrap();
            let b = bootstrap_mean(&values, &cfg).unwrap();
            prop_assert_eq!(a.lower.to_bits(), b.lower.to_bits());
            prop_assert_eq!(a.upper.to_bits(), b.upper.to_bits());
        }
    }
}
