//! Coverage experiments: sample many datasets from a known MDP, build an
//! interval per method on each, and count how often the true value is inside.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{
    dr_estimate, empirical_bernstein_interval, hoeffding_interval, importance_sampling, student_t_interval,
    IsOptions, PerEpisodeEstimates,
};
use crate::bootstrap::{bootstrap_replicas, interval_from_replicas, quantile, BootstrapConfig, ConfidenceInterval};
use crate::dm::dm_value;
use crate::empirical::{
    augment_noisy_rewards, build_empirical_model, noise_scale_with_coef, resample_augmented, resample_indices,
    resample_tuples, tuples_from_episodes, AugmentedDraw, PriorSpec, TupleDataset, DEFAULT_NOISE_COEF,
};
use crate::error::{OpeError, Result};
use crate::io::{read_json, write_json, LoggedData};
use crate::mdp::{
    exact_policy_value, make_bernoulli_bandit, make_frozen_lake, optimal_policy, perturb_policy_epsilon_greedy,
    sample_episodes, Episode, Policy, TabularMdp, DEFAULT_SLIP_PROB, FROZEN_LAKE_4X4,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    FrozenLake {
        /// Defaults to the standard 4x4 map.
        #[serde(default)]
        map: Option<Vec<String>>,
        #[serde(default = "default_slip")]
        slip_prob: f64,
    },
    Bandit {
        arm_means: Vec<f64>,
    },
    MdpFile {
        path: PathBuf,
    },
    Inline {
        mdp: TabularMdp,
    },
}

fn default_slip() -> f64 {
    DEFAULT_SLIP_PROB
}

impl EnvironmentSpec {
    pub fn build(&self, discount: f64) -> Result<TabularMdp> {
        let mdp = match self {
            EnvironmentSpec::FrozenLake { map, slip_prob } => match map {
                Some(rows) => make_frozen_lake(rows, *slip_prob, discount)?,
                None => make_frozen_lake(&FROZEN_LAKE_4X4, *slip_prob, discount)?,
            },
            EnvironmentSpec::Bandit { arm_means } => make_bernoulli_bandit(arm_means, discount)?,
            EnvironmentSpec::MdpFile { path } => read_json::<TabularMdp>(path)
                .map_err(|e| OpeError::Config(format!("{}: {e}", path.display())))?
                .with_discount(discount),
            EnvironmentSpec::Inline { mdp } => mdp.clone().with_discount(discount),
        };
        let problems = mdp.validate();
        if let Some(first) = problems.first() {
            return Err(OpeError::Config(format!("environment is not a valid MDP: {first}")));
        }
        Ok(mdp)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySource {
    /// Greedy optimal policy by policy iteration.
    #[default]
    Optimal,
    File {
        path: PathBuf,
    },
    Inline {
        policy: Policy,
    },
}

impl PolicySource {
    pub fn resolve(&self, mdp: &TabularMdp) -> Result<Policy> {
        let policy = match self {
            PolicySource::Optimal => optimal_policy(mdp)?,
            PolicySource::File { path } => {
                read_json(path).map_err(|e| OpeError::Config(format!("{}: {e}", path.display())))?
            }
            PolicySource::Inline { policy } => policy.clone(),
        };
        policy.check_compatible(mdp)?;
        Ok(policy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "dm-boot")]
    DmBoot,
    #[serde(rename = "dm-noisy-boot")]
    DmNoisyBoot,
    #[serde(rename = "is-boot")]
    IsBoot,
    #[serde(rename = "dr-boot")]
    DrBoot,
    #[serde(rename = "hoeffding")]
    Hoeffding,
    #[serde(rename = "bernstein")]
    Bernstein,
    #[serde(rename = "student-t")]
    StudentT,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::DmBoot,
        Method::DmNoisyBoot,
        Method::IsBoot,
        Method::DrBoot,
        Method::Hoeffding,
        Method::Bernstein,
        Method::StudentT,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::DmBoot => "dm-boot",
            Method::DmNoisyBoot => "dm-noisy-boot",
            Method::IsBoot => "is-boot",
            Method::DrBoot => "dr-boot",
            Method::Hoeffding => "hoeffding",
            Method::Bernstein => "bernstein",
            Method::StudentT => "student-t",
        }
    }

    pub fn is_bootstrap(self) -> bool {
        matches!(self, Method::DmBoot | Method::DmNoisyBoot | Method::IsBoot | Method::DrBoot)
    }
}

impl std::str::FromStr for Method {
    type Err = OpeError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| OpeError::InvalidArgument(format!("unknown method {s:?}")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    #[serde(default)]
    pub target: PolicySource,
    #[serde(default = "default_behavior_epsilon")]
    pub behavior_epsilon: f64,
    pub gamma: f64,
    /// Episodes per dataset.
    pub sizes: Vec<usize>,
    pub methods: Vec<Method>,
    pub alphas: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "default_noise_coef")]
    pub noise_coef: f64,
    #[serde(default = "default_max_horizon")]
    pub max_horizon: usize,
    pub seed: u64,
}

fn default_behavior_epsilon() -> f64 {
    0.2
}
fn default_trials() -> usize {
    200
}
fn default_replicas() -> usize {
    crate::bootstrap::DEFAULT_REPLICAS
}
fn default_noise_coef() -> f64 {
    DEFAULT_NOISE_COEF
}
fn default_max_horizon() -> usize {
    10_000
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(OpeError::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.sizes.contains(&0) {
            return bad("dataset sizes must be positive".into());
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return bad(format!("alpha {a} outside (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1)", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.behavior_epsilon) {
            return bad(format!("behavior_epsilon {} outside [0, 1]", self.behavior_epsilon));
        }
        if self.replicas < 2 && self.methods.iter().any(|m| m.is_bootstrap()) {
            return bad("bootstrap methods need at least 2 replicas".into());
        }
        if !(self.kappa >= 0.0) || !(self.noise_coef >= 0.0) {
            return bad("kappa and noise_coef must be nonnegative".into());
        }
        if self.max_horizon == 0 {
            return bad("max_horizon must be positive".into());
        }
        let needs_two = self.methods.iter().any(|m| matches!(m, Method::Bernstein | Method::StudentT));
        if needs_two && self.sizes.iter().any(|&n| n < 2) {
            return bad("bernstein and student-t need at least 2 episodes per dataset".into());
        }
        Ok(())
    }

    /// Reads a config and resolves relative file references against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut config: ExperimentConfig =
            read_json(path).map_err(|e| OpeError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let EnvironmentSpec::MdpFile { path } = &mut config.environment {
            rebase(path);
        }
        if let PolicySource::File { path } = &mut config.target {
            rebase(path);
        }
        config.validate()?;
        Ok(config)
    }

    fn environment_id(&self) -> String {
        serde_json::to_string(&self.environment).unwrap_or_default()
    }
}

/// `sha256(parts)` truncated to 64 bits.
fn hash_seed(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Dataset seed for one trial, from (master seed, environment, n, trial index).
pub fn trial_seed(master: u64, environment_id: &str, n: usize, trial: usize) -> u64 {
    hash_seed(&[
        &master.to_le_bytes(),
        environment_id.as_bytes(),
        &(n as u64).to_le_bytes(),
        &(trial as u64).to_le_bytes(),
    ])
}

/// Bootstrap seed for one method within a trial.
pub fn method_seed(trial_seed: u64, method: Method) -> u64 {
    hash_seed(&[&trial_seed.to_le_bytes(), method.name().as_bytes()])
}

/// Resolved environment, policies and true value for a config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub mdp: TabularMdp,
    pub target: Policy,
    pub behavior: Policy,
    pub true_value: f64,
    environment_id: String,
}

impl Experiment {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mdp = config.environment.build(config.gamma)?;
        let target = config.target.resolve(&mdp)?;
        let behavior = perturb_policy_epsilon_greedy(&target, config.behavior_epsilon)?;
        let true_value = exact_policy_value(&mdp, &target)?;
        Ok(Self {
            config: config.clone(),
            mdp,
            target,
            behavior,
            true_value,
            environment_id: config.environment_id(),
        })
    }

    pub fn trial_seed(&self, n: usize, trial: usize) -> u64 {
        trial_seed(self.config.seed, &self.environment_id, n, trial)
    }

    pub fn priors(&self) -> PriorSpec {
        PriorSpec::with_known_terminals(&self.mdp)
    }

    pub fn settings(&self) -> IntervalSettings {
        IntervalSettings {
            target: self.target.clone(),
            gamma: self.config.gamma,
            priors: self.priors(),
            kappa: self.config.kappa,
            noise_coef: self.config.noise_coef,
            reward_bound: Some(self.mdp.r_max),
            replicas: self.config.replicas,
        }
    }

    /// Runs every method on the dataset of trial `trial` at size `n`.
    pub fn run_trial(&self, n: usize, trial: usize) -> Result<TrialOutcome> {
        let seed = self.trial_seed(n, trial);
        let episodes = sample_episodes(&self.mdp, &self.behavior, n, self.config.max_horizon, seed)?;
        let settings = self.settings();
        let data = LoggedData::Episodes(episodes);
        let intervals = self
            .config
            .methods
            .iter()
            .map(|&method| {
                let cis = settings.intervals(method, &data, &self.config.alphas, method_seed(seed, method))?;
                Ok(cis.into_iter().map(|c| [c.lower, c.upper]).collect())
            })
            .collect::<Result<Vec<Vec<[f64; 2]>>>>()?;
        Ok(TrialOutcome { n, trial, seed, intervals })
    }
}

/// What a method needs besides the data.
#[derive(Debug, Clone)]
pub struct IntervalSettings {
    pub target: Policy,
    pub gamma: f64,
    pub priors: PriorSpec,
    pub kappa: f64,
    pub noise_coef: f64,
    /// Bound on |r| for the concentration baselines; the observed maximum when absent.
    pub reward_bound: Option<f64>,
    pub replicas: usize,
}

impl IntervalSettings {
    fn is_options(&self) -> IsOptions {
        IsOptions {
            reward_bound: self.reward_bound,
            ..Default::default()
        }
    }

    fn tuples(&self, data: &LoggedData) -> Result<TupleDataset> {
        let (ns, na) = (self.target.num_states(), self.target.num_actions());
        match data {
            LoggedData::Episodes(episodes) => tuples_from_episodes(episodes, ns, na),
            LoggedData::Tuples(tuples) => TupleDataset::new(ns, na, tuples.clone()),
        }
    }

    fn episodes<'a>(&self, method: Method, data: &'a LoggedData) -> Result<&'a [Episode]> {
        match data {
            LoggedData::Episodes(episodes) => Ok(episodes),
            LoggedData::Tuples(_) => Err(OpeError::InvalidArgument(format!(
                "{method} needs episodes with behavior probabilities, not tuples"
            ))),
        }
    }

    fn dm(&self, data: &TupleDataset) -> Result<f64> {
        dm_value(&build_empirical_model(data, &self.priors, self.kappa, self.gamma)?, &self.target)
    }

    /// One interval per alpha. Bootstrap replicas are shared across alphas.
    pub fn intervals(&self, method: Method, data: &LoggedData, alphas: &[f64], seed: u64) -> Result<Vec<ConfidenceInterval>> {
        let boot = |point: f64, replicas: Vec<f64>| -> Result<Vec<ConfidenceInterval>> {
            alphas
                .iter()
                .map(|&alpha| interval_from_replicas(point, &replicas, &BootstrapConfig::new(alpha, self.replicas, seed)))
                .collect()
        };
        let cfg = BootstrapConfig::new(alphas.first().copied().unwrap_or(0.1), self.replicas, seed);
        let mean_boot = |est: PerEpisodeEstimates| -> Result<Vec<ConfidenceInterval>> {
            let values = est.values;
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let replicas = bootstrap_replicas(
                |s| {
                    let idx = resample_indices(values.len(), values.len(), s);
                    Ok(idx.iter().map(|&j| values[j]).sum::<f64>() / values.len() as f64)
                },
                &cfg,
            )?;
            boot(mean, replicas)
        };
        let pdis = || importance_sampling(self.episodes(method, data)?, &self.target, self.gamma, &self.is_options());
        let concentration = |f: fn(&PerEpisodeEstimates, f64) -> Result<ConfidenceInterval>| {
            let est = pdis()?;
            alphas.iter().map(|&a| f(&est, a)).collect::<Result<Vec<_>>>()
        };
        match method {
            Method::DmBoot => {
                let tuples = self.tuples(data)?;
                let point = self.dm(&tuples)?;
                let replicas = bootstrap_replicas(|s| self.dm(&resample_tuples(&tuples, s)), &cfg)?;
                boot(point, replicas)
            }
            Method::DmNoisyBoot => {
                let tuples = self.tuples(data)?;
                let aug = augment_noisy_rewards(&tuples, noise_scale_with_coef(&tuples, self.noise_coef))?;
                let point = self.dm(&aug.materialize())?;
                let replicas =
                    bootstrap_replicas(|s| self.dm(&resample_augmented(&aug, AugmentedDraw::BaseSize, s)), &cfg)?;
                boot(point, replicas)
            }
            Method::IsBoot => mean_boot(pdis()?),
            Method::DrBoot => {
                let tuples = self.tuples(data)?;
                let model = build_empirical_model(&tuples, &self.priors, self.kappa, self.gamma)?;
                mean_boot(dr_estimate(self.episodes(method, data)?, &self.target, &model)?)
            }
            Method::Hoeffding => concentration(hoeffding_interval),
            Method::Bernstein => concentration(empirical_bernstein_interval),
            Method::StudentT => concentration(student_t_interval),
        }
    }
}

/// Intervals from one dataset: `intervals[method][alpha] = [lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub intervals: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub method: Method,
    pub n: usize,
    pub alpha: f64,
    pub coverage: f64,
    pub covered: usize,
    pub mean_width: f64,
    pub median_lower: f64,
    pub median_upper: f64,
    pub trials: usize,
    pub true_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub true_value: f64,
    pub rows: Vec<CoverageRow>,
}

impl CoverageReport {
    pub fn row(&self, method: Method, n: usize, alpha: f64) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.method == method && r.n == n && r.alpha == alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSeed {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
}

/// Everything needed to reproduce a run; written as the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub config: ExperimentConfig,
    pub trial_seeds: Vec<TrialSeed>,
    pub report: CoverageReport,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub record: ExperimentRecord,
    pub outcomes: Vec<TrialOutcome>,
}

/// Runs the experiment on `workers` threads (the global pool when `None`).
/// Results do not depend on the worker count.
pub fn run_experiment(config: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentRun> {
    let experiment = Experiment::prepare(config)?;
    let jobs: Vec<(usize, usize)> = config
        .sizes
        .iter()
        .flat_map(|&n| (0..config.trials).map(move |t| (n, t)))
        .collect();
    let run = || -> Vec<Result<TrialOutcome>> {
        jobs.par_iter().map(|&(n, t)| experiment.run_trial(n, t)).collect()
    };
    let results = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| OpeError::InvalidArgument(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    let outcomes = results.into_iter().collect::<Result<Vec<_>>>()?;
    let report = summarize(&experiment, &outcomes)?;
    let trial_seeds = outcomes
        .iter()
        .map(|o| TrialSeed { n: o.n, trial: o.trial, seed: o.seed })
        .collect();
    Ok(ExperimentRun {
        record: ExperimentRecord {
            config: config.clone(),
            trial_seeds,
            report,
        },
        outcomes,
    })
}

pub fn run_coverage_experiment(config: &ExperimentConfig) -> Result<CoverageReport> {
    Ok(run_experiment(config, None)?.record.report)
}

/// Re-runs a single trial from a config, as recorded in a sidecar.
pub fn replay_trial(config: &ExperimentConfig, n: usize, trial: usize) -> Result<TrialOutcome> {
    Experiment::prepare(config)?.run_trial(n, trial)
}

fn summarize(experiment: &Experiment, outcomes: &[TrialOutcome]) -> Result<CoverageReport> {
    let config = &experiment.config;
    let truth = experiment.true_value;
    let mut rows = Vec::new();
    for (mi, &method) in config.methods.iter().enumerate() {
        for &n in &config.sizes {
            for (ai, &alpha) in config.alphas.iter().enumerate() {
                let cells: Vec<[f64; 2]> = outcomes
                    .iter()
                    .filter(|o| o.n == n)
                    .map(|o| o.intervals[mi][ai])
                    .collect();
                let covered = cells.iter().filter(|[lo, hi]| *lo <= truth && truth <= *hi).count();
                let trials = cells.len();
                let lowers: Vec<f64> = cells.iter().map(|c| c[0]).collect();
                let uppers: Vec<f64> = cells.iter().map(|c| c[1]).collect();
                rows.push(CoverageRow {
                    method,
                    n,
                    alpha,
                    coverage: covered as f64 / trials as f64,
                    covered,
                    mean_width: cells.iter().map(|[lo, hi]| hi - lo).sum::<f64>() / trials as f64,
                    median_lower: quantile(&lowers, 0.5)?,
                    median_upper: quantile(&uppers, 0.5)?,
                    trials,
                    true_value: truth,
                });
            }
        }
    }
    Ok(CoverageReport { true_value: truth, rows })
}

pub const CSV_HEADER: [&str; 7] = ["method", "n", "alpha", "coverage", "mean_width", "trials", "true_value"];

/// Renders `x` with six significant digits.
pub fn six_significant(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exponent = x.abs().log10().floor() as i32;
    if !(-5..=15).contains(&exponent) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - exponent).max(0) as usize;
    let text = format!("{x:.decimals$}");
    // rounding can carry into a new digit (9.999995 -> 10.00000)
    let reparsed: f64 = text.parse().unwrap_or(x);
    if reparsed.abs().log10().floor() as i32 != exponent && decimals > 0 {
        let decimals = decimals - 1;
        return format!("{x:.decimals$}");
    }
    text
}

/// CSV report; the sidecar `<out>.json` holds the config, seeds and full report.
pub fn emit_report(record: &ExperimentRecord, csv_path: &Path) -> Result<PathBuf> {
    let mut writer = csv::Writer::from_path(csv_path)?;
    writer.write_record(CSV_HEADER)?;
    for row in &record.report.rows {
        writer.write_record([
            row.method.name().to_string(),
            row.n.to_string(),
            six_significant(row.alpha),
            six_significant(row.coverage),
            six_significant(row.mean_width),
            row.trials.to_string(),
            six_significant(row.true_value),
        ])?;
    }
    writer.flush()?;
    let sidecar = sidecar_path(csv_path);
    write_json(record, &sidecar)?;
    Ok(sidecar)
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn read_record(sidecar: &Path) -> Result<ExperimentRecord> {
    read_json(sidecar)
}

/// Parsed CSV row, with the precision the CSV carries.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CsvRow {
    pub method: Method,
    pub n: usize,
    pub alpha: f64,
    pub coverage: f64,
    pub mean_width: f64,
    pub trials: usize,
    pub true_value: f64,
}

pub fn read_report_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<std::result::Result<Vec<CsvRow>, _>>()?)
}
