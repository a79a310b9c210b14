use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use ope_core::empirical::PriorSpec;
use ope_core::harness::{emit_report, run_experiment, ExperimentConfig, IntervalSettings, Method};
use ope_core::io::{read_json, read_logged_data, write_episodes};
use ope_core::mdp::{exact_policy_value, sample_episodes, Policy, TabularMdp};
use ope_core::sensitivity::{check_gradients, counterexample_blowup_probe, write_probe_csv, GradientSuite};
use ope_core::{OpeError, Result};

#[derive(Parser)]
#[command(name = "ope", version, about = "Off-policy evaluation with bootstrapped confidence intervals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the exact value of a policy in an MDP.
    Eval {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        gamma: f64,
    },
    /// Confidence interval from logged data, printed as JSON.
    Interval {
        /// Episodes or tuples, one JSON object per line.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1000)]
        b: usize,
        #[arg(long, default_value_t = 0.0)]
        kappa: f64,
        #[arg(long = "noise-coef", default_value_t = ope_core::empirical::DEFAULT_NOISE_COEF)]
        noise_coef: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Target policy file.
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        gamma: f64,
        /// Optional MDP: supplies terminal-state priors and the reward bound.
        #[arg(long)]
        mdp: Option<PathBuf>,
    },
    /// Run a coverage experiment and write the CSV report plus a JSON sidecar.
    Coverage {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Compare closed-form influences with finite differences on random models.
    CheckGrad {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        cases: usize,
        #[arg(long)]
        tol: f64,
        #[arg(long, default_value_t = 0.0)]
        kappa: f64,
    },
    /// Difference quotients on the counterexample chain, as CSV.
    BlowupProbe {
        #[arg(long = "N")]
        n: usize,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001")]
        steps: Vec<f64>,
    },
    /// Sample episodes from an MDP and policy into a JSON Lines file.
    GenData {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        episodes: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn load_mdp(path: &PathBuf, gamma: f64) -> Result<TabularMdp> {
    let mdp = read_json::<TabularMdp>(path)?.with_discount(gamma);
    if let Some(problem) = mdp.validate().first() {
        return Err(OpeError::InvalidArgument(format!("{}: {problem}", path.display())));
    }
    Ok(mdp)
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Eval { mdp, policy, gamma } => {
            let mdp = load_mdp(&mdp, gamma)?;
            let policy: Policy = read_json(&policy)?;
            policy.check_compatible(&mdp)?;
            // 15 significant digits hide last-bit solver noise
            let value: f64 = format!("{:.14e}", exact_policy_value(&mdp, &policy)?).parse().unwrap_or(f64::NAN);
            println!("{value:?}");
        }
        Command::Interval {
            data,
            method,
            alpha,
            b,
            kappa,
            noise_coef,
            seed,
            policy,
            gamma,
            mdp,
        } => {
            let method: Method = method.parse()?;
            let target: Policy = read_json(&policy)?;
            let mdp = mdp.map(|p| load_mdp(&p, gamma)).transpose()?;
            if let Some(m) = &mdp {
                target.check_compatible(m)?;
            }
            let settings = IntervalSettings {
                priors: match &mdp {
                    Some(m) => PriorSpec::with_known_terminals(m),
                    None => PriorSpec::uniform(target.num_states(), target.num_actions()),
                },
                target,
                gamma,
                kappa,
                noise_coef,
                reward_bound: mdp.as_ref().map(|m| m.r_max),
                replicas: b,
            };
            let data = read_logged_data(&data)?;
            let ci = settings.intervals(method, &data, &[alpha], seed)?.remove(0);
            println!("{}", json!({ "lower": ci.lower, "upper": ci.upper, "point": ci.point_estimate }));
        }
        Command::Coverage { config, out, workers } => {
            let config = ExperimentConfig::load(&config)?;
            let run = run_experiment(&config, workers)?;
            emit_report(&run.record, &out)?;
        }
        Command::CheckGrad { seed, cases, tol, kappa } => {
            let mut suite = GradientSuite::new(seed, cases, tol);
            suite.kappa = kappa;
            let report = check_gradients(&suite);
            for case in &report.cases {
                let status = if case.passed { "ok" } else { "FAIL" };
                match &case.failure {
                    Some(msg) => println!("case {:3} {status} {msg}", case.case),
                    None => println!("case {:3} {status} max relative error {:.3e}", case.case, case.max_relative_error),
                }
            }
            println!("max relative error {:.3e}", report.max_relative_error);
            if !report.passed {
                return Ok(ExitCode::from(2));
            }
        }
        Command::BlowupProbe { n, kappa, out, steps } => {
            let rows = counterexample_blowup_probe(n, kappa, &steps)?;
            write_probe_csv(&rows, std::fs::File::create(&out)?)?;
        }
        Command::GenData {
            mdp,
            policy,
            episodes,
            horizon,
            seed,
            out,
        } => {
            let mdp: TabularMdp = read_json(&mdp)?;
            if let Some(problem) = mdp.validate().first() {
                return Err(OpeError::InvalidArgument(problem.to_string()));
            }
            let policy: Policy = read_json(&policy)?;
            policy.check_compatible(&mdp)?;
            write_episodes(&sample_episodes(&mdp, &policy, episodes, horizon, seed)?, &out)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
