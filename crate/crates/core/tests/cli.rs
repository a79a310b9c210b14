use std::path::Path;
use std::process::{Command, Output};

use ope_core::io::write_json;
use ope_core::mdp::{make_frozen_lake, optimal_policy, perturb_policy_epsilon_greedy, Policy, RewardDist, TabularMdp};

fn ope(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ope")).args(args).current_dir(dir).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).trim().to_string()
}

fn all_ones(dir: &Path) {
    let mdp = TabularMdp {
        num_states: 2,
        num_actions: 2,
        transitions: vec![0.5; 8],
        rewards: vec![RewardDist::point(1.0); 4],
        initial_dist: vec![1.0, 0.0],
        discount: 0.9,
        terminal_states: Default::default(),
        r_max: 1.0,
    };
    write_json(&mdp, &dir.join("mdp.json")).unwrap();
    write_json(&Policy::uniform(2, 2), &dir.join("policy.json")).unwrap();
}

#[test]
fn eval_prints_exact_value() {
    let dir = tempfile::tempdir().unwrap();
    all_ones(dir.path());
    let out = ope(&["eval", "--mdp", "mdp.json", "--policy", "policy.json", "--gamma", "0.7"], dir.path());
    assert!(out.status.success());
    assert_eq!(stdout(&out), "1.0");
}

#[test]
fn single_tuple_interval_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    all_ones(dir.path());
    std::fs::write(dir.path().join("data.jsonl"), "{\"s0\":0,\"s\":0,\"a\":1,\"r\":0.5,\"s_next\":1}\n").unwrap();
    let out = ope(
        &[
            "interval", "--data", "data.jsonl", "--method", "dm-boot", "--alpha", "0.1", "--b", "2", "--kappa", "0",
            "--noise-coef", "0.25", "--seed", "3", "--policy", "policy.json", "--gamma", "0.5",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["lower"], v["upper"]);
    assert_eq!(v["lower"], v["point"]);
}

#[test]
fn generated_episodes_feed_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = make_frozen_lake(&ope_core::mdp::FROZEN_LAKE_4X4, ope_core::mdp::DEFAULT_SLIP_PROB, 0.95).unwrap();
    let target = optimal_policy(&mdp).unwrap();
    write_json(&mdp, &dir.path().join("lake.json")).unwrap();
    write_json(&target, &dir.path().join("target.json")).unwrap();
    write_json(&perturb_policy_epsilon_greedy(&target, 0.2).unwrap(), &dir.path().join("behavior.json")).unwrap();
    let gen = ope(
        &[
            "gen-data", "--mdp", "lake.json", "--policy", "behavior.json", "--episodes", "40", "--horizon", "300",
            "--seed", "9", "--out", "eps.jsonl",
        ],
        dir.path(),
    );
    assert!(gen.status.success());
    assert_eq!(std::fs::read_to_string(dir.path().join("eps.jsonl")).unwrap().lines().count(), 40);
    for method in ["dm-boot", "dm-noisy-boot", "is-boot", "dr-boot", "hoeffding", "bernstein", "student-t"] {
        let args = [
            "interval", "--data", "eps.jsonl", "--method", method, "--alpha", "0.1", "--b", "50", "--seed", "1",
            "--policy", "target.json", "--gamma", "0.95", "--mdp", "lake.json",
        ];
        let first = ope(&args, dir.path());
        assert!(first.status.success(), "{method}: {}", String::from_utf8_lossy(&first.stderr));
        let v: serde_json::Value = serde_json::from_str(&stdout(&first)).unwrap();
        assert!(v["lower"].as_f64().unwrap() <= v["upper"].as_f64().unwrap());
        assert_eq!(stdout(&first), stdout(&ope(&args, dir.path())), "{method} is not deterministic");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    all_ones(dir.path());
    let unknown = ope(&["eval", "--mdp", "mdp.json", "--policy", "policy.json", "--gamma", "0.5", "--bogus"], dir.path());
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("Usage"));
    let bad_method = ope(
        &["interval", "--data", "x", "--method", "magic", "--alpha", "0.1", "--policy", "policy.json", "--gamma", "0.5"],
        dir.path(),
    );
    assert_eq!(bad_method.status.code(), Some(1));
    let bad_gamma = ope(&["eval", "--mdp", "mdp.json", "--policy", "policy.json", "--gamma", "1.5"], dir.path());
    assert_eq!(bad_gamma.status.code(), Some(1));
    assert_eq!(ope(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn check_grad_pass_and_fail() {
    let dir = tempfile::tempdir().unwrap();
    let ok = ope(&["check-grad", "--seed", "4", "--cases", "3", "--tol", "1e-3"], dir.path());
    assert!(ok.status.success());
    let strict = ope(&["check-grad", "--seed", "4", "--cases", "3", "--tol", "1e-12"], dir.path());
    assert_eq!(strict.status.code(), Some(2));
}

#[test]
fn blowup_probe_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = ope(&["blowup-probe", "--N", "20", "--kappa", "0", "--out", "probe.csv"], dir.path());
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("probe.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epsilon,quotient,kappa");
    assert_eq!(lines.len(), 4);
    let bad = ope(&["blowup-probe", "--N", "20", "--kappa", "0", "--out", "p.csv", "--steps", "0.01,0.1"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn coverage_writes_report_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"environment":{"kind":"bandit","arm_means":[0.3,0.6]},"behavior_epsilon":0.5,"gamma":0.0,
            "sizes":[20],"methods":["dm-boot","is-boot","hoeffding"],"alphas":[0.1,0.05],"trials":10,
            "replicas":50,"seed":5}"#,
    )
    .unwrap();
    let out = ope(&["coverage", "--config", "cfg.json", "--out", "report.csv", "--workers", "2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
    let record = ope_core::harness::read_record(&dir.path().join("report.json")).unwrap();
    assert_eq!(record.trial_seeds.len(), 10);
    let missing = ope(&["coverage", "--config", "nope.json", "--out", "r.csv"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
}
