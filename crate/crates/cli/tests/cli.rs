use std::path::Path;
use std::process::{Command, Output};

fn ama(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ama"))
        .args(args)
        .env_remove("AMA_THREADS")
        .output()
        .expect("binary runs")
}

fn run_to(dir: &Path, name: &str, args: &[&str]) -> String {
    let out = dir.join(name);
    let mut all = args.to_vec();
    let out_s = out.to_str().unwrap().to_string();
    all.extend(["--out", &out_s]);
    let o = ama(&all);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read_to_string(out).unwrap()
}

#[test]
fn gridworld_config_set_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"budget": 400, "log_every": 200, "rooms": 4}"#).unwrap();
    let csv = run_to(
        dir.path(),
        "m.csv",
        &["gridworld", "--config", cfg.to_str().unwrap(), "--set", "noisy_tv=true", "--seed", "7"],
    );
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("run_id,seed,step,metric,value"));
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.starts_with("gridworld-ama-tv-s7,7,")));
    assert!(rows.iter().any(|r| r.contains(",unique_states,")));
}

#[test]
fn missing_config_exits_one_with_path() {
    let o = ama(&["gridworld", "--config", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/definitely/not/here.json"));
}

#[test]
fn unknown_flag_prints_usage_and_exits_one() {
    let o = ama(&["bandit", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn bad_override_is_config_error() {
    assert_eq!(ama(&["bandit", "--set", "no_such_key=1"]).status.code(), Some(1));
    assert_eq!(ama(&["bandit", "--set", "method=mse"]).status.code(), Some(1));
    assert_eq!(ama(&["bandit", "--set", "budget"]).status.code(), Some(1));
}

#[test]
fn unwritable_output_is_runtime_failure() {
    let o = ama(&["noisy-pairs", "--set", "budget=1", "--out", "/definitely/not/here/m.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_budget_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let csv = run_to(dir.path(), "m.csv", &["noisy-pairs", "--set", "budget=0"]);
    assert_eq!(csv, "run_id,seed,step,metric,value\n");
}

#[test]
fn rerun_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["bandit", "--set", "budget=50", "--set", "seeds=[3,4]"];
    let a = run_to(dir.path(), "a.csv", &args);
    let b = run_to(dir.path(), "b.csv", &args);
    assert_eq!(a, b);
}

#[test]
fn stdout_when_no_out_given() {
    let o = ama(&["decomposition", "--set", "models=3", "--set", "test_points=20", "--set", "bootstrap=50"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("run_id,seed,step,metric,value\n"));
    assert!(text.contains("decomposition-mse-s0"));
}

#[test]
fn gradcheck_passes() {
    let o = ama(&["gradcheck"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().count() >= 13);
    assert!(!text.contains("FAIL"));
}
