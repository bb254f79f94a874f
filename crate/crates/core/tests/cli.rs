use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_socialopt");

fn socialopt(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .env_remove("SOCIALOPT_OUT_DIR")
        .env("RUST_LOG", "error")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("error line on stderr");
    serde_json::from_str(line).expect("JSON error on stderr")
}

const REGULATE: &str = r#"{
  "game": {"kind": "example1"},
  "regulator": {"iterations": 200, "alpha": {"kind": "certified"}, "xi": 0.001,
                "diag_every": 20, "diag_samples": 200}
}"#;

#[test]
fn example1_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = socialopt(dir.path(), &["example1"]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["passed"], true);
}

#[test]
fn check_constants_reports_example1_moduli() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"game":{"kind":"example1"},"graph":{"kind":"complete"}}"#).unwrap();
    let out = socialopt(dir.path(), &["check-constants", "--config", "c.json"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["constants"]["mu"], 2.0);
    assert_eq!(v["constants"]["l"], 2.0);
    assert!(v["alpha_certificate_exact"].as_f64().unwrap() > v["alpha_certificate_inexact"].as_f64().unwrap());
}

#[test]
fn regulate_is_reproducible_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("r.json"), REGULATE).unwrap();
    let run = |out: &str, seed: &str| {
        let o = socialopt(dir.path(), &["regulate", "--config", "r.json", "--seed", seed, "--out", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(dir.path().join(out).join("trace.csv")).unwrap()
    };
    let a = run("a", "5");
    let b = run("b", "5");
    let c = run("c", "6");
    assert_eq!(a, b);
    assert_ne!(a, c);
    let summary: Value = serde_json::from_slice(&fs::read(dir.path().join("a/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["seed"], 5);
    assert_eq!(summary["iterations"], 200);
}

#[test]
fn seed_sweep_fans_out_into_directories() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("r.json"), REGULATE).unwrap();
    let out = socialopt(dir.path(), &["regulate", "--config", "r.json", "--seeds", "3..=5", "--out", "sweep"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    for seed in 3..=5 {
        assert!(dir.path().join(format!("sweep/seed_{seed}/trace.csv")).exists());
        assert_eq!(v[seed.to_string()]["summary"]["config"]["seed"], seed);
    }
    let single = socialopt(dir.path(), &["regulate", "--config", "r.json", "--seed", "4", "--out", "single"]);
    assert!(single.status.success());
    assert_eq!(
        fs::read(dir.path().join("single/trace.csv")).unwrap(),
        fs::read(dir.path().join("sweep/seed_4/trace.csv")).unwrap()
    );
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("r.json"), REGULATE).unwrap();
    let out = Command::new(BIN)
        .current_dir(dir.path())
        .env("SOCIALOPT_OUT_DIR", "from_env")
        .args(["regulate", "--config", "r.json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("from_env/trace.csv").exists());
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("typo.json"), r#"{"game":{"kind":"example1"},"regulatr":{}}"#).unwrap();
    let out = socialopt(dir.path(), &["regulate", "--config", "typo.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("regulatr"));

    let missing = socialopt(dir.path(), &["ne"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn uncertified_alpha_needs_the_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = REGULATE.replace(r#"{"kind": "certified"}"#, r#"{"kind": "fixed", "alpha": 0.01}"#);
    fs::write(dir.path().join("r.json"), cfg).unwrap();
    let refused = socialopt(dir.path(), &["regulate", "--config", "r.json"]);
    assert_eq!(refused.status.code(), Some(2));
    let err = stderr_json(&refused);
    assert_eq!(err["error"], "alpha_not_certified");
    assert!(err["message"].as_str().unwrap().contains("certificate"));
    let allowed = socialopt(dir.path(), &["regulate", "--config", "r.json", "--override-alpha"]);
    assert!(allowed.status.success());
    assert_eq!(stdout_json(&allowed)["summary"]["settings"]["alpha_certified"], false);
}

#[test]
fn divergence_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"game":{"kind":"example1"},
        "regulator":{"iterations":50,"alpha":{"kind":"fixed","alpha":1e308},"xi":0.001,"inner_mode":"exact"},
        "overrides":{"allow_uncertified_alpha":true}}"#;
    fs::write(dir.path().join("d.json"), cfg).unwrap();
    let out = socialopt(dir.path(), &["regulate", "--config", "d.json"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stderr_json(&out)["error"], "divergence");
}

#[test]
fn ne_writes_round_residuals() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("ne.json"),
        r#"{"game":{"kind":"example1"},"ne":{"theta":[0.8],"t_max":25}}"#,
    )
    .unwrap();
    let out = socialopt(dir.path(), &["ne", "--config", "ne.json", "--out", "o"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert!(v["residual"].as_f64().unwrap() < 1e-9);
    assert!(v["epsilon_bound"].as_f64().unwrap().is_finite());
    let rounds = fs::read_to_string(dir.path().join("o/ne_rounds.csv")).unwrap();
    assert_eq!(rounds.lines().next(), Some("t,residual,consensus_gap"));
    assert_eq!(rounds.lines().count(), 26);
}

#[test]
fn evcharge_preset_echo_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = socialopt(dir.path(), &["evcharge", "--out", "ev"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echo: Value = serde_json::from_slice(&fs::read(dir.path().join("ev/config.json")).unwrap()).unwrap();
    let params = &echo["game"]["params"];
    assert_eq!(params["n_players"], 10);
    assert_eq!(params["dim"], 1);
    assert_eq!(params["lambda"], 0.1);
    assert_eq!(params["r"], 1.0);
    let reg = &echo["regulator"];
    assert_eq!(reg["alpha"]["alpha"], 1e-5);
    assert_eq!(reg["gamma"], 0.01);
    assert_eq!(reg["xi"], 1e-4);
    assert_eq!(reg["schedule"]["expr"], "ceil(5*ln(k+1))");
    assert_eq!(echo["overrides"]["allow_uncertified_alpha"], true);
    let figures = fs::read_to_string(dir.path().join("ev/figures.csv")).unwrap();
    assert!(figures.starts_with("k,theta_err,stat_mc_norm,cost_1,"));
    assert_eq!(figures.lines().count(), 5001);
}

#[test]
fn fixtures_subcommand_writes_requested_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = socialopt(dir.path(), &["fixtures", "--path", "fx/oracles.json"]);
    assert!(out.status.success());
    let written = fs::read(dir.path().join("fx/oracles.json")).unwrap();
    let committed = fs::read(socialopt::oracles::fixture_path()).unwrap();
    assert_eq!(written, committed);
}
