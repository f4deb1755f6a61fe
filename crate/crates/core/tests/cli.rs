use std::path::Path;
use std::process::{Command, Output};

use safeset::io::read_safe_set_csv;
use safeset::metrics::read_metrics_csv;
use safeset::suite::read_aggregate_csv;

fn spec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spec")).args(args).output().expect("spawn spec")
}

fn ok(args: &[&str]) {
    let out = spec(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const CHAIN_SUITE: &str = r#"
env = "chain"
slip_prob = 0.1
algos = ["baseline", "lss", "ess"]

[tabular]
iterations = 4
steps_per_iter = 2000
"#;

#[test]
fn oracle_then_metrics_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("oracle.csv");
    ok(&["oracle", "--env", "chain", "--alpha", "0.2", "--out", p(&truth)]);
    let rows = read_safe_set_csv(&truth).unwrap();
    assert_eq!(rows.len(), 4);
    let report = dir.path().join("metrics.json");
    ok(&["metrics", "--estimate", p(&truth), "--truth", p(&truth), "--out", p(&report)]);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["r_c"], 1.0);
    assert_eq!(json["r_fp"], 0.0);
    assert_eq!(json["sizes"]["total"], 4);
}

#[test]
fn exported_mdp_feeds_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = dir.path().join("chain.json");
    ok(&["export-mdp", "--env", "chain", "--out", p(&mdp)]);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&["oracle", "--mdp", p(&mdp), "--out", p(&a)]);
    ok(&["oracle", "--env", "chain", "--out", p(&b)]);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn tabular_train_writes_artifacts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "train", "--mode", "tabular", "--algo", "ess", "--env", "chain", "--iters", "5", "--steps-per-iter", "3000",
            "--seed", "7", "--out", p(&out),
        ]);
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["metrics.csv", "qtables.bin", "safe_set.csv"] {
        assert!(a.join(f).exists(), "{f} missing");
    }
    assert_eq!(std::fs::read(a.join("metrics.csv")).unwrap(), std::fs::read(b.join("metrics.csv")).unwrap());
    let rows = read_metrics_csv(a.join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), 6);
}

#[test]
fn suite_aggregates_and_ignores_seed_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("suite.toml");
    std::fs::write(&cfg, CHAIN_SUITE).unwrap();
    let (x, y) = (dir.path().join("x"), dir.path().join("y"));
    ok(&["suite", "--config", p(&cfg), "--seeds", "0..2", "--out", p(&x)]);
    ok(&["suite", "--config", p(&cfg), "--seeds", "2,0,1", "--out", p(&y)]);
    for algo in ["baseline", "lss", "ess"] {
        let agg = x.join(algo).join("aggregate.csv");
        assert_eq!(std::fs::read(&agg).unwrap(), std::fs::read(y.join(algo).join("aggregate.csv")).unwrap());
        for k in 0..3 {
            assert!(x.join(algo).join(format!("seed_{k}")).join("metrics.csv").exists());
        }
        let rows = read_aggregate_csv(&agg).unwrap();
        assert_eq!(rows.len(), 5 * 4);
        assert!(rows.iter().all(|r| r.lo <= r.mean && r.mean <= r.hi || r.mean.is_nan()));
    }
    let plot = dir.path().join("rc.csv");
    ok(&["plotdata", "--in", p(&x.join("ess").join("aggregate.csv")), "--metric", "r_c", "--out", p(&plot)]);
    let text = std::fs::read_to_string(plot).unwrap();
    assert_eq!(text.lines().next(), Some("iteration,env_steps,mean,lo,hi"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = spec(&["oracle", "--env", "gridworld", "--out", p(&dir.path().join("o.csv"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("gridworld"));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "env = \"chain\"\nmode = \"deep\"\n").unwrap();
    let out = spec(&["suite", "--config", p(&cfg), "--seeds", "0..1", "--out", p(dir.path())]);
    assert!(!out.status.success());

    let out = spec(&["metrics", "--estimate", "/nonexistent.csv", "--truth", "/nonexistent.csv", "--out", "/tmp/x.json"]);
    assert!(!out.status.success());
}
