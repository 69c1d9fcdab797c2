use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cawr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cawr"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

const GENERATE: &str = r#"
name = "cli-bandit"
[task]
kind = "bandit"
target = [0.5]
[data]
source = "generate"
episodes = 100
horizon = 1
epsilon = 0.4
seed = 2
good = { kind = "gaussian", mean = [0.5], std = 0.1 }
poor = { kind = "gaussian", mean = [-1.0], std = 0.1 }
"#;

const TRAIN: &str = r#"
name = "cli-bandit"
seeds = [0, 1]
[task]
kind = "bandit"
target = [0.5]
[data]
source = "file"
path = "data/bandit.jsonl"
[train]
iterations = 30
eval_every = 10
batch_size = 16
[approx]
kind = "tabular"
[eval]
episodes = 2
"#;

#[test]
fn end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("gen.toml"), GENERATE).unwrap();
    fs::write(d.join("train.toml"), TRAIN).unwrap();

    ok(cawr(&["generate-dataset", "--config", "gen.toml", "--out", "data/bandit.jsonl"], d));
    assert_eq!(fs::read_to_string(d.join("data/bandit.jsonl")).unwrap().lines().count(), 101);

    // A different data seed gives a different file.
    ok(cawr(&["generate-dataset", "--config", "gen.toml", "--seed", "9", "--out", "other.jsonl"], d));
    assert_ne!(fs::read(d.join("other.jsonl")).unwrap(), fs::read(d.join("data/bandit.jsonl")).unwrap());

    ok(cawr(&["train", "--config", "train.toml", "--out", "run", "--profile", "desk"], d));
    let agg: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("run/aggregate.json")).unwrap()).unwrap();
    assert_eq!(agg["status"], "ok");
    assert_eq!(agg["seeds"].as_array().unwrap().len(), 2);

    ok(cawr(
        &["evaluate", "--config", "train.toml", "--checkpoint", "run/seed_0/policy.json", "--out", "eval.json"],
        d,
    ));
    let eval: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("eval.json")).unwrap()).unwrap();
    assert!(eval["result"]["mean_return"].as_f64().unwrap() <= 0.0);

    ok(cawr(
        &["--sequential", "ablate", "--config", "train.toml", "--seed", "4", "--out", "grid", "--losses", "l2,huber", "--priorities", "none,odpr"],
        d,
    ));
    let summary = fs::read_to_string(d.join("grid/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    assert!(d.join("grid/huber_odpr/seed_4/metrics.csv").exists());
}

#[test]
fn verify_theorems_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("suite.toml"), "bandits = 5\ntheorem1 = 20\nmixtures = 10\nlemma3_probes = 50\ngridworlds = 2\n").unwrap();
    ok(cawr(&["verify-theorems", "--config", "suite.toml", "--seed", "3", "--out", "report.json"], d));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["config"]["seed"], 3);
    assert_eq!(report["checks"].as_array().unwrap().len(), 5);
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "name = \"x\"\n[task]\nkind = \"bandit\"\ntarget = [0.0]\n[data]\nsource = \"file\"\npath = \"missing.jsonl\"\n").unwrap();
    let out = cawr(&["train", "--config", "bad.toml", "--out", "run"], d);
    assert!(!out.status.success());
    let out = cawr(&["train", "--config", "bad.toml", "--out", "run", "--profile", "huge"], d);
    assert!(!out.status.success());
    let out = cawr(&["ablate", "--config", "bad.toml", "--out", "run", "--priorities", "bogus"], d);
    assert!(!out.status.success());
}
