//! Runs the `lsr` binary end to end on small inputs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn lsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsr")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

/// Generates, embeds and builds a small separated L1 world in `dir`.
fn small_world(dir: &Path) {
    let ok = |args: &[&str]| {
        let out = lsr(args);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    ok(&["gen", "--out", &p(dir, "sym.jsonl"), "--n", "1500", "--seed", "3"]);
    ok(&[
        "embed", "--dataset", &p(dir, "sym.jsonl"), "--out", &p(dir, "lat.jsonl"), "--embedder-out",
        &p(dir, "emb.json"), "--latent-dim", "16", "--seed", "3",
    ]);
    ok(&["build", "--dataset", &p(dir, "lat.jsonl"), "--out", &p(dir, "map.jsonl")]);
}

#[test]
fn help_lists_every_flag() {
    let out = lsr(&["eval", "--help"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for flag in ["--roadmap", "--embedder", "--model", "--linear", "--n-trials", "--min-all", "--config"] {
        assert!(text.contains(flag), "missing {flag}");
    }
    for cmd in ["gen", "embed", "build", "plan", "train-apn", "optimize-embeddings", "sweep"] {
        assert_eq!(code(&lsr(&[cmd, "--help"])), 0, "{cmd}");
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&lsr(&["gen", "--out", "x", "--bogus"])), 1);
    assert_eq!(code(&lsr(&["gen"])), 1);
    assert_eq!(code(&lsr(&["embed", "--dataset", "a", "--out", "b", "--embedder-out", "c", "--metric", "L3"])), 1);
    assert_eq!(code(&lsr(&[])), 1);
}

#[test]
fn unreadable_inputs_exit_three() {
    let dir = TempDir::new().unwrap();
    let missing = p(dir.path(), "missing.jsonl");
    assert_eq!(code(&lsr(&["build", "--dataset", &missing, "--out", &p(dir.path(), "m")])), 3);
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"header\":{\"seed\":0,\"generator\":\"x\"}}\nnot json\n").unwrap();
    let out = lsr(&["build", "--dataset", &bad.to_string_lossy(), "--out", &p(dir.path(), "m")]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.jsonl:2:"));
}

#[test]
fn config_values_sit_below_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[gen]\nn = 40\nseed = 5\n").unwrap();
    let cfg = cfg.to_string_lossy().into_owned();
    let count = |file: &str| std::fs::read_to_string(dir.path().join(file)).unwrap().lines().count() - 1;
    assert_eq!(code(&lsr(&["--config", &cfg, "gen", "--out", &p(dir.path(), "a.jsonl")])), 0);
    assert_eq!(count("a.jsonl"), 40);
    assert_eq!(code(&lsr(&["gen", "--config", &cfg, "--out", &p(dir.path(), "b.jsonl"), "--n", "25"])), 0);
    assert_eq!(count("b.jsonl"), 25);
    std::fs::write(dir.path().join("typo.toml"), "[gen]\nnn = 3\n").unwrap();
    assert_eq!(code(&lsr(&["--config", &p(dir.path(), "typo.toml"), "gen", "--out", "x"])), 1);
}

#[test]
fn plan_between_equal_states_is_one_node() {
    let dir = TempDir::new().unwrap();
    small_world(dir.path());
    let out = lsr(&[
        "plan", "--roadmap", &p(dir.path(), "map.jsonl"), "--embedder", &p(dir.path(), "emb.json"), "--start", "7",
        "--goal", "7",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("with 1 node(s)"), "{text}");
    assert!(text.contains("path 1: valid"), "{text}");
    let out = lsr(&[
        "plan", "--roadmap", &p(dir.path(), "map.jsonl"), "--embedder", &p(dir.path(), "emb.json"), "--start", "0",
        "--goal", "200",
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("path 1: valid"));
}

#[test]
fn eval_thresholds_set_the_exit_code() {
    let dir = TempDir::new().unwrap();
    small_world(dir.path());
    let base = ["eval", "--roadmap", &p(dir.path(), "map.jsonl"), "--embedder", &p(dir.path(), "emb.json"), "--n-trials", "50"];
    let csv = p(dir.path(), "eval.csv");
    let mut args: Vec<&str> = base.to_vec();
    args.extend(["--linear", "--csv", &csv, "--min-trans", "99"]);
    assert_eq!(code(&lsr(&args)), 0);
    let table = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(table.lines().count(), 3, "{table}");
    let mut args: Vec<&str> = base.to_vec();
    args.extend(["--min-trans", "100.5"]);
    assert_eq!(code(&lsr(&args)), 2);
}

#[test]
fn trained_model_feeds_plan_and_eval() {
    let dir = TempDir::new().unwrap();
    small_world(dir.path());
    let model = p(dir.path(), "apn.json");
    let report = p(dir.path(), "acc.csv");
    let out = lsr(&[
        "train-apn", "--dataset", &p(dir.path(), "lat.jsonl"), "--embedder", &p(dir.path(), "emb.json"), "--out",
        &model, "--report", &report, "--epochs", "3",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(&report).unwrap().starts_with("seed,pick_acc,release_acc,both_acc"));
    let out = lsr(&[
        "eval", "--roadmap", &p(dir.path(), "map.jsonl"), "--embedder", &p(dir.path(), "emb.json"), "--model", &model,
        "--n-trials", "20", "--summary", &p(dir.path(), "sum.json"),
    ]);
    assert_eq!(code(&out), 0);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("sum.json")).unwrap()).unwrap();
    assert!(summary["reports"].as_array().unwrap().iter().any(|r| !r["apn_action_pct"].is_null()));
    let out = lsr(&[
        "plan", "--roadmap", &p(dir.path(), "map.jsonl"), "--embedder", &p(dir.path(), "emb.json"), "--model", &model,
        "--start", "3", "--goal", "150",
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("proposed"));
}

#[test]
fn sweep_and_optimize_write_reports() {
    let dir = TempDir::new().unwrap();
    small_world(dir.path());
    let best: PathBuf = dir.path().join("best.jsonl");
    let out = lsr(&[
        "sweep", "--dataset", &p(dir.path(), "lat.jsonl"), "--embedder", &p(dir.path(), "emb.json"), "--grid",
        "-0.5,0,1", "--n-trials", "30", "--out", &p(dir.path(), "sweep.csv"), "--roadmap-out", &best.to_string_lossy(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap().lines().count(), 4);
    assert!(best.exists());
    let stats = p(dir.path(), "stats.csv");
    let out = lsr(&[
        "optimize-embeddings", "--dataset", &p(dir.path(), "sym.jsonl"), "--out", &p(dir.path(), "free.json"),
        "--stats", &stats, "--latent-dim", "8", "--steps", "50",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(&stats).unwrap();
    assert!(table.starts_with("class_id,intra_mean,intra_std,inter_mean,inter_std,margin"), "{table}");
}
