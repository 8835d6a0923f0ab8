mod common;

use std::fs;
use std::process::{Command, Output};

use common::{tiny_run_config, write_checkpoint, write_layout_dir};

fn kitchen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kitchen"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn path(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_subcommands() {
    let out = kitchen(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["layoutgen", "train", "eval", "serve"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn layoutgen_writes_layouts_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("layouts");
    let out = kitchen(&[
        "layoutgen",
        "--count",
        "12",
        "--seed",
        "3",
        "--out",
        path(&out_dir),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest: Vec<serde_json::Value> =
        serde_json::from_slice(&fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.len(), 12);
    for entry in &manifest {
        let file = out_dir.join(entry["file"].as_str().unwrap());
        let layout =
            kitchen_ued::layout::Layout::parse(&fs::read_to_string(file).unwrap()).unwrap();
        assert_eq!(layout.id(), entry["id"].as_str().unwrap());
        let blocks = entry["blocks"].as_u64().unwrap();
        assert!((6..=9).contains(&blocks));
        assert!(entry["floor"].as_u64().unwrap() >= 14);
    }
}

#[test]
fn layoutgen_reports_an_impossible_request() {
    let dir = tempfile::tempdir().unwrap();
    let out = kitchen(&[
        "layoutgen",
        "--count",
        "3",
        "--min-floor",
        "40",
        "--out",
        path(dir.path()),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn train_with_missing_config_fails_without_creating_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = kitchen(&[
        "train",
        "--config",
        path(&dir.path().join("nope.json")),
        "--out",
        path(&run),
    ]);
    assert!(!out.status.success());
    assert!(!run.exists());
}

#[test]
fn train_rejects_bad_ppo_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, serde_json::to_string(&tiny_run_config(1)).unwrap()).unwrap();
    let run = dir.path().join("run");
    let out = kitchen(&[
        "train",
        "--config",
        path(&cfg),
        "--out",
        path(&run),
        "--ppo",
        "clip=2",
    ]);
    assert!(!out.status.success());
    assert!(!run.exists());
}

#[test]
fn training_twice_gives_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        serde_json::to_string_pretty(&tiny_run_config(11)).unwrap(),
    )
    .unwrap();
    for run in ["a", "b"] {
        let out = kitchen(&[
            "train",
            "--config",
            path(&cfg),
            "--out",
            path(&dir.path().join(run)),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let read = |run: &str, f: &str| fs::read(dir.path().join(run).join(f)).unwrap();
    let metrics = read("a", "metrics.jsonl");
    assert_eq!(metrics, read("b", "metrics.jsonl"));
    assert_eq!(String::from_utf8_lossy(&metrics).lines().count(), 6);
    for f in [
        "config.json",
        "summary.json",
        "eval.json",
        "results.csv",
        "population.json",
    ] {
        assert!(dir.path().join("a").join(f).exists(), "{f} missing");
    }
    assert!(dir.path().join("a/checkpoints/iter_2.ckpt").exists());

    let again = kitchen(&[
        "train",
        "--config",
        path(&cfg),
        "--out",
        path(&dir.path().join("a")),
    ]);
    assert!(!again.status.success(), "reusing a run directory must fail");
}

#[test]
fn eval_writes_cross_play_and_proxy_results() {
    let dir = tempfile::tempdir().unwrap();
    let layouts = dir.path().join("layouts");
    let ids = write_layout_dir(&layouts, 2);
    let a = write_checkpoint(dir.path(), "alpha", 1);
    let b = write_checkpoint(dir.path(), "beta", 2);

    let matrix = dir.path().join("xp.json");
    let out = kitchen(&[
        "eval",
        "cross-play",
        "--checkpoints",
        path(&a),
        path(&b),
        "--layouts",
        path(&layouts),
        "--episodes",
        "2",
        "--normalize",
        "--out",
        path(&matrix),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m: serde_json::Value = serde_json::from_slice(&fs::read(&matrix).unwrap()).unwrap();
    assert_eq!(m["policies"], serde_json::json!(["alpha", "beta"]));
    assert_eq!(m["mean_reward"].as_array().unwrap().len(), 2);
    assert!(matrix.with_extension("normalized.json").exists());

    let csv = dir.path().join("proxy.csv");
    let out = kitchen(&[
        "eval",
        "proxy",
        "--checkpoint",
        path(&a),
        "--layouts",
        path(&layouts),
        "--episodes",
        "1",
        "--out",
        path(&csv),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("layout_id,policy_id,mean_reward,std,episodes")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), ids.len());
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert!(ids.contains(&cols[0].to_string()));
        assert_eq!(cols[1], "alpha");
        assert_eq!(cols[4], "2");
    }
}

#[test]
fn duplicate_checkpoint_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let layouts = dir.path().join("layouts");
    write_layout_dir(&layouts, 1);
    let a = write_checkpoint(dir.path(), "same", 1);
    let out = kitchen(&[
        "eval",
        "cross-play",
        "--checkpoints",
        path(&a),
        path(&a),
        "--layouts",
        path(&layouts),
        "--out",
        path(&dir.path().join("x.json")),
    ]);
    assert!(!out.status.success());
}
