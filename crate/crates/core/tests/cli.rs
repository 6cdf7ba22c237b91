use std::path::Path;
use std::process::{Command, Output};

use maskfuse::eval::read_report;
use tempfile::TempDir;

fn maskfuse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maskfuse"))
        .current_dir(dir)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn ovss_eval_and_viz_round_trip() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&maskfuse(d, &["scene", "--out", "c", "--count", "3", "--classes", "3"]));
    let out = ok(&maskfuse(d, &["ovss", "--manifest", "c/manifest.jsonl", "--output-dir", "o", "--oracle-distractors", "5"]));
    assert!(out.contains("mIoU 1.0000"), "{out}");
    let report = read_report(d.join("o/report.json")).unwrap();
    assert_eq!(report.datasets[0].miou, Some(1.0));
    assert_eq!(report.config["oracle_distractors"], 5);
    assert!(d.join("o/report.csv").exists());

    ok(&maskfuse(d, &["eval", "--manifest", "c/manifest.jsonl", "--predictions", "o/predictions", "--report", "e.json"]));
    assert_eq!(read_report(d.join("e.json")).unwrap().datasets[0].miou, Some(1.0));

    ok(&maskfuse(d, &["viz", "labels", "--manifest", "c/manifest.jsonl", "--predictions", "o/predictions", "--out", "v"]));
    assert_eq!(std::fs::read_dir(d.join("v")).unwrap().count(), 3);
}

#[test]
fn clickgen_is_reproducible_from_the_command_line() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&maskfuse(d, &["scene", "--out", "c", "--count", "4", "--task", "refer"]));
    for name in ["a.jsonl", "b.jsonl"] {
        ok(&maskfuse(d, &["clickgen", "--manifest", "c/manifest.jsonl", "--seed", "9", "--out", name]));
    }
    let a = std::fs::read(d.join("a.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.jsonl")).unwrap());
    assert!(d.join("a.summary.json").exists());

    ok(&maskfuse(d, &["viz", "trace", "--clicks", "a.jsonl", "--out", "t"]));
    assert!(std::fs::read_dir(d.join("t")).unwrap().count() >= 4);
}

#[test]
fn refer_runs_with_oracles() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&maskfuse(d, &["scene", "--out", "c", "--count", "2", "--task", "reason"]));
    let out = ok(&maskfuse(d, &["refer", "--manifest", "c/manifest.jsonl", "--output-dir", "o"]));
    assert!(out.contains("fg IoU 1.0000"), "{out}");
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&maskfuse(d, &["scene", "--out", "c", "--count", "2"]));

    let missing = maskfuse(d, &["ovss", "--manifest", "nope.jsonl"]);
    assert_eq!(missing.status.code(), Some(2));

    let bad = maskfuse(d, &["ovss", "--manifest", "c/manifest.jsonl", "--stride", "0"]);
    assert_eq!(bad.status.code(), Some(2));

    std::fs::write(d.join("cfg.toml"), "grid_n = \"many\"\n").unwrap();
    let bad_file = maskfuse(d, &["ovss", "--manifest", "c/manifest.jsonl", "--config", "cfg.toml"]);
    assert_eq!(bad_file.status.code(), Some(2));

    std::fs::write(d.join("empty.jsonl"), "").unwrap();
    ok(&maskfuse(d, &["ovss", "--manifest", "empty.jsonl", "--output-dir", "e"]));

    let unreachable = maskfuse(
        d,
        &[
            "ovss",
            "--manifest",
            "c/manifest.jsonl",
            "--output-dir",
            "u",
            "--probability-backend",
            "http",
            "--probability-endpoint",
            "http://127.0.0.1:9",
        ],
    );
    assert_eq!(unreachable.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&unreachable.stderr);
    assert!(stderr.contains("provider probability-map: 2 failure(s)"), "{stderr}");
}

#[test]
fn environment_overrides_config_file() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&maskfuse(d, &["scene", "--out", "c", "--count", "1"]));
    std::fs::write(d.join("cfg.toml"), "grid_n = 10\nworkers = 2\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_maskfuse"))
        .current_dir(d)
        .args(["ovss", "--manifest", "c/manifest.jsonl", "--config", "cfg.toml", "--output-dir", "o", "--workers", "3"])
        .env("MF_GRID_N", "20")
        .env("MF_WORKERS", "1")
        .output()
        .unwrap();
    ok(&out);
    let report = read_report(d.join("o/report.json")).unwrap();
    assert_eq!(report.config["grid_n"], 20);
    assert_eq!(report.config["workers"], 3);
}
