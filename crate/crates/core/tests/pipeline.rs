use std::path::Path;

use maskfuse::config::RunConfig;
use maskfuse::eval::{load_manifest, ManifestRecord, Task};
use maskfuse::io::{read_label_map, read_mask, write_mask};
use maskfuse::pipeline::{cmd_clickgen, cmd_eval, cmd_ovss, cmd_refer};
use maskfuse::providers::mock::{MockReply, MockServer};
use maskfuse::providers::oracle::{write_corpus, Geometry, SceneSpec, Shape};
use maskfuse::providers::Backend;
use maskfuse::BinaryMask;
use tempfile::TempDir;

fn config(dir: &Path) -> RunConfig {
    RunConfig {
        output_dir: dir.join("out"),
        ..RunConfig::default()
    }
}

fn corpus(dir: &Path, n: usize, task: Task) -> Vec<ManifestRecord> {
    let specs: Vec<_> = (0..n).map(|i| SceneSpec::random(100 + i as u64, 80, 60, 4, 4)).collect();
    load_manifest(write_corpus(&dir.join("data"), &specs, task).unwrap()).unwrap()
}

#[test]
fn ovss_oracle_run_is_exact() {
    let dir = TempDir::new().unwrap();
    let records = corpus(dir.path(), 6, Task::Ovss);
    let cfg = RunConfig { oracle_distractors: 5, ..config(dir.path()) };
    let outcome = cmd_ovss(&cfg, &records, "synthetic").unwrap();
    assert_eq!(outcome.exit_code, 0);
    let d = &outcome.report.datasets[0];
    assert_eq!((d.name.as_str(), d.items, d.miou), ("scenes-4-classes", 6, Some(1.0)));
    assert_eq!(outcome.report.config, cfg.echo());
    assert!(cfg.output_dir.join("predictions/scene_0000.png").exists());

    // scoring the written predictions offline gives the same numbers
    let again = cmd_eval(&cfg, &records, &cfg.output_dir.join("predictions"), "synthetic").unwrap();
    assert_eq!(again.report.datasets, outcome.report.datasets);
}

#[test]
fn distractor_only_proposals_predict_background() {
    let dir = TempDir::new().unwrap();
    let records = corpus(dir.path(), 3, Task::Ovss);
    let cfg = RunConfig {
        oracle_exact_proposals: false,
        oracle_distractors: 5,
        ..config(dir.path())
    };
    let outcome = cmd_ovss(&cfg, &records, "d").unwrap();
    assert_eq!(outcome.exit_code, 0);
    for rec in &records {
        let stem = rec.image.file_stem().unwrap().to_string_lossy();
        let pred = read_label_map(cfg.output_dir.join(format!("predictions/{stem}.png")), 4, 0).unwrap();
        assert!(pred.labels().iter().all(|&l| l == 0));
    }
}

#[test]
fn empty_manifest_gives_empty_report() {
    let dir = TempDir::new().unwrap();
    let outcome = cmd_ovss(&config(dir.path()), &[], "x").unwrap();
    assert_eq!(outcome.exit_code, 0);
    assert!(outcome.report.datasets.is_empty());
}

#[test]
fn unreachable_endpoint_fails_every_item_with_diagnostics() {
    let dir = TempDir::new().unwrap();
    let records = corpus(dir.path(), 2, Task::Ovss);
    let cfg = RunConfig {
        proposals_backend: Backend::Http,
        proposals_endpoint: Some("http://127.0.0.1:9".into()),
        provider_timeout_s: 2.0,
        ..config(dir.path())
    };
    let outcome = cmd_ovss(&cfg, &records, "x").unwrap();
    assert_eq!(outcome.exit_code, 1);
    assert_eq!(outcome.report.skipped.len(), 2);
    assert_eq!(outcome.provider_failures.len(), 1);
    assert_eq!(outcome.provider_failures[0].1, 2);
}

#[test]
fn missing_item_is_skipped_and_run_continues() {
    let dir = TempDir::new().unwrap();
    let mut records = corpus(dir.path(), 3, Task::Ovss);
    records[1].image = dir.path().join("gone.png");
    let outcome = cmd_ovss(&config(dir.path()), &records, "x").unwrap();
    assert_eq!(outcome.exit_code, 0);
    assert_eq!(outcome.report.skipped.len(), 1);
    assert_eq!(outcome.report.skipped[0].index, 1);
    assert_eq!(outcome.report.datasets[0].items, 2);

    let strict = RunConfig { fail_fast: true, workers: 1, ..config(dir.path()) };
    let outcome = cmd_ovss(&strict, &records, "x").unwrap();
    assert_eq!(outcome.exit_code, 1);
    assert!(!outcome.report.failed.is_empty());
}

#[test]
fn refer_oracle_chain_is_exact() {
    let dir = TempDir::new().unwrap();
    let records = corpus(dir.path(), 5, Task::Refer);
    let outcome = cmd_refer(&config(dir.path()), &records, "r").unwrap();
    assert_eq!(outcome.exit_code, 0);
    let d = &outcome.report.datasets[0];
    assert_eq!((d.items, d.fg_iou), (5, Some(1.0)));
}

#[test]
fn refer_votes_one_mask_per_group() {
    let dir = TempDir::new().unwrap();
    let mut records = corpus(dir.path(), 1, Task::Refer);
    let base = records[0].clone();
    records = (0..6)
        .map(|_| ManifestRecord { group: Some("g".into()), ..base.clone() })
        .collect();
    let outcome = cmd_refer(&config(dir.path()), &records, "r").unwrap();
    let d = &outcome.report.datasets[0];
    assert_eq!(d.items, 1);
    assert_eq!(d.fg_iou, Some(1.0));
}

#[test]
fn refer_budget_violation_fails_item_and_archives_text() {
    let dir = TempDir::new().unwrap();
    let records = corpus(dir.path(), 1, Task::Refer);
    let raw = "Positive: [(1, 1), (2, 2), (3, 3), (4, 4), (5, 5), (6, 6), (7, 7)]";
    let server = MockServer::start(move |_| {
        MockReply::ok(serde_json::json!({ "raw_text": raw }).to_string())
    })
    .unwrap();
    let cfg = RunConfig {
        clicks_backend: Backend::Http,
        clicks_endpoint: Some(server.url()),
        ..config(dir.path())
    };
    let outcome = cmd_refer(&cfg, &records, "r").unwrap();
    assert_eq!(outcome.exit_code, 1);
    assert!(outcome.report.skipped[0].reason.contains("budget"));
    let archived: Vec<_> = std::fs::read_dir(cfg.output_dir.join("failed"))
        .unwrap()
        .map(|e| std::fs::read_to_string(e.unwrap().path()).unwrap())
        .collect();
    assert_eq!(archived, vec![raw.to_string()]);

    let lenient = RunConfig { strict_clicks: false, ..cfg };
    assert_eq!(cmd_refer(&lenient, &records, "r").unwrap().exit_code, 0);
}

#[test]
fn refer_unparseable_text_is_archived() {
    let dir = TempDir::new().unwrap();
    let records = corpus(dir.path(), 1, Task::Refer);
    let server = MockServer::start(|_| MockReply::ok(r#"{"raw_text": "I cannot see it"}"#)).unwrap();
    let cfg = RunConfig {
        clicks_backend: Backend::Http,
        clicks_endpoint: Some(server.url()),
        ..config(dir.path())
    };
    let outcome = cmd_refer(&cfg, &records, "r").unwrap();
    assert_eq!(outcome.report.skipped.len(), 1);
    assert_eq!(std::fs::read_dir(cfg.output_dir.join("failed")).unwrap().count(), 1);
}

#[test]
fn refer_over_http_mock() {
    let dir = TempDir::new().unwrap();
    let records = corpus(dir.path(), 2, Task::Refer);
    let server = MockServer::echo().unwrap();
    let cfg = RunConfig {
        clicks_backend: Backend::Http,
        clicks_endpoint: Some(server.url()),
        segment_backend: Backend::Http,
        segment_endpoint: Some(server.url()),
        ..config(dir.path())
    };
    let outcome = cmd_refer(&cfg, &records, "r").unwrap();
    assert_eq!(outcome.exit_code, 0, "{:?}", outcome.report.skipped);
    assert!(outcome.report.providers.iter().all(|p| p.reported_model.as_deref() == Some("mock-echo")));
    assert_eq!(server.requests().len(), 4);
}

#[test]
fn clickgen_is_deterministic_and_bounded() {
    let dir = TempDir::new().unwrap();
    let records = corpus(dir.path(), 8, Task::Refer);
    let cfg = RunConfig { seed: 11, ..config(dir.path()) };
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let (summary, code) = cmd_clickgen(&cfg, &records, &a).unwrap();
    cmd_clickgen(&RunConfig { workers: 1, ..cfg.clone() }, &records, &b).unwrap();
    assert_eq!(code, 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(summary.records, 8);
    assert!(summary.max_steps <= 6);
    assert_eq!(std::fs::read_to_string(&a).unwrap().lines().count(), 8);
}

#[test]
fn clickgen_skips_empty_masks() {
    let dir = TempDir::new().unwrap();
    let mut records = corpus(dir.path(), 2, Task::Refer);
    let empty = dir.path().join("empty_gt.png");
    write_mask(&empty, &BinaryMask::new(80, 60).unwrap()).unwrap();
    records[0].gt_mask = empty;
    let (summary, code) = cmd_clickgen(&config(dir.path()), &records, &dir.path().join("c.jsonl")).unwrap();
    assert_eq!(code, 0);
    assert_eq!(summary.records, 1);
    assert_eq!(summary.skipped.len(), 1);
    assert_eq!(summary.skipped[0].index, 0);
}

#[test]
fn single_component_masks_take_one_click() {
    let dir = TempDir::new().unwrap();
    let specs: Vec<_> = (0..5)
        .map(|i| SceneSpec {
            width: 50,
            height: 40,
            class_count: 2,
            background: 0,
            shapes: vec![Shape { class: 1, geometry: Geometry::Disk { cx: 20 + i, cy: 20, r: 6 + i } }],
            seed: i as u64,
            noise: 0.0,
            distractor_count: 0,
        })
        .collect();
    let records = load_manifest(write_corpus(&dir.path().join("data"), &specs, Task::Refer).unwrap()).unwrap();
    let (summary, _) = cmd_clickgen(&config(dir.path()), &records, &dir.path().join("c.jsonl")).unwrap();
    assert_eq!(summary.mean_clicks, Some(1.0));
    assert_eq!(summary.mean_final_iou, Some(1.0));
}

#[test]
fn eval_reads_binary_predictions() {
    let dir = TempDir::new().unwrap();
    let records = corpus(dir.path(), 1, Task::Refer);
    let preds = dir.path().join("preds");
    std::fs::create_dir_all(&preds).unwrap();
    let gt = read_mask(&records[0].gt_mask).unwrap();
    write_mask(preds.join("scene_0000.png"), &gt.complement()).unwrap();
    let outcome = cmd_eval(&config(dir.path()), &records, &preds, "e").unwrap();
    assert_eq!(outcome.report.datasets[0].fg_iou, Some(0.0));
}
