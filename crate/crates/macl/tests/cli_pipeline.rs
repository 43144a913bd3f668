//! End-to-end checks of the command-line surface: subcommands, exit
//! codes, and the artifact files they produce.

use std::path::Path;
use std::process::{Command, Output};

fn macl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_macl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn synth_corpus(dir: &Path) -> (String, String) {
    let out = macl(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--items",
        "30",
        "--groups",
        "3",
        "--sessions",
        "220",
        "--image-size",
        "16",
        "--seed",
        "5",
    ]);
    assert_success(&out);
    (
        dir.join("catalog.jsonl").to_str().unwrap().to_string(),
        dir.join("sessions.jsonl").to_str().unwrap().to_string(),
    )
}

const TINY_CFG: &str = "\
d = 12
m_negatives = 4
batch_size = 8
epochs = 2
max_len = 8
n_heads = 2
d_ff_multiple = 2
text_native_dim = 32
projector = pca
min_item_count = 2
session_negative_mode = shared
patience = 99
";

#[test]
fn unknown_flags_and_subcommands_exit_with_2() {
    let out = macl(&["bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = macl(&["synth", "--frobnicate", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = macl(&["train", "--catalog"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn data_errors_exit_with_1() {
    let out = macl(&["train", "--catalog", "/nonexistent.jsonl", "--sessions", "/n.jsonl", "--out", "/tmp/x"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    synth_corpus(dir_a.path());
    synth_corpus(dir_b.path());
    let a = std::fs::read(dir_a.path().join("catalog.jsonl")).unwrap();
    let b = std::fs::read(dir_b.path().join("catalog.jsonl")).unwrap();
    assert_eq!(a, b);
    let a = std::fs::read(dir_a.path().join("sessions.jsonl")).unwrap();
    let b = std::fs::read(dir_b.path().join("sessions.jsonl")).unwrap();
    assert_eq!(a, b);
    assert!(dir_a.path().join("manifest.json").exists());
}

#[test]
fn ingest_writes_id_map_and_feature_caches() {
    let dir = tempfile::tempdir().unwrap();
    let (catalog, sessions) = synth_corpus(&dir.path().join("data"));
    let out_dir = dir.path().join("ingest");
    let out = macl(&[
        "ingest",
        "--catalog",
        &catalog,
        "--sessions",
        &sessions,
        "--out",
        out_dir.to_str().unwrap(),
        "--min-count",
        "2",
    ]);
    assert_success(&out);
    let id_map = std::fs::read_to_string(out_dir.join("id_map.csv")).unwrap();
    assert!(id_map.starts_with("external_id,dense_index\n"));
    assert!(out_dir.join("features_image.bin").exists());
    assert!(out_dir.join("features_text.bin").exists());
    assert!(out_dir.join("manifest.json").exists());
}

/// Spec contract: the same config and seed reproduce metrics.csv exactly.
#[test]
fn train_twice_with_one_seed_is_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (catalog, sessions) = synth_corpus(&dir.path().join("data"));
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(&cfg_path, TINY_CFG).unwrap();
    for run in ["run1", "run2"] {
        let out = macl(&[
            "train",
            "--catalog",
            &catalog,
            "--sessions",
            &sessions,
            "--config",
            cfg_path.to_str().unwrap(),
            "--seed",
            "7",
            "--out",
            dir.path().join(run).to_str().unwrap(),
        ]);
        assert_success(&out);
    }
    let m1 = std::fs::read(dir.path().join("run1/metrics.csv")).unwrap();
    let m2 = std::fs::read(dir.path().join("run2/metrics.csv")).unwrap();
    assert_eq!(m1, m2);
    let c1 = std::fs::read(dir.path().join("run1/checkpoint.bin")).unwrap();
    let c2 = std::fs::read(dir.path().join("run2/checkpoint.bin")).unwrap();
    assert_eq!(c1, c2);
    let l1 = std::fs::read(dir.path().join("run1/loss_log.csv")).unwrap();
    let l2 = std::fs::read(dir.path().join("run2/loss_log.csv")).unwrap();
    assert_eq!(l1, l2);
}

/// Spec contract: with --no-adaptive the logged mean weights are exactly 1.
#[test]
fn no_adaptive_training_logs_unit_weights() {
    let dir = tempfile::tempdir().unwrap();
    let (catalog, sessions) = synth_corpus(&dir.path().join("data"));
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(&cfg_path, TINY_CFG).unwrap();
    let out_dir = dir.path().join("run");
    let out = macl(&[
        "train",
        "--catalog",
        &catalog,
        "--sessions",
        &sessions,
        "--config",
        cfg_path.to_str().unwrap(),
        "--no-adaptive",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    let log = std::fs::read_to_string(out_dir.join("loss_log.csv")).unwrap();
    let mut rows = 0;
    for line in log.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[6], "1.000000000", "mean_alpha must be exactly 1: {line}");
        assert_eq!(cols[7], "1.000000000", "mean_beta must be exactly 1: {line}");
        rows += 1;
    }
    assert!(rows > 0);
}

#[test]
fn evaluate_recommend_and_preview_work_from_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (catalog, sessions) = synth_corpus(&dir.path().join("data"));
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(&cfg_path, TINY_CFG).unwrap();
    let run_dir = dir.path().join("run");
    assert_success(&macl(&[
        "train",
        "--catalog",
        &catalog,
        "--sessions",
        &sessions,
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]));
    let checkpoint = run_dir.join("checkpoint.bin");
    let id_map = run_dir.join("id_map.csv");

    // evaluate over the full session file at two cutoffs: the metrics
    // file carries one row per k with both metric columns.
    let metrics_out = dir.path().join("eval.csv");
    let out = macl(&[
        "evaluate",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--catalog",
        &catalog,
        "--id-map",
        id_map.to_str().unwrap(),
        "--sessions",
        &sessions,
        "--k",
        "10,20",
        "--out",
        metrics_out.to_str().unwrap(),
    ]);
    assert_success(&out);
    let metrics = std::fs::read_to_string(&metrics_out).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("split,group,k,precision,mrr,count"));
    let data_rows: Vec<&str> = lines.collect();
    assert_eq!(data_rows.len(), 2, "expected one row per k:\n{metrics}");
    assert!(data_rows[0].starts_with("evaluate,all,10,"));
    assert!(data_rows[1].starts_with("evaluate,all,20,"));

    // recommend prints a CSV ranking to stdout.
    let first_item = {
        let id_map_text = std::fs::read_to_string(&id_map).unwrap();
        id_map_text.lines().nth(1).unwrap().split(',').next().unwrap().to_string()
    };
    let out = macl(&[
        "recommend",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--catalog",
        &catalog,
        "--id-map",
        id_map.to_str().unwrap(),
        "--items",
        &first_item,
        "--k",
        "5",
    ]);
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("rank,item_id,score"));
    assert_eq!(stdout.lines().count(), 6, "{stdout}");

    // recommend with an unknown prefix item is a data error.
    let out = macl(&[
        "recommend",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--catalog",
        &catalog,
        "--id-map",
        id_map.to_str().unwrap(),
        "--items",
        "no-such-item",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-item"));

    // augment-preview writes the original and the augmented asset.
    let preview = dir.path().join("preview");
    let out = macl(&[
        "augment-preview",
        "--catalog",
        &catalog,
        "--item",
        &first_item,
        "--technique",
        "hflip",
        "--seed",
        "3",
        "--out",
        preview.to_str().unwrap(),
    ]);
    assert_success(&out);
    assert!(preview
        .join(format!("item_{first_item}_original.ppm"))
        .exists());
    assert!(preview.join(format!("item_{first_item}_hflip.ppm")).exists());
}

#[test]
fn evaluate_rejects_a_mismatched_id_map() {
    let dir = tempfile::tempdir().unwrap();
    let (catalog, sessions) = synth_corpus(&dir.path().join("data"));
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(&cfg_path, TINY_CFG).unwrap();
    let run_dir = dir.path().join("run");
    assert_success(&macl(&[
        "train",
        "--catalog",
        &catalog,
        "--sessions",
        &sessions,
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]));
    // Tamper with the id map: the digest no longer matches.
    let id_map = run_dir.join("id_map.csv");
    let mut text = std::fs::read_to_string(&id_map).unwrap();
    text.push_str("ghost,999\n");
    std::fs::write(&id_map, text).unwrap();
    let out = macl(&[
        "evaluate",
        "--checkpoint",
        run_dir.join("checkpoint.bin").to_str().unwrap(),
        "--catalog",
        &catalog,
        "--id-map",
        id_map.to_str().unwrap(),
        "--sessions",
        &sessions,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("digest"));
}
