mod support;

use std::process::Command;

use serde_json::Value;

fn last_json_line(bytes: &[u8]) -> Value {
    let text = String::from_utf8_lossy(bytes);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn echoed_config(stderr: &[u8]) -> Value {
    let text = String::from_utf8_lossy(stderr);
    let line = text.lines().find(|l| l.contains("\"run_config\"")).unwrap();
    serde_json::from_str::<Value>(line).unwrap()["run_config"].clone()
}

#[test]
fn empty_gallery_is_a_json_error() {
    let fx = support::fixture_dir();
    let out_dir = tempfile::tempdir().unwrap();
    let out = support::pdm(&[
        "retrieve",
        fx.join("query.fmap").to_str().unwrap(),
        "--gallery",
        fx.join("empty_gallery.json").to_str().unwrap(),
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = last_json_line(&out.stderr);
    assert_eq!(err["error"]["code"], "empty_gallery");
}

#[test]
fn corrupt_fmap_reports_its_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.fmap");
    std::fs::write(&bad, b"NOPE").unwrap();
    let out = support::pdm(&[
        "match",
        bad.to_str().unwrap(),
        bad.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert_eq!(last_json_line(&out.stderr)["error"]["code"], "bad_magic");
}

#[test]
fn flags_override_config_and_env_is_a_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("a.cfg");
    std::fs::write(&cfg, "tau = 0.3\nseed = 11\n").unwrap();
    let fx = support::fixture_dir();
    let annotations = fx.join("annotations.json");
    let out = dir.path().join("out");

    let run = Command::new(env!("CARGO_BIN_EXE_pdm"))
        .args([
            "build-benchmark",
            annotations.to_str().unwrap(),
            "--seed",
            "4",
            "--out",
            out.to_str().unwrap(),
        ])
        .env("PDM_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(run.status.success());
    let c = echoed_config(&run.stderr);
    assert_eq!(c["seed"], 4);
    assert_eq!(c["tau"], 0.3);
    assert_eq!(c["seg_threshold"], 0.5);

    let bad = Command::new(env!("CARGO_BIN_EXE_pdm"))
        .args([
            "build-benchmark",
            annotations.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .env("PDM_CONFIG", dir.path().join("missing.cfg"))
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert_eq!(last_json_line(&bad.stderr)["error"]["code"], "io");
}

#[test]
fn segment_writes_source_sized_mask_and_point() {
    let fx = support::fixture_dir();
    let dir = tempfile::tempdir().unwrap();
    let out = support::pdm(&[
        "segment",
        fx.join("query.fmap").to_str().unwrap(),
        fx.join("gallery/g_true_dog.fmap").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mask = image::open(dir.path().join("mask.png")).unwrap().to_luma8();
    assert_eq!(mask.dimensions(), (32, 32));
    assert!(mask.pixels().all(|p| p.0[0] == 0 || p.0[0] == 255));
    let point: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("point.json")).unwrap()).unwrap();
    assert_eq!(point["image_id"], "g_true_dog");
    let (x, y) = (
        point["x"].as_u64().unwrap() as u32,
        point["y"].as_u64().unwrap() as u32,
    );
    assert_eq!(mask.get_pixel(x, y).0[0], 255);
}

#[test]
fn rerank_keeps_tail_of_external_ranking() {
    let fx = support::fixture_dir();
    let dir = tempfile::tempdir().unwrap();
    let out = support::pdm(&[
        "rerank",
        fx.join("query.fmap").to_str().unwrap(),
        "--gallery",
        fx.join("gallery.json").to_str().unwrap(),
        "--topk",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let tsv = std::fs::read_to_string(dir.path().join("ranking.tsv")).unwrap();
    let ids: Vec<&str> = tsv
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(1).unwrap())
        .collect();
    assert_eq!(ids[0], "g_true_dog");
    assert_eq!(ids[3..], ["g_filler_a", "g_filler_b", "g_filler_c"]);
}

#[test]
fn bad_mode_is_a_usage_error() {
    let out = support::pdm(&["--mode", "texture", "eval-seg", "x.json"]);
    assert!(!out.status.success());
}
