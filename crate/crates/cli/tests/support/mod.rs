//! Bundled CLI fixtures and helpers shared by the CLI test targets.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::GrayImage;
use pdm_core::{encode_fmap, BinaryMask};
use pdm_testkit::fixtures::rect;
use pdm_testkit::synthetic::{annotation_document, conflict_fixture};
use serde_json::json;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn png_bytes(mask: &BinaryMask) -> Vec<u8> {
    let (h, w) = mask.shape();
    let img = GrayImage::from_raw(w as u32, h as u32, mask.to_gray_bytes()).unwrap();
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png).unwrap();
    buf.into_inner()
}

fn pretty(v: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).unwrap();
    s.push('\n');
    s.into_bytes()
}

/// Every bundled fixture as (relative path, bytes).
pub fn fixture_files() -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let (query, gallery) = conflict_fixture();
    files.push(("query.fmap".to_string(), encode_fmap(&query).unwrap()));

    let mut entries = Vec::new();
    // first-stage scores that favour the distractors
    let external = [0.61, 0.93, 0.88, 0.40, 0.35, 0.20];
    for (b, score) in gallery.iter().zip(external) {
        let name = format!("gallery/{}.fmap", b.image_id);
        files.push((name.clone(), encode_fmap(b).unwrap()));
        entries.push(json!({ "image_id": b.image_id, "path": name, "global_score": score }));
    }
    files.push(("gallery.json".into(), pretty(&json!(entries))));
    files.push(("empty_gallery.json".into(), b"[]\n".to_vec()));
    files.push((
        "initial_ranking.tsv".into(),
        b"rank\timage_id\tscore\n1\tg_same_texture_cat\t0.93\n2\tg_same_class_dog\t0.88\n3\tg_true_dog\t0.61\n4\tg_filler_a\t0.4\n5\tg_filler_b\t0.35\n6\tg_filler_c\t0.2\n".to_vec(),
    ));

    // reference is 4x4 features over a 32x32 image; the block covers the centre
    files.push((
        "reference_mask.png".into(),
        png_bytes(&rect(32, 8, 8, 16, 16)),
    ));

    files.push(("annotations.json".into(), {
        let mut s = annotation_document(12, 3, 31);
        s.push('\n');
        s.into_bytes()
    }));

    let gt = rect(24, 6, 6, 10, 10);
    files.push(("masks/gt_a.png".into(), png_bytes(&gt)));
    files.push((
        "masks/pred_a.png".into(),
        png_bytes(&rect(24, 6, 7, 10, 10)),
    ));
    files.push((
        "eval_seg.json".into(),
        pretty(&json!({ "items": [
            { "image_id": "a", "prediction": "masks/pred_a.png", "ground_truth": "masks/gt_a.png" },
            { "image_id": "b",
              "prediction": rect(24, 0, 0, 12, 24).to_rle(),
              "ground_truth": rect(24, 6, 0, 12, 24).to_rle() },
        ]})),
    ));
    files.push((
        "eval_prop.json".into(),
        pretty(&json!({ "videos": [
            { "video_id": "v1", "frames": [
                { "frame_id": "00001", "prediction": rect(24, 6, 7, 10, 10).to_rle(), "ground_truth": gt.to_rle() },
                { "frame_id": "00002", "prediction": "masks/pred_a.png", "ground_truth": "masks/gt_a.png" },
            ]},
            { "video_id": "v2", "frames": [
                { "frame_id": "00001", "prediction": BinaryMask::empty(24, 24).to_rle(), "ground_truth": gt.to_rle() },
            ]},
        ]})),
    ));
    files.push((
        "query_ranking.tsv".into(),
        b"rank\timage_id\tscore\n1\tq\t0.9\n2\tb\t0.8\n3\ta\t0.7\n4\tc\t0.6\n".to_vec(),
    ));
    files.push((
        "eval_retrieval.json".into(),
        pretty(&json!({ "queries": [
            { "query_id": "q1", "ranking": ["x", "a", "y", "b"], "relevant": ["a", "b"] },
            { "query_id": "q2", "ranking": "query_ranking.tsv", "relevant": ["a"], "ignore": ["q"] },
        ]})),
    ));
    files.push((
        "run.cfg".into(),
        b"# matching\ntau = 0.7\nmode = both\n\n# segmentation and evaluation\nseg-threshold = 0.5\nboundary-tol = 0.008\ntopk = 3\nseed = 7\n".to_vec(),
    ));
    files
}

pub fn write_fixtures(dir: &Path) {
    for (name, bytes) in fixture_files() {
        let path = dir.join(name);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, bytes).unwrap();
    }
}

pub fn pdm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdm"))
        .args(args)
        .env_remove("PDM_CONFIG")
        .output()
        .expect("pdm runs")
}

/// All files under `dir`, sorted, with their bytes.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let bytes = fs::read(&p).unwrap();
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    out
}
