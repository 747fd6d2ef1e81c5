use std::collections::{BTreeMap, BTreeSet};

use pdm_core::benchmark::{
    build_benchmark, parse_annotations, GalleryMode, SplitConfig, TargetChoice, Task,
};
use pdm_testkit::synthetic::annotation_document;
use proptest::prelude::*;

fn config(task: Task, seed: u64, mode: GalleryMode) -> SplitConfig {
    SplitConfig {
        gallery_mode: mode,
        ..SplitConfig::new(task, seed)
    }
}

/// (video, frame) -> class -> instance count, straight from the raw JSON.
fn class_counts(doc: &str) -> BTreeMap<(String, String), BTreeMap<String, usize>> {
    let v: serde_json::Value = serde_json::from_str(doc).unwrap();
    let mut out = BTreeMap::new();
    for video in v["videos"].as_array().unwrap() {
        for frame in video["frames"].as_array().unwrap() {
            let key = (
                video["video_id"].as_str().unwrap().to_string(),
                frame["frame_id"].as_str().unwrap().to_string(),
            );
            let counts: &mut BTreeMap<String, usize> = out.entry(key).or_default();
            for inst in frame["instances"].as_array().unwrap() {
                *counts
                    .entry(inst["class_name"].as_str().unwrap().to_string())
                    .or_default() += 1;
            }
        }
    }
    out
}

#[test]
fn full_scale_split_counts() {
    let doc = annotation_document(150, 25, 2024);
    let disjoint =
        build_benchmark(&doc, &config(Task::Retrieval, 0, GalleryMode::Disjoint)).unwrap();
    let m = &disjoint.manifest;
    assert_eq!(m.entries.len(), 150);
    assert_eq!(m.gallery.len(), 300);
    assert_eq!(m.stats.classes, 16);

    let inclusive =
        build_benchmark(&doc, &config(Task::Retrieval, 0, GalleryMode::Inclusive)).unwrap();
    assert_eq!(inclusive.manifest.entries.len(), 150);
    assert_eq!(inclusive.manifest.gallery.len(), 450);
    for (d, i) in m.entries.iter().zip(&inclusive.manifest.entries) {
        assert_eq!(d.query_frame, i.query_frame);
        assert_eq!(i.ignore, vec![i.query_image.clone()]);
    }
}

#[test]
fn every_query_frame_is_a_hard_negative_frame() {
    let doc = annotation_document(150, 25, 7);
    let counts = class_counts(&doc);
    for task in [Task::Retrieval, Task::ImageSeg, Task::VideoProp] {
        let m = build_benchmark(&doc, &config(task, 3, GalleryMode::Disjoint))
            .unwrap()
            .manifest;
        for e in &m.entries {
            let frame = &counts[&(e.video_id.clone(), e.query_frame.clone())];
            assert!(
                frame[&e.class_name] >= 2,
                "{} {}",
                e.video_id,
                e.query_frame
            );
            assert!(!e.target_frames.contains(&e.query_frame));
            if task != Task::VideoProp {
                assert_eq!(e.target_frames.len(), 2);
            }
        }
    }
}

#[test]
fn relevance_is_exactly_the_same_video_gallery_frames() {
    let doc = annotation_document(40, 5, 1);
    let m = build_benchmark(&doc, &config(Task::Retrieval, 9, GalleryMode::Disjoint))
        .unwrap()
        .manifest;
    let gallery: BTreeSet<&String> = m.gallery.iter().collect();
    for e in &m.entries {
        let expected: Vec<String> = e
            .target_frames
            .iter()
            .map(|f| format!("{}/{f}", e.video_id))
            .collect();
        assert_eq!(e.relevant, expected);
        let same_video: Vec<&&String> = gallery
            .iter()
            .filter(|g| g.starts_with(&format!("{}/", e.video_id)))
            .collect();
        assert_eq!(same_video.len(), 2);
        assert!(!gallery.contains(&e.query_image));
    }
}

#[test]
fn largest_instance_is_the_target() {
    let doc = annotation_document(30, 0, 5);
    let videos = parse_annotations(&doc).unwrap();
    let m = build_benchmark(&doc, &config(Task::Retrieval, 4, GalleryMode::Disjoint))
        .unwrap()
        .manifest;
    for e in &m.entries {
        let v = videos.iter().find(|v| v.video_id == e.video_id).unwrap();
        let f = v
            .frames
            .iter()
            .find(|f| f.frame_id == e.query_frame)
            .unwrap();
        let best = f
            .instances
            .iter()
            .filter(|i| i.class_name == e.class_name)
            .map(|i| i.area)
            .max()
            .unwrap();
        let chosen = f
            .instances
            .iter()
            .find(|i| i.instance_id == e.instance_id)
            .unwrap();
        assert_eq!(chosen.area, best);
    }
}

#[test]
fn single_three_frame_video() {
    let doc = r#"{"videos": [{"video_id": "v", "frames": [
        {"frame_id": "a", "instances": [{"instance_id": 1, "class_name": "cup", "area": 3},
                                        {"instance_id": 2, "class_name": "cup", "area": 5}]},
        {"frame_id": "b", "instances": [{"instance_id": 1, "class_name": "cup", "area": 3},
                                        {"instance_id": 2, "class_name": "cup", "area": 5}]},
        {"frame_id": "c", "instances": [{"instance_id": 1, "class_name": "cup", "area": 3},
                                        {"instance_id": 2, "class_name": "cup", "area": 5}]}]}]}"#;
    let m = build_benchmark(doc, &SplitConfig::new(Task::Retrieval, 0))
        .unwrap()
        .manifest;
    assert_eq!(m.entries.len(), 1);
    assert_eq!(m.gallery.len(), 2);
    assert_eq!(m.entries[0].instance_id, 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn manifests_are_a_function_of_inputs(seed in any::<u64>(), doc_seed in 0u64..50, random in any::<bool>()) {
        let doc = annotation_document(20, 3, doc_seed);
        let mut cfg = config(Task::Retrieval, seed, GalleryMode::Inclusive);
        if random {
            cfg.target_choice = TargetChoice::Random;
        }
        let a = build_benchmark(&doc, &cfg).unwrap().manifest.to_json();
        let b = build_benchmark(&doc, &cfg).unwrap().manifest.to_json();
        prop_assert_eq!(a, b);
    }
}
