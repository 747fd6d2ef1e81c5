//! Multi-instance retrieval and segmentation benchmarks built from video
//! tracking annotations.
//!
//! Input schema (unknown fields are ignored):
//!
//! ```json
//! { "videos": [
//!     { "video_id": "v1",
//!       "frames": [
//!         { "frame_id": "000010",
//!           "instances": [
//!             { "instance_id": 3, "class_name": "dog",
//!               "mask": { "size": [480, 640], "counts": "<COCO RLE string>" } },
//!             { "instance_id": 4, "class_name": "dog", "polygon": [[10, 10, 50, 10, 50, 40]] },
//!             { "instance_id": 7, "class_name": "cup", "area": 812 } ] } ] } ] }
//! ```
//!
//! `mask.counts` is either a COCO compressed RLE string or a plain list of run
//! lengths. Masks are only decoded far enough to measure instance area.
//!
//! Frame sampling uses a ChaCha8 stream seeded with `seed_from_u64(seed)` and a
//! partial Fisher-Yates shuffle driven by `gen_range`, over videos sorted by id.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BenchmarkError {
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
}

impl BenchmarkError {
    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        BenchmarkError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
enum RleCounts {
    Runs(Vec<u64>),
    Compressed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
struct RawMask {
    size: [u64; 2],
    counts: RleCounts,
}

#[derive(Debug, Deserialize)]
struct RawInstance {
    instance_id: u64,
    class_name: String,
    #[serde(default)]
    mask: Option<RawMask>,
    #[serde(default)]
    polygon: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    area: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct RawFrame {
    frame_id: String,
    instances: Vec<RawInstance>,
}

#[derive(Debug, Deserialize)]
struct RawVideo {
    video_id: String,
    frames: Vec<RawFrame>,
}

#[derive(Debug, Deserialize)]
struct RawDocument {
    videos: Vec<RawVideo>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceAnnotation {
    pub instance_id: u64,
    pub class_name: String,
    /// Foreground pixel count (0 when the annotation carries no geometry).
    pub area: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameAnnotation {
    pub frame_id: String,
    pub instances: Vec<InstanceAnnotation>,
}

impl FrameAnnotation {
    fn count_of(&self, class: &str) -> usize {
        self.instances
            .iter()
            .filter(|i| i.class_name == class)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoAnnotation {
    pub video_id: String,
    /// Temporal order, as given in the document.
    pub frames: Vec<FrameAnnotation>,
}

/// Decodes a COCO compressed RLE string into run lengths.
pub fn decode_coco_counts(s: &str) -> Result<Vec<u64>, String> {
    let bytes = s.as_bytes();
    let mut counts: Vec<i64> = Vec::new();
    let mut p = 0;
    while p < bytes.len() {
        let mut x: i64 = 0;
        let mut k = 0;
        loop {
            let c = *bytes
                .get(p)
                .ok_or_else(|| "unterminated run in RLE string".to_string())?
                as i64
                - 48;
            if !(0..64).contains(&c) || k > 12 {
                return Err(format!("invalid RLE character at offset {p}"));
            }
            x |= (c & 0x1f) << (5 * k);
            p += 1;
            k += 1;
            if c & 0x20 == 0 {
                if c & 0x10 != 0 {
                    x |= -1i64 << (5 * k);
                }
                break;
            }
        }
        if counts.len() > 2 {
            x += counts[counts.len() - 2];
        }
        counts.push(x);
    }
    counts
        .into_iter()
        .map(|c| u64::try_from(c).map_err(|_| "negative run length".to_string()))
        .collect()
}

fn polygon_area(rings: &[Vec<f64>]) -> Result<u64, String> {
    let mut total = 0.0;
    for ring in rings {
        if ring.len() % 2 != 0 || ring.len() < 6 {
            return Err("polygon needs an even number (>= 6) of coordinates".into());
        }
        let pts: Vec<(f64, f64)> = ring.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        let twice: f64 = pts
            .iter()
            .zip(pts.iter().cycle().skip(1))
            .map(|(a, b)| a.0 * b.1 - b.0 * a.1)
            .sum();
        total += twice.abs() / 2.0;
    }
    Ok(total.round() as u64)
}

fn instance_area(raw: &RawInstance, path: &str) -> Result<u64, BenchmarkError> {
    if let Some(area) = raw.area {
        return Ok(area);
    }
    if let Some(mask) = &raw.mask {
        let runs = match &mask.counts {
            RleCounts::Runs(r) => r.clone(),
            RleCounts::Compressed(s) => decode_coco_counts(s)
                .map_err(|m| BenchmarkError::schema(format!("{path}.mask.counts"), m))?,
        };
        let total: u64 = runs.iter().sum();
        if total != mask.size[0] * mask.size[1] {
            return Err(BenchmarkError::schema(
                format!("{path}.mask.counts"),
                format!(
                    "runs cover {total} pixels, mask size is {}x{}",
                    mask.size[0], mask.size[1]
                ),
            ));
        }
        return Ok(runs.iter().skip(1).step_by(2).sum());
    }
    if let Some(poly) = &raw.polygon {
        return polygon_area(poly)
            .map_err(|m| BenchmarkError::schema(format!("{path}.polygon"), m));
    }
    Ok(0)
}

/// Parses an annotation document.
pub fn parse_annotations(text: &str) -> Result<Vec<VideoAnnotation>, BenchmarkError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: RawDocument = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        BenchmarkError::schema(path, e.into_inner().to_string())
    })?;

    let mut videos = Vec::with_capacity(doc.videos.len());
    let mut video_ids = BTreeSet::new();
    for (vi, raw_video) in doc.videos.into_iter().enumerate() {
        let vpath = format!("videos[{vi}]");
        if !video_ids.insert(raw_video.video_id.clone()) {
            return Err(BenchmarkError::schema(
                format!("{vpath}.video_id"),
                format!("duplicate video id {:?}", raw_video.video_id),
            ));
        }
        let mut classes: HashMap<u64, String> = HashMap::new();
        let mut frame_ids = BTreeSet::new();
        let mut frames = Vec::with_capacity(raw_video.frames.len());
        for (fi, raw_frame) in raw_video.frames.into_iter().enumerate() {
            let fpath = format!("{vpath}.frames[{fi}]");
            if !frame_ids.insert(raw_frame.frame_id.clone()) {
                return Err(BenchmarkError::schema(
                    format!("{fpath}.frame_id"),
                    format!("duplicate frame id {:?}", raw_frame.frame_id),
                ));
            }
            let mut seen = BTreeSet::new();
            let mut instances = Vec::with_capacity(raw_frame.instances.len());
            for (ii, raw) in raw_frame.instances.into_iter().enumerate() {
                let ipath = format!("{fpath}.instances[{ii}]");
                if !seen.insert(raw.instance_id) {
                    return Err(BenchmarkError::schema(
                        format!("{ipath}.instance_id"),
                        format!("instance {} appears twice in one frame", raw.instance_id),
                    ));
                }
                match classes.get(&raw.instance_id) {
                    Some(c) if *c != raw.class_name => {
                        return Err(BenchmarkError::schema(
                            format!("{ipath}.class_name"),
                            format!(
                                "instance {} changes class from {c:?} to {:?}",
                                raw.instance_id, raw.class_name
                            ),
                        ));
                    }
                    Some(_) => {}
                    None => {
                        classes.insert(raw.instance_id, raw.class_name.clone());
                    }
                }
                let area = instance_area(&raw, &ipath)?;
                instances.push(InstanceAnnotation {
                    instance_id: raw.instance_id,
                    class_name: raw.class_name,
                    area,
                });
            }
            frames.push(FrameAnnotation {
                frame_id: raw_frame.frame_id,
                instances,
            });
        }
        videos.push(VideoAnnotation {
            video_id: raw_video.video_id,
            frames,
        });
    }
    Ok(videos)
}

/// A video reduced to the frames holding at least two instances of its target class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilteredVideo {
    pub video: VideoAnnotation,
    pub target_class: String,
}

/// Keeps videos in which some class has two or more instances in one frame.
///
/// The target class is the qualifying class with the most distinct instances
/// over its qualifying frames (ties: lexicographically smallest name); only
/// frames with at least two instances of it survive.
pub fn filter_multi_instance(videos: &[VideoAnnotation]) -> Vec<FilteredVideo> {
    let mut out = Vec::new();
    for video in videos {
        let mut instances_by_class: BTreeMap<&str, BTreeSet<u64>> = BTreeMap::new();
        for frame in &video.frames {
            let mut per_class: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
            for inst in &frame.instances {
                per_class
                    .entry(inst.class_name.as_str())
                    .or_default()
                    .push(inst.instance_id);
            }
            for (class, ids) in per_class {
                if ids.len() >= 2 {
                    instances_by_class.entry(class).or_default().extend(ids);
                }
            }
        }
        // BTreeMap iteration is name-ordered, so strict > keeps the smallest name on ties
        let mut best: Option<(&str, usize)> = None;
        for (class, ids) in &instances_by_class {
            if best.is_none_or(|(_, n)| ids.len() > n) {
                best = Some((class, ids.len()));
            }
        }
        let Some((class, _)) = best else { continue };
        let frames: Vec<FrameAnnotation> = video
            .frames
            .iter()
            .filter(|f| f.count_of(class) >= 2)
            .cloned()
            .collect();
        out.push(FilteredVideo {
            video: VideoAnnotation {
                video_id: video.video_id.clone(),
                frames,
            },
            target_class: class.to_string(),
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Retrieval,
    ImageSeg,
    VideoProp,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Retrieval => "retrieval",
            Task::ImageSeg => "image_seg",
            Task::VideoProp => "video_prop",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "retrieval" => Ok(Task::Retrieval),
            "image_seg" | "image-seg" => Ok(Task::ImageSeg),
            "video_prop" | "video-prop" => Ok(Task::VideoProp),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

/// How the retrieval gallery is assembled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GalleryMode {
    /// Only the two non-query frames of each video enter the gallery.
    #[default]
    Disjoint,
    /// All three sampled frames are pooled; each query ignores itself.
    Inclusive,
}

impl FromStr for GalleryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "disjoint" => Ok(GalleryMode::Disjoint),
            "inclusive" => Ok(GalleryMode::Inclusive),
            other => Err(format!("unknown gallery mode {other:?}")),
        }
    }
}

/// Which same-class instance in the query frame becomes the reference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetChoice {
    /// Largest area, ties by smallest instance id.
    #[default]
    LargestArea,
    Random,
}

impl FromStr for TargetChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "largest_area" | "largest" => Ok(TargetChoice::LargestArea),
            "random" => Ok(TargetChoice::Random),
            other => Err(format!("unknown target choice {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub task: Task,
    pub seed: u64,
    pub gallery_mode: GalleryMode,
    pub target_choice: TargetChoice,
}

impl SplitConfig {
    pub fn new(task: Task, seed: u64) -> Self {
        Self {
            task,
            seed,
            gallery_mode: GalleryMode::default(),
            target_choice: TargetChoice::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video_id: String,
    pub query_frame: String,
    pub query_image: String,
    pub instance_id: u64,
    pub class_name: String,
    /// Gallery frames (retrieval) or evaluation frames (segmentation tasks).
    pub target_frames: Vec<String>,
    /// Relevant gallery image ids; retrieval only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relevant: Vec<String>,
    /// Gallery image ids excluded when scoring this query.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ignore: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestStats {
    pub videos: usize,
    pub classes: usize,
    pub mean_instances_per_frame: f64,
    pub queries: usize,
    pub gallery_images: usize,
    pub class_distribution: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub task: Task,
    pub seed: u64,
    pub gallery_mode: GalleryMode,
    pub target_choice: TargetChoice,
    pub stats: ManifestStats,
    pub entries: Vec<ManifestEntry>,
    /// Pooled gallery image ids; retrieval only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gallery: Vec<String>,
}

impl BenchmarkManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    pub manifest: BenchmarkManifest,
    pub warnings: Vec<String>,
}

pub fn image_id(video_id: &str, frame_id: &str) -> String {
    format!("{video_id}/{frame_id}")
}

/// Draws `k` distinct indices from `0..n` in draw order.
fn draw_distinct(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

fn choose_target(
    frame: &FrameAnnotation,
    class: &str,
    choice: TargetChoice,
    rng: &mut ChaCha8Rng,
) -> u64 {
    let mut candidates: Vec<&InstanceAnnotation> = frame
        .instances
        .iter()
        .filter(|i| i.class_name == class)
        .collect();
    candidates.sort_by_key(|i| i.instance_id);
    match choice {
        TargetChoice::LargestArea => candidates
            .iter()
            .max_by(|a, b| a.area.cmp(&b.area).then(b.instance_id.cmp(&a.instance_id)))
            .map(|i| i.instance_id)
            .expect("filtered frames hold the target class"),
        TargetChoice::Random => candidates[rng.gen_range(0..candidates.len())].instance_id,
    }
}

/// Samples query and target frames for every filtered video.
pub fn sample_splits(filtered: &[FilteredVideo], config: &SplitConfig) -> SplitOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ordered: Vec<&FilteredVideo> = filtered.iter().collect();
    ordered.sort_by(|a, b| a.video.video_id.cmp(&b.video.video_id));

    let min_frames = match config.task {
        Task::Retrieval | Task::ImageSeg => 3,
        Task::VideoProp => 2,
    };
    let mut warnings = Vec::new();
    let mut entries = Vec::new();
    let mut gallery = Vec::new();
    let mut frame_count = 0usize;
    let mut instance_count = 0usize;

    for fv in ordered {
        let video = &fv.video;
        let n = video.frames.len();
        if n < min_frames {
            let msg = format!(
                "excluding video {}: {n} qualifying frames, need {min_frames}",
                video.video_id
            );
            warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        let (query_idx, mut target_idx) = match config.task {
            Task::Retrieval | Task::ImageSeg => {
                let picked = draw_distinct(&mut rng, n, 3);
                (picked[0], picked[1..].to_vec())
            }
            Task::VideoProp => (0, (1..n).collect()),
        };
        target_idx.sort_unstable();

        let query = &video.frames[query_idx];
        let instance_id = choose_target(query, &fv.target_class, config.target_choice, &mut rng);
        let query_image = image_id(&video.video_id, &query.frame_id);
        let target_frames: Vec<String> = target_idx
            .iter()
            .map(|&i| video.frames[i].frame_id.clone())
            .collect();

        frame_count += 1 + target_idx.len();
        instance_count += query.instances.len()
            + target_idx
                .iter()
                .map(|&i| video.frames[i].instances.len())
                .sum::<usize>();

        let (relevant, ignore) = if config.task == Task::Retrieval {
            let relevant: Vec<String> = target_frames
                .iter()
                .map(|f| image_id(&video.video_id, f))
                .collect();
            gallery.extend(relevant.iter().cloned());
            match config.gallery_mode {
                GalleryMode::Disjoint => (relevant, Vec::new()),
                GalleryMode::Inclusive => {
                    gallery.push(query_image.clone());
                    (relevant, vec![query_image.clone()])
                }
            }
        } else {
            (Vec::new(), Vec::new())
        };

        entries.push(ManifestEntry {
            video_id: video.video_id.clone(),
            query_frame: query.frame_id.clone(),
            query_image,
            instance_id,
            class_name: fv.target_class.clone(),
            target_frames,
            relevant,
            ignore,
        });
    }
    gallery.sort();

    let mut class_distribution = BTreeMap::new();
    for e in &entries {
        *class_distribution.entry(e.class_name.clone()).or_insert(0) += 1;
    }
    let stats = ManifestStats {
        videos: entries.len(),
        classes: class_distribution.len(),
        mean_instances_per_frame: if frame_count == 0 {
            0.0
        } else {
            instance_count as f64 / frame_count as f64
        },
        queries: entries.len(),
        gallery_images: gallery.len(),
        class_distribution,
    };
    SplitOutcome {
        manifest: BenchmarkManifest {
            task: config.task,
            seed: config.seed,
            gallery_mode: config.gallery_mode,
            target_choice: config.target_choice,
            stats,
            entries,
            gallery,
        },
        warnings,
    }
}

/// Parses, filters and samples in one go.
pub fn build_benchmark(text: &str, config: &SplitConfig) -> Result<SplitOutcome, BenchmarkError> {
    let videos = parse_annotations(text)?;
    Ok(sample_splits(&filter_multi_instance(&videos), config))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(id: u64, class: &str, area: u64) -> InstanceAnnotation {
        InstanceAnnotation {
            instance_id: id,
            class_name: class.into(),
            area,
        }
    }

    fn video(id: &str, frames: Vec<Vec<InstanceAnnotation>>) -> VideoAnnotation {
        VideoAnnotation {
            video_id: id.into(),
            frames: frames
                .into_iter()
                .enumerate()
                .map(|(i, instances)| FrameAnnotation {
                    frame_id: format!("{i:05}"),
                    instances,
                })
                .collect(),
        }
    }

    #[test]
    fn parses_minimal_document() {
        let doc = r#"{"videos": [{"video_id": "v", "frames": [
            {"frame_id": "0", "instances": [{"instance_id": 1, "class_name": "dog", "area": 5}]}]}]}"#;
        let v = parse_annotations(doc).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].frames[0].instances[0], inst(1, "dog", 5));
    }

    #[test]
    fn missing_class_name_names_the_path() {
        let doc = r#"{"videos": [{"video_id": "v", "frames": [
            {"frame_id": "0", "instances": [{"instance_id": 1, "class_name": "dog"}, {"instance_id": 2}]}]}]}"#;
        let Err(BenchmarkError::Schema { path, message }) = parse_annotations(doc) else {
            panic!("expected schema error");
        };
        assert_eq!(path, "videos[0].frames[0].instances[1]");
        assert!(message.contains("class_name"), "{message}");
    }

    #[test]
    fn wrong_type_names_the_field() {
        let doc =
            r#"{"videos": [{"video_id": "v", "frames": [{"frame_id": 3, "instances": []}]}]}"#;
        let Err(BenchmarkError::Schema { path, .. }) = parse_annotations(doc) else {
            panic!("expected schema error");
        };
        assert_eq!(path, "videos[0].frames[0].frame_id");
    }

    #[test]
    fn class_change_across_frames_rejected() {
        let doc = r#"{"videos": [{"video_id": "v", "frames": [
            {"frame_id": "0", "instances": [{"instance_id": 1, "class_name": "dog"}]},
            {"frame_id": "1", "instances": [{"instance_id": 1, "class_name": "cat"}]}]}]}"#;
        let err = parse_annotations(doc).unwrap_err();
        assert!(
            matches!(err, BenchmarkError::Schema { ref path, .. } if path == "videos[0].frames[1].instances[0].class_name")
        );
    }

    #[test]
    fn areas_from_runs_polygons_and_coco_strings() {
        let doc = r#"{"videos": [{"video_id": "v", "frames": [{"frame_id": "0", "instances": [
            {"instance_id": 1, "class_name": "a", "mask": {"size": [2, 3], "counts": [1, 2, 3]}},
            {"instance_id": 2, "class_name": "a", "polygon": [[0, 0, 4, 0, 4, 3, 0, 3]]},
            {"instance_id": 3, "class_name": "a", "mask": {"size": [2, 3], "counts": "123"}},
            {"instance_id": 4, "class_name": "a"}]}]}]}"#;
        let v = parse_annotations(doc).unwrap();
        let areas: Vec<u64> = v[0].frames[0].instances.iter().map(|i| i.area).collect();
        assert_eq!(areas, vec![2, 12, 2, 0]);
    }

    #[test]
    fn coco_string_decoding() {
        assert_eq!(decode_coco_counts("321").unwrap(), vec![3, 2, 1]);
        // from the fourth run on, values are deltas against the run two back
        assert_eq!(decode_coco_counts("1234").unwrap(), vec![1, 2, 3, 6]);
        // a run of 40 needs two characters: 40 = 8 | (1 << 5) -> '8'+0x20, '1'
        assert_eq!(decode_coco_counts("X1").unwrap(), vec![40]);
        assert!(decode_coco_counts("X").is_err());
    }

    #[test]
    fn filter_rules() {
        let two_dogs = video("a", vec![vec![inst(1, "dog", 1), inst(2, "dog", 1)]; 3]);
        let mixed = video("b", vec![vec![inst(1, "dog", 1), inst(2, "cat", 1)]; 3]);
        let mut partial_frames = vec![vec![inst(1, "dog", 1), inst(2, "dog", 1)]; 5];
        partial_frames.extend(vec![vec![inst(1, "dog", 1)]; 5]);
        let partial = video("c", partial_frames);

        let kept = filter_multi_instance(&[two_dogs, mixed, partial]);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].target_class, "dog");
        assert_eq!(kept[0].video.frames.len(), 3);
        assert_eq!(kept[1].video.video_id, "c");
        assert_eq!(kept[1].video.frames.len(), 5);
    }

    #[test]
    fn filter_prefers_most_instances_then_name() {
        let v = video(
            "v",
            vec![vec![
                inst(1, "person", 1),
                inst(2, "person", 1),
                inst(3, "car", 1),
                inst(4, "car", 1),
                inst(5, "car", 1),
            ]],
        );
        assert_eq!(filter_multi_instance(&[v])[0].target_class, "car");
        let tie = video(
            "t",
            vec![vec![
                inst(1, "zebra", 1),
                inst(2, "zebra", 1),
                inst(3, "ant", 1),
                inst(4, "ant", 1),
            ]],
        );
        assert_eq!(filter_multi_instance(&[tie])[0].target_class, "ant");
    }

    #[test]
    fn single_three_frame_video() {
        let v = video("v", vec![vec![inst(1, "dog", 9), inst(2, "dog", 4)]; 3]);
        let out = sample_splits(
            &filter_multi_instance(&[v]),
            &SplitConfig::new(Task::Retrieval, 1),
        );
        let m = out.manifest;
        assert_eq!(m.entries.len(), 1);
        assert_eq!(m.entries[0].target_frames.len(), 2);
        assert_eq!(m.entries[0].instance_id, 1);
        assert_eq!(m.gallery.len(), 2);
        assert_eq!(m.stats.mean_instances_per_frame, 2.0);
    }

    #[test]
    fn short_videos_are_excluded_with_warning() {
        let v = video("v", vec![vec![inst(1, "dog", 1), inst(2, "dog", 1)]; 2]);
        let filtered = filter_multi_instance(&[v]);
        let out = sample_splits(&filtered, &SplitConfig::new(Task::ImageSeg, 0));
        assert!(out.manifest.entries.is_empty());
        assert_eq!(out.warnings.len(), 1);
        let out = sample_splits(&filtered, &SplitConfig::new(Task::VideoProp, 0));
        assert_eq!(out.manifest.entries.len(), 1);
        assert_eq!(out.manifest.entries[0].query_frame, "00000");
    }

    #[test]
    fn largest_area_ties_go_to_smallest_id() {
        let frame = FrameAnnotation {
            frame_id: "0".into(),
            instances: vec![inst(5, "dog", 10), inst(2, "dog", 10), inst(9, "cat", 99)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            choose_target(&frame, "dog", TargetChoice::LargestArea, &mut rng),
            2
        );
    }
}
