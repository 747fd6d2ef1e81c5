//! Deterministic synthetic bundles and annotation documents.

use pdm_core::{FeatureBundle, FeatureMap};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub const LAYER_TAG: &str = "up_blocks.2.attentions.2.transformer_blocks.0";

pub fn bundle(
    image_id: &str,
    class_name: &str,
    appearance: FeatureMap,
    semantic: FeatureMap,
    class_token: Vec<f32>,
) -> FeatureBundle {
    let (h, w, _) = appearance.shape();
    FeatureBundle {
        image_id: image_id.into(),
        class_name: class_name.into(),
        source_height: (h * 8) as u32,
        source_width: (w * 8) as u32,
        appearance,
        semantic,
        class_token,
        timestep: 4,
        layer_tag: LAYER_TAG.into(),
    }
}

/// Bundle with standard-normal-ish features drawn from `rng`.
pub fn random_bundle(
    rng: &mut impl Rng,
    image_id: &str,
    h: usize,
    w: usize,
    d: usize,
) -> FeatureBundle {
    let mut draw = |n: usize| -> Vec<f32> { (0..n).map(|_| rng.gen_range(-2.0f32..2.0)).collect() };
    let appearance = FeatureMap::new(h, w, d, draw(h * w * d)).unwrap();
    let semantic = FeatureMap::new(h, w, d, draw(h * w * d)).unwrap();
    let class_token = draw(d);
    bundle(image_id, "object", appearance, semantic, class_token)
}

/// Random bundle whose appearance vectors all have unit length.
pub fn random_unit_bundle(
    rng: &mut impl Rng,
    image_id: &str,
    h: usize,
    w: usize,
    d: usize,
) -> FeatureBundle {
    let mut b = random_bundle(rng, image_id, h, w, d);
    for i in 0..h * w {
        let cell = b.appearance.cell_mut(i);
        let norm = cell.iter().map(|v| v * v).sum::<f32>().sqrt().max(1e-6);
        cell.iter_mut().for_each(|v| *v /= norm);
    }
    b
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Channel layout of the cue-conflict fixture (d = 8). Appearance channels 0-3
/// are textures; semantic channel 4 is the queried class direction.
pub mod conflict {
    pub const D: usize = 8;
    pub const SIDE: usize = 4;
    pub const TEXTURE_REF: usize = 0;
    pub const TEXTURE_OTHER: usize = 1;
    pub const TEXTURE_BG: usize = 3;
    pub const CLASS_DOG: usize = 4;
    pub const CLASS_CAT: usize = 5;
    pub const CLASS_BG: usize = 7;

    pub const TRUE_MATCH: &str = "g_true_dog";
    pub const SAME_TEXTURE: &str = "g_same_texture_cat";
    pub const SAME_CLASS: &str = "g_same_class_dog";
}

/// A cell: how strongly it shows the reference texture (`a`), an unrelated
/// texture (`other`), and the queried class (`s`).
#[derive(Clone, Copy, Default)]
struct Cell {
    a: f32,
    other: f32,
    s: f32,
    cat: f32,
}

fn conflict_bundle(image_id: &str, class_name: &str, cells: &[Cell; 16]) -> FeatureBundle {
    use conflict::*;
    let appearance = FeatureMap::from_fn(SIDE, SIDE, D, |y, x| {
        let c = cells[y * SIDE + x];
        let mut v = vec![0.0; D];
        v[TEXTURE_REF] = c.a;
        v[TEXTURE_OTHER] = c.other;
        v[TEXTURE_BG] = (1.0 - c.a - c.other).max(0.0);
        v
    });
    let semantic = FeatureMap::from_fn(SIDE, SIDE, D, |y, x| {
        let c = cells[y * SIDE + x];
        let mut v = vec![0.0; D];
        v[CLASS_DOG] = c.s;
        v[CLASS_CAT] = c.cat;
        v[CLASS_BG] = (1.0 - c.s - c.cat).max(0.0);
        v
    });
    let mut token = vec![0.0; D];
    token[CLASS_DOG] = 1.0;
    bundle(image_id, class_name, appearance, semantic, token)
}

fn cells_with(f: impl Fn(usize) -> Cell) -> [Cell; 16] {
    std::array::from_fn(f)
}

/// Query plus six gallery images in which appearance and semantic cues
/// disagree.
///
/// * true match: a 6-cell dog with the reference texture;
/// * same-texture distractor: an 8-cell cat with the reference texture and one
///   faintly dog-like cell;
/// * same-class distractor: an 8-cell dog with another texture and one faint
///   reference-texture patch;
/// * three fillers with faint, scattered cues.
///
/// Per image the normalized maps are (region = 1, elsewhere ~0), so the mean of
/// each map is the fraction of cells it lights up: the true match scores 6/16
/// on both maps, each distractor 8/16 on one map and 1/16 on the other.
pub fn conflict_fixture() -> (FeatureBundle, Vec<FeatureBundle>) {
    use conflict::*;
    let in_block = |i: usize| (1..3).contains(&(i / SIDE)) && (1..3).contains(&(i % SIDE));
    let query = conflict_bundle(
        "q_dog",
        "dog",
        &cells_with(|i| {
            if in_block(i) {
                Cell {
                    a: 1.0,
                    s: 1.0,
                    ..Cell::default()
                }
            } else {
                Cell::default()
            }
        }),
    );

    // rows 0-1 minus two corners: 6 cells
    let true_region = |i: usize| i < 8 && i != 0 && i != 7;
    let truth = conflict_bundle(
        TRUE_MATCH,
        "dog",
        &cells_with(|i| {
            if true_region(i) {
                Cell {
                    a: 1.0,
                    s: 1.0,
                    ..Cell::default()
                }
            } else {
                Cell::default()
            }
        }),
    );
    let same_texture = conflict_bundle(
        SAME_TEXTURE,
        "cat",
        &cells_with(|i| match i {
            0..=7 => Cell {
                a: 1.0,
                cat: 1.0,
                ..Cell::default()
            },
            15 => Cell {
                s: 0.6,
                ..Cell::default()
            },
            _ => Cell::default(),
        }),
    );
    let same_class = conflict_bundle(
        SAME_CLASS,
        "dog",
        &cells_with(|i| match i {
            8..=15 => Cell {
                other: 1.0,
                s: 1.0,
                ..Cell::default()
            },
            0 => Cell {
                a: 0.6,
                ..Cell::default()
            },
            _ => Cell::default(),
        }),
    );
    let filler = |id: &str, a_cell: usize, s_cell: usize| {
        conflict_bundle(
            id,
            "other",
            &cells_with(|i| {
                let mut c = Cell {
                    other: if i % 3 == 0 { 1.0 } else { 0.0 },
                    ..Cell::default()
                };
                if i == a_cell {
                    c.a = 0.3;
                    c.other = 0.0;
                }
                if i == s_cell {
                    c.s = 0.3;
                }
                c
            }),
        )
    };
    let gallery = vec![
        truth,
        same_texture,
        same_class,
        filler("g_filler_a", 2, 13),
        filler("g_filler_b", 5, 5),
        filler("g_filler_c", 10, 1),
    ];
    (query, gallery)
}

const CLASSES: [&str; 16] = [
    "person",
    "car",
    "dog",
    "cat",
    "horse",
    "cow",
    "sheep",
    "bird",
    "cup",
    "drawer",
    "tennis_racket",
    "slipper",
    "bottle",
    "chair",
    "bicycle",
    "banana",
];

fn rle_for_area(h: u64, w: u64, area: u64) -> Value {
    let before = (h * w - area) / 2;
    let after = h * w - area - before;
    json!({ "size": [h, w], "counts": [before, area, after] })
}

/// BURST-style annotation document with `qualifying` multi-instance videos and
/// `distractors` videos that must be filtered out.
///
/// Every qualifying video has at least three frames with two or more
/// same-class instances, plus frames with only one (which the filter drops).
pub fn annotation_document(qualifying: usize, distractors: usize, seed: u64) -> String {
    let mut rng = seeded(seed);
    let mut videos = Vec::new();
    for v in 0..qualifying {
        let class = CLASSES[v % CLASSES.len()];
        let same_class = rng.gen_range(2..=4u64);
        let others = rng.gen_range(0..=2u64);
        let mut frames = Vec::new();
        let n_frames = rng.gen_range(4..=7);
        for f in 0..n_frames {
            let mut instances = Vec::new();
            // frame 1 loses all but one same-class instance
            let present = if f == 1 { 1 } else { same_class };
            for i in 0..present {
                let area = rng.gen_range(200..5000u64);
                instances.push(json!({
                    "instance_id": i + 1,
                    "class_name": class,
                    "mask": rle_for_area(120, 160, area),
                }));
            }
            for o in 0..others {
                let other_class = CLASSES[(v + 1 + o as usize) % CLASSES.len()];
                instances.push(json!({
                    "instance_id": 100 + o,
                    "class_name": other_class,
                    "area": rng.gen_range(100..3000u64),
                }));
            }
            instances.shuffle(&mut rng);
            frames.push(json!({ "frame_id": format!("{:06}", f * 5), "instances": instances }));
        }
        videos.push(json!({ "video_id": format!("vid{v:04}"), "frames": frames, "fps": 6 }));
    }
    for v in 0..distractors {
        let frames: Vec<Value> = (0..4)
            .map(|f| {
                json!({ "frame_id": format!("{:06}", f), "instances": [
                    { "instance_id": 1, "class_name": "dog", "area": 400 },
                    { "instance_id": 2, "class_name": "cat", "area": 300 },
                ]})
            })
            .collect();
        videos.push(json!({ "video_id": format!("single{v:04}"), "frames": frames }));
    }
    videos.shuffle(&mut rng);
    serde_json::to_string_pretty(&json!({ "videos": videos })).unwrap()
}

/// A small valid bundle with fixed string lengths, so header offsets are known:
/// `h` starts at byte 37 and the payload at byte 49.
pub fn layout_bundle() -> FeatureBundle {
    let mut rng = seeded(7);
    let mut b = random_bundle(&mut rng, "img", 2, 3, 4);
    b.class_name = "dog".into();
    b.layer_tag = "L".into();
    b
}

/// Corrupted encodings of [`layout_bundle`] with the error code each must produce.
pub fn malformed_streams(good: &[u8]) -> Vec<(&'static str, Vec<u8>, &'static str)> {
    let patch = |at: usize, bytes: &[u8]| {
        let mut v = good.to_vec();
        v[at..at + bytes.len()].copy_from_slice(bytes);
        v
    };
    let mut trailing = good.to_vec();
    trailing.extend_from_slice(&[0, 0, 0, 0]);
    vec![
        ("empty stream", Vec::new(), "truncated"),
        ("wrong magic", patch(0, b"PAMF"), "bad_magic"),
        (
            "future version",
            patch(4, &2u16.to_le_bytes()),
            "unsupported_version",
        ),
        ("cut inside header", good[..20].to_vec(), "truncated"),
        (
            "cut inside payload",
            good[..good.len() - 1].to_vec(),
            "truncated",
        ),
        (
            "string length past end",
            patch(6, &u32::MAX.to_le_bytes()),
            "truncated",
        ),
        (
            "non-utf8 image id",
            patch(10, &[0xc3, 0x28]),
            "invalid_utf8",
        ),
        (
            "zero height",
            patch(37, &0u32.to_le_bytes()),
            "shape_mismatch",
        ),
        (
            "height above source",
            patch(37, &1000u32.to_le_bytes()),
            "shape_mismatch",
        ),
        (
            "declared size too large",
            patch(45, &u32::MAX.to_le_bytes()),
            "truncated",
        ),
        (
            "nan in appearance",
            patch(49, &f32::NAN.to_le_bytes()),
            "invalid_bundle",
        ),
        ("trailing bytes", trailing, "trailing_data"),
    ]
}
