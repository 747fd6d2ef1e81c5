//! Crafted mask and ranking cases for metric checks.

use std::collections::BTreeSet;

use pdm_core::BinaryMask;

pub struct MaskCase {
    pub name: &'static str,
    pub pred: BinaryMask,
    pub gt: BinaryMask,
    /// Values worked out by hand; `None` where only the brute-force oracle applies.
    pub iou: Option<f64>,
    pub boundary_iou: Option<f64>,
    pub contour_f: Option<f64>,
}

pub struct RankCase {
    pub name: &'static str,
    pub ranking: Vec<&'static str>,
    pub relevant: BTreeSet<String>,
    pub ignore: BTreeSet<String>,
    pub ap: f64,
}

pub fn rect(side: usize, y0: usize, x0: usize, h: usize, w: usize) -> BinaryMask {
    BinaryMask::from_fn(side, side, |y, x| {
        (y0..y0 + h).contains(&y) && (x0..x0 + w).contains(&x)
    })
}

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn mask_cases() -> Vec<MaskCase> {
    let case = |name, pred, gt, iou, biou, f| MaskCase {
        name,
        pred,
        gt,
        iou,
        boundary_iou: biou,
        contour_f: f,
    };
    vec![
        case(
            "identical squares",
            rect(20, 5, 5, 10, 10),
            rect(20, 5, 5, 10, 10),
            Some(1.0),
            Some(1.0),
            Some(1.0),
        ),
        case(
            "both empty",
            BinaryMask::empty(16, 16),
            BinaryMask::empty(16, 16),
            Some(1.0),
            Some(1.0),
            Some(1.0),
        ),
        case(
            "empty prediction",
            BinaryMask::empty(16, 16),
            rect(16, 4, 4, 5, 5),
            Some(0.0),
            Some(0.0),
            Some(0.0),
        ),
        case(
            "far apart",
            rect(40, 0, 0, 6, 6),
            rect(40, 30, 30, 6, 6),
            Some(0.0),
            Some(0.0),
            Some(0.0),
        ),
        // one-column shift, radius 1: every boundary cell has a partner at distance 1
        case(
            "shift by one",
            rect(40, 10, 10, 10, 10),
            rect(40, 10, 11, 10, 10),
            Some(90.0 / 110.0),
            None,
            Some(1.0),
        ),
        case(
            "shift by three",
            rect(40, 10, 10, 10, 10),
            rect(40, 10, 13, 10, 10),
            Some(70.0 / 130.0),
            None,
            None,
        ),
        case(
            "single pixel",
            rect(9, 4, 4, 1, 1),
            rect(9, 4, 4, 1, 1),
            Some(1.0),
            Some(1.0),
            Some(1.0),
        ),
        case(
            "half overlap bands",
            rect(8, 0, 0, 4, 8),
            rect(8, 2, 0, 4, 8),
            Some(16.0 / 48.0),
            None,
            None,
        ),
        // 200x200 gives radius 2, so a two-pixel shift is still a perfect contour
        case(
            "radius two shift",
            rect(200, 50, 50, 40, 40),
            rect(200, 50, 52, 40, 40),
            Some(38.0 / 42.0),
            None,
            Some(1.0),
        ),
        case(
            "nested squares",
            rect(30, 12, 12, 6, 6),
            rect(30, 10, 10, 10, 10),
            Some(0.36),
            None,
            None,
        ),
        case(
            "full frames",
            BinaryMask::full(12, 12),
            BinaryMask::full(12, 12),
            Some(1.0),
            Some(1.0),
            Some(1.0),
        ),
        case(
            "thin line vs block",
            rect(24, 10, 2, 1, 20),
            rect(24, 8, 2, 5, 20),
            Some(0.2),
            None,
            None,
        ),
    ]
}

pub fn rank_cases() -> Vec<RankCase> {
    let case = |name, ranking: &[&'static str], relevant: &[&str], ignore: &[&str], ap| RankCase {
        name,
        ranking: ranking.to_vec(),
        relevant: set(relevant),
        ignore: set(ignore),
        ap,
    };
    vec![
        case(
            "relevant first",
            &["a", "b", "c", "d"],
            &["a", "b"],
            &[],
            1.0,
        ),
        case(
            "hits at two and four",
            &["x", "a", "y", "b"],
            &["a", "b"],
            &[],
            0.5,
        ),
        case(
            "one relevant missing",
            &["a", "b", "c"],
            &["a", "z"],
            &[],
            0.5,
        ),
        case("query ignored", &["q", "b", "a", "c"], &["a"], &["q"], 0.5),
        case("relevant last", &["x", "y", "a"], &["a"], &[], 1.0 / 3.0),
        case(
            "three relevant",
            &["a", "x", "b", "y", "c"],
            &["a", "b", "c"],
            &[],
            (1.0 + 2.0 / 3.0 + 3.0 / 5.0) / 3.0,
        ),
    ]
}
