//! Segmentation and retrieval metrics.
//!
//! Boundary-based metrics share one convention: a boundary cell is a foreground
//! cell with at least one 4-neighbour outside the mask or outside the image, and
//! tolerance regions are Euclidean disks of radius
//! `max(1, round(tolerance * image_diagonal))` cells.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::maps::BinaryMask;
use crate::retrieval::RankedList;

/// Boundary tolerance as a fraction of the image diagonal.
pub const DEFAULT_BOUNDARY_TOLERANCE: f64 = 0.008;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("mask shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("boundary tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("no records to evaluate")]
    Empty,
    #[error("query {0:?} has no relevant items")]
    NoRelevant(String),
}

fn check_shapes(pred: &BinaryMask, gt: &BinaryMask) -> Result<(), MetricError> {
    if pred.shape() != gt.shape() {
        return Err(MetricError::ShapeMismatch(pred.shape(), gt.shape()));
    }
    Ok(())
}

/// Intersection over union; two empty masks score 1.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64, MetricError> {
    check_shapes(pred, gt)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Region similarity J, identical to [`iou`].
pub fn jaccard(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64, MetricError> {
    iou(pred, gt)
}

/// Boundary cells of `mask`.
pub fn boundary(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = mask.shape();
    BinaryMask::from_fn(h, w, |y, x| {
        mask.get(y, x)
            && (y == 0
                || x == 0
                || y + 1 == h
                || x + 1 == w
                || !mask.get(y - 1, x)
                || !mask.get(y + 1, x)
                || !mask.get(y, x - 1)
                || !mask.get(y, x + 1))
    })
}

/// Dilation radius in cells for a mask of the given shape.
pub fn tolerance_radius(shape: (usize, usize), tolerance: f64) -> usize {
    let diagonal = ((shape.0 * shape.0 + shape.1 * shape.1) as f64).sqrt();
    ((tolerance * diagonal).round() as usize).max(1)
}

/// Morphological dilation by a Euclidean disk.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let (h, w) = mask.shape();
    let r = radius as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dy, dx)))
        .filter(|(dy, dx)| dy * dy + dx * dx <= r * r)
        .collect();
    let mut out = BinaryMask::empty(h, w);
    for i in mask.true_cells() {
        let (y, x) = ((i / w) as isize, (i % w) as isize);
        for (dy, dx) in &offsets {
            let (ny, nx) = (y + dy, x + dx);
            if ny >= 0 && nx >= 0 && (ny as usize) < h && (nx as usize) < w {
                out.set(ny as usize, nx as usize, true);
            }
        }
    }
    out
}

fn check_tolerance(tolerance: f64) -> Result<(), MetricError> {
    if tolerance > 0.0 && tolerance.is_finite() {
        Ok(())
    } else {
        Err(MetricError::InvalidTolerance(tolerance))
    }
}

/// IoU of the tolerance-dilated boundaries of both masks.
pub fn boundary_iou(
    pred: &BinaryMask,
    gt: &BinaryMask,
    tolerance: f64,
) -> Result<f64, MetricError> {
    check_shapes(pred, gt)?;
    check_tolerance(tolerance)?;
    if pred.is_empty() && gt.is_empty() {
        return Ok(1.0);
    }
    let r = tolerance_radius(pred.shape(), tolerance);
    iou(&dilate(&boundary(pred), r), &dilate(&boundary(gt), r))
}

/// Fraction of `cells` lying inside `region`; `None` for an empty set.
fn coverage(cells: &BinaryMask, region: &BinaryMask) -> Option<f64> {
    let total = cells.count();
    if total == 0 {
        return None;
    }
    let hit = cells
        .bits()
        .iter()
        .zip(region.bits())
        .filter(|(c, r)| **c && **r)
        .count();
    Some(hit as f64 / total as f64)
}

/// Contour F-measure between the boundaries of `pred` and `gt`.
pub fn contour_f(pred: &BinaryMask, gt: &BinaryMask, tolerance: f64) -> Result<f64, MetricError> {
    check_shapes(pred, gt)?;
    check_tolerance(tolerance)?;
    let (pb, gb) = (boundary(pred), boundary(gt));
    let r = tolerance_radius(pred.shape(), tolerance);
    let precision = coverage(&pb, &dilate(&gb, r));
    let recall = coverage(&gb, &dilate(&pb, r));
    Ok(match (precision, recall) {
        (None, None) => 1.0,
        (Some(p), Some(r)) if p + r > 0.0 => 2.0 * p * r / (p + r),
        _ => 0.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegEvalRecord {
    pub image_id: String,
    pub prediction: BinaryMask,
    pub ground_truth: BinaryMask,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegItemScores {
    pub image_id: String,
    pub iou: f64,
    pub boundary_iou: f64,
    pub contour_f: f64,
}

/// Per-item scores for a batch of records, in input order.
pub fn score_records(
    records: &[SegEvalRecord],
    tolerance: f64,
) -> Result<Vec<SegItemScores>, MetricError> {
    records
        .iter()
        .map(|r| {
            Ok(SegItemScores {
                image_id: r.image_id.clone(),
                iou: iou(&r.prediction, &r.ground_truth)?,
                boundary_iou: boundary_iou(&r.prediction, &r.ground_truth, tolerance)?,
                contour_f: contour_f(&r.prediction, &r.ground_truth, tolerance)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentationScores {
    pub miou: f64,
    pub biou: f64,
}

/// Mean IoU and mean boundary IoU.
pub fn segmentation_scores(
    records: &[SegEvalRecord],
    tolerance: f64,
) -> Result<SegmentationScores, MetricError> {
    if records.is_empty() {
        return Err(MetricError::Empty);
    }
    let items = score_records(records, tolerance)?;
    Ok(SegmentationScores {
        miou: mean(items.iter().map(|i| i.iou)),
        biou: mean(items.iter().map(|i| i.boundary_iou)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JfScores {
    pub j: f64,
    pub f: f64,
    pub jf: f64,
}

/// Mean region similarity, mean contour accuracy, and their average.
pub fn j_and_f(records: &[SegEvalRecord], tolerance: f64) -> Result<JfScores, MetricError> {
    if records.is_empty() {
        return Err(MetricError::Empty);
    }
    check_tolerance(tolerance)?;
    let mut js = Vec::with_capacity(records.len());
    let mut fs = Vec::with_capacity(records.len());
    for r in records {
        js.push(jaccard(&r.prediction, &r.ground_truth)?);
        fs.push(contour_f(&r.prediction, &r.ground_truth, tolerance)?);
    }
    let (j, f) = (mean(js.into_iter()), mean(fs.into_iter()));
    Ok(JfScores {
        j,
        f,
        jf: 0.5 * (j + f),
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalEvalRecord {
    pub query_id: String,
    pub ranking: RankedList,
    pub relevant: BTreeSet<String>,
    /// Items removed from the ranking before scoring (e.g. the query itself
    /// when it is part of the gallery).
    pub ignore: BTreeSet<String>,
}

/// Average precision of one ranking. Relevant items missing from the ranking
/// count as never retrieved.
pub fn average_precision<'a, I>(
    ranked: I,
    relevant: &BTreeSet<String>,
    ignore: &BTreeSet<String>,
) -> Option<f64>
where
    I: IntoIterator<Item = &'a str>,
{
    let positives = relevant.iter().filter(|r| !ignore.contains(*r)).count();
    if positives == 0 {
        return None;
    }
    let mut rank = 0usize;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for id in ranked {
        if ignore.contains(id) {
            continue;
        }
        rank += 1;
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / rank as f64;
        }
    }
    Some(sum / positives as f64)
}

/// Mean of per-query average precision.
pub fn mean_ap(records: &[RetrievalEvalRecord]) -> Result<f64, MetricError> {
    if records.is_empty() {
        return Err(MetricError::Empty);
    }
    let aps = records
        .iter()
        .map(|r| {
            average_precision(
                r.ranking.entries.iter().map(|e| e.image_id.as_str()),
                &r.relevant,
                &r.ignore,
            )
            .ok_or_else(|| MetricError::NoRelevant(r.query_id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(mean(aps.into_iter()))
}
