//! Naive reference implementations.
//!
//! Everything here works on raw row-major slices with explicit index arithmetic
//! and plain loops, and shares no code with `pdm-core`'s computation paths.

#![allow(clippy::needless_range_loop)]

use std::collections::{BTreeSet, HashSet};

use pdm_core::{BinaryMask, FeatureBundle};

/// `h × w × d` view over raw data.
struct Grid<'a> {
    data: &'a [f32],
    h: usize,
    w: usize,
    d: usize,
}

impl Grid<'_> {
    fn value(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.w + x) * self.d + c] as f64
    }
}

fn grid(map: &pdm_core::FeatureMap) -> Grid<'_> {
    let (h, w, d) = map.shape();
    Grid {
        data: map.as_slice(),
        h,
        w,
        d,
    }
}

#[derive(Debug, Clone)]
pub struct OraclePipeline {
    pub softmax: Vec<f64>,
    pub mask: Vec<bool>,
    pub appearance_raw: Vec<f64>,
    pub semantic_raw: Vec<f64>,
    pub appearance_norm: Vec<f64>,
    pub semantic_norm: Vec<f64>,
    pub fused: Vec<f64>,
    pub global: f64,
}

/// Mode flags: (use appearance, use semantic).
pub fn pipeline(
    reference: &FeatureBundle,
    target: &FeatureBundle,
    tau: f64,
    uses: (bool, bool),
    external_mask: Option<&[bool]>,
) -> OraclePipeline {
    let rs = grid(&reference.semantic);
    let ra = grid(&reference.appearance);
    let ta = grid(&target.appearance);
    let ts = grid(&target.semantic);
    let token: Vec<f64> = reference.class_token.iter().map(|&v| v as f64).collect();

    // cross-attention softmax over all reference cells
    let mut logits = Vec::new();
    for y in 0..rs.h {
        for x in 0..rs.w {
            let mut s = 0.0;
            for c in 0..rs.d {
                s += rs.value(y, x, c) * token[c];
            }
            logits.push(s / (rs.d as f64).sqrt());
        }
    }
    let mut m = f64::NEG_INFINITY;
    for &l in &logits {
        if l > m {
            m = l;
        }
    }
    let mut z = 0.0;
    for &l in &logits {
        z += (l - m).exp();
    }
    let softmax: Vec<f64> = logits.iter().map(|l| (l - m).exp() / z).collect();

    let mask = match external_mask {
        Some(mask) => mask.to_vec(),
        None => threshold_mask(&softmax, tau),
    };

    // appearance: average of per-vector dot products, one triple loop
    let n = mask.iter().filter(|b| **b).count() as f64;
    let mut appearance_raw = vec![0.0; ta.h * ta.w];
    for ty in 0..ta.h {
        for tx in 0..ta.w {
            let mut total = 0.0;
            for ry in 0..ra.h {
                for rx in 0..ra.w {
                    if !mask[ry * ra.w + rx] {
                        continue;
                    }
                    let mut d = 0.0;
                    for c in 0..ra.d {
                        d += ra.value(ry, rx, c) * ta.value(ty, tx, c);
                    }
                    total += d;
                }
            }
            appearance_raw[ty * ta.w + tx] = total / n;
        }
    }

    let mut semantic_raw = vec![0.0; ts.h * ts.w];
    for y in 0..ts.h {
        for x in 0..ts.w {
            let mut s = 0.0;
            for c in 0..ts.d {
                s += ts.value(y, x, c) * token[c];
            }
            semantic_raw[y * ts.w + x] = s;
        }
    }

    let appearance_norm = min_max(&appearance_raw);
    let semantic_norm = min_max(&semantic_raw);
    let fused: Vec<f64> = match uses {
        (true, true) => appearance_norm
            .iter()
            .zip(&semantic_norm)
            .map(|(a, s)| (a + s) / 2.0)
            .collect(),
        (true, false) => appearance_norm.clone(),
        (false, true) => semantic_norm.clone(),
        (false, false) => panic!("mode must use at least one map"),
    };
    let global = fused.iter().sum::<f64>() / fused.len() as f64;
    OraclePipeline {
        softmax,
        mask,
        appearance_raw,
        semantic_raw,
        appearance_norm,
        semantic_norm,
        fused,
        global,
    }
}

/// Rescaled-softmax thresholding with the constant and empty-mask fallbacks.
pub fn threshold_mask(softmax: &[f64], tau: f64) -> Vec<bool> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &p in softmax {
        lo = lo.min(p);
        hi = hi.max(p);
    }
    if hi == lo {
        return vec![true; softmax.len()];
    }
    let mut mask: Vec<bool> = softmax.iter().map(|p| (p - lo) / (hi - lo) > tau).collect();
    if !mask.contains(&true) {
        let mut best = 0;
        for i in 1..softmax.len() {
            if softmax[i] > softmax[best] {
                best = i;
            }
        }
        mask[best] = true;
    }
    mask
}

pub fn min_max(values: &[f64]) -> Vec<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi == lo {
        return vec![1.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Clamped bilinear sample of a row-major `h × w` grid at fractional `(sy, sx)`.
fn sample(values: &[f64], h: usize, w: usize, sy: f64, sx: f64) -> f64 {
    let sy = sy.max(0.0).min((h - 1) as f64);
    let sx = sx.max(0.0).min((w - 1) as f64);
    let mut acc = 0.0;
    // weights over the four integer neighbours
    for y in 0..h {
        for x in 0..w {
            let wy = (1.0 - (sy - y as f64).abs()).max(0.0);
            let wx = (1.0 - (sx - x as f64).abs()).max(0.0);
            acc += wy * wx * values[y * w + x];
        }
    }
    acc
}

/// Half-pixel-center bilinear upsampling by direct tent-weight summation.
pub fn upsample(values: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        for x in 0..out_w {
            let sy = (y as f64 + 0.5) * h as f64 / out_h as f64 - 0.5;
            let sx = (x as f64 + 0.5) * w as f64 / out_w as f64 - 0.5;
            out.push(sample(values, h, w, sy, sx));
        }
    }
    out
}

type Cell = (i64, i64);

fn cells(mask: &BinaryMask) -> HashSet<Cell> {
    let mut s = HashSet::new();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(y, x) {
                s.insert((y as i64, x as i64));
            }
        }
    }
    s
}

/// Foreground cells touching the background or the image edge (4-neighbourhood).
pub fn boundary_set(mask: &BinaryMask) -> HashSet<Cell> {
    let fg = cells(mask);
    let (h, w) = (mask.height() as i64, mask.width() as i64);
    fg.iter()
        .copied()
        .filter(|&(y, x)| {
            [(y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)]
                .iter()
                .any(|&(ny, nx)| ny < 0 || nx < 0 || ny >= h || nx >= w || !fg.contains(&(ny, nx)))
        })
        .collect()
}

fn radius(h: usize, w: usize, tolerance: f64) -> f64 {
    let r = (tolerance * ((h * h + w * w) as f64).sqrt()).round();
    r.max(1.0)
}

/// Every image cell within Euclidean distance `r` of some cell of `set`.
fn dilated_set(set: &HashSet<Cell>, h: usize, w: usize, r: f64) -> HashSet<Cell> {
    let mut out = HashSet::new();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if set
                .iter()
                .any(|&(by, bx)| (((by - y).pow(2) + (bx - x).pow(2)) as f64) <= r * r)
            {
                out.insert((y, x));
            }
        }
    }
    out
}

fn set_iou(a: &HashSet<Cell>, b: &HashSet<Cell>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> f64 {
    set_iou(&cells(pred), &cells(gt))
}

pub fn boundary_iou(pred: &BinaryMask, gt: &BinaryMask, tolerance: f64) -> f64 {
    let (h, w) = pred.shape();
    if cells(pred).is_empty() && cells(gt).is_empty() {
        return 1.0;
    }
    let r = radius(h, w, tolerance);
    set_iou(
        &dilated_set(&boundary_set(pred), h, w, r),
        &dilated_set(&boundary_set(gt), h, w, r),
    )
}

/// Precision and recall from exhaustive nearest-boundary distances.
pub fn contour_f(pred: &BinaryMask, gt: &BinaryMask, tolerance: f64) -> f64 {
    let (h, w) = pred.shape();
    let r = radius(h, w, tolerance);
    let pb = boundary_set(pred);
    let gb = boundary_set(gt);
    if pb.is_empty() && gb.is_empty() {
        return 1.0;
    }
    if pb.is_empty() || gb.is_empty() {
        return 0.0;
    }
    let near = |p: &Cell, set: &HashSet<Cell>| {
        set.iter()
            .map(|q| (((p.0 - q.0).pow(2) + (p.1 - q.1).pow(2)) as f64).sqrt())
            .fold(f64::INFINITY, f64::min)
            <= r
    };
    let precision = pb.iter().filter(|p| near(p, &gb)).count() as f64 / pb.len() as f64;
    let recall = gb.iter().filter(|g| near(g, &pb)).count() as f64 / gb.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Average precision as the mean, over relevant items, of precision at the
/// cut-off where each is retrieved (zero when never retrieved).
pub fn average_precision(ranking: &[&str], relevant: &BTreeSet<String>) -> f64 {
    let mut total = 0.0;
    for rel in relevant {
        if let Some(pos) = ranking.iter().position(|id| id == rel) {
            let cutoff = &ranking[..=pos];
            let hits = cutoff.iter().filter(|id| relevant.contains(**id)).count();
            total += hits as f64 / cutoff.len() as f64;
        }
    }
    total / relevant.len() as f64
}
