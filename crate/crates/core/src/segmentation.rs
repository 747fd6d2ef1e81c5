//! Turning fused score maps into image-resolution masks and point prompts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maps::{BinaryMask, MapError, ScoreMap};

pub const DEFAULT_SEG_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("cannot upsample {from_h}x{from_w} to {to_h}x{to_w}")]
    Resolution {
        from_h: usize,
        from_w: usize,
        to_h: usize,
        to_w: usize,
    },
    #[error("threshold must lie in [0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("score map is empty")]
    EmptyMap,
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Single positive prompt for a promptable segmenter, in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPrompt {
    pub x: u32,
    pub y: u32,
    pub confidence: f64,
}

/// Precomputed interpolation taps for one axis.
fn taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    let last = (src - 1) as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Bilinear upsampling with half-pixel centers; the kind is preserved.
pub fn upsample_map(map: &ScoreMap, height: usize, width: usize) -> Result<ScoreMap, SegmentError> {
    let (h, w) = map.shape();
    if h == 0 || w == 0 || height < h || width < w {
        return Err(SegmentError::Resolution {
            from_h: h,
            from_w: w,
            to_h: height,
            to_w: width,
        });
    }
    let rows = taps(h, height);
    let cols = taps(w, width);
    let (lo, hi) = (map.min(), map.max());
    let mut out = Vec::with_capacity(height * width);
    for &(y0, y1, fy) in &rows {
        for &(x0, x1, fx) in &cols {
            let top = map.get(y0, x0) * (1.0 - fx) + map.get(y0, x1) * fx;
            let bottom = map.get(y1, x0) * (1.0 - fx) + map.get(y1, x1) * fx;
            // convex combination; clamp absorbs rounding at the extremes
            out.push((top * (1.0 - fy) + bottom * fy).clamp(lo, hi));
        }
    }
    Ok(ScoreMap::new(height, width, out, map.kind())?)
}

/// Cells strictly above `threshold`.
pub fn binarize(map: &ScoreMap, threshold: f64) -> Result<BinaryMask, SegmentError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(SegmentError::InvalidThreshold(threshold));
    }
    let bits = map.values().iter().map(|&v| v > threshold).collect();
    Ok(BinaryMask::new(map.height(), map.width(), bits)?)
}

/// First maximum of the map, mapped to the pixel center of its cell in an
/// `image_height × image_width` image.
pub fn point_prompt(
    map: &ScoreMap,
    image_height: usize,
    image_width: usize,
) -> Result<PointPrompt, SegmentError> {
    let best = map.argmax().ok_or(SegmentError::EmptyMap)?;
    let (h, w) = map.shape();
    let (cy, cx) = (best / w, best % w);
    let to_pixel = |c: usize, cells: usize, size: usize| {
        let p = ((c as f64 + 0.5) * size as f64 / cells as f64).floor() as usize;
        p.min(size.saturating_sub(1)) as u32
    };
    Ok(PointPrompt {
        x: to_pixel(cx, w, image_width),
        y: to_pixel(cy, h, image_height),
        confidence: map.values()[best],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::MapKind;

    fn normalized(h: usize, w: usize, values: Vec<f64>) -> ScoreMap {
        ScoreMap::new(h, w, values, MapKind::Normalized).unwrap()
    }

    #[test]
    fn same_size_is_identity() {
        let m = normalized(2, 3, vec![0.1, 0.9, 0.4, 0.0, 1.0, 0.3]);
        assert_eq!(upsample_map(&m, 2, 3).unwrap(), m);
    }

    #[test]
    fn constant_stays_constant() {
        let m = normalized(3, 2, vec![0.25; 6]);
        let up = upsample_map(&m, 17, 9).unwrap();
        assert!(up.values().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn two_by_two_to_four_by_four() {
        let m = normalized(2, 2, vec![0.0, 1.0, 1.0, 0.0]);
        let up = upsample_map(&m, 4, 4).unwrap();
        assert_eq!(up.get(0, 0), 0.0);
        assert_eq!(up.get(0, 3), 1.0);
        assert_eq!(up.get(3, 0), 1.0);
        assert_eq!(up.get(3, 3), 0.0);
        // (dest + 0.5) / 2 - 0.5 puts dest 1 at source 0.25
        let expected: f64 =
            0.75 * 0.75 * 0.0 + 0.75 * 0.25 * 1.0 + 0.25 * 0.75 * 1.0 + 0.25 * 0.25 * 0.0;
        assert!((up.get(1, 1) - expected).abs() < 1e-12);
        assert!((up.get(1, 2) - 0.625).abs() < 1e-12);
    }

    #[test]
    fn downscaling_is_rejected() {
        let m = normalized(4, 4, vec![0.0; 16]);
        assert!(matches!(
            upsample_map(&m, 2, 4),
            Err(SegmentError::Resolution { .. })
        ));
    }

    #[test]
    fn binarize_examples() {
        let m = normalized(1, 3, vec![0.2, 0.6, 0.9]);
        assert_eq!(binarize(&m, 0.5).unwrap().bits(), &[false, true, true]);
        assert_eq!(binarize(&m, 0.0).unwrap().count(), 3);
        assert_eq!(binarize(&m, 1.0).unwrap().count(), 0);
        assert_eq!(binarize(&m, 1.5), Err(SegmentError::InvalidThreshold(1.5)));
        assert!(binarize(&m, -0.1).is_err());
    }

    #[test]
    fn point_prompt_at_cell_center() {
        let mut values = vec![0.1; 16];
        values[4 + 2] = 0.95;
        let m = normalized(4, 4, values);
        let p = point_prompt(&m, 512, 512).unwrap();
        assert_eq!((p.x, p.y), (320, 192));
        assert_eq!(p.confidence, 0.95);
    }

    #[test]
    fn point_prompt_ties_and_single_cell() {
        let m = normalized(3, 3, vec![0.5; 9]);
        let p = point_prompt(&m, 300, 600).unwrap();
        assert_eq!((p.x, p.y), (100, 50));

        let one = normalized(1, 1, vec![0.7]);
        let p = point_prompt(&one, 511, 512).unwrap();
        assert_eq!((p.x, p.y), (256, 255));
    }

    #[test]
    fn point_prompt_on_empty_map_fails() {
        let m = normalized(0, 0, vec![]);
        assert_eq!(point_prompt(&m, 1, 1), Err(SegmentError::EmptyMap));
    }
}
