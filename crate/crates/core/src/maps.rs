//! Score maps and binary masks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Appearance,
    Semantic,
    Fused,
    Normalized,
}

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("map data has {actual} values, expected {height}x{width}")]
    Length {
        height: usize,
        width: usize,
        actual: usize,
    },
    #[error("map value at cell {0} is not finite")]
    NonFinite(usize),
    #[error("normalized map value {value} at cell {cell} is outside [0, 1]")]
    OutOfRange { cell: usize, value: f64 },
    #[error("invalid run-length encoding: {0}")]
    Rle(String),
}

/// Real-valued `height × width` similarity map, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
    kind: MapKind,
}

impl ScoreMap {
    pub fn new(
        height: usize,
        width: usize,
        values: Vec<f64>,
        kind: MapKind,
    ) -> Result<Self, MapError> {
        if values.len() != height * width {
            return Err(MapError::Length {
                height,
                width,
                actual: values.len(),
            });
        }
        if let Some(cell) = values.iter().position(|v| !v.is_finite()) {
            return Err(MapError::NonFinite(cell));
        }
        if kind == MapKind::Normalized || kind == MapKind::Fused {
            if let Some((cell, &value)) = values
                .iter()
                .enumerate()
                .find(|(_, v)| !(0.0..=1.0).contains(*v))
            {
                return Err(MapError::OutOfRange { cell, value });
            }
        }
        Ok(Self {
            height,
            width,
            values,
            kind,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Row-major index of the first maximum.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            match best {
                Some((_, b)) if v <= b => {}
                _ => best = Some((i, v)),
            }
        }
        best.map(|(i, _)| i)
    }

    /// Rows as nested vectors, for JSON reports.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        if self.width == 0 {
            return vec![Vec::new(); self.height];
        }
        self.values
            .chunks(self.width)
            .map(<[f64]>::to_vec)
            .collect()
    }
}

/// Boolean `height × width` mask, row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BinaryMask {}x{}", self.height, self.width)?;
        for row in 0..self.height.min(32) {
            let line: String = (0..self.width.min(64))
                .map(|x| if self.get(row, x) { '#' } else { '.' })
                .collect();
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self, MapError> {
        if bits.len() != height * width {
            return Err(MapError::Length {
                height,
                width,
                actual: bits.len(),
            });
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![true; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            bits,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Row-major indices of the true cells.
    pub fn true_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.then_some(i))
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.shape() == other.shape() && self.bits.iter().zip(&other.bits).all(|(a, b)| !a || *b)
    }

    pub fn to_rle(&self) -> RunLengthMask {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u64;
        for &b in &self.bits {
            if b == current {
                run += 1;
            } else {
                counts.push(run);
                current = b;
                run = 1;
            }
        }
        counts.push(run);
        RunLengthMask {
            size: [self.height, self.width],
            counts,
        }
    }

    /// 8-bit grayscale pixels, 255 for foreground.
    pub fn to_gray_bytes(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect()
    }
}

/// Row-major run-length encoding. Runs alternate starting with background, so
/// the first count may be zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLengthMask {
    /// `[height, width]`
    pub size: [usize; 2],
    pub counts: Vec<u64>,
}

impl RunLengthMask {
    pub fn decode(&self) -> Result<BinaryMask, MapError> {
        let [height, width] = self.size;
        let total: u64 = self.counts.iter().sum();
        if total != (height * width) as u64 {
            return Err(MapError::Rle(format!(
                "runs cover {total} cells, mask has {}",
                height * width
            )));
        }
        let mut bits = Vec::with_capacity(height * width);
        for (i, &run) in self.counts.iter().enumerate() {
            bits.extend(std::iter::repeat_n(i % 2 == 1, run as usize));
        }
        BinaryMask::new(height, width, bits)
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).sum()
    }
}
