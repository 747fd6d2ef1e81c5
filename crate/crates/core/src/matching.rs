//! Reference-mask extraction, appearance/semantic score maps and their fusion.
//!
//! The pipeline for one reference/target pair:
//!
//! 1. reference mask: softmax of `F^S_r · C / sqrt(d)` over all spatial cells,
//!    min-max rescaled, thresholded at `tau` (or an externally supplied mask);
//! 2. the reference appearance vectors under the mask are collected;
//! 3. appearance map: mean dot product of those vectors with every target cell;
//! 4. semantic map: `F^S_t · C` per target cell;
//! 5. both maps are min-max normalized and averaged.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureBundle, FeatureMap};
use crate::maps::{BinaryMask, MapError, MapKind, ScoreMap};

pub const DEFAULT_TAU: f64 = 0.7;

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{0} contains NaN or Inf")]
    NonFinite(&'static str),
    #[error("tau must lie in (0, 1], got {0}")]
    InvalidTau(f64),
    #[error("mask selects no cells")]
    EmptyMask,
    #[error("{0} map must be normalized before fusion")]
    NotNormalized(&'static str),
    #[error("{0} map is required by the fusion mode")]
    MissingMap(&'static str),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Which score maps contribute to the fused map.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    #[default]
    Both,
    #[serde(alias = "appearance")]
    AppearanceOnly,
    #[serde(alias = "semantic")]
    SemanticOnly,
}

impl MatchMode {
    pub fn uses_appearance(self) -> bool {
        matches!(self, MatchMode::Both | MatchMode::AppearanceOnly)
    }

    pub fn uses_semantic(self) -> bool {
        matches!(self, MatchMode::Both | MatchMode::SemanticOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MatchMode::Both => "both",
            MatchMode::AppearanceOnly => "appearance",
            MatchMode::SemanticOnly => "semantic",
        }
    }
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "both" => Ok(MatchMode::Both),
            "appearance" | "appearance_only" => Ok(MatchMode::AppearanceOnly),
            "semantic" | "semantic_only" => Ok(MatchMode::SemanticOnly),
            other => Err(format!(
                "unknown mode {other:?} (expected both, appearance or semantic)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOptions {
    /// Threshold on the min-max rescaled cross-attention map.
    pub tau: f64,
    pub mode: MatchMode,
    /// Replaces the cross-attention reference mask; must match the reference
    /// feature resolution.
    pub external_mask: Option<BinaryMask>,
    /// Cosine similarity instead of raw dot products in the appearance map.
    pub use_cosine: bool,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            mode: MatchMode::Both,
            external_mask: None,
            use_cosine: false,
        }
    }
}

impl MatchOptions {
    pub fn with_mode(mode: MatchMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        check_tau(self.tau)
    }
}

fn check_tau(tau: f64) -> Result<(), MatchError> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(MatchError::InvalidTau(tau))
    }
}

/// Foreground appearance vectors of the reference, in row-major cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedFeatures {
    channels: usize,
    vectors: Vec<Vec<f32>>,
    positions: Vec<(usize, usize)>,
}

impl MaskedFeatures {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn vectors(&self) -> &[Vec<f32>] {
        &self.vectors
    }

    /// `(y, x)` of each vector.
    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Normalized appearance map; absent in semantic-only mode.
    pub appearance_map: Option<ScoreMap>,
    /// Normalized semantic map; absent in appearance-only mode.
    pub semantic_map: Option<ScoreMap>,
    pub fused_map: ScoreMap,
    pub reference_mask: BinaryMask,
    /// Mean of the fused map.
    pub global_score: f64,
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

fn check_finite(map: &FeatureMap, what: &'static str) -> Result<(), MatchError> {
    if map.is_finite() {
        Ok(())
    } else {
        Err(MatchError::NonFinite(what))
    }
}

fn check_token(map: &FeatureMap, token: &[f32]) -> Result<(), MatchError> {
    if token.len() != map.channels() {
        return Err(MatchError::ShapeMismatch(format!(
            "class token has {} channels, feature map has {}",
            token.len(),
            map.channels()
        )));
    }
    if map.cells() == 0 || map.channels() == 0 {
        return Err(MatchError::ShapeMismatch("feature map is empty".into()));
    }
    if !token.iter().all(|v| v.is_finite()) {
        return Err(MatchError::NonFinite("class token"));
    }
    Ok(())
}

/// Softmax of `F^S · C / sqrt(d)` over all spatial cells, row-major.
pub fn cross_attention(semantic: &FeatureMap, class_token: &[f32]) -> Result<Vec<f64>, MatchError> {
    check_token(semantic, class_token)?;
    check_finite(semantic, "semantic features")?;
    let scale = (semantic.channels() as f64).sqrt();
    let logits: Vec<f64> = semantic
        .iter_cells()
        .map(|f| dot(f, class_token) / scale)
        .collect();
    let peak = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - peak).exp()).collect();
    let total: f64 = exp.iter().sum();
    Ok(exp.into_iter().map(|e| e / total).collect())
}

/// Binary reference mask from the cross-attention of the class token.
///
/// The softmax map is min-max rescaled and cells strictly above `tau` are kept.
/// A constant map keeps every cell; an empty result falls back to the first
/// maximum, so the mask is never empty.
pub fn compute_reference_mask(
    semantic: &FeatureMap,
    class_token: &[f32],
    tau: f64,
) -> Result<BinaryMask, MatchError> {
    check_tau(tau)?;
    let attention = cross_attention(semantic, class_token)?;
    let (h, w) = (semantic.height(), semantic.width());
    let lo = attention.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = attention.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(BinaryMask::full(h, w));
    }
    let range = hi - lo;
    let bits: Vec<bool> = attention.iter().map(|p| (p - lo) / range > tau).collect();
    let mut mask = BinaryMask::new(h, w, bits)?;
    if mask.is_empty() {
        let best = attention
            .iter()
            .position(|&p| p == hi)
            .expect("non-empty map has a maximum");
        mask.set(best / w, best % w, true);
    }
    Ok(mask)
}

/// Collects the appearance vectors under `mask`.
pub fn mask_features(
    appearance: &FeatureMap,
    mask: &BinaryMask,
) -> Result<MaskedFeatures, MatchError> {
    if mask.shape() != (appearance.height(), appearance.width()) {
        return Err(MatchError::ShapeMismatch(format!(
            "mask is {}x{}, features are {}x{}",
            mask.height(),
            mask.width(),
            appearance.height(),
            appearance.width()
        )));
    }
    if mask.is_empty() {
        return Err(MatchError::EmptyMask);
    }
    let w = appearance.width();
    let (vectors, positions) = mask
        .true_cells()
        .map(|i| (appearance.cell(i).to_vec(), (i / w, i % w)))
        .unzip();
    Ok(MaskedFeatures {
        channels: appearance.channels(),
        vectors,
        positions,
    })
}

fn unit(v: &[f32]) -> Vec<f64> {
    let norm = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    if norm == 0.0 {
        vec![0.0; v.len()]
    } else {
        v.iter().map(|&x| x as f64 / norm).collect()
    }
}

/// Mean similarity between the masked reference vectors and every target cell.
///
/// The average of dot products equals the dot product with the mean reference
/// vector, which is what gets computed. With `use_cosine` every vector is
/// unit-normalized first; zero vectors contribute similarity 0.
pub fn appearance_score_map(
    reference: &MaskedFeatures,
    target: &FeatureMap,
    use_cosine: bool,
) -> Result<ScoreMap, MatchError> {
    if reference.is_empty() {
        return Err(MatchError::EmptyMask);
    }
    if reference.channels() != target.channels() {
        return Err(MatchError::ShapeMismatch(format!(
            "reference has {} channels, target has {}",
            reference.channels(),
            target.channels()
        )));
    }
    check_finite(target, "target appearance")?;
    if !reference.vectors.iter().flatten().all(|v| v.is_finite()) {
        return Err(MatchError::NonFinite("reference appearance"));
    }

    let d = reference.channels();
    let n = reference.len() as f64;
    let mut mean = vec![0.0f64; d];
    for v in &reference.vectors {
        if use_cosine {
            for (m, x) in mean.iter_mut().zip(unit(v)) {
                *m += x;
            }
        } else {
            for (m, &x) in mean.iter_mut().zip(v) {
                *m += x as f64;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let values = target
        .iter_cells()
        .map(|t| {
            if use_cosine {
                unit(t).iter().zip(&mean).map(|(a, b)| a * b).sum()
            } else {
                t.iter().zip(&mean).map(|(&a, b)| a as f64 * b).sum()
            }
        })
        .collect();
    Ok(ScoreMap::new(
        target.height(),
        target.width(),
        values,
        MapKind::Appearance,
    )?)
}

/// `F^S_t · C` for every target cell.
pub fn semantic_score_map(
    semantic: &FeatureMap,
    class_token: &[f32],
) -> Result<ScoreMap, MatchError> {
    check_token(semantic, class_token)?;
    check_finite(semantic, "target semantic")?;
    let values = semantic.iter_cells().map(|f| dot(f, class_token)).collect();
    Ok(ScoreMap::new(
        semantic.height(),
        semantic.width(),
        values,
        MapKind::Semantic,
    )?)
}

/// Min-max rescales to `[0, 1]`; a constant map becomes all ones.
pub fn normalize_map(map: &ScoreMap) -> ScoreMap {
    let (lo, hi) = (map.min(), map.max());
    let values = if hi > lo {
        let range = hi - lo;
        map.values()
            .iter()
            .map(|v| ((v - lo) / range).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![1.0; map.values().len()]
    };
    ScoreMap::new(map.height(), map.width(), values, MapKind::Normalized)
        .expect("rescaled values are finite and in range")
}

fn require_normalized<'a>(
    map: Option<&'a ScoreMap>,
    what: &'static str,
) -> Result<&'a ScoreMap, MatchError> {
    let map = map.ok_or(MatchError::MissingMap(what))?;
    if map.kind() != MapKind::Normalized {
        return Err(MatchError::NotNormalized(what));
    }
    Ok(map)
}

/// Combines normalized maps according to `mode`. Only the maps the mode uses
/// need to be supplied.
pub fn fuse_maps(
    appearance: Option<&ScoreMap>,
    semantic: Option<&ScoreMap>,
    mode: MatchMode,
) -> Result<ScoreMap, MatchError> {
    let (shape, values) = match mode {
        MatchMode::Both => {
            let a = require_normalized(appearance, "appearance")?;
            let s = require_normalized(semantic, "semantic")?;
            if a.shape() != s.shape() {
                return Err(MatchError::ShapeMismatch(format!(
                    "appearance map is {:?}, semantic map is {:?}",
                    a.shape(),
                    s.shape()
                )));
            }
            let values = a
                .values()
                .iter()
                .zip(s.values())
                .map(|(x, y)| 0.5 * (x + y))
                .collect();
            (a.shape(), values)
        }
        MatchMode::AppearanceOnly => {
            let a = require_normalized(appearance, "appearance")?;
            (a.shape(), a.values().to_vec())
        }
        MatchMode::SemanticOnly => {
            let s = require_normalized(semantic, "semantic")?;
            (s.shape(), s.values().to_vec())
        }
    };
    Ok(ScoreMap::new(shape.0, shape.1, values, MapKind::Fused)?)
}

/// Localizes the reference instance in `target`.
pub fn match_bundles(
    reference: &FeatureBundle,
    target: &FeatureBundle,
    options: &MatchOptions,
) -> Result<MatchResult, MatchError> {
    options.validate()?;
    if reference.channels() != target.channels() {
        return Err(MatchError::ShapeMismatch(format!(
            "reference has {} channels, target has {}",
            reference.channels(),
            target.channels()
        )));
    }
    if target.semantic.shape() != target.appearance.shape() {
        return Err(MatchError::ShapeMismatch(
            "target appearance and semantic shapes differ".into(),
        ));
    }

    let reference_mask = match &options.external_mask {
        Some(mask) => {
            if mask.shape() != reference.resolution() {
                return Err(MatchError::ShapeMismatch(format!(
                    "external mask is {}x{}, reference features are {}x{}",
                    mask.height(),
                    mask.width(),
                    reference.resolution().0,
                    reference.resolution().1
                )));
            }
            if mask.is_empty() {
                return Err(MatchError::EmptyMask);
            }
            mask.clone()
        }
        None => compute_reference_mask(&reference.semantic, &reference.class_token, options.tau)?,
    };

    let appearance_map = if options.mode.uses_appearance() {
        let masked = mask_features(&reference.appearance, &reference_mask)?;
        let raw = appearance_score_map(&masked, &target.appearance, options.use_cosine)?;
        Some(normalize_map(&raw))
    } else {
        None
    };
    let semantic_map = if options.mode.uses_semantic() {
        let raw = semantic_score_map(&target.semantic, &reference.class_token)?;
        Some(normalize_map(&raw))
    } else {
        None
    };

    let fused_map = fuse_maps(appearance_map.as_ref(), semantic_map.as_ref(), options.mode)?;
    let global_score = fused_map.mean();
    Ok(MatchResult {
        appearance_map,
        semantic_map,
        fused_map,
        reference_mask,
        global_score,
    })
}

/// Reduces an image-resolution mask to `h × w` by "any" pooling over the
/// rectangular block each cell covers.
pub fn downsample_mask(mask: &BinaryMask, h: usize, w: usize) -> Result<BinaryMask, MatchError> {
    let (src_h, src_w) = mask.shape();
    if h == 0 || w == 0 || src_h < h || src_w < w {
        return Err(MatchError::ShapeMismatch(format!(
            "cannot downsample {src_h}x{src_w} to {h}x{w}"
        )));
    }
    if mask.is_empty() {
        return Err(MatchError::EmptyMask);
    }
    // pixel i belongs to cell y iff y*H/h <= i < (y+1)*H/h
    let bound = |k: usize, src: usize, dst: usize| (k * src).div_ceil(dst);
    Ok(BinaryMask::from_fn(h, w, |y, x| {
        let rows = bound(y, src_h, h)..bound(y + 1, src_h, h);
        rows.into_iter()
            .any(|sy| (bound(x, src_w, w)..bound(x + 1, src_w, w)).any(|sx| mask.get(sy, sx)))
    }))
}
