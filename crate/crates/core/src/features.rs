//! Feature tensors and per-image feature bundles.

use std::fmt;

use thiserror::Error;

/// Dense `height × width × channels` tensor stored row-major as `(y, x, channel)`.
#[derive(Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("feature map data has {actual} values, expected {height}x{width}x{channels} = {expected}")]
pub struct FeatureMapShapeError {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub expected: usize,
    pub actual: usize,
}

impl FeatureMap {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self, FeatureMapShapeError> {
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(channels))
            .unwrap_or(usize::MAX);
        if data.len() != expected {
            return Err(FeatureMapShapeError {
                height,
                width,
                channels,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    /// Builds a map by evaluating `f(y, x)` for every cell; each call must return
    /// exactly `channels` values.
    pub fn from_fn<F>(height: usize, width: usize, channels: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize) -> Vec<f32>,
    {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                let v = f(y, x);
                assert_eq!(v.len(), channels, "cell ({y}, {x}) has wrong channel count");
                data.extend_from_slice(&v);
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Number of spatial cells, `height * width`.
    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Feature vector at `(y, x)`.
    pub fn at(&self, y: usize, x: usize) -> &[f32] {
        self.cell(y * self.width + x)
    }

    /// Feature vector at row-major cell index `i`.
    pub fn cell(&self, i: usize) -> &[f32] {
        let start = i * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn cell_mut(&mut self, i: usize) -> &mut [f32] {
        let start = i * self.channels;
        &mut self.data[start..start + self.channels]
    }

    /// Iterates feature vectors in row-major cell order.
    pub fn iter_cells(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        // chunks_exact panics on a zero chunk size
        let step = self.channels.max(1);
        self.data.chunks_exact(step).take(self.cells())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, factor: f32) -> Self {
        Self {
            data: self.data.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

impl fmt::Debug for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeatureMap")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

/// Everything the matcher needs to know about one image: appearance and semantic
/// feature maps, the projected class-name token, and extraction metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub image_id: String,
    pub class_name: String,
    /// Mean of the self-attention query and key projections.
    pub appearance: FeatureMap,
    /// Cross-attention query projections.
    pub semantic: FeatureMap,
    /// Projected class-name token, one value per channel.
    pub class_token: Vec<f32>,
    pub timestep: u32,
    pub layer_tag: String,
    pub source_height: u32,
    pub source_width: u32,
}

impl FeatureBundle {
    /// Feature resolution `(h, w)`.
    pub fn resolution(&self) -> (usize, usize) {
        (self.appearance.height(), self.appearance.width())
    }

    pub fn channels(&self) -> usize {
        self.appearance.channels()
    }

    pub fn source_size(&self) -> (usize, usize) {
        (self.source_height as usize, self.source_width as usize)
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        validate_bundle(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagnosticKind {
    Shape,
    Finiteness,
    Resolution,
}

/// One violated bundle invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
}

impl Diagnostic {
    fn new(kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            DiagnosticKind::Shape => "shape",
            DiagnosticKind::Finiteness => "finiteness",
            DiagnosticKind::Resolution => "resolution",
        };
        write!(f, "{kind}: {}", self.message)
    }
}

/// Checks every bundle invariant and reports one diagnostic per violation.
pub fn validate_bundle(bundle: &FeatureBundle) -> Vec<Diagnostic> {
    use DiagnosticKind::*;
    let mut out = Vec::new();
    let (h, w, d) = bundle.appearance.shape();

    if h == 0 || w == 0 || d == 0 {
        out.push(Diagnostic::new(
            Shape,
            format!("appearance dimensions must be positive, got {h}x{w}x{d}"),
        ));
    }
    if bundle.semantic.shape() != (h, w, d) {
        let (sh, sw, sd) = bundle.semantic.shape();
        out.push(Diagnostic::new(
            Shape,
            format!("semantic shape {sh}x{sw}x{sd} differs from appearance shape {h}x{w}x{d}"),
        ));
    }
    if bundle.class_token.len() != d {
        out.push(Diagnostic::new(
            Shape,
            format!(
                "class token has length {}, expected {d}",
                bundle.class_token.len()
            ),
        ));
    }
    if !bundle.appearance.is_finite() {
        out.push(Diagnostic::new(
            Finiteness,
            "appearance contains NaN or Inf",
        ));
    }
    if !bundle.semantic.is_finite() {
        out.push(Diagnostic::new(Finiteness, "semantic contains NaN or Inf"));
    }
    if !bundle.class_token.iter().all(|v| v.is_finite()) {
        out.push(Diagnostic::new(
            Finiteness,
            "class token contains NaN or Inf",
        ));
    }
    if (bundle.source_height as usize) < h || (bundle.source_width as usize) < w {
        out.push(Diagnostic::new(
            Resolution,
            format!(
                "source size {}x{} is smaller than feature resolution {h}x{w}",
                bundle.source_height, bundle.source_width
            ),
        ));
    }
    out
}
