use std::path::PathBuf;

use pdm_core::benchmark::BenchmarkError;
use pdm_core::maps::MapError;
use pdm_core::metrics::MetricError;
use pdm_core::retrieval::RetrievalError;
use pdm_core::segmentation::SegmentError;
use pdm_core::{FmapError, MatchError};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{origin}: {message}")]
    Config { origin: String, message: String },
    #[error("{path}: {source}")]
    Fmap { path: PathBuf, source: FmapError },
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Fmap { source, .. } => source.code(),
            CliError::Match(_) => "match",
            CliError::Segment(_) => "segment",
            CliError::Metric(_) => "metric",
            CliError::Map(_) => "mask",
            CliError::Retrieval(e) => e.code(),
            CliError::Benchmark(_) => "benchmark_schema",
            CliError::Input { .. } => "invalid_input",
            CliError::Image { .. } => "image",
            CliError::Io { .. } => "io",
        }
    }

    /// One-line JSON body printed to stderr on failure.
    pub fn to_json(&self) -> String {
        json!({ "error": { "code": self.code(), "message": self.to_string() } }).to_string()
    }

    pub fn input(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Input {
            path: path.into(),
            message: message.into(),
        }
    }
}
