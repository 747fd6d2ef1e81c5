//! Zero-shot personalized instance matching on diffusion-model features.
//!
//! Given feature bundles for a reference image (with its class name) and target
//! images, the engine localizes the exact reference instance: score maps and
//! masks for segmentation, point prompts for promptable segmenters, and global
//! scores for retrieval. Evaluation metrics and multi-instance benchmark
//! construction live alongside.

pub mod benchmark;
pub mod features;
pub mod fmap;
pub mod maps;
pub mod matching;
pub mod metrics;
pub mod retrieval;
pub mod segmentation;

pub use features::{validate_bundle, Diagnostic, DiagnosticKind, FeatureBundle, FeatureMap};
pub use fmap::{decode_fmap, encode_fmap, load_fmap, read_fmap, save_fmap, write_fmap, FmapError};
pub use maps::{BinaryMask, MapKind, RunLengthMask, ScoreMap};
pub use matching::{match_bundles, MatchError, MatchMode, MatchOptions, MatchResult};
pub use retrieval::{GalleryManifest, Provenance, RankedEntry, RankedList};
pub use segmentation::PointPrompt;
