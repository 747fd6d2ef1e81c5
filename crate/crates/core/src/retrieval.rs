//! Gallery ranking by global match score and top-K re-ranking of an external
//! first-stage ranking.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureBundle;
use crate::fmap::{load_fmap, FmapError};
use crate::matching::{match_bundles, MatchError, MatchOptions};

pub const DEFAULT_RERANK_K: usize = 400;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("duplicate image id {0:?}")]
    DuplicateId(String),
    #[error("ranking refers to {0:?}, which is not in the gallery")]
    UnknownId(String),
    #[error("no gallery item could be scored ({0} failures)")]
    NoScorableItems(usize),
    #[error("gallery item {0:?} has no global score")]
    MissingScore(String),
    #[error("invalid manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("invalid ranking: {0}")]
    Ranking(String),
    #[error("invalid match options: {0}")]
    Options(#[from] MatchError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RetrievalError {
    pub fn code(&self) -> &'static str {
        match self {
            RetrievalError::EmptyGallery => "empty_gallery",
            RetrievalError::DuplicateId(_) => "duplicate_id",
            RetrievalError::UnknownId(_) => "unknown_id",
            RetrievalError::NoScorableItems(_) => "no_scorable_items",
            RetrievalError::MissingScore(_) => "missing_score",
            RetrievalError::Manifest { .. } => "invalid_manifest",
            RetrievalError::Ranking(_) => "invalid_ranking",
            RetrievalError::Options(_) => "invalid_options",
            RetrievalError::Io(_) => "io",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Pdm,
    External,
    Reranked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub image_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub entries: Vec<RankedEntry>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct RankingRow {
    rank: usize,
    image_id: String,
    score: f64,
}

#[derive(Serialize, Deserialize)]
struct RankingFile {
    provenance: Provenance,
    entries: Vec<RankingRow>,
}

fn sort_scored(entries: &mut [RankedEntry]) {
    entries.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.image_id.cmp(&b.image_id))
    });
}

impl RankedList {
    /// Sorts by descending score, ties by image id.
    pub fn from_scores(
        scores: impl IntoIterator<Item = (String, f64)>,
        provenance: Provenance,
    ) -> Self {
        let mut entries: Vec<RankedEntry> = scores
            .into_iter()
            .map(|(image_id, score)| RankedEntry { image_id, score })
            .collect();
        sort_scored(&mut entries);
        Self {
            entries,
            provenance,
        }
    }

    /// First-stage ranking from the manifest's external global scores.
    pub fn from_manifest_scores(manifest: &GalleryManifest) -> Result<Self, RetrievalError> {
        let scores = manifest
            .entries
            .iter()
            .map(|e| {
                e.global_score
                    .map(|s| (e.image_id.clone(), s))
                    .ok_or_else(|| RetrievalError::MissingScore(e.image_id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_scores(scores, Provenance::External))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.image_id.as_str())
    }

    fn check_unique(&self) -> Result<(), RetrievalError> {
        let mut seen = HashSet::new();
        for id in self.ids() {
            if !seen.insert(id) {
                return Err(RetrievalError::DuplicateId(id.to_string()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = RankingFile {
            provenance: self.provenance,
            entries: self
                .entries
                .iter()
                .enumerate()
                .map(|(i, e)| RankingRow {
                    rank: i + 1,
                    image_id: e.image_id.clone(),
                    score: e.score,
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("ranking serializes");
        s.push('\n');
        s
    }

    /// Entries are taken in file order; `rank` is informational.
    pub fn from_json(text: &str) -> Result<Self, RetrievalError> {
        let file: RankingFile =
            serde_json::from_str(text).map_err(|e| RetrievalError::Ranking(e.to_string()))?;
        let list = Self {
            entries: file
                .entries
                .into_iter()
                .map(|r| RankedEntry {
                    image_id: r.image_id,
                    score: r.score,
                })
                .collect(),
            provenance: file.provenance,
        };
        list.check_unique()?;
        Ok(list)
    }

    /// `rank<TAB>image_id<TAB>score`, with a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("rank\timage_id\tscore\n");
        for (i, e) in self.entries.iter().enumerate() {
            writeln!(out, "{}\t{}\t{}", i + 1, e.image_id, e.score).expect("string write");
        }
        out
    }

    pub fn from_tsv(text: &str, provenance: Provenance) -> Result<Self, RetrievalError> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || (n == 0 && line.starts_with("rank\t")) {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [_, id, score] = fields[..] else {
                return Err(RetrievalError::Ranking(format!(
                    "line {}: expected 3 tab-separated fields",
                    n + 1
                )));
            };
            let score: f64 = score.trim().parse().map_err(|_| {
                RetrievalError::Ranking(format!("line {}: bad score {score:?}", n + 1))
            })?;
            entries.push(RankedEntry {
                image_id: id.to_string(),
                score,
            });
        }
        let list = Self {
            entries,
            provenance,
        };
        list.check_unique()?;
        Ok(list)
    }

    /// Reads a ranking written by [`to_json`](Self::to_json) or [`to_tsv`](Self::to_tsv).
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        if text.trim_start().starts_with('{') {
            Self::from_json(&text)
        } else {
            Self::from_tsv(&text, Provenance::External)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryEntry {
    pub image_id: String,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_score: Option<f64>,
}

/// Gallery images and where their FMAP files live.
#[derive(Debug, Clone, PartialEq)]
pub struct GalleryManifest {
    pub entries: Vec<GalleryEntry>,
}

impl GalleryManifest {
    pub fn new(entries: Vec<GalleryEntry>) -> Result<Self, RetrievalError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.image_id.as_str()) {
                return Err(RetrievalError::DuplicateId(e.image_id.clone()));
            }
        }
        Ok(Self { entries })
    }

    /// Parses a JSON list of `{"image_id", "path", "global_score"?}`. Relative
    /// paths are resolved against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, RetrievalError> {
        let mut entries: Vec<GalleryEntry> =
            serde_json::from_str(text).map_err(|e| RetrievalError::Manifest {
                path: base_dir.to_path_buf(),
                message: e.to_string(),
            })?;
        for e in &mut entries {
            if e.path.is_relative() {
                e.path = base_dir.join(&e.path);
            }
        }
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json(&text, base).map_err(|e| match e {
            RetrievalError::Manifest { message, .. } => RetrievalError::Manifest {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Anything gallery bundles can be fetched from by image id.
pub trait BundleSource: Sync {
    fn ids(&self) -> Vec<String>;
    fn contains(&self, image_id: &str) -> bool;
    fn load(&self, image_id: &str) -> Result<FeatureBundle, FmapError>;
}

impl BundleSource for GalleryManifest {
    fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.image_id.clone()).collect()
    }

    fn contains(&self, image_id: &str) -> bool {
        self.entries.iter().any(|e| e.image_id == image_id)
    }

    fn load(&self, image_id: &str) -> Result<FeatureBundle, FmapError> {
        let entry = self
            .entries
            .iter()
            .find(|e| e.image_id == image_id)
            .ok_or_else(|| {
                FmapError::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("{image_id} not in manifest"),
                ))
            })?;
        load_fmap(&entry.path)
    }
}

/// Gallery held in memory, keyed by image id.
#[derive(Debug, Clone, Default)]
pub struct InMemoryGallery {
    bundles: BTreeMap<String, FeatureBundle>,
}

impl InMemoryGallery {
    pub fn new(bundles: impl IntoIterator<Item = FeatureBundle>) -> Result<Self, RetrievalError> {
        let mut map = BTreeMap::new();
        for b in bundles {
            let id = b.image_id.clone();
            if map.insert(id.clone(), b).is_some() {
                return Err(RetrievalError::DuplicateId(id));
            }
        }
        Ok(Self { bundles: map })
    }
}

impl BundleSource for InMemoryGallery {
    fn ids(&self) -> Vec<String> {
        self.bundles.keys().cloned().collect()
    }

    fn contains(&self, image_id: &str) -> bool {
        self.bundles.contains_key(image_id)
    }

    fn load(&self, image_id: &str) -> Result<FeatureBundle, FmapError> {
        self.bundles.get(image_id).cloned().ok_or_else(|| {
            FmapError::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{image_id} not in gallery"),
            ))
        })
    }
}

/// A gallery item that could not be scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ItemFailure {
    pub image_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRanking {
    pub ranking: RankedList,
    pub failures: Vec<ItemFailure>,
}

fn check_options(query: &FeatureBundle, options: &MatchOptions) -> Result<(), RetrievalError> {
    options.validate()?;
    if let Some(mask) = &options.external_mask {
        if mask.shape() != query.resolution() {
            return Err(MatchError::ShapeMismatch(format!(
                "external mask is {:?}, query features are {:?}",
                mask.shape(),
                query.resolution()
            ))
            .into());
        }
    }
    Ok(())
}

/// Loads, scores and drops each item; failures are collected, not fatal.
fn score_ids<S: BundleSource + ?Sized>(
    query: &FeatureBundle,
    gallery: &S,
    ids: &[String],
    options: &MatchOptions,
) -> (Vec<(String, f64)>, Vec<ItemFailure>) {
    let outcomes: Vec<(String, Result<f64, String>)> = ids
        .par_iter()
        .map(|id| {
            let score = gallery.load(id).map_err(|e| e.to_string()).and_then(|b| {
                match_bundles(query, &b, options)
                    .map(|r| r.global_score)
                    .map_err(|e| e.to_string())
            });
            (id.clone(), score)
        })
        .collect();

    let mut scored = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (image_id, outcome) in outcomes {
        match outcome {
            Ok(s) => scored.push((image_id, s)),
            Err(reason) => {
                warn!("skipping gallery item {image_id}: {reason}");
                failures.push(ItemFailure { image_id, reason });
            }
        }
    }
    failures.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    (scored, failures)
}

/// Ranks every gallery item by the global score of its match against `query`.
pub fn score_gallery<S: BundleSource + ?Sized>(
    query: &FeatureBundle,
    gallery: &S,
    options: &MatchOptions,
) -> Result<ScoredRanking, RetrievalError> {
    let ids = gallery.ids();
    if ids.is_empty() {
        return Err(RetrievalError::EmptyGallery);
    }
    check_options(query, options)?;
    let (scored, failures) = score_ids(query, gallery, &ids, options);
    if scored.is_empty() {
        return Err(RetrievalError::NoScorableItems(failures.len()));
    }
    Ok(ScoredRanking {
        ranking: RankedList::from_scores(scored, Provenance::Pdm),
        failures,
    })
}

/// Re-scores the first `k` entries of `initial` and re-orders them among
/// themselves; the remaining entries keep their order and scores.
///
/// Head items that fail to score stay in the head, after the re-scored items,
/// in their original relative order and with their original scores.
pub fn rerank<S: BundleSource + ?Sized>(
    initial: &RankedList,
    query: &FeatureBundle,
    gallery: &S,
    k: usize,
    options: &MatchOptions,
) -> Result<ScoredRanking, RetrievalError> {
    initial.check_unique()?;
    if let Some(missing) = initial.ids().find(|id| !gallery.contains(id)) {
        return Err(RetrievalError::UnknownId(missing.to_string()));
    }
    if k == 0 || initial.is_empty() {
        return Ok(ScoredRanking {
            ranking: initial.clone(),
            failures: Vec::new(),
        });
    }
    check_options(query, options)?;

    let k = k.min(initial.len());
    let head: Vec<String> = initial.entries[..k]
        .iter()
        .map(|e| e.image_id.clone())
        .collect();
    let (scored, failures) = score_ids(query, gallery, &head, options);

    let mut entries = RankedList::from_scores(scored, Provenance::Reranked).entries;
    let failed: HashSet<&str> = failures.iter().map(|f| f.image_id.as_str()).collect();
    entries.extend(
        initial.entries[..k]
            .iter()
            .filter(|e| failed.contains(e.image_id.as_str()))
            .cloned(),
    );
    entries.extend(initial.entries[k..].iter().cloned());
    Ok(ScoredRanking {
        ranking: RankedList {
            entries,
            provenance: Provenance::Reranked,
        },
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(items: &[(&str, f64)]) -> RankedList {
        RankedList {
            entries: items
                .iter()
                .map(|(id, s)| RankedEntry {
                    image_id: id.to_string(),
                    score: *s,
                })
                .collect(),
            provenance: Provenance::External,
        }
    }

    #[test]
    fn from_scores_breaks_ties_by_id() {
        let r = RankedList::from_scores(
            vec![("b".into(), 0.5), ("a".into(), 0.5), ("c".into(), 0.9)],
            Provenance::Pdm,
        );
        assert_eq!(r.ids().collect::<Vec<_>>(), vec!["c", "a", "b"]);
    }

    #[test]
    fn tsv_and_json_round_trip() {
        let r = list(&[("x", 0.25), ("y", -1.5e-3)]);
        assert_eq!(
            RankedList::from_tsv(&r.to_tsv(), Provenance::External).unwrap(),
            r
        );
        assert_eq!(RankedList::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = "rank\timage_id\tscore\n1\ta\t0.5\n2\ta\t0.4\n";
        assert!(matches!(
            RankedList::from_tsv(text, Provenance::External),
            Err(RetrievalError::DuplicateId(_))
        ));
        let entries = vec![
            GalleryEntry {
                image_id: "a".into(),
                path: "a.fmap".into(),
                global_score: None,
            };
            2
        ];
        assert!(GalleryManifest::new(entries).is_err());
    }

    #[test]
    fn manifest_resolves_relative_paths() {
        let text = r#"[{"image_id": "a", "path": "a.fmap", "global_score": 0.3},
                       {"image_id": "b", "path": "/abs/b.fmap"}]"#;
        let m = GalleryManifest::from_json(text, Path::new("/data/gallery")).unwrap();
        assert_eq!(m.entries[0].path, PathBuf::from("/data/gallery/a.fmap"));
        assert_eq!(m.entries[1].path, PathBuf::from("/abs/b.fmap"));
        assert_eq!(m.entries[1].global_score, None);
        assert!(matches!(
            RankedList::from_manifest_scores(&m),
            Err(RetrievalError::MissingScore(_))
        ));
    }

    #[test]
    fn manifest_scores_become_external_ranking() {
        let text = r#"[{"image_id": "a", "path": "a", "global_score": 0.3},
                       {"image_id": "b", "path": "b", "global_score": 0.7}]"#;
        let m = GalleryManifest::from_json(text, Path::new(".")).unwrap();
        let r = RankedList::from_manifest_scores(&m).unwrap();
        assert_eq!(r.ids().collect::<Vec<_>>(), vec!["b", "a"]);
        assert_eq!(r.provenance, Provenance::External);
    }
}
