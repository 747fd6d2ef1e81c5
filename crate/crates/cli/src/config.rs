//! Run configuration: defaults, `key = value` config files, and flag overrides.
//!
//! A config file holds one `key = value` pair per line. Keys are the long flag
//! names (`seg-threshold` and `seg_threshold` are the same key). Blank lines
//! and lines starting with `#` are skipped. Values may be wrapped in double
//! quotes. Precedence is flag, then config file, then built-in default.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pdm_core::benchmark::{GalleryMode, TargetChoice, Task};
use pdm_core::matching::DEFAULT_TAU;
use pdm_core::metrics::DEFAULT_BOUNDARY_TOLERANCE;
use pdm_core::retrieval::DEFAULT_RERANK_K;
use pdm_core::segmentation::DEFAULT_SEG_THRESHOLD;
use pdm_core::{MatchMode, MatchOptions};
use serde::Serialize;

use crate::error::CliError;

pub const CONFIG_ENV: &str = "PDM_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub tau: f64,
    pub mode: MatchMode,
    pub cosine: bool,
    pub external_mask: Option<PathBuf>,
    pub seg_threshold: f64,
    pub topk: usize,
    pub boundary_tol: f64,
    pub seed: u64,
    pub gallery: Option<PathBuf>,
    pub out: PathBuf,
    pub task: Task,
    pub gallery_mode: GalleryMode,
    pub target_choice: TargetChoice,
    /// Config file the values were read from, if any.
    pub config_file: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            mode: MatchMode::Both,
            cosine: false,
            external_mask: None,
            seg_threshold: DEFAULT_SEG_THRESHOLD,
            topk: DEFAULT_RERANK_K,
            boundary_tol: DEFAULT_BOUNDARY_TOLERANCE,
            seed: 0,
            gallery: None,
            out: PathBuf::from("pdm-out"),
            task: Task::Retrieval,
            gallery_mode: GalleryMode::Disjoint,
            target_choice: TargetChoice::LargestArea,
            config_file: None,
        }
    }
}

/// Values given on the command line; `None` means "not given".
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tau: Option<f64>,
    pub mode: Option<MatchMode>,
    pub cosine: Option<bool>,
    pub external_mask: Option<PathBuf>,
    pub seg_threshold: Option<f64>,
    pub topk: Option<usize>,
    pub boundary_tol: Option<f64>,
    pub seed: Option<u64>,
    pub gallery: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub task: Option<Task>,
    pub gallery_mode: Option<GalleryMode>,
    pub target_choice: Option<TargetChoice>,
}

const KEYS: [&str; 13] = [
    "tau",
    "mode",
    "cosine",
    "external_mask",
    "seg_threshold",
    "topk",
    "boundary_tol",
    "seed",
    "gallery",
    "out",
    "task",
    "gallery_mode",
    "target_choice",
];

/// Parses config text into key/value pairs, rejecting unknown keys.
pub fn parse_config(text: &str, origin: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut values = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| CliError::Config {
            origin: format!("{}:{}", origin.display(), n + 1),
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(err(format!("unknown key {key:?}")));
        }
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        if values.insert(key.clone(), value.to_string()).is_some() {
            return Err(err(format!("key {key:?} given twice")));
        }
    }
    Ok(values)
}

fn parsed<T: FromStr>(origin: &Path, key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| CliError::Config {
        origin: origin.display().to_string(),
        message: format!("bad value for {key}: {e}"),
    })
}

/// Relative paths in a config file are taken relative to the file itself.
fn config_path(origin: &Path, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    if p.is_relative() {
        origin.parent().unwrap_or(Path::new(".")).join(p)
    } else {
        p
    }
}

fn apply_file(config: &mut RunConfig, path: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    for (key, value) in parse_config(&text, path)? {
        let v = value.as_str();
        match key.as_str() {
            "tau" => config.tau = parsed(path, &key, v)?,
            "mode" => config.mode = parsed(path, &key, v)?,
            "cosine" => config.cosine = parsed(path, &key, v)?,
            "external_mask" => config.external_mask = Some(config_path(path, v)),
            "seg_threshold" => config.seg_threshold = parsed(path, &key, v)?,
            "topk" => config.topk = parsed(path, &key, v)?,
            "boundary_tol" => config.boundary_tol = parsed(path, &key, v)?,
            "seed" => config.seed = parsed(path, &key, v)?,
            "gallery" => config.gallery = Some(config_path(path, v)),
            "out" => config.out = config_path(path, v),
            "task" => config.task = parsed(path, &key, v)?,
            "gallery_mode" => config.gallery_mode = parsed(path, &key, v)?,
            "target_choice" => config.target_choice = parsed(path, &key, v)?,
            _ => unreachable!("keys are checked while parsing"),
        }
    }
    config.config_file = Some(path.to_path_buf());
    Ok(())
}

impl RunConfig {
    /// Defaults, then `config_file` (or `$PDM_CONFIG`), then `flags`.
    pub fn resolve(
        config_file: Option<&Path>,
        env_config: Option<PathBuf>,
        flags: Overrides,
    ) -> Result<Self, CliError> {
        let mut config = RunConfig::default();
        let file = config_file.map(Path::to_path_buf).or(env_config);
        if let Some(path) = &file {
            apply_file(&mut config, path)?;
        }
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = flags.$field { config.$field = v; })*
            };
        }
        take!(
            tau,
            mode,
            cosine,
            seg_threshold,
            topk,
            boundary_tol,
            seed,
            out,
            task,
            gallery_mode,
            target_choice
        );
        if flags.external_mask.is_some() {
            config.external_mask = flags.external_mask;
        }
        if flags.gallery.is_some() {
            config.gallery = flags.gallery;
        }
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |message: String| CliError::Config {
            origin: "resolved config".into(),
            message,
        };
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(bad(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.seg_threshold) {
            return Err(bad(format!(
                "seg-threshold must lie in [0, 1], got {}",
                self.seg_threshold
            )));
        }
        if !(self.boundary_tol > 0.0 && self.boundary_tol.is_finite()) {
            return Err(bad(format!(
                "boundary-tol must be positive, got {}",
                self.boundary_tol
            )));
        }
        Ok(())
    }

    /// Match options without the external mask, which needs loading.
    pub fn match_options(&self) -> MatchOptions {
        MatchOptions {
            tau: self.tau,
            mode: self.mode,
            use_cosine: self.cosine,
            ..MatchOptions::default()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
