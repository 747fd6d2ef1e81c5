use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pdm_core::benchmark::{GalleryMode, TargetChoice, Task};
use pdm_core::MatchMode;

use crate::config::Overrides;

#[derive(Debug, Parser)]
#[command(
    name = "pdm",
    version,
    about = "Personalized instance matching on diffusion features"
)]
pub struct Cli {
    #[command(flatten)]
    pub flags: Flags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Flags {
    /// Reference-mask threshold on the rescaled cross-attention map.
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// Which score maps to fuse: both, appearance or semantic.
    #[arg(long, global = true)]
    pub mode: Option<MatchMode>,
    /// Use cosine rather than raw dot-product appearance similarity.
    #[arg(long, global = true)]
    pub cosine: bool,
    /// Reference mask (PNG or RLE JSON) to use instead of the attention mask.
    #[arg(long, global = true, value_name = "PATH")]
    pub external_mask: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seg_threshold: Option<f64>,
    /// Number of leading entries to re-rank.
    #[arg(long, global = true)]
    pub topk: Option<usize>,
    /// Boundary tolerance as a fraction of the image diagonal.
    #[arg(long, global = true)]
    pub boundary_tol: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Gallery manifest JSON.
    #[arg(long, global = true, value_name = "MANIFEST")]
    pub gallery: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Config file; falls back to $PDM_CONFIG.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Benchmark task: retrieval, image_seg or video_prop.
    #[arg(long, global = true)]
    pub task: Option<Task>,
    /// Retrieval gallery composition: disjoint or inclusive.
    #[arg(long, global = true)]
    pub gallery_mode: Option<GalleryMode>,
    /// Reference instance in the query frame: largest_area or random.
    #[arg(long, global = true)]
    pub target_choice: Option<TargetChoice>,
}

impl Flags {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            tau: self.tau,
            mode: self.mode,
            cosine: self.cosine.then_some(true),
            external_mask: self.external_mask.clone(),
            seg_threshold: self.seg_threshold,
            topk: self.topk,
            boundary_tol: self.boundary_tol,
            seed: self.seed,
            gallery: self.gallery.clone(),
            out: self.out.clone(),
            task: self.task,
            gallery_mode: self.gallery_mode,
            target_choice: self.target_choice,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score maps for a reference/target pair, plus a heat-map overlay.
    Match {
        reference: PathBuf,
        target: PathBuf,
        /// Background image for the overlay, at the target's source size.
        #[arg(long)]
        image: Option<PathBuf>,
    },
    /// Mask and point prompt for the reference instance in the target.
    Segment { reference: PathBuf, target: PathBuf },
    /// Rank the gallery by global match score.
    Retrieve { query: PathBuf },
    /// Re-rank the head of a first-stage ranking.
    Rerank {
        query: PathBuf,
        /// Ranking (JSON or TSV); defaults to the manifest's global scores.
        initial: Option<PathBuf>,
    },
    /// mIoU and boundary IoU over predicted/ground-truth mask pairs.
    EvalSeg { input: PathBuf },
    /// J&F over per-video frame masks.
    EvalProp { input: PathBuf },
    /// mAP over query rankings.
    EvalRetrieval { input: PathBuf },
    /// Query/gallery splits from tracking annotations.
    BuildBenchmark { annotations: PathBuf },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Match { .. } => "match",
            Command::Segment { .. } => "segment",
            Command::Retrieve { .. } => "retrieve",
            Command::Rerank { .. } => "rerank",
            Command::EvalSeg { .. } => "eval-seg",
            Command::EvalProp { .. } => "eval-prop",
            Command::EvalRetrieval { .. } => "eval-retrieval",
            Command::BuildBenchmark { .. } => "build-benchmark",
        }
    }
}
