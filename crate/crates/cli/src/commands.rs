use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use log::{info, warn};
use pdm_core::benchmark::build_benchmark;
use pdm_core::matching::downsample_mask;
use pdm_core::metrics::{
    average_precision, j_and_f, score_records, segmentation_scores, JfScores, RetrievalEvalRecord,
    SegEvalRecord,
};
use pdm_core::retrieval::{rerank, score_gallery, ItemFailure, ScoredRanking};
use pdm_core::segmentation::{binarize, point_prompt, upsample_map};
use pdm_core::{
    match_bundles, FeatureBundle, GalleryManifest, MatchOptions, MatchResult, Provenance,
    RankedList, ScoreMap,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cli::Command;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::files::{self, MaskSource};

/// Runs one subcommand and returns the summary printed on stdout.
pub fn run(command: &Command, config: &RunConfig) -> Result<Value, CliError> {
    files::ensure_dir(&config.out)?;
    match command {
        Command::Match {
            reference,
            target,
            image,
        } => run_match(reference, target, image.as_deref(), config),
        Command::Segment { reference, target } => run_segment(reference, target, config),
        Command::Retrieve { query } => run_retrieve(query, config),
        Command::Rerank { query, initial } => run_rerank(query, initial.as_deref(), config),
        Command::EvalSeg { input } => run_eval_seg(input, config),
        Command::EvalProp { input } => run_eval_prop(input, config),
        Command::EvalRetrieval { input } => run_eval_retrieval(input, config),
        Command::BuildBenchmark { annotations } => run_build_benchmark(annotations, config),
    }
}

fn out(config: &RunConfig, name: &str) -> PathBuf {
    config.out.join(name)
}

fn display(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

/// Loads the external mask, pooling it down to the reference resolution if it
/// was given at image resolution.
fn match_options(config: &RunConfig, reference: &FeatureBundle) -> Result<MatchOptions, CliError> {
    let mut options = config.match_options();
    if let Some(path) = &config.external_mask {
        let mask = files::load_mask(path)?;
        let (h, w) = reference.resolution();
        options.external_mask = Some(if mask.shape() == (h, w) {
            mask
        } else {
            downsample_mask(&mask, h, w)?
        });
    }
    Ok(options)
}

fn match_pair(
    reference: &Path,
    target: &Path,
    config: &RunConfig,
) -> Result<(FeatureBundle, FeatureBundle, MatchResult), CliError> {
    let r = files::load_bundle(reference)?;
    let t = files::load_bundle(target)?;
    let options = match_options(config, &r)?;
    let result = match_bundles(&r, &t, &options)?;
    Ok((r, t, result))
}

fn upsampled(map: &ScoreMap, target: &FeatureBundle) -> Result<ScoreMap, CliError> {
    let (h, w) = target.source_size();
    Ok(upsample_map(map, h, w)?)
}

fn run_match(
    reference: &Path,
    target: &Path,
    image: Option<&Path>,
    config: &RunConfig,
) -> Result<Value, CliError> {
    let (r, t, result) = match_pair(reference, target, config)?;
    let rows = |m: &Option<ScoreMap>| m.as_ref().map(ScoreMap::to_rows);
    let report = json!({
        "reference": r.image_id,
        "target": t.image_id,
        "mode": config.mode.as_str(),
        "tau": config.tau,
        "global_score": result.global_score,
        "reference_mask": result.reference_mask.to_rle(),
        "appearance_map": rows(&result.appearance_map),
        "semantic_map": rows(&result.semantic_map),
        "fused_map": result.fused_map.to_rows(),
    });

    let background = image.map(files::read_rgb).transpose()?;
    let heat = upsampled(&result.fused_map, &t)?;
    if let Some(bg) = &background {
        if (bg.height() as usize, bg.width() as usize) != heat.shape() {
            return Err(CliError::input(
                image.unwrap(),
                format!(
                    "overlay image is {}x{}, target source size is {}x{}",
                    bg.height(),
                    bg.width(),
                    heat.height(),
                    heat.width()
                ),
            ));
        }
    }
    let paths = [out(config, "match.json"), out(config, "overlay.png")];
    files::write_json(&paths[0], &report)?;
    files::write_overlay_png(&paths[1], &heat, background.as_ref())?;
    Ok(json!({
        "command": "match",
        "global_score": result.global_score,
        "outputs": display(&paths),
    }))
}

fn run_segment(reference: &Path, target: &Path, config: &RunConfig) -> Result<Value, CliError> {
    let (_, t, result) = match_pair(reference, target, config)?;
    let full = upsampled(&result.fused_map, &t)?;
    let mask = binarize(&full, config.seg_threshold)?;
    if mask.is_empty() {
        warn!(
            "mask for {} is empty at threshold {}",
            t.image_id, config.seg_threshold
        );
    }
    let (h, w) = t.source_size();
    let point = point_prompt(&result.fused_map, h, w)?;

    let paths = [
        out(config, "mask.png"),
        out(config, "mask_rle.json"),
        out(config, "point.json"),
    ];
    files::write_mask_png(&paths[0], &mask)?;
    files::write_json(&paths[1], &mask.to_rle())?;
    files::write_json(
        &paths[2],
        &json!({
            "image_id": t.image_id,
            "x": point.x,
            "y": point.y,
            "confidence": point.confidence,
        }),
    )?;
    Ok(json!({
        "command": "segment",
        "foreground_pixels": mask.count(),
        "outputs": display(&paths),
    }))
}

fn gallery(config: &RunConfig) -> Result<GalleryManifest, CliError> {
    let path = config.gallery.as_ref().ok_or_else(|| CliError::Config {
        origin: "resolved config".into(),
        message: "--gallery is required".into(),
    })?;
    Ok(GalleryManifest::load(path)?)
}

fn write_ranking(
    config: &RunConfig,
    command: &str,
    scored: &ScoredRanking,
) -> Result<Value, CliError> {
    let paths = [
        out(config, "ranking.json"),
        out(config, "ranking.tsv"),
        out(config, "failures.json"),
    ];
    files::write_text(&paths[0], &scored.ranking.to_json())?;
    files::write_text(&paths[1], &scored.ranking.to_tsv())?;
    files::write_json(&paths[2], &scored.failures)?;
    Ok(json!({
        "command": command,
        "ranked": scored.ranking.len(),
        "failures": scored.failures.iter().map(|f: &ItemFailure| &f.image_id).collect::<Vec<_>>(),
        "outputs": display(&paths),
    }))
}

fn run_retrieve(query: &Path, config: &RunConfig) -> Result<Value, CliError> {
    let q = files::load_bundle(query)?;
    let g = gallery(config)?;
    let options = match_options(config, &q)?;
    let scored = score_gallery(&q, &g, &options)?;
    write_ranking(config, "retrieve", &scored)
}

fn run_rerank(query: &Path, initial: Option<&Path>, config: &RunConfig) -> Result<Value, CliError> {
    let q = files::load_bundle(query)?;
    let g = gallery(config)?;
    let initial = match initial {
        Some(path) => RankedList::load(path)?,
        None => RankedList::from_manifest_scores(&g)?,
    };
    let options = match_options(config, &q)?;
    info!(
        "re-ranking top {} of {}",
        config.topk.min(initial.len()),
        initial.len()
    );
    let scored = rerank(&initial, &q, &g, config.topk, &options)?;
    write_ranking(config, "rerank", &scored)
}

#[derive(Debug, Deserialize)]
struct SegInput {
    items: Vec<SegInputItem>,
}

#[derive(Debug, Deserialize)]
struct SegInputItem {
    image_id: String,
    prediction: MaskSource,
    ground_truth: MaskSource,
}

fn load_records(items: &[SegInputItem], base: &Path) -> Result<Vec<SegEvalRecord>, CliError> {
    let mut records = items
        .iter()
        .map(|i| {
            Ok(SegEvalRecord {
                image_id: i.image_id.clone(),
                prediction: i.prediction.load(base)?,
                ground_truth: i.ground_truth.load(base)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    records.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(records)
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn run_eval_seg(input: &Path, config: &RunConfig) -> Result<Value, CliError> {
    let doc: SegInput = files::read_json(input)?;
    let records = load_records(&doc.items, &files::parent_dir(input))?;
    let summary = segmentation_scores(&records, config.boundary_tol)?;
    let items = score_records(&records, config.boundary_tol)?;

    let report = json!({
        "boundary_tol": config.boundary_tol,
        "items": items,
        "miou": summary.miou,
        "biou": summary.biou,
    });
    let csv = csv_text(
        &["image_id", "iou", "boundary_iou", "contour_f"],
        items.iter().map(|i| {
            vec![
                i.image_id.clone(),
                i.iou.to_string(),
                i.boundary_iou.to_string(),
                i.contour_f.to_string(),
            ]
        }),
    );
    let paths = [out(config, "eval_seg.json"), out(config, "eval_seg.csv")];
    files::write_json(&paths[0], &report)?;
    files::write_text(&paths[1], &csv)?;
    Ok(json!({
        "command": "eval-seg",
        "miou": summary.miou,
        "biou": summary.biou,
        "outputs": display(&paths),
    }))
}

#[derive(Debug, Deserialize)]
struct PropInput {
    videos: Vec<PropVideo>,
}

#[derive(Debug, Deserialize)]
struct PropVideo {
    video_id: String,
    frames: Vec<PropFrame>,
}

#[derive(Debug, Deserialize)]
struct PropFrame {
    frame_id: String,
    prediction: MaskSource,
    ground_truth: MaskSource,
}

#[derive(Debug, Serialize)]
struct VideoScores {
    video_id: String,
    frames: usize,
    #[serde(flatten)]
    scores: JfScores,
}

/// Per-video J&F over the listed frames; the summary averages videos.
fn run_eval_prop(input: &Path, config: &RunConfig) -> Result<Value, CliError> {
    let doc: PropInput = files::read_json(input)?;
    let base = files::parent_dir(input);
    let mut videos = Vec::with_capacity(doc.videos.len());
    for v in &doc.videos {
        let items: Vec<SegInputItem> = v
            .frames
            .iter()
            .map(|f| SegInputItem {
                image_id: f.frame_id.clone(),
                prediction: f.prediction.clone(),
                ground_truth: f.ground_truth.clone(),
            })
            .collect();
        let records = load_records(&items, &base)?;
        videos.push(VideoScores {
            video_id: v.video_id.clone(),
            frames: records.len(),
            scores: j_and_f(&records, config.boundary_tol)?,
        });
    }
    if videos.is_empty() {
        return Err(CliError::input(input, "no videos to evaluate"));
    }
    videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    let n = videos.len() as f64;
    let j = videos.iter().map(|v| v.scores.j).sum::<f64>() / n;
    let f = videos.iter().map(|v| v.scores.f).sum::<f64>() / n;
    let jf = 0.5 * (j + f);

    let report = json!({
        "boundary_tol": config.boundary_tol,
        "videos": videos,
        "j": j,
        "f": f,
        "jf": jf,
    });
    let csv = csv_text(
        &["video_id", "frames", "j", "f", "jf"],
        videos.iter().map(|v| {
            vec![
                v.video_id.clone(),
                v.frames.to_string(),
                v.scores.j.to_string(),
                v.scores.f.to_string(),
                v.scores.jf.to_string(),
            ]
        }),
    );
    let paths = [out(config, "eval_prop.json"), out(config, "eval_prop.csv")];
    files::write_json(&paths[0], &report)?;
    files::write_text(&paths[1], &csv)?;
    Ok(json!({
        "command": "eval-prop",
        "j": j,
        "f": f,
        "jf": jf,
        "outputs": display(&paths),
    }))
}

#[derive(Debug, Deserialize)]
struct RetrievalInput {
    queries: Vec<RetrievalQuery>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RankingSource {
    Ids(Vec<String>),
    Path(PathBuf),
}

#[derive(Debug, Deserialize)]
struct RetrievalQuery {
    query_id: String,
    ranking: RankingSource,
    relevant: BTreeSet<String>,
    #[serde(default)]
    ignore: BTreeSet<String>,
}

fn run_eval_retrieval(input: &Path, config: &RunConfig) -> Result<Value, CliError> {
    let doc: RetrievalInput = files::read_json(input)?;
    let base = files::parent_dir(input);
    let mut records = Vec::with_capacity(doc.queries.len());
    for q in doc.queries {
        let ranking = match q.ranking {
            RankingSource::Ids(ids) => {
                let n = ids.len();
                RankedList {
                    entries: ids
                        .into_iter()
                        .enumerate()
                        .map(|(i, image_id)| pdm_core::RankedEntry {
                            image_id,
                            score: (n - i) as f64,
                        })
                        .collect(),
                    provenance: Provenance::External,
                }
            }
            RankingSource::Path(p) => RankedList::load(base.join(p))?,
        };
        records.push(RetrievalEvalRecord {
            query_id: q.query_id,
            ranking,
            relevant: q.relevant,
            ignore: q.ignore,
        });
    }
    if records.is_empty() {
        return Err(CliError::input(input, "no queries to evaluate"));
    }
    records.sort_by(|a, b| a.query_id.cmp(&b.query_id));

    let mut per_query = Vec::with_capacity(records.len());
    for r in &records {
        let ap = average_precision(r.ranking.ids(), &r.relevant, &r.ignore).ok_or_else(|| {
            CliError::input(
                input,
                format!("query {:?} has no relevant items", r.query_id),
            )
        })?;
        per_query.push((r.query_id.clone(), ap));
    }
    let map = per_query.iter().map(|(_, ap)| ap).sum::<f64>() / per_query.len() as f64;

    let report = json!({
        "queries": per_query
            .iter()
            .map(|(id, ap)| json!({ "query_id": id, "ap": ap }))
            .collect::<Vec<_>>(),
        "map": map,
    });
    let csv = csv_text(
        &["query_id", "ap"],
        per_query
            .iter()
            .map(|(id, ap)| vec![id.clone(), ap.to_string()]),
    );
    let paths = [
        out(config, "eval_retrieval.json"),
        out(config, "eval_retrieval.csv"),
    ];
    files::write_json(&paths[0], &report)?;
    files::write_text(&paths[1], &csv)?;
    Ok(json!({
        "command": "eval-retrieval",
        "map": map,
        "outputs": display(&paths),
    }))
}

fn run_build_benchmark(annotations: &Path, config: &RunConfig) -> Result<Value, CliError> {
    let text = files::read_text(annotations)?;
    let split = pdm_core::benchmark::SplitConfig {
        task: config.task,
        seed: config.seed,
        gallery_mode: config.gallery_mode,
        target_choice: config.target_choice,
    };
    let outcome = build_benchmark(&text, &split)?;
    let path = out(config, "manifest.json");
    files::write_text(&path, &outcome.manifest.to_json())?;
    let stats = &outcome.manifest.stats;
    Ok(json!({
        "command": "build-benchmark",
        "queries": stats.queries,
        "gallery_images": stats.gallery_images,
        "excluded_videos": outcome.warnings.len(),
        "outputs": display(&[path]),
    }))
}
