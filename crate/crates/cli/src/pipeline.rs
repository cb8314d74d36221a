//! Stand-alone stage commands. Each reads and writes plain JSON files so
//! stages can be inspected or replaced one at a time.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anonymise_core::export::{export_eaf, export_via, ExportBundle};
use anonymise_core::identity::{classify_tracks, score_tracks, Aggregator, Decision, ScoringConfig, TrackScore};
use anonymise_core::io::{
    load_detections, load_diarization, load_embeddings, load_shot_boundaries, read_audio, read_json,
    resolve_audio_path, to_json_bytes, write_audio, write_json, FrameStore,
};
use anonymise_core::metrics::{curve_svg, evaluate, labeled_scores, track_label, LabeledScore};
use anonymise_core::model::{AnonymisationTask, Embedding, Interval, Manifest, Scene, TaskMode, Tracklet};
use anonymise_core::redact::{apply_audio, apply_video, compile_plan, MarginConfig, MaskStyle, Provenance, RedactionPlan};
use anonymise_core::scenes::{detect_hard_cuts, scenes_from_boundaries, DEFAULT_CUT_THRESHOLD};
use anonymise_core::speakers::{
    build_silence_set, face_presence_prior, parse_segment_id, recluster_segments, retrieve_segments,
    segment_id, select_segments, summarize_clusters, FaceTimeline, RetrievalQuery, DEFAULT_PAD_SECONDS,
};
use anonymise_core::synth::{write_recording, RecordingSpec};
use anonymise_core::tracking::{link_recording, orphan_tracklets, TrackerConfig};
use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};

/// One row of `scores.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub track_id: String,
    pub score: Option<f64>,
    pub decision: Decision,
}

fn emit<T: Serialize + ?Sized>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            write_json(p, value)?;
            log::info!("wrote {}", p.display());
        }
        None => println!("{}", String::from_utf8(to_json_bytes(value)?)?),
    }
    Ok(())
}

fn comma_list<T: std::str::FromStr>(raw: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow::anyhow!("{s:?}: {e}")))
        .collect()
}

fn segment_indices(ids: &[String]) -> Result<Vec<usize>> {
    ids.iter()
        .map(|id| parse_segment_id(id).with_context(|| format!("bad segment id {id:?}, expected s<index>")))
        .collect()
}

fn load_tracklets(paths: &[PathBuf]) -> Result<Vec<Tracklet>> {
    let mut all = Vec::new();
    for p in paths {
        let mut ts: Vec<Tracklet> = read_json(p)?;
        all.append(&mut ts);
    }
    let mut seen = BTreeSet::new();
    for t in &all {
        ensure!(seen.insert(t.track_id.as_str()), "track {} appears twice", t.track_id);
    }
    Ok(all)
}

/// Recording length: the audio file when the manifest names one, else the
/// video.
fn recording_duration(frames: &Path, manifest: &Manifest) -> Result<f64> {
    match resolve_audio_path(frames, manifest) {
        Some(p) => Ok(read_audio(&p)?.duration_seconds()),
        None => Ok(manifest.duration()),
    }
}

/// The manifest with its audio path resolved, for files that are read from
/// elsewhere.
fn absolute_audio(frames: &Path, manifest: &Manifest) -> Manifest {
    let mut m = manifest.clone();
    if let (Some(p), Some(audio)) = (resolve_audio_path(frames, manifest), m.audio.as_mut()) {
        audio.path = p.display().to_string();
    }
    m
}

#[derive(Args)]
pub struct ValidateArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    detections: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = anonymise_core::model::FACE_EMBEDDING_DIM)]
    dim: usize,
    #[arg(long)]
    diarization: Option<PathBuf>,
    #[arg(long)]
    shots: Option<PathBuf>,
}

pub fn validate(a: ValidateArgs) -> Result<()> {
    let store = FrameStore::open(&a.frames)?;
    let m = store.manifest();
    let mut summary = serde_json::json!({
        "total_frames": m.total_frames,
        "fps": m.fps,
        "width": m.width,
        "height": m.height,
        "duration": m.duration(),
    });
    if let Some(p) = resolve_audio_path(&a.frames, m) {
        let audio = read_audio(&p)?;
        summary["audio_seconds"] = audio.duration_seconds().into();
    }
    let mut known = BTreeSet::new();
    if let Some(p) = &a.detections {
        let dets = load_detections(p, m.total_frames)?;
        known = dets.iter().map(|d| d.id.clone()).collect();
        summary["detections"] = dets.len().into();
    }
    if let Some(p) = &a.embeddings {
        let set = load_embeddings(p, a.dim, a.detections.as_ref().map(|_| &known))?;
        summary["embeddings"] = set.embeddings.len().into();
        summary["unknown_embedding_ids"] = set.unknown_ids.len().into();
    }
    if let Some(p) = &a.diarization {
        let segs = load_diarization(p)?;
        summary["segments"] = segs.len().into();
        summary["clusters"] = segs.iter().map(|s| s.cluster_id).collect::<BTreeSet<_>>().len().into();
    }
    if let Some(p) = &a.shots {
        summary["shot_boundaries"] = load_shot_boundaries(p, m.total_frames)?.len().into();
    }
    emit(&summary, None)
}

#[derive(Args)]
pub struct SegmentArgs {
    #[arg(long)]
    frames: PathBuf,
    /// Known shot boundaries.
    #[arg(long, conflicts_with = "detect")]
    shots: Option<PathBuf>,
    /// Detect hard cuts from colour histograms.
    #[arg(long)]
    detect: bool,
    #[arg(long, default_value_t = DEFAULT_CUT_THRESHOLD)]
    cut_threshold: f64,
    #[arg(long, short, default_value = "scenes.json")]
    out: PathBuf,
}

pub fn segment(a: SegmentArgs) -> Result<()> {
    let store = FrameStore::open(&a.frames)?;
    let total = store.manifest().total_frames;
    let boundaries = match (&a.shots, a.detect) {
        (Some(p), _) => load_shot_boundaries(p, total)?,
        (None, true) => detect_hard_cuts(&store, a.cut_threshold)?,
        (None, false) => Vec::new(),
    };
    let scenes = scenes_from_boundaries(&boundaries, total)?;
    log::info!("{} scenes", scenes.len());
    emit(&scenes, Some(&a.out))
}

#[derive(Args)]
pub struct TrackArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long, default_value_t = TrackerConfig::default().iou_min)]
    iou_min: f64,
    #[arg(long, default_value_t = TrackerConfig::default().max_gap)]
    max_gap: u64,
    #[arg(long, default_value_t = TrackerConfig::default().min_track_len)]
    min_len: usize,
    #[arg(long, short, default_value = "tracks.json")]
    out: PathBuf,
    /// Orphan detections as singleton tracklets.
    #[arg(long, default_value = "orphans.json")]
    orphans_out: PathBuf,
}

pub fn track(a: TrackArgs) -> Result<()> {
    let scenes: Vec<Scene> = read_json(&a.scenes)?;
    let total = scenes.last().map_or(0, |s| s.end);
    anonymise_core::model::validate_partition(&scenes, total)?;
    let detections = load_detections(&a.detections, total)?;
    let config = TrackerConfig {
        iou_min: a.iou_min,
        max_gap: a.max_gap,
        min_track_len: a.min_len,
    };
    let linked = link_recording(&scenes, &detections, &config)?;
    let orphans = orphan_tracklets(&linked.orphans, &scenes)?;
    log::info!("{} tracklets, {} orphans", linked.tracklets.len(), orphans.len());
    emit(&linked.tracklets, Some(&a.out))?;
    emit(&orphans, Some(&a.orphans_out))
}

#[derive(Args)]
pub struct IdentifyArgs {
    /// Tracklet files (tracks.json, orphans.json).
    #[arg(long = "tracks", required = true, num_args = 1..)]
    tracks: Vec<PathBuf>,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value_t = anonymise_core::model::FACE_EMBEDDING_DIM)]
    dim: usize,
    /// Reference track ids, comma separated.
    #[arg(long = "ref")]
    refs: String,
    #[arg(long, default_value = "targets")]
    mode: TaskMode,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = Aggregator::Min)]
    agg: Aggregator,
    #[arg(long, default_value_t = anonymise_core::identity::DEFAULT_SAMPLE_STRIDE)]
    stride: usize,
    #[arg(long, short, default_value = "scores.json")]
    out: PathBuf,
}

pub fn identify(a: IdentifyArgs) -> Result<()> {
    let tracklets = load_tracklets(&a.tracks)?;
    let embeddings = load_embeddings(&a.embeddings, a.dim, None)?.embeddings;
    let refs: Vec<String> = comma_list(&a.refs)?;
    let task = AnonymisationTask {
        mode: a.mode,
        identity_refs: refs.clone(),
        audio_cluster_ids: Vec::new(),
        threshold: a.threshold,
    };
    task.validate(true)?;
    let config = ScoringConfig {
        aggregator: a.agg,
        stride: a.stride,
    };
    let scores = score_tracks(&tracklets, &embeddings, &refs, &config)?;
    let rows: Vec<ScoreRow> = classify_tracks(&scores, &task, a.agg)?
        .into_iter()
        .map(|s: TrackScore| ScoreRow {
            track_id: s.track_id,
            score: s.score,
            decision: s.decision,
        })
        .collect();
    let masked = rows.iter().filter(|r| r.decision.redact()).count();
    log::info!("{masked} of {} tracks to redact", rows.len());
    emit(&rows, Some(&a.out))
}

#[derive(Subcommand)]
pub enum SpeakersCommand {
    /// Per-cluster speech totals and representative segments.
    Summarize {
        #[arg(long)]
        diarization: PathBuf,
        #[arg(long, short, default_value = "clusters.json")]
        out: PathBuf,
    },
    /// Rank segments by d-vector similarity to example segments.
    Retrieve {
        #[arg(long)]
        diarization: PathBuf,
        /// Example segment ids, comma separated (s0,s4).
        #[arg(long)]
        examples: String,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        /// Score bonus when the matched face is visible for most of a segment.
        #[arg(long, default_value_t = 0.0)]
        boost: f64,
        /// Tracklets whose visibility drives the bonus.
        #[arg(long, num_args = 1..)]
        tracks: Vec<PathBuf>,
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Recording frames, for the frame rate.
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Re-cluster segments by d-vector similarity.
    Cluster {
        #[arg(long)]
        diarization: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        threshold: f64,
        /// Relabelled diarization lines.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Padded, merged intervals to silence.
    SilenceSet {
        #[arg(long)]
        diarization: PathBuf,
        /// Cluster ids, comma separated.
        #[arg(long, default_value = "")]
        clusters: String,
        /// Extra segment ids, comma separated.
        #[arg(long, default_value = "")]
        segments: String,
        #[arg(long, default_value_t = DEFAULT_PAD_SECONDS)]
        pad: f64,
        /// Clamp to this recording's length.
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long, short, default_value = "silence.json")]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct RankedRow {
    segment_id: String,
    start: f64,
    end: f64,
    cluster: i64,
    score: f64,
}

pub fn speakers(c: SpeakersCommand) -> Result<()> {
    match c {
        SpeakersCommand::Summarize { diarization, out } => {
            let segs = load_diarization(&diarization)?;
            emit(&summarize_clusters(&segs), Some(&out))
        }
        SpeakersCommand::Retrieve {
            diarization,
            examples,
            top_k,
            boost,
            tracks,
            scores,
            frames,
            out,
        } => {
            let segs = load_diarization(&diarization)?;
            let picked = segment_indices(&comma_list::<String>(&examples)?)?;
            let exemplars: Vec<Embedding> = picked
                .iter()
                .map(|&i| {
                    segs.get(i)
                        .with_context(|| format!("no segment {}", segment_id(i)))?
                        .dvec_embedding()
                        .with_context(|| format!("segment {} has no d-vector", segment_id(i)))
                })
                .collect::<Result<_>>()?;
            let query = RetrievalQuery::new(&exemplars, top_k)?;
            let mut ranked = retrieve_segments(&query, &segs)?;
            if boost != 0.0 {
                let frames = frames.context("--boost needs --frames for the frame rate")?;
                let store = FrameStore::open(&frames)?;
                let tracklets = load_tracklets(&tracks)?;
                let matched: BTreeSet<String> = match scores {
                    Some(p) => read_json::<Vec<ScoreRow>>(&p)?
                        .into_iter()
                        .filter(|r| r.decision == Decision::Match)
                        .map(|r| r.track_id)
                        .collect(),
                    None => tracklets.iter().map(|t| t.track_id.clone()).collect(),
                };
                let timeline = FaceTimeline::from_tracklets(
                    tracklets.iter().filter(|t| matched.contains(&t.track_id)),
                    store.manifest().fps,
                    recording_duration(&frames, store.manifest())?,
                );
                ranked = face_presence_prior(&ranked, &segs, &timeline, boost);
                ranked.truncate(top_k);
            }
            let rows: Vec<RankedRow> = ranked
                .iter()
                .map(|r| {
                    let s = &segs[r.index];
                    RankedRow {
                        segment_id: segment_id(r.index),
                        start: s.start,
                        end: s.end,
                        cluster: s.cluster_id,
                        score: r.score,
                    }
                })
                .collect();
            emit(&rows, out.as_deref())
        }
        SpeakersCommand::Cluster {
            diarization,
            threshold,
            out,
        } => {
            let segs = load_diarization(&diarization)?;
            let relabelled = recluster_segments(&segs, threshold)?;
            let mut text = String::new();
            for s in &relabelled {
                text.push_str(&serde_json::to_string(s)?);
                text.push('\n');
            }
            std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
            let n = relabelled.iter().map(|s| s.cluster_id).collect::<BTreeSet<_>>().len();
            log::info!("{n} clusters");
            Ok(())
        }
        SpeakersCommand::SilenceSet {
            diarization,
            clusters,
            segments,
            pad,
            frames,
            out,
        } => {
            let segs = load_diarization(&diarization)?;
            let clusters: Vec<i64> = comma_list(&clusters)?;
            let extra = segment_indices(&comma_list::<String>(&segments)?)?;
            if let Some(i) = extra.iter().find(|&&i| i >= segs.len()) {
                bail!("no segment {}", segment_id(*i));
            }
            let duration = match &frames {
                Some(f) => Some(recording_duration(f, FrameStore::open(f)?.manifest())?),
                None => None,
            };
            let selected = select_segments(&segs, &clusters, &extra);
            emit(&build_silence_set(&selected, pad, duration)?, Some(&out))
        }
    }
}

#[derive(Args)]
pub struct PlanArgs {
    #[arg(long = "tracks", required = true, num_args = 1..)]
    tracks: Vec<PathBuf>,
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    frames: PathBuf,
    /// Intervals from `speakers silence-set`.
    #[arg(long)]
    silence: Option<PathBuf>,
    #[arg(long, default_value = "blur")]
    style: MaskStyle,
    #[arg(long, default_value_t = MarginConfig::default().top)]
    margin_top: f64,
    #[arg(long, default_value_t = MarginConfig::default().sides)]
    margin_sides: f64,
    #[arg(long, default_value_t = MarginConfig::default().bottom)]
    margin_bottom: f64,
    #[arg(long, default_value_t = 0)]
    temporal_pad: u64,
    /// Skip the review step. Without it, use `project approve`.
    #[arg(long)]
    force: bool,
    #[arg(long, short, default_value = "plan.json")]
    out: PathBuf,
}

pub fn plan(a: PlanArgs) -> Result<()> {
    ensure!(
        a.force,
        "plans are normally compiled on approval in a review project; pass --force to compile without review"
    );
    let tracklets = load_tracklets(&a.tracks)?;
    let rows: Vec<ScoreRow> = read_json(&a.scores)?;
    let known: BTreeSet<&str> = tracklets.iter().map(|t| t.track_id.as_str()).collect();
    if let Some(r) = rows.iter().find(|r| !known.contains(r.track_id.as_str())) {
        bail!("scores name unknown track {}", r.track_id);
    }
    let scored: BTreeMap<&str, &ScoreRow> = rows.iter().map(|r| (r.track_id.as_str(), r)).collect();
    // unscored tracks are redacted
    let masked: Vec<&Tracklet> = tracklets
        .iter()
        .filter(|t| scored.get(t.track_id.as_str()).is_none_or(|r| r.decision.redact()))
        .collect();
    let silence: Vec<Interval> = match &a.silence {
        Some(p) => read_json(p)?,
        None => Vec::new(),
    };
    let store = FrameStore::open(&a.frames)?;
    let margins = MarginConfig {
        top: a.margin_top,
        sides: a.margin_sides,
        bottom: a.margin_bottom,
    };
    let plan = compile_plan(
        &masked,
        &margins,
        a.style,
        &silence,
        a.temporal_pad,
        store.manifest().total_frames,
        Provenance::default(),
    )?;
    log::info!("{} video ops, {} audio intervals", plan.video.len(), plan.audio.len());
    emit(&plan, Some(&a.out))
}

#[derive(Args)]
pub struct RedactArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    frames_in: PathBuf,
    #[arg(long)]
    frames_out: PathBuf,
    #[arg(long, requires = "audio_out")]
    audio_in: Option<PathBuf>,
    #[arg(long, requires = "audio_in")]
    audio_out: Option<PathBuf>,
}

pub fn redact(a: RedactArgs) -> Result<()> {
    let plan: RedactionPlan = read_json(&a.plan)?;
    let input = FrameStore::open(&a.frames_in)?;
    let mut manifest = input.manifest().clone();
    if let (Some(audio), Some(out)) = (manifest.audio.as_mut(), &a.audio_out) {
        audio.path = std::path::absolute(out)?.display().to_string();
    }
    let output = FrameStore::create(&a.frames_out, manifest)?;
    let video = apply_video(&plan, &input, &output)?;
    let mut summary = serde_json::json!({"video": video});
    if let (Some(src), Some(dst)) = (&a.audio_in, &a.audio_out) {
        let (out, silenced) = apply_audio(&plan.audio, &read_audio(src)?);
        write_audio(&out, dst)?;
        summary["audio_samples_silenced"] = silenced.into();
    } else if !plan.audio.is_empty() {
        log::warn!("plan has audio intervals but no --audio-in was given");
    }
    emit(&summary, None)
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Labels keyed by track id, or by detection id when --tracks is given.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, num_args = 1..)]
    tracks: Vec<PathBuf>,
    #[arg(long, short, default_value = "metrics.json")]
    out: PathBuf,
    /// PR and ROC plot files.
    #[arg(long, num_args = 2, value_names = ["PR_SVG", "ROC_SVG"])]
    plot: Vec<PathBuf>,
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let rows: Vec<ScoreRow> = read_json(&a.scores)?;
    let labels: BTreeMap<String, bool> = read_json(&a.labels)?;
    let items: Vec<LabeledScore> = if a.tracks.is_empty() {
        rows.iter()
            .filter_map(|r| Some(LabeledScore::new(r.track_id.clone(), r.score?, *labels.get(&r.track_id)?)))
            .collect()
    } else {
        let tracklets = load_tracklets(&a.tracks)?;
        let scores: BTreeMap<String, Option<f64>> = rows.iter().map(|r| (r.track_id.clone(), r.score)).collect();
        let unlabelled = tracklets.iter().filter(|t| track_label(t, &labels).is_none()).count();
        if unlabelled > 0 {
            log::warn!("{unlabelled} tracks have no labelled detection and are left out");
        }
        labeled_scores(&tracklets, &scores, &labels)
    };
    ensure!(!items.is_empty(), "no scored item has a label");
    let report = evaluate(&items)?;
    emit(&report, Some(&a.out))?;
    if let [pr_path, roc_path] = a.plot.as_slice() {
        let pr: Vec<(f64, f64)> = report.pr.iter().map(|p| (p.recall, p.precision)).collect();
        std::fs::write(pr_path, curve_svg("Precision vs recall", "recall", "precision", &pr))?;
        match &report.roc {
            Some(roc) => {
                let pts: Vec<(f64, f64)> = roc.points.iter().map(|p| (p.fpr, p.tpr)).collect();
                let title = format!("ROC (AUC {:.4})", report.auc.unwrap_or(f64::NAN));
                std::fs::write(roc_path, curve_svg(&title, "false positive rate", "true positive rate", &pts))?;
            }
            None => log::warn!("no negatives: ROC plot skipped"),
        }
    }
    println!(
        "items {} positives {} negatives {} auc {}",
        report.items,
        report.positives,
        report.negatives,
        report.auc.map_or("n/a".into(), |v| format!("{v:.6}"))
    );
    Ok(())
}

#[derive(Subcommand)]
pub enum ExportCommand {
    /// VGG Image Annotator project with one box per observation.
    Via {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long = "tracks", required = true, num_args = 1..)]
        tracks: Vec<PathBuf>,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, short, default_value = "via.json")]
        out: PathBuf,
    },
    /// ELAN annotation file with speaker tiers and the silence tier.
    Eaf {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        diarization: PathBuf,
        #[arg(long, default_value = "")]
        clusters: String,
        /// Silence intervals; computed from the picked clusters when absent.
        #[arg(long)]
        silence: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_PAD_SECONDS)]
        pad: f64,
        #[arg(long, short, default_value = "annotations.eaf")]
        out: PathBuf,
    },
}

pub fn export(c: ExportCommand) -> Result<()> {
    match c {
        ExportCommand::Via {
            frames,
            tracks,
            scores,
            out,
        } => {
            let store = FrameStore::open(&frames)?;
            let mut bundle = ExportBundle::new(store.manifest().clone());
            bundle.image_dir = format!("{}/", frames.display());
            bundle.tracklets = load_tracklets(&tracks)?;
            if let Some(p) = scores {
                bundle.decisions = read_json::<Vec<ScoreRow>>(&p)?
                    .into_iter()
                    .map(|r| TrackScore {
                        track_id: r.track_id,
                        score: r.score,
                        aggregator: Aggregator::Min,
                        decision: r.decision,
                    })
                    .collect();
            }
            emit(&export_via(&bundle)?, Some(&out))
        }
        ExportCommand::Eaf {
            frames,
            diarization,
            clusters,
            silence,
            pad,
            out,
        } => {
            let store = FrameStore::open(&frames)?;
            let duration = recording_duration(&frames, store.manifest())?;
            let mut bundle = ExportBundle::new(absolute_audio(&frames, store.manifest()));
            bundle.segments = load_diarization(&diarization)?;
            bundle.picked_clusters = comma_list(&clusters)?;
            bundle.silence = match silence {
                Some(p) => read_json(&p)?,
                None => build_silence_set(&select_segments(&bundle.segments, &bundle.picked_clusters, &[]), pad, Some(duration))?,
            };
            std::fs::write(&out, export_eaf(&bundle, duration)?).with_context(|| format!("writing {}", out.display()))?;
            Ok(())
        }
    }
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = RecordingSpec::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = RecordingSpec::default().frames)]
    frames: u64,
    #[arg(long, default_value_t = RecordingSpec::default().audio_seconds)]
    seconds: f64,
    #[arg(long, default_value_t = RecordingSpec::default().clusters)]
    clusters: usize,
    /// Frame of the scene cut; the middle frame by default.
    #[arg(long)]
    cut_at: Option<u64>,
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let spec = RecordingSpec {
        seed: a.seed,
        frames: a.frames,
        audio_seconds: a.seconds,
        clusters: a.clusters,
        cut_at: a.cut_at.unwrap_or(a.frames / 2),
        ..Default::default()
    };
    let paths = write_recording(&a.out, &spec)?;
    emit(&paths, None)
}
