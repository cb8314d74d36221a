//! Review operations on the project directory tree.
//!
//! Every project has a reader-writer lock: queries share it, mutations hold
//! it exclusively, so one project's log is written by one writer at a time.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use anonymise_core::export::{export_eaf, export_via, ExportBundle};
use anonymise_core::identity::{classify_tracks, score_tracks, select_reference_candidates, Decision, ScoringConfig, TrackScore};
use anonymise_core::io::{
    load_detections, load_diarization, load_embeddings, load_shot_boundaries, read_audio, read_json,
    resolve_audio_path, write_audio, FrameStore,
};
use anonymise_core::metrics::{auc_of, labeled_scores, precision_recall_at, Label};
use anonymise_core::model::{total_length, validate_threshold, Manifest, SpeakerSegment, TaskMode, Tracklet};
use anonymise_core::redact::{apply_audio, apply_video, compile_plan, expand_box, rasterize, Provenance, RedactionPlan};
use anonymise_core::scenes::{detect_hard_cuts, scenes_from_boundaries};
use anonymise_core::speakers::{build_silence_set, parse_segment_id, select_segments, summarize_clusters, ClusterSummary};
use anonymise_core::tracking::{link_recording, orphan_tracklets};
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ReviewError};
use crate::project::*;

/// Longest side of frame thumbnails.
pub const THUMB_MAX_SIDE: u32 = 320;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectView {
    pub project: ReviewProject,
    pub executing: bool,
    pub tracked: bool,
    pub log_entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingSummary {
    pub scenes: usize,
    pub tracklets: usize,
    pub orphans: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackletSummary {
    pub track_id: String,
    pub scene_id: usize,
    pub start_frame: u64,
    pub end_frame: u64,
    pub length: usize,
    pub detections: usize,
    /// Position in the reference suggestion order.
    pub suggestion_rank: usize,
    pub score: Option<f64>,
    pub decision: Option<Decision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub state: ProjectState,
    pub threshold: f64,
    pub total: usize,
    pub matches: usize,
    pub non_matches: usize,
    pub protected: usize,
    /// Unscored units; these match (fail-closed).
    pub deferred: usize,
    pub labelled: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub auc: Option<f64>,
    pub decisions: Vec<TrackScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEntry {
    #[serde(flatten)]
    pub summary: ClusterSummary,
    pub picked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterView {
    pub clusters: Vec<ClusterEntry>,
    pub picked: Vec<i64>,
    /// Union length of the picked clusters' segments.
    pub selected_seconds: f64,
    /// Length of the padded silence set.
    pub silence_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproveResponse {
    pub plan_hash: String,
    pub plan: RedactionPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub project_id: String,
    pub plan_hash: Option<String>,
    pub original_plan_hash: Option<String>,
    pub identical: bool,
}

/// Loaded sidecars of one project.
struct Inputs {
    store: FrameStore,
    detections_total: usize,
    embeddings: BTreeMap<String, anonymise_core::model::Embedding>,
    segments: Vec<SpeakerSegment>,
    labels: Option<BTreeMap<String, bool>>,
    audio_seconds: Option<f64>,
}

impl Inputs {
    fn manifest(&self) -> &Manifest {
        self.store.manifest()
    }
}

fn load_inputs(inputs: &ProjectInputs, settings: &ProjectSettings) -> Result<Inputs> {
    let store = FrameStore::open(&inputs.frames_dir)?;
    let total = store.manifest().total_frames;
    let detections = load_detections(&inputs.detections, total)?;
    let ids: BTreeSet<String> = detections.iter().map(|d| d.id.clone()).collect();
    let embeddings = match &inputs.embeddings {
        Some(p) => load_embeddings(p, settings.face_dim, Some(&ids))?.embeddings,
        None => BTreeMap::new(),
    };
    let segments = match &inputs.diarization {
        Some(p) => load_diarization(p)?,
        None => Vec::new(),
    };
    if let Some(p) = &inputs.shots {
        load_shot_boundaries(p, total)?;
    }
    let labels = match &inputs.labels {
        Some(p) => Some(read_json::<BTreeMap<String, bool>>(p)?),
        None => None,
    };
    let audio_seconds = match resolve_audio_path(&inputs.frames_dir, store.manifest()) {
        Some(p) => Some(read_audio(&p)?.duration_seconds()),
        None => None,
    };
    Ok(Inputs {
        store,
        detections_total: detections.len(),
        embeddings,
        segments,
        labels,
        audio_seconds,
    })
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Opened project: directory plus current record.
struct Ctx {
    dir: PathBuf,
    project: ReviewProject,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn tracks(&self) -> Result<TrackData> {
        let p = self.path(TRACKS_FILE);
        if !p.is_file() {
            return Err(ReviewError::Conflict("run tracking first".into()));
        }
        read_file(&p)
    }

    fn scores(&self) -> Result<Option<ScoreFile>> {
        let p = self.path(SCORES_FILE);
        if p.is_file() {
            Ok(Some(read_file(&p)?))
        } else {
            Ok(None)
        }
    }

    fn ensure_editable(&self) -> Result<()> {
        if self.project.state.is_frozen() {
            return Err(ReviewError::Conflict(format!(
                "project {} is {} and can no longer be edited",
                self.project.project_id, self.project.state
            )));
        }
        Ok(())
    }

    fn redacted_frames(&self) -> PathBuf {
        self.dir.join(REDACTED_DIR).join("frames")
    }

    fn redacted_audio(&self) -> PathBuf {
        self.dir.join(REDACTED_DIR).join("audio.wav")
    }

    /// Frames the service may serve. Once redacted, only the redacted copy.
    fn frames_source(&self) -> PathBuf {
        if self.project.state == ProjectState::Redacted {
            self.redacted_frames()
        } else {
            self.project.inputs.frames_dir.clone()
        }
    }

    fn audio_source(&self, manifest: &Manifest) -> Option<PathBuf> {
        manifest.audio.as_ref()?;
        if self.project.state == ProjectState::Redacted {
            Some(self.redacted_audio())
        } else {
            resolve_audio_path(&self.project.inputs.frames_dir, manifest)
        }
    }
}

pub struct ReviewService {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<RwLock<()>>>>,
    executing: Mutex<HashSet<String>>,
}

impl ReviewService {
    /// Serves projects stored under `root`, creating it if needed.
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| ReviewError::io(&root, e))?;
        Ok(ReviewService {
            root,
            locks: Mutex::new(HashMap::new()),
            executing: Mutex::new(HashSet::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn project_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    fn lock(&self, id: &str) -> Arc<RwLock<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(id.to_string()).or_default().clone()
    }

    fn open(&self, id: &str) -> Result<Ctx> {
        if !valid_id(id) {
            return Err(ReviewError::NotFound(format!("unknown project {id:?}")));
        }
        let dir = self.project_dir(id);
        let file = dir.join(PROJECT_FILE);
        if !file.is_file() {
            return Err(ReviewError::NotFound(format!("unknown project {id:?}")));
        }
        Ok(Ctx {
            project: read_file(&file)?,
            dir,
        })
    }

    fn read<T>(&self, id: &str, f: impl FnOnce(&Ctx) -> Result<T>) -> Result<T> {
        let lock = self.lock(id);
        let _guard = lock.read().unwrap_or_else(|e| e.into_inner());
        f(&self.open(id)?)
    }

    /// Runs a mutation under the write lock, then persists the project and
    /// appends the returned action to the log.
    fn mutate<T>(&self, id: &str, f: impl FnOnce(&mut Ctx) -> Result<(Action, T)>) -> Result<T> {
        let lock = self.lock(id);
        let _guard = lock.write().unwrap_or_else(|e| e.into_inner());
        let mut ctx = self.open(id)?;
        let (action, out) = f(&mut ctx)?;
        write_file(&ctx.path(PROJECT_FILE), &ctx.project)?;
        self.log(&ctx, action)?;
        Ok(out)
    }

    fn log(&self, ctx: &Ctx, action: Action) -> Result<()> {
        let path = ctx.path(LOG_FILE);
        let seq = if path.is_file() { read_log(&path)?.len() as u64 } else { 0 };
        append_log(
            &path,
            &LogEntry {
                seq,
                at: now_rfc3339(),
                state: ctx.project.state,
                action,
            },
        )
    }

    /// Loads every referenced file and persists a new draft project.
    pub fn create_project(&self, request: CreateRequest) -> Result<ReviewProject> {
        validate_threshold(request.threshold)?;
        request.settings.tracker.validate()?;
        request.settings.margins.validate()?;
        if request.settings.silence_pad.is_nan() || request.settings.silence_pad < 0.0 {
            return Err(ReviewError::Invalid("silence_pad must be non-negative".into()));
        }
        let inputs = load_inputs(&request.inputs, &request.settings)?;
        log::info!(
            "project inputs: {} frames, {} detections, {} embeddings, {} segments, audio {:?} s",
            inputs.manifest().total_frames,
            inputs.detections_total,
            inputs.embeddings.len(),
            inputs.segments.len(),
            inputs.audio_seconds
        );
        let created_at = now_rfc3339();
        let id = match &request.project_id {
            Some(id) if valid_id(id) => id.clone(),
            Some(id) => return Err(ReviewError::Invalid(format!("invalid project id {id:?}"))),
            None => {
                let seed = format!("{created_at}|{}", request.inputs.frames_dir.display());
                format!("p-{}", &sha256_hex(seed.as_bytes())[..12])
            }
        };
        let lock = self.lock(&id);
        let _guard = lock.write().unwrap_or_else(|e| e.into_inner());
        let dir = self.project_dir(&id);
        if dir.exists() {
            return Err(ReviewError::Exists(format!("project {id} exists")));
        }
        fs::create_dir_all(&dir).map_err(|e| ReviewError::io(&dir, e))?;
        let project = ReviewProject {
            project_id: id,
            created_at,
            inputs: request.inputs.clone(),
            settings: request.settings.clone(),
            task: anonymise_core::model::AnonymisationTask {
                mode: request.mode,
                threshold: request.threshold,
                ..Default::default()
            },
            state: ProjectState::Draft,
            plan_hash: None,
        };
        let ctx = Ctx { dir, project };
        write_file(&ctx.path(PROJECT_FILE), &ctx.project)?;
        self.log(&ctx, Action::Create { request })?;
        Ok(ctx.project)
    }

    pub fn list_projects(&self) -> Result<Vec<ReviewProject>> {
        let mut out = Vec::new();
        let entries = fs::read_dir(&self.root).map_err(|e| ReviewError::io(&self.root, e))?;
        for e in entries {
            let e = e.map_err(|err| ReviewError::io(&self.root, err))?;
            let file = e.path().join(PROJECT_FILE);
            if file.is_file() {
                out.push(read_file::<ReviewProject>(&file)?);
            }
        }
        out.sort_by(|a, b| a.project_id.cmp(&b.project_id));
        Ok(out)
    }

    pub fn project(&self, id: &str) -> Result<ProjectView> {
        let executing = self.executing.lock().unwrap_or_else(|e| e.into_inner()).contains(id);
        self.read(id, |ctx| {
            let log = ctx.path(LOG_FILE);
            Ok(ProjectView {
                project: ctx.project.clone(),
                executing,
                tracked: ctx.path(TRACKS_FILE).is_file(),
                log_entries: if log.is_file() { read_log(&log)?.len() } else { 0 },
            })
        })
    }

    pub fn decision_log(&self, id: &str) -> Result<Vec<LogEntry>> {
        self.read(id, |ctx| read_log(&ctx.path(LOG_FILE)))
    }

    /// Splits scenes and links detections. Re-running discards references
    /// and scores and returns the project to draft.
    pub fn run_tracking(&self, id: &str) -> Result<TrackingSummary> {
        self.mutate(id, |ctx| {
            ctx.ensure_editable()?;
            let p = &ctx.project;
            let store = FrameStore::open(&p.inputs.frames_dir)?;
            let total = store.manifest().total_frames;
            let boundaries = match &p.inputs.shots {
                Some(path) => load_shot_boundaries(path, total)?,
                None => detect_hard_cuts(&store, p.settings.cut_threshold)?,
            };
            let scenes = scenes_from_boundaries(&boundaries, total)?;
            let detections = load_detections(&p.inputs.detections, total)?;
            let linked = link_recording(&scenes, &detections, &p.settings.tracker)?;
            let orphans = orphan_tracklets(&linked.orphans, &scenes)?;
            let data = TrackData {
                scenes,
                tracklets: linked.tracklets,
                orphans,
            };
            write_file(&ctx.path(TRACKS_FILE), &data)?;
            let scores = ctx.path(SCORES_FILE);
            if scores.exists() {
                fs::remove_file(&scores).map_err(|e| ReviewError::io(&scores, e))?;
            }
            ctx.project.task.identity_refs.clear();
            ctx.project.state = ProjectState::Draft;
            Ok((
                Action::Track,
                TrackingSummary {
                    scenes: data.scenes.len(),
                    tracklets: data.tracklets.len(),
                    orphans: data.orphans.len(),
                },
            ))
        })
    }

    /// Tracklets in reference-suggestion order, optionally of one scene.
    pub fn list_tracklets(&self, id: &str, scene: Option<usize>) -> Result<Vec<TrackletSummary>> {
        self.read(id, |ctx| {
            let data = ctx.tracks()?;
            let units = data.unit_list();
            let decisions = decision_map(ctx)?;
            Ok(select_reference_candidates(&units)
                .into_iter()
                .enumerate()
                .map(|(rank, i)| (rank, &units[i]))
                .filter(|(_, t)| scene.is_none_or(|s| t.scene_id == s))
                .map(|(rank, t)| {
                    let d = decisions.get(&t.track_id);
                    TrackletSummary {
                        track_id: t.track_id.clone(),
                        scene_id: t.scene_id,
                        start_frame: t.start_frame(),
                        end_frame: t.end_frame(),
                        length: t.observations.len(),
                        detections: t.real_len(),
                        suggestion_rank: rank,
                        score: d.and_then(|d| d.score),
                        decision: d.map(|d| d.decision),
                    }
                })
                .collect())
        })
    }

    /// Chooses reference tracklets and rescores every unit against them.
    pub fn set_reference(&self, id: &str, track_ids: Vec<String>) -> Result<ScoreSummary> {
        self.mutate(id, |ctx| {
            ctx.ensure_editable()?;
            if track_ids.is_empty() {
                return Err(ReviewError::Invalid("at least one reference track is required".into()));
            }
            let unique: BTreeSet<&String> = track_ids.iter().collect();
            if unique.len() != track_ids.len() {
                return Err(ReviewError::Invalid("duplicate reference track id".into()));
            }
            let data = ctx.tracks()?;
            if let Some(missing) = track_ids.iter().find(|t| data.find(t).is_none()) {
                return Err(ReviewError::NotFound(format!("unknown track {missing}")));
            }
            let p = &ctx.project;
            let inputs = load_inputs(&p.inputs, &p.settings)?;
            let config = ScoringConfig {
                aggregator: p.settings.aggregator,
                stride: p.settings.stride,
            };
            let units = data.unit_list();
            let scores = score_tracks(&units, &inputs.embeddings, &track_ids, &config)?;
            let file = ScoreFile {
                references: track_ids.clone(),
                aggregator: config.aggregator,
                stride: config.stride,
                scores: scores
                    .into_iter()
                    .map(|(track_id, score)| RawScore { track_id, score })
                    .collect(),
            };
            write_file(&ctx.path(SCORES_FILE), &file)?;
            ctx.project.task.identity_refs = track_ids.clone();
            ctx.project.state = ProjectState::RefsChosen;
            let summary = score_summary(ctx, &data, Some(&file), inputs.labels.as_ref())?;
            Ok((Action::SetReference { track_ids }, summary))
        })
    }

    /// Sets the decision threshold and moves the project to `scored`.
    pub fn set_threshold(&self, id: &str, threshold: f64) -> Result<ScoreSummary> {
        if !threshold.is_finite() {
            return Err(ReviewError::Invalid("threshold must be finite".into()));
        }
        validate_threshold(threshold)?;
        self.mutate(id, |ctx| {
            ctx.ensure_editable()?;
            let data = ctx.tracks()?;
            let scores = ctx.scores()?;
            let nothing_to_score = data.units().next().is_none();
            if scores.is_none() && !nothing_to_score {
                return Err(ReviewError::Conflict("choose reference tracks first".into()));
            }
            ctx.project.task.threshold = threshold;
            ctx.project.state = ProjectState::Scored;
            let labels = load_labels(&ctx.project.inputs)?;
            let summary = score_summary(ctx, &data, scores.as_ref(), labels.as_ref())?;
            Ok((Action::SetThreshold { threshold }, summary))
        })
    }

    pub fn scores(&self, id: &str) -> Result<ScoreSummary> {
        self.read(id, |ctx| {
            let data = ctx.tracks()?;
            let labels = load_labels(&ctx.project.inputs)?;
            score_summary(ctx, &data, ctx.scores()?.as_ref(), labels.as_ref())
        })
    }

    pub fn clusters(&self, id: &str) -> Result<ClusterView> {
        self.read(id, |ctx| cluster_view(ctx, &ctx.project.task.audio_cluster_ids))
    }

    /// Selects the speaker clusters to silence.
    pub fn pick_clusters(&self, id: &str, cluster_ids: Vec<i64>) -> Result<ClusterView> {
        self.mutate(id, |ctx| {
            ctx.ensure_editable()?;
            let segments = load_segments(&ctx.project.inputs)?;
            let known: BTreeSet<i64> = segments.iter().map(|s| s.cluster_id).collect();
            if let Some(c) = cluster_ids.iter().find(|c| !known.contains(c)) {
                return Err(ReviewError::NotFound(format!("unknown cluster {c}")));
            }
            let picked: Vec<i64> = cluster_ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            ctx.project.task.audio_cluster_ids = picked.clone();
            let view = cluster_view(ctx, &picked)?;
            Ok((Action::PickClusters { cluster_ids }, view))
        })
    }

    /// WAV clip of exactly the segment's bounds.
    pub fn snippet(&self, id: &str, segment_id: &str) -> Result<Vec<u8>> {
        self.read(id, |ctx| {
            let segments = load_segments(&ctx.project.inputs)?;
            let seg = parse_segment_id(segment_id)
                .and_then(|i| segments.get(i))
                .ok_or_else(|| ReviewError::NotFound(format!("unknown segment {segment_id:?}")))?;
            let store = FrameStore::open(&ctx.project.inputs.frames_dir)?;
            let path = ctx
                .audio_source(store.manifest())
                .ok_or_else(|| ReviewError::NotFound("recording has no audio".into()))?;
            let audio = read_audio(&path)?;
            Ok(audio.clip(seg.start, seg.end).to_wav_bytes()?)
        })
    }

    /// PNG of frame `frame`, cropped to the track's expanded box when a track
    /// is given.
    pub fn thumbnail(&self, id: &str, frame: u64, track: Option<&str>) -> Result<Vec<u8>> {
        self.read(id, |ctx| {
            let store = FrameStore::open(ctx.frames_source())?;
            let raster = store.read_frame(frame)?;
            let view = match track {
                None => raster,
                Some(track_id) => {
                    let data = ctx.tracks()?;
                    let t = data
                        .find(track_id)
                        .ok_or_else(|| ReviewError::NotFound(format!("unknown track {track_id}")))?;
                    let o = t
                        .observations
                        .iter()
                        .find(|o| o.frame == frame)
                        .ok_or_else(|| ReviewError::NotFound(format!("track {track_id} is not in frame {frame}")))?;
                    let b = expand_box(&o.bbox, &ctx.project.settings.margins);
                    let r = rasterize(&b, raster.width(), raster.height())
                        .ok_or_else(|| ReviewError::NotFound("box lies outside the frame".into()))?;
                    image::imageops::crop_imm(&raster, r.x0, r.y0, r.width(), r.height()).to_image()
                }
            };
            encode_png(&shrink(view))
        })
    }

    /// Freezes the plan. In targets mode an approval without any video match
    /// needs `confirm`.
    pub fn approve(&self, id: &str, confirm: bool) -> Result<ApproveResponse> {
        self.mutate(id, |ctx| {
            ctx.ensure_editable()?;
            if ctx.project.state != ProjectState::Scored {
                return Err(ReviewError::Conflict(format!(
                    "approval needs a scored project, this one is {}",
                    ctx.project.state
                )));
            }
            let data = ctx.tracks()?;
            let decisions = decisions(ctx, ctx.scores()?.as_ref())?;
            let task = &ctx.project.task;
            if decisions.is_empty() && task.audio_cluster_ids.is_empty() {
                return Err(ReviewError::Invalid("nothing to approve: no tracks scored and no clusters picked".into()));
            }
            let masked_ids: BTreeSet<&str> = decisions
                .iter()
                .filter(|d| d.decision.redact())
                .map(|d| d.track_id.as_str())
                .collect();
            if task.mode == TaskMode::Targets && masked_ids.is_empty() && !confirm {
                return Err(ReviewError::ConfirmRequired(
                    "no track matches the references; approve again with confirm to accept a plan without video redaction"
                        .into(),
                ));
            }
            let masked: Vec<&Tracklet> = data.units().filter(|t| masked_ids.contains(t.track_id.as_str())).collect();
            let settings = &ctx.project.settings;
            let store = FrameStore::open(&ctx.project.inputs.frames_dir)?;
            let duration = audio_duration(&ctx.project.inputs, store.manifest())?;
            let segments = load_segments(&ctx.project.inputs)?;
            let selected = select_segments(&segments, &task.audio_cluster_ids, &[]);
            let silence = build_silence_set(&selected, settings.silence_pad, Some(duration))?;
            let provenance = Provenance {
                mode: Some(task.mode),
                threshold: Some(task.threshold),
                reference_ids: task.identity_refs.clone(),
                cluster_ids: task.audio_cluster_ids.clone(),
                ..Default::default()
            };
            let plan = compile_plan(
                &masked,
                &settings.margins,
                settings.style,
                &silence,
                settings.temporal_pad_frames,
                store.manifest().total_frames,
                provenance,
            )?;
            let bytes = anonymise_core::io::to_json_bytes(&plan)?;
            let plan_hash = sha256_hex(&bytes);
            write_bytes(&ctx.path(PLAN_FILE), &bytes)?;
            ctx.project.plan_hash = Some(plan_hash.clone());
            ctx.project.state = ProjectState::Approved;
            Ok((
                Action::Approve {
                    confirm,
                    plan_hash: plan_hash.clone(),
                },
                ApproveResponse { plan_hash, plan },
            ))
        })
    }

    /// Runs the approved plan. Executing a redacted project returns the
    /// earlier report and changes nothing.
    pub fn execute(&self, id: &str) -> Result<Report> {
        {
            let mut running = self.executing.lock().unwrap_or_else(|e| e.into_inner());
            if !running.insert(id.to_string()) {
                return Err(ReviewError::Conflict(format!("project {id} is already executing")));
            }
        }
        let result = self.execute_locked(id);
        self.executing.lock().unwrap_or_else(|e| e.into_inner()).remove(id);
        result
    }

    fn execute_locked(&self, id: &str) -> Result<Report> {
        let lock = self.lock(id);
        let _guard = lock.write().unwrap_or_else(|e| e.into_inner());
        let mut ctx = self.open(id)?;
        match ctx.project.state {
            ProjectState::Redacted => return read_file(&ctx.path(REPORT_FILE)),
            ProjectState::Approved => {}
            other => {
                return Err(ReviewError::Conflict(format!("execution needs an approved project, this one is {other}")))
            }
        }
        let plan_bytes = fs::read(ctx.path(PLAN_FILE)).map_err(|e| ReviewError::io(&ctx.path(PLAN_FILE), e))?;
        let plan_hash = sha256_hex(&plan_bytes);
        if ctx.project.plan_hash.as_deref() != Some(plan_hash.as_str()) {
            return Err(ReviewError::Conflict("plan.json does not match the approved hash".into()));
        }
        let plan: RedactionPlan =
            serde_json::from_slice(&plan_bytes).map_err(|e| ReviewError::Internal(format!("plan.json: {e}")))?;

        let input = FrameStore::open(&ctx.project.inputs.frames_dir)?;
        let out_root = ctx.dir.join(REDACTED_DIR);
        if out_root.exists() {
            fs::remove_dir_all(&out_root).map_err(|e| ReviewError::io(&out_root, e))?;
        }
        let mut manifest = input.manifest().clone();
        if let Some(a) = manifest.audio.as_mut() {
            a.path = "../audio.wav".into();
        }
        let output = FrameStore::create(ctx.redacted_frames(), manifest)?;
        let video = apply_video(&plan, &input, &output)?;
        let (audio, audio_samples_silenced) = match resolve_audio_path(&ctx.project.inputs.frames_dir, input.manifest()) {
            Some(src) => {
                let (silenced, n) = apply_audio(&plan.audio, &read_audio(&src)?);
                write_audio(&silenced, &ctx.redacted_audio())?;
                (Some(ctx.redacted_audio()), n)
            }
            None => (None, 0),
        };
        let report = Report {
            plan_hash,
            video,
            audio_samples_silenced,
            frames_dir: ctx.redacted_frames(),
            audio,
        };
        let bytes = anonymise_core::io::to_json_bytes(&report)?;
        write_bytes(&ctx.path(REPORT_FILE), &bytes)?;
        ctx.project.state = ProjectState::Redacted;
        write_file(&ctx.path(PROJECT_FILE), &ctx.project)?;
        self.log(
            &ctx,
            Action::Execute {
                report_hash: sha256_hex(&bytes),
            },
        )?;
        Ok(report)
    }

    pub fn report(&self, id: &str) -> Result<Report> {
        self.read(id, |ctx| {
            let p = ctx.path(REPORT_FILE);
            if !p.is_file() {
                return Err(ReviewError::NotFound("no report yet: execute the plan first".into()));
            }
            read_file(&p)
        })
    }

    pub fn plan(&self, id: &str) -> Result<Vec<u8>> {
        self.read(id, |ctx| {
            let p = ctx.path(PLAN_FILE);
            if !p.is_file() {
                return Err(ReviewError::NotFound("no plan yet: approve first".into()));
            }
            fs::read(&p).map_err(|e| ReviewError::io(&p, e))
        })
    }

    fn export_bundle(&self, ctx: &Ctx) -> Result<(ExportBundle, f64)> {
        let store = FrameStore::open(ctx.frames_source())?;
        let duration = audio_duration(&ctx.project.inputs, store.manifest())?;
        let mut manifest = store.manifest().clone();
        if let (Some(p), Some(audio)) = (ctx.audio_source(store.manifest()), manifest.audio.as_mut()) {
            audio.path = p.display().to_string();
        }
        let mut bundle = ExportBundle::new(manifest);
        bundle.image_dir = format!("{}/", ctx.frames_source().display());
        if let Ok(data) = ctx.tracks() {
            bundle.decisions = decisions(ctx, ctx.scores()?.as_ref())?;
            bundle.tracklets = data.unit_list();
        }
        bundle.segments = load_segments(&ctx.project.inputs)?;
        bundle.picked_clusters = ctx.project.task.audio_cluster_ids.clone();
        let selected = select_segments(&bundle.segments, &bundle.picked_clusters, &[]);
        bundle.silence = build_silence_set(&selected, ctx.project.settings.silence_pad, Some(duration))?;
        Ok((bundle, duration))
    }

    pub fn export_via(&self, id: &str) -> Result<String> {
        self.read(id, |ctx| {
            let (bundle, _) = self.export_bundle(ctx)?;
            let v = export_via(&bundle)?;
            Ok(String::from_utf8(anonymise_core::io::to_json_bytes(&v)?).expect("JSON is UTF-8"))
        })
    }

    pub fn export_eaf(&self, id: &str) -> Result<String> {
        self.read(id, |ctx| {
            let (bundle, duration) = self.export_bundle(ctx)?;
            Ok(export_eaf(&bundle, duration)?)
        })
    }

    /// Replays the log of project `source` into a fresh project.
    pub fn replay(&self, source: &str, new_id: Option<String>) -> Result<ReplayOutcome> {
        let entries = self.decision_log(source)?;
        self.replay_entries(&entries, new_id)
    }

    /// Applies logged actions to a new project, up to (not including)
    /// execution. The approved plan hash must come out the same.
    pub fn replay_entries(&self, entries: &[LogEntry], new_id: Option<String>) -> Result<ReplayOutcome> {
        let Some(Action::Create { request }) = entries.first().map(|e| &e.action) else {
            return Err(ReviewError::Invalid("log does not start with a create entry".into()));
        };
        let mut request = request.clone();
        request.project_id = new_id;
        let id = self.create_project(request)?.project_id;
        let mut original_plan_hash = None;
        let mut plan_hash = None;
        for e in &entries[1..] {
            match &e.action {
                Action::Create { .. } => return Err(ReviewError::Invalid("second create entry in log".into())),
                Action::Track => {
                    self.run_tracking(&id)?;
                }
                Action::SetReference { track_ids } => {
                    self.set_reference(&id, track_ids.clone())?;
                }
                Action::SetThreshold { threshold } => {
                    self.set_threshold(&id, *threshold)?;
                }
                Action::PickClusters { cluster_ids } => {
                    self.pick_clusters(&id, cluster_ids.clone())?;
                }
                Action::Approve { confirm, plan_hash: logged } => {
                    original_plan_hash = Some(logged.clone());
                    plan_hash = Some(self.approve(&id, *confirm)?.plan_hash);
                }
                Action::Execute { .. } => break,
            }
        }
        Ok(ReplayOutcome {
            project_id: id,
            identical: plan_hash == original_plan_hash,
            plan_hash,
            original_plan_hash,
        })
    }

    /// Deletes projects older than `max_age`, outputs included. Returns the
    /// removed ids.
    pub fn sweep_expired(&self, max_age: chrono::Duration) -> Result<Vec<String>> {
        let now = chrono::Utc::now();
        let mut removed = Vec::new();
        for p in self.list_projects()? {
            let created = chrono::DateTime::parse_from_rfc3339(&p.created_at)
                .map_err(|e| ReviewError::Internal(format!("{}: bad created_at: {e}", p.project_id)))?;
            if now.signed_duration_since(created) <= max_age {
                continue;
            }
            let lock = self.lock(&p.project_id);
            let _guard = lock.write().unwrap_or_else(|e| e.into_inner());
            let dir = self.project_dir(&p.project_id);
            fs::remove_dir_all(&dir).map_err(|e| ReviewError::io(&dir, e))?;
            log::info!("removed expired project {}", p.project_id);
            removed.push(p.project_id);
        }
        Ok(removed)
    }
}

fn load_segments(inputs: &ProjectInputs) -> Result<Vec<SpeakerSegment>> {
    match &inputs.diarization {
        Some(p) => Ok(load_diarization(p)?),
        None => Ok(Vec::new()),
    }
}

fn load_labels(inputs: &ProjectInputs) -> Result<Option<BTreeMap<String, bool>>> {
    match &inputs.labels {
        Some(p) => Ok(Some(read_json(p)?)),
        None => Ok(None),
    }
}

fn audio_duration(inputs: &ProjectInputs, manifest: &Manifest) -> Result<f64> {
    match resolve_audio_path(&inputs.frames_dir, manifest) {
        Some(p) => Ok(read_audio(&p)?.duration_seconds()),
        None => Ok(manifest.duration()),
    }
}

fn decisions(ctx: &Ctx, scores: Option<&ScoreFile>) -> Result<Vec<TrackScore>> {
    match scores {
        Some(s) => Ok(classify_tracks(&s.pairs(), &ctx.project.task, s.aggregator)?),
        None => Ok(Vec::new()),
    }
}

fn decision_map(ctx: &Ctx) -> Result<BTreeMap<String, TrackScore>> {
    Ok(decisions(ctx, ctx.scores()?.as_ref())?
        .into_iter()
        .map(|d| (d.track_id.clone(), d))
        .collect())
}

fn score_summary(
    ctx: &Ctx,
    data: &TrackData,
    scores: Option<&ScoreFile>,
    labels: Option<&BTreeMap<String, bool>>,
) -> Result<ScoreSummary> {
    let decisions = decisions(ctx, scores)?;
    let count = |d: Decision| decisions.iter().filter(|s| s.decision == d).count();
    let threshold = ctx.project.task.threshold;
    let (mut labelled, mut precision, mut recall, mut auc) = (0, None, None, None);
    if let (Some(labels), Some(scores)) = (labels, scores) {
        let raw: BTreeMap<String, Option<f64>> = scores.scores.iter().map(|s| (s.track_id.clone(), s.score)).collect();
        let items = labeled_scores(data.units(), &raw, labels);
        labelled = items.len();
        (precision, recall) = precision_recall_at(&items, threshold);
        let has_both = items.iter().any(|i| i.label == Label::Positive) && items.iter().any(|i| i.label == Label::Negative);
        if has_both {
            auc = Some(auc_of(&items)?);
        }
    }
    Ok(ScoreSummary {
        state: ctx.project.state,
        threshold,
        total: decisions.len(),
        matches: count(Decision::Match),
        non_matches: count(Decision::NonMatch),
        protected: count(Decision::Protected),
        deferred: decisions.iter().filter(|d| d.score.is_none()).count(),
        labelled,
        precision,
        recall,
        auc,
        decisions,
    })
}

fn cluster_view(ctx: &Ctx, picked: &[i64]) -> Result<ClusterView> {
    let segments = load_segments(&ctx.project.inputs)?;
    let store_manifest = FrameStore::open(&ctx.project.inputs.frames_dir)?.manifest().clone();
    let duration = audio_duration(&ctx.project.inputs, &store_manifest)?;
    let selected = select_segments(&segments, picked, &[]);
    let union = build_silence_set(&selected, 0.0, None)?;
    let silence = build_silence_set(&selected, ctx.project.settings.silence_pad, Some(duration))?;
    Ok(ClusterView {
        clusters: summarize_clusters(&segments)
            .into_iter()
            .map(|summary| ClusterEntry {
                picked: picked.contains(&summary.cluster_id),
                summary,
            })
            .collect(),
        picked: picked.to_vec(),
        selected_seconds: total_length(&union),
        silence_seconds: total_length(&silence),
    })
}

fn shrink(img: RgbImage) -> RgbImage {
    let (w, h) = img.dimensions();
    let side = w.max(h);
    if side <= THUMB_MAX_SIDE {
        return img;
    }
    let scale = f64::from(THUMB_MAX_SIDE) / f64::from(side);
    let nw = ((f64::from(w) * scale).round() as u32).max(1);
    let nh = ((f64::from(h) * scale).round() as u32).max(1);
    image::imageops::thumbnail(&img, nw, nh)
}

fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| ReviewError::Internal(format!("png encoding: {e}")))?;
    Ok(out.into_inner())
}
