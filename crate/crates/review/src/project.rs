//! Review project records and their on-disk layout.
//!
//! A project directory holds:
//!
//! | file            | content                                        |
//! |-----------------|------------------------------------------------|
//! | `project.json`  | [`ReviewProject`]                              |
//! | `log.jsonl`     | append-only [`LogEntry`] lines                 |
//! | `tracks.json`   | [`TrackData`] after tracking                   |
//! | `scores.json`   | [`ScoreFile`] after references are chosen      |
//! | `plan.json`     | approved redaction plan                        |
//! | `report.json`   | [`Report`] after execution                     |
//! | `redacted/`     | redacted frames and audio                      |

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anonymise_core::identity::Aggregator;
use anonymise_core::model::{AnonymisationTask, Scene, TaskMode, Tracklet};
use anonymise_core::redact::{MarginConfig, MaskStyle, VideoReport};
use anonymise_core::scenes::DEFAULT_CUT_THRESHOLD;
use anonymise_core::speakers::DEFAULT_PAD_SECONDS;
use anonymise_core::tracking::TrackerConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ReviewError};

pub const PROJECT_FILE: &str = "project.json";
pub const LOG_FILE: &str = "log.jsonl";
pub const TRACKS_FILE: &str = "tracks.json";
pub const SCORES_FILE: &str = "scores.json";
pub const PLAN_FILE: &str = "plan.json";
pub const REPORT_FILE: &str = "report.json";
pub const REDACTED_DIR: &str = "redacted";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectState {
    Draft,
    RefsChosen,
    Scored,
    Approved,
    Redacted,
}

impl ProjectState {
    /// Approved and redacted projects accept no edits.
    pub fn is_frozen(self) -> bool {
        matches!(self, ProjectState::Approved | ProjectState::Redacted)
    }
}

impl std::fmt::Display for ProjectState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string"))
    }
}

/// Sidecar and media paths. Only `frames_dir` and `detections` are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectInputs {
    pub frames_dir: PathBuf,
    pub detections: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diarization: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<PathBuf>,
    /// Detection id to ground truth "shows the reference identity", for live
    /// metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectSettings {
    pub face_dim: usize,
    pub aggregator: Aggregator,
    pub stride: usize,
    pub tracker: TrackerConfig,
    /// Used only when no shot-boundary file is given.
    pub cut_threshold: f64,
    pub margins: MarginConfig,
    pub style: MaskStyle,
    pub silence_pad: f64,
    pub temporal_pad_frames: u64,
}

impl Default for ProjectSettings {
    fn default() -> Self {
        ProjectSettings {
            face_dim: anonymise_core::model::FACE_EMBEDDING_DIM,
            aggregator: Aggregator::Min,
            stride: anonymise_core::identity::DEFAULT_SAMPLE_STRIDE,
            tracker: TrackerConfig::default(),
            cut_threshold: DEFAULT_CUT_THRESHOLD,
            margins: MarginConfig::default(),
            style: MaskStyle::Blur,
            silence_pad: DEFAULT_PAD_SECONDS,
            temporal_pad_frames: 0,
        }
    }
}

fn default_mode() -> TaskMode {
    TaskMode::Targets
}

fn default_threshold() -> f64 {
    AnonymisationTask::default().threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project_id: Option<String>,
    #[serde(flatten)]
    pub inputs: ProjectInputs,
    #[serde(default = "default_mode")]
    pub mode: TaskMode,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub settings: ProjectSettings,
}

impl CreateRequest {
    pub fn new(inputs: ProjectInputs) -> Self {
        CreateRequest {
            project_id: None,
            inputs,
            mode: TaskMode::Targets,
            threshold: default_threshold(),
            settings: ProjectSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewProject {
    pub project_id: String,
    /// RFC 3339.
    pub created_at: String,
    pub inputs: ProjectInputs,
    pub settings: ProjectSettings,
    pub task: AnonymisationTask,
    pub state: ProjectState,
    /// SHA-256 of `plan.json`, set on approval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_hash: Option<String>,
}

/// One operator action. The sequence of actions in the log determines the
/// plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Action {
    Create { request: CreateRequest },
    Track,
    SetReference { track_ids: Vec<String> },
    SetThreshold { threshold: f64 },
    PickClusters { cluster_ids: Vec<i64> },
    Approve { confirm: bool, plan_hash: String },
    Execute { report_hash: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub at: String,
    /// State after the action.
    pub state: ProjectState,
    pub action: Action,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackData {
    pub scenes: Vec<Scene>,
    pub tracklets: Vec<Tracklet>,
    /// Singleton tracklets wrapping orphan detections.
    pub orphans: Vec<Tracklet>,
}

impl TrackData {
    /// Everything that gets scored and may be redacted.
    pub fn units(&self) -> impl Iterator<Item = &Tracklet> {
        self.tracklets.iter().chain(&self.orphans)
    }

    pub fn unit_list(&self) -> Vec<Tracklet> {
        self.units().cloned().collect()
    }

    pub fn find(&self, track_id: &str) -> Option<&Tracklet> {
        self.units().find(|t| t.track_id == track_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawScore {
    pub track_id: String,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFile {
    pub references: Vec<String>,
    pub aggregator: Aggregator,
    pub stride: usize,
    pub scores: Vec<RawScore>,
}

impl ScoreFile {
    pub fn pairs(&self) -> Vec<(String, Option<f64>)> {
        self.scores.iter().map(|s| (s.track_id.clone(), s.score)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub plan_hash: String,
    pub video: VideoReport,
    pub audio_samples_silenced: u64,
    pub frames_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<PathBuf>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Nanos, true)
}

pub(crate) fn read_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| ReviewError::io(path, e))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| ReviewError::Internal(format!("{}: corrupt record: {e}", path.display())))
}

/// Writes via a temporary file and rename, so readers never see a torn file.
pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| ReviewError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| ReviewError::io(path, e))
}

pub(crate) fn write_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_bytes(path, &anonymise_core::io::to_json_bytes(value)?)
}

pub fn read_log(path: &Path) -> Result<Vec<LogEntry>> {
    let text = fs::read_to_string(path).map_err(|e| ReviewError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                ReviewError::Invalid(format!("{}:{}: bad log entry: {e}", path.display(), i + 1))
            })
        })
        .collect()
}

pub(crate) fn append_log(path: &Path, entry: &LogEntry) -> Result<()> {
    let mut line = serde_json::to_string(entry).map_err(|e| ReviewError::Internal(e.to_string()))?;
    line.push('\n');
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| ReviewError::io(path, e))?;
    f.write_all(line.as_bytes()).map_err(|e| ReviewError::io(path, e))?;
    f.sync_data().map_err(|e| ReviewError::io(path, e))
}
