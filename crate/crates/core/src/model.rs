//! Domain types shared by every stage of the pipeline.
//!
//! Coordinates are real-valued pixels with the origin at the top-left corner
//! and y pointing down. Boxes may extend past the frame after margin
//! expansion; clamping happens only when a box is rasterized.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Segments whose length is within this tolerance of zero are dropped.
pub const SEGMENT_EPS: f64 = 1e-9;

/// Face embeddings produced by the upstream model have this dimension.
pub const FACE_EMBEDDING_DIM: usize = 512;

/// Axis-aligned box `[x, y, w, h]` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BBox { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite box coordinate"));
        }
        if self.w <= 0.0 {
            return Err(Error::invalid("non-positive width"));
        }
        if self.h <= 0.0 {
            return Err(Error::invalid("non-positive height"));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// Position of a frame within the recording and its scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameRef {
    pub scene_id: usize,
    pub frame_index: u64,
}

impl FrameRef {
    pub fn timestamp(&self, fps: f64) -> f64 {
        frame_time(self.frame_index, fps)
    }
}

pub fn frame_time(frame_index: u64, fps: f64) -> f64 {
    frame_index as f64 / fps
}

/// Canonical detection id: `d-<frame_index>-<ordinal within frame>`.
pub fn detection_id(frame_index: u64, ordinal: usize) -> String {
    format!("d-{frame_index}-{ordinal}")
}

/// One face found by the upstream detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub id: String,
    #[serde(rename = "frame")]
    pub frame_index: u64,
    pub bbox: BBox,
    #[serde(rename = "conf")]
    pub confidence: f64,
}

impl Detection {
    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::invalid(format!(
                "confidence {} outside [0,1]",
                self.confidence
            )));
        }
        if self.id.is_empty() {
            return Err(Error::invalid("empty detection id"));
        }
        Ok(())
    }
}

/// Contiguous frame interval `[start, end)` between two shot boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: usize,
    pub start: u64,
    pub end: u64,
}

impl Scene {
    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, frame_index: u64) -> bool {
        (self.start..self.end).contains(&frame_index)
    }
}

/// Checks that `scenes` partition `[0, total_frames)` in order.
pub fn validate_partition(scenes: &[Scene], total_frames: u64) -> Result<()> {
    let mut cursor = 0;
    for (k, s) in scenes.iter().enumerate() {
        if s.scene_id != k {
            return Err(Error::invalid(format!(
                "scene at position {k} has id {}",
                s.scene_id
            )));
        }
        if s.start >= s.end {
            return Err(Error::invalid(format!("scene {k} is empty")));
        }
        if s.start != cursor {
            return Err(Error::invalid(format!(
                "scene {k} starts at {} but previous scene ends at {cursor}",
                s.start
            )));
        }
        cursor = s.end;
    }
    if cursor != total_frames {
        return Err(Error::invalid(format!(
            "scenes cover [0,{cursor}) but recording has {total_frames} frames"
        )));
    }
    Ok(())
}

/// Scene that owns `frame_index`, by binary search over a valid partition.
pub fn scene_of(scenes: &[Scene], frame_index: u64) -> Option<&Scene> {
    let pos = scenes.partition_point(|s| s.end <= frame_index);
    scenes.get(pos).filter(|s| s.contains(frame_index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Face,
    Voice,
}

/// Identity descriptor of a face crop or a speech segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub kind: EmbeddingKind,
    pub vec: Vec<f64>,
}

impl Embedding {
    pub fn face(vec: Vec<f64>) -> Self {
        Embedding {
            kind: EmbeddingKind::Face,
            vec,
        }
    }

    pub fn voice(vec: Vec<f64>) -> Self {
        Embedding {
            kind: EmbeddingKind::Voice,
            vec,
        }
    }

    pub fn dim(&self) -> usize {
        self.vec.len()
    }

    pub fn norm(&self) -> f64 {
        self.vec.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.vec.iter().all(|v| v.is_finite())
    }
}

/// One entry of a tracklet. Coasted entries (`interpolated`) carry the frozen
/// box of the last real detection and no detection id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub frame: u64,
    pub bbox: BBox,
    pub det: Option<String>,
    #[serde(default)]
    pub interpolated: bool,
}

/// Temporally linked faces of one identity inside one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracklet {
    pub track_id: String,
    pub scene_id: usize,
    #[serde(rename = "obs")]
    pub observations: Vec<Observation>,
}

impl Tracklet {
    pub fn validate(&self, scenes: &[Scene]) -> Result<()> {
        let Some(first) = self.observations.first() else {
            return Err(Error::invalid(format!("tracklet {} is empty", self.track_id)));
        };
        let scene = scenes
            .get(self.scene_id)
            .ok_or_else(|| Error::invalid(format!("tracklet {}: unknown scene", self.track_id)))?;
        let mut prev: Option<u64> = None;
        for o in &self.observations {
            o.bbox.validate()?;
            if !scene.contains(o.frame) {
                return Err(Error::invalid(format!(
                    "tracklet {}: frame {} outside scene {}",
                    self.track_id, o.frame, self.scene_id
                )));
            }
            if prev.is_some_and(|p| o.frame <= p) {
                return Err(Error::invalid(format!(
                    "tracklet {}: frames not strictly increasing at {}",
                    self.track_id, o.frame
                )));
            }
            prev = Some(o.frame);
        }
        debug_assert!(first.frame >= scene.start);
        Ok(())
    }

    pub fn start_frame(&self) -> u64 {
        self.observations.first().map_or(0, |o| o.frame)
    }

    pub fn end_frame(&self) -> u64 {
        self.observations.last().map_or(0, |o| o.frame)
    }

    /// Ids of the real (non-coasted) detections, in frame order.
    pub fn detection_ids(&self) -> impl Iterator<Item = &str> {
        self.observations.iter().filter_map(|o| o.det.as_deref())
    }

    pub fn real_len(&self) -> usize {
        self.detection_ids().count()
    }

    /// Detection ids of this tracklet that have an embedding in `embeddings`.
    pub fn embedding_ids<'a, V>(&'a self, embeddings: &'a BTreeMap<String, V>) -> Vec<&'a str> {
        self.detection_ids()
            .filter(|id| embeddings.contains_key(*id))
            .collect()
    }
}

/// Diarised speech interval labelled with a speaker cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerSegment {
    pub start: f64,
    pub end: f64,
    #[serde(rename = "cluster")]
    pub cluster_id: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dvec: Option<Vec<f64>>,
}

impl SpeakerSegment {
    pub fn new(start: f64, end: f64, cluster_id: i64) -> Self {
        SpeakerSegment {
            start,
            end,
            cluster_id,
            dvec: None,
        }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.start, self.end)
    }

    pub fn dvec_embedding(&self) -> Option<Embedding> {
        self.dvec.clone().map(Embedding::voice)
    }
}

/// Sorts segments by start, drops zero-length ones and merges overlapping or
/// touching segments of the same cluster. A merged segment keeps the d-vector
/// of its earliest member.
pub fn canonicalize_segments(segments: &[SpeakerSegment]) -> Result<Vec<SpeakerSegment>> {
    let mut by_cluster: BTreeMap<i64, Vec<SpeakerSegment>> = BTreeMap::new();
    for (i, s) in segments.iter().enumerate() {
        if !s.start.is_finite() || !s.end.is_finite() {
            return Err(Error::invalid(format!("segment {i}: non-finite time")));
        }
        let len = s.end - s.start;
        if len.abs() <= SEGMENT_EPS {
            continue;
        }
        if len < 0.0 {
            return Err(Error::invalid(format!(
                "segment {i}: end {} <= start {}",
                s.end, s.start
            )));
        }
        by_cluster.entry(s.cluster_id).or_default().push(s.clone());
    }

    let mut out = Vec::with_capacity(segments.len());
    for (_, mut group) in by_cluster {
        group.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
        let mut iter = group.into_iter();
        let mut cur = iter.next().expect("non-empty group");
        for s in iter {
            if s.start <= cur.end {
                cur.end = cur.end.max(s.end);
            } else {
                out.push(std::mem::replace(&mut cur, s));
            }
        }
        out.push(cur);
    }
    out.sort_by(|a, b| {
        a.start
            .total_cmp(&b.start)
            .then(a.end.total_cmp(&b.end))
            .then(a.cluster_id.cmp(&b.cluster_id))
    });
    Ok(out)
}

/// Closed time interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Interval { start, end }
    }

    pub fn len(&self) -> f64 {
        (self.end - self.start).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t <= self.end
    }

    pub fn covers(&self, other: &Interval) -> bool {
        self.start <= other.start && self.end >= other.end
    }
}

/// Total length of a sorted, disjoint interval list.
pub fn total_length(intervals: &[Interval]) -> f64 {
    intervals.iter().map(Interval::len).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    /// Redact the listed identities.
    Targets,
    /// Redact everyone except the listed (protected) identities.
    AllExcept,
}

impl fmt::Display for TaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskMode::Targets => "targets",
            TaskMode::AllExcept => "all_except",
        })
    }
}

impl std::str::FromStr for TaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "targets" => Ok(TaskMode::Targets),
            "all_except" | "all-except" => Ok(TaskMode::AllExcept),
            other => Err(Error::invalid(format!("unknown mode {other:?}"))),
        }
    }
}

/// What the operator asked to anonymise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnonymisationTask {
    pub mode: TaskMode,
    pub identity_refs: Vec<String>,
    pub audio_cluster_ids: Vec<i64>,
    pub threshold: f64,
}

impl Default for AnonymisationTask {
    fn default() -> Self {
        AnonymisationTask {
            mode: TaskMode::Targets,
            identity_refs: Vec::new(),
            audio_cluster_ids: Vec::new(),
            threshold: 0.5,
        }
    }
}

impl AnonymisationTask {
    pub fn validate(&self, video_requested: bool) -> Result<()> {
        validate_threshold(self.threshold)?;
        if video_requested && self.identity_refs.is_empty() {
            return Err(Error::invalid(
                "at least one reference track is required for video redaction",
            ));
        }
        let unique: BTreeSet<_> = self.identity_refs.iter().collect();
        if unique.len() != self.identity_refs.len() {
            return Err(Error::invalid("duplicate reference track id"));
        }
        Ok(())
    }
}

pub fn validate_threshold(t: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("threshold {t} outside [-1,1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioRef {
    pub path: String,
    pub sample_rate: u32,
}

/// Recording metadata stored as `manifest.json` next to the frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub total_frames: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<AudioRef>,
}

impl Manifest {
    pub fn duration(&self) -> f64 {
        self.total_frames as f64 / self.fps
    }

    /// Numeric invariants only; see [`validate_recording_manifest`] for the
    /// frame-file check.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.fps.is_finite() && self.fps > 0.0) {
            v.push("fps must be positive".to_string());
        }
        if self.width == 0 {
            v.push("width must be positive".to_string());
        }
        if self.height == 0 {
            v.push("height must be positive".to_string());
        }
        if self.total_frames == 0 {
            v.push("total_frames must be positive".to_string());
        }
        if let Some(a) = &self.audio {
            if a.sample_rate == 0 {
                v.push("audio sample_rate must be positive".to_string());
            }
        }
        v
    }
}

pub fn frame_file_name(frame_index: u64) -> String {
    format!("frame_{frame_index:06}.png")
}

/// Validates the manifest and, when `frames_dir` is given, that every frame
/// file in `[0, total_frames)` exists there.
pub fn validate_recording_manifest(manifest: Manifest, frames_dir: Option<&Path>) -> Result<Manifest> {
    let mut violations = manifest.violations();
    if let (Some(dir), true) = (frames_dir, violations.is_empty()) {
        let missing: Vec<u64> = (0..manifest.total_frames)
            .filter(|&i| !dir.join(frame_file_name(i)).is_file())
            .collect();
        if !missing.is_empty() {
            let shown: Vec<String> = missing.iter().take(20).map(u64::to_string).collect();
            let more = if missing.len() > 20 {
                format!(" (+{} more)", missing.len() - 20)
            } else {
                String::new()
            };
            violations.push(format!("missing frame files: {}{more}", shown.join(", ")));
        }
    }
    if violations.is_empty() {
        Ok(manifest)
    } else {
        Err(Error::Manifest(violations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(start: f64, end: f64, c: i64) -> SpeakerSegment {
        SpeakerSegment::new(start, end, c)
    }

    fn manifest(fps: f64, total_frames: u64) -> Manifest {
        Manifest {
            fps,
            width: 1280,
            height: 720,
            total_frames,
            audio: None,
        }
    }

    #[test]
    fn manifest_with_all_frames_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..100 {
            std::fs::write(dir.path().join(frame_file_name(i)), b"").unwrap();
        }
        let m = validate_recording_manifest(manifest(25.0, 100), Some(dir.path())).unwrap();
        assert_eq!((m.width, m.height), (1280, 720));
    }

    #[test]
    fn zero_fps_rejected() {
        let err = validate_recording_manifest(manifest(0.0, 100), None).unwrap_err();
        assert!(err.to_string().contains("fps must be positive"), "{err}");
    }

    #[test]
    fn missing_frame_is_listed() {
        let dir = tempfile::tempdir().unwrap();
        for i in (0..100).filter(|&i| i != 42) {
            std::fs::write(dir.path().join(frame_file_name(i)), b"").unwrap();
        }
        let err = validate_recording_manifest(manifest(25.0, 100), Some(dir.path())).unwrap_err();
        match err {
            Error::Manifest(v) => assert_eq!(v, vec!["missing frame files: 42".to_string()]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn canonicalize_merges_touching_same_cluster() {
        let out = canonicalize_segments(&[seg(2.0, 3.0, 1), seg(1.0, 2.0, 1)]).unwrap();
        assert_eq!(out, vec![seg(1.0, 3.0, 1)]);
    }

    #[test]
    fn canonicalize_empty_and_zero_length() {
        assert!(canonicalize_segments(&[]).unwrap().is_empty());
        assert!(canonicalize_segments(&[seg(1.0, 1.0, 1)]).unwrap().is_empty());
    }

    #[test]
    fn canonicalize_rejects_reversed() {
        assert!(canonicalize_segments(&[seg(5.0, 3.0, 0)]).is_err());
    }

    #[test]
    fn canonicalize_keeps_other_clusters_apart() {
        let out = canonicalize_segments(&[seg(0.0, 2.0, 0), seg(1.0, 3.0, 1)]).unwrap();
        assert_eq!(out, vec![seg(0.0, 2.0, 0), seg(1.0, 3.0, 1)]);
    }

    #[test]
    fn bbox_decodes_from_array_and_validates() {
        let b: BBox = serde_json::from_str("[10,20,30,40]").unwrap();
        assert_eq!(b, BBox::new(10.0, 20.0, 30.0, 40.0).unwrap());
        assert!(serde_json::from_str::<BBox>("[10,20,-5,40]").is_err());
        assert!(serde_json::from_str::<BBox>("[10,20,5,0]").is_err());
    }

    #[test]
    fn partition_checks() {
        let scenes = [
            Scene { scene_id: 0, start: 0, end: 150 },
            Scene { scene_id: 1, start: 150, end: 1000 },
        ];
        validate_partition(&scenes, 1000).unwrap();
        assert!(validate_partition(&scenes, 999).is_err());
        assert_eq!(scene_of(&scenes, 150).unwrap().scene_id, 1);
        assert_eq!(scene_of(&scenes, 149).unwrap().scene_id, 0);
        assert!(scene_of(&scenes, 1000).is_none());
    }

    #[test]
    fn task_threshold_bounds() {
        let mut t = AnonymisationTask {
            identity_refs: vec!["t-0-0".into()],
            ..Default::default()
        };
        t.validate(true).unwrap();
        t.threshold = 1.01;
        assert!(t.validate(true).is_err());
        t.threshold = 0.5;
        t.identity_refs.clear();
        assert!(t.validate(true).is_err());
        t.validate(false).unwrap();
    }

    fn arb_segment() -> impl Strategy<Value = SpeakerSegment> {
        (0.0f64..100.0, 0.0f64..10.0, 0i64..3).prop_map(|(s, len, c)| seg(s, s + len, c))
    }

    fn arb_finite() -> impl Strategy<Value = f64> {
        prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
    }

    proptest! {
        #[test]
        fn canonicalize_is_idempotent(segs in prop::collection::vec(arb_segment(), 0..30)) {
            let once = canonicalize_segments(&segs).unwrap();
            let twice = canonicalize_segments(&once).unwrap();
            prop_assert_eq!(&once, &twice);
            for w in once.windows(2) {
                prop_assert!(w[0].start <= w[1].start);
            }
        }

        #[test]
        fn core_types_round_trip(
            x in arb_finite(), y in arb_finite(),
            w in 1e-6f64..1e6, h in 1e-6f64..1e6,
            frame in 0u64..1_000_000, conf in 0.0f64..=1.0,
            start in 0.0f64..1e4, len in 1e-3f64..1e3,
            dvec in prop::option::of(prop::collection::vec(-1.0f64..1.0, 0..8)),
        ) {
            let bbox = BBox::new(x, y, w, h).unwrap();
            let det = Detection { id: detection_id(frame, 0), frame_index: frame, bbox, confidence: conf };
            let back: Detection = serde_json::from_str(&serde_json::to_string(&det).unwrap()).unwrap();
            prop_assert_eq!(back, det);

            let t = Tracklet {
                track_id: "t-0-0".into(),
                scene_id: 0,
                observations: vec![Observation { frame, bbox, det: None, interpolated: true }],
            };
            let back: Tracklet = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
            prop_assert_eq!(back, t);

            let s = SpeakerSegment { start, end: start + len, cluster_id: -3, dvec };
            let back: SpeakerSegment = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
            prop_assert_eq!(back, s);

            let scene = Scene { scene_id: 3, start: frame, end: frame + 1 };
            let back: Scene = serde_json::from_str(&serde_json::to_string(&scene).unwrap()).unwrap();
            prop_assert_eq!(back, scene);
        }
    }
}
