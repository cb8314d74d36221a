//! One-way exports for manual inspection in annotation tools.

pub mod eaf;
pub mod via;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identity::TrackScore;
use crate::model::{Interval, Manifest, SpeakerSegment, Tracklet};

pub use eaf::{export_eaf, parse_eaf, EafAnnotation, EafDocument, EafTier, ANONYMISE_TIER};
pub use via::{export_via, parse_via, ViaRegion};

/// Everything an export needs: video decisions, audio selection and the
/// recording they refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportBundle {
    pub manifest: Manifest,
    /// Directory VIA resolves frame file names against.
    #[serde(default)]
    pub image_dir: String,
    #[serde(default)]
    pub tracklets: Vec<Tracklet>,
    #[serde(default)]
    pub decisions: Vec<TrackScore>,
    #[serde(default)]
    pub segments: Vec<SpeakerSegment>,
    #[serde(default)]
    pub picked_clusters: Vec<i64>,
    #[serde(default)]
    pub silence: Vec<Interval>,
}

impl ExportBundle {
    pub fn new(manifest: Manifest) -> Self {
        ExportBundle {
            manifest,
            image_dir: String::new(),
            tracklets: Vec::new(),
            decisions: Vec::new(),
            segments: Vec::new(),
            picked_clusters: Vec::new(),
            silence: Vec::new(),
        }
    }

    /// Every referenced track and cluster must exist.
    pub fn validate(&self) -> Result<()> {
        let tracks: BTreeSet<&str> = self.tracklets.iter().map(|t| t.track_id.as_str()).collect();
        if tracks.len() != self.tracklets.len() {
            return Err(Error::invalid("duplicate track id in export bundle"));
        }
        if let Some(d) = self.decisions.iter().find(|d| !tracks.contains(d.track_id.as_str())) {
            return Err(Error::invalid(format!("decision for unknown track {}", d.track_id)));
        }
        let clusters: BTreeSet<i64> = self.segments.iter().map(|s| s.cluster_id).collect();
        if let Some(c) = self.picked_clusters.iter().find(|c| !clusters.contains(c)) {
            return Err(Error::invalid(format!("picked cluster {c} has no segments")));
        }
        if let Some(t) = self.tracklets.iter().find(|t| t.end_frame() >= self.manifest.total_frames) {
            return Err(Error::invalid(format!("track {} extends past the last frame", t.track_id)));
        }
        Ok(())
    }

    pub fn decision_for(&self, track_id: &str) -> Option<&TrackScore> {
        self.decisions.iter().find(|d| d.track_id == track_id)
    }
}
