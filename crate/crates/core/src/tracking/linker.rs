use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hungarian::{hungarian_assign, CostMatrix};
use super::iou::iou;
use crate::error::{Error, Result};
use crate::model::{scene_of, BBox, Detection, Observation, Scene, Tracklet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Minimum IoU for a link.
    pub iou_min: f64,
    /// Frames a track may go undetected before it closes.
    pub max_gap: u64,
    /// Tracklets with fewer real detections are dropped (their detections
    /// become orphans).
    pub min_track_len: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            iou_min: 0.3,
            max_gap: 10,
            min_track_len: 5,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_min > 0.0 && self.iou_min <= 1.0) {
            return Err(Error::invalid(format!("iou_min {} outside (0,1]", self.iou_min)));
        }
        if self.min_track_len == 0 {
            return Err(Error::invalid("min_track_len must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkResult {
    pub tracklets: Vec<Tracklet>,
    /// Detections that ended up in no kept tracklet.
    pub orphans: Vec<Detection>,
}

struct ActiveTrack {
    observations: Vec<Observation>,
    /// Indices into the scene's detection list.
    members: Vec<usize>,
    last_box: BBox,
    last_frame: u64,
}

/// Links the detections of one scene into tracklets.
///
/// An unmatched track coasts with its last box for up to `max_gap` frames.
/// When it is matched again, the skipped frames are filled with
/// `interpolated` observations carrying the frozen box.
pub fn link_tracklets(scene: &Scene, detections: &[Detection], config: &TrackerConfig) -> Result<LinkResult> {
    config.validate()?;
    if let Some(d) = detections.iter().find(|d| !scene.contains(d.frame_index)) {
        return Err(Error::invalid(format!(
            "detection {} at frame {} is outside scene {} [{}, {})",
            d.id, d.frame_index, scene.scene_id, scene.start, scene.end
        )));
    }

    let mut by_frame: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, d) in detections.iter().enumerate() {
        by_frame.entry(d.frame_index).or_default().push(i);
    }

    let mut active: Vec<ActiveTrack> = Vec::new();
    let mut closed: Vec<ActiveTrack> = Vec::new();
    for (&frame, dets) in &by_frame {
        let (alive, expired): (Vec<_>, Vec<_>) = active
            .into_iter()
            .partition(|t| frame - t.last_frame - 1 <= config.max_gap);
        closed.extend(expired);
        active = alive;

        let data = active
            .iter()
            .flat_map(|t| {
                dets.iter().map(move |&di| {
                    let s = iou(&t.last_box, &detections[di].bbox);
                    (s >= config.iou_min).then_some(-s)
                })
            })
            .collect();
        let cost = CostMatrix::new(active.len(), dets.len(), data)?;
        let assignment = hungarian_assign(&cost);

        for &(row, col) in &assignment.pairs {
            let det = &detections[dets[col]];
            let track = &mut active[row];
            for f in track.last_frame + 1..frame {
                track.observations.push(Observation {
                    frame: f,
                    bbox: track.last_box,
                    det: None,
                    interpolated: true,
                });
            }
            track.observations.push(real_observation(det));
            track.members.push(dets[col]);
            track.last_box = det.bbox;
            track.last_frame = frame;
        }
        for &col in &assignment.unmatched_cols {
            let det = &detections[dets[col]];
            active.push(ActiveTrack {
                observations: vec![real_observation(det)],
                members: vec![dets[col]],
                last_box: det.bbox,
                last_frame: frame,
            });
        }
    }
    closed.extend(active);
    closed.sort_by_key(|t| (t.observations[0].frame, t.members[0]));

    let mut result = LinkResult::default();
    let mut orphan_idx = Vec::new();
    for t in closed {
        if t.members.len() >= config.min_track_len {
            result.tracklets.push(Tracklet {
                track_id: format!("t-{}-{}", scene.scene_id, result.tracklets.len()),
                scene_id: scene.scene_id,
                observations: t.observations,
            });
        } else {
            orphan_idx.extend(t.members);
        }
    }
    orphan_idx.sort_by_key(|&i| (detections[i].frame_index, i));
    result.orphans = orphan_idx.into_iter().map(|i| detections[i].clone()).collect();
    Ok(result)
}

fn real_observation(det: &Detection) -> Observation {
    Observation {
        frame: det.frame_index,
        bbox: det.bbox,
        det: Some(det.id.clone()),
        interpolated: false,
    }
}

/// Groups detections by scene and links every scene independently, in
/// parallel. Output is ordered by scene.
pub fn link_recording(scenes: &[Scene], detections: &[Detection], config: &TrackerConfig) -> Result<LinkResult> {
    let mut per_scene: Vec<Vec<Detection>> = vec![Vec::new(); scenes.len()];
    for d in detections {
        let scene = scene_of(scenes, d.frame_index).ok_or_else(|| {
            Error::invalid(format!("detection {} at frame {} is in no scene", d.id, d.frame_index))
        })?;
        per_scene[scene.scene_id].push(d.clone());
    }
    let parts = scenes
        .par_iter()
        .zip(per_scene.par_iter())
        .map(|(s, dets)| link_tracklets(s, dets, config))
        .collect::<Result<Vec<_>>>()?;
    let mut out = LinkResult::default();
    for p in parts {
        out.tracklets.extend(p.tracklets);
        out.orphans.extend(p.orphans);
    }
    Ok(out)
}

/// Wraps each orphan detection in a one-observation tracklet so it can be
/// scored and, failing that, redacted like any other track.
pub fn orphan_tracklets(orphans: &[Detection], scenes: &[Scene]) -> Result<Vec<Tracklet>> {
    orphans
        .iter()
        .map(|d| {
            let scene = scene_of(scenes, d.frame_index).ok_or_else(|| {
                Error::invalid(format!("detection {} at frame {} is in no scene", d.id, d.frame_index))
            })?;
            Ok(Tracklet {
                track_id: format!("orphan-{}", d.id),
                scene_id: scene.scene_id,
                observations: vec![real_observation(d)],
            })
        })
        .collect()
}
