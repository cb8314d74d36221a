#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use anonymise_core::synth::{write_recording, RecordingPaths, RecordingSpec};
use anonymise_review::{CreateRequest, ProjectInputs, ReviewService};

pub fn small_spec() -> RecordingSpec {
    RecordingSpec {
        seed: 11,
        frames: 40,
        cut_at: 20,
        audio_seconds: 12.0,
        ..Default::default()
    }
}

pub struct Fixture {
    pub _dir: tempfile::TempDir,
    pub paths: RecordingPaths,
    pub service: ReviewService,
}

pub fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_recording(&dir.path().join("rec"), &small_spec()).unwrap();
    let service = ReviewService::new(dir.path().join("projects")).unwrap();
    Fixture {
        _dir: dir,
        paths,
        service,
    }
}

pub fn inputs(p: &RecordingPaths) -> ProjectInputs {
    ProjectInputs {
        frames_dir: p.frames.clone(),
        detections: p.detections.clone(),
        embeddings: Some(p.embeddings.clone()),
        diarization: Some(p.diarization.clone()),
        shots: Some(p.shots.clone()),
        labels: Some(p.labels.clone()),
    }
}

pub fn request(p: &RecordingPaths, id: &str) -> CreateRequest {
    let mut r = CreateRequest::new(inputs(p));
    r.project_id = Some(id.to_string());
    r
}

pub fn labels(p: &RecordingPaths) -> BTreeMap<String, bool> {
    serde_json::from_slice(&std::fs::read(&p.labels).unwrap()).unwrap()
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}
