#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use anonymise_core::model::Tracklet;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_anonymise"))
}

/// Runs the CLI in `dir` and returns its stdout, panicking on failure.
pub fn run(dir: &Path, args: &[&str]) -> String {
    let out = try_run(dir, args);
    assert!(
        out.status.success(),
        "anonymise {} failed:\n{}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn try_run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// Longest tracklet whose real detections all show the target face.
pub fn target_track(tracks: &[Tracklet], labels: &BTreeMap<String, bool>) -> String {
    let mut candidates: Vec<&Tracklet> = tracks
        .iter()
        .filter(|t| t.detection_ids().all(|d| labels[d]))
        .collect();
    candidates.sort_by_key(|t| std::cmp::Reverse(t.observations.len()));
    candidates[0].track_id.clone()
}
