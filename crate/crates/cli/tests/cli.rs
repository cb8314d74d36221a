mod common;

use std::collections::BTreeMap;

use anonymise_core::export::{parse_eaf, parse_via};
use anonymise_core::io::{read_audio, FrameStore};
use anonymise_core::model::{Interval, Scene, Tracklet};
use anonymise_core::redact::RedactionPlan;
use common::*;
use serde_json::Value;

fn small_recording(dir: &std::path::Path) {
    run(dir, &["synth", "--out", "rec", "--frames", "40", "--seconds", "12", "--seed", "3"]);
}

#[test]
fn stage_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_recording(d);

    let summary: Value = serde_json::from_str(&run(
        d,
        &[
            "validate",
            "--frames",
            "rec/frames",
            "--detections",
            "rec/detections.jsonl",
            "--embeddings",
            "rec/embeddings.jsonl",
            "--diarization",
            "rec/diarization.jsonl",
        ],
    ))
    .unwrap();
    assert_eq!(summary["total_frames"], 40);
    assert_eq!(summary["audio_seconds"], 12.0);

    run(d, &["segment", "--frames", "rec/frames", "--detect"]);
    let scenes: Vec<Scene> = read_json(&d.join("scenes.json"));
    assert_eq!(scenes.iter().map(|s| (s.start, s.end)).collect::<Vec<_>>(), [(0, 20), (20, 40)]);

    run(d, &["track", "--detections", "rec/detections.jsonl", "--scenes", "scenes.json"]);
    let tracks: Vec<Tracklet> = read_json(&d.join("tracks.json"));
    let orphans: Vec<Tracklet> = read_json(&d.join("orphans.json"));
    assert_eq!(tracks.len(), 4);
    assert!(orphans.is_empty());

    let labels: BTreeMap<String, bool> = read_json(&d.join("rec/labels.json"));
    let reference = target_track(&tracks, &labels);
    run(
        d,
        &["identify", "--tracks", "tracks.json", "orphans.json", "--embeddings", "rec/embeddings.jsonl", "--ref", &reference],
    );
    let scores: Vec<Value> = read_json(&d.join("scores.json"));
    assert_eq!(scores.len(), 4);
    for s in &scores {
        let id = s["track_id"].as_str().unwrap();
        let t = tracks.iter().find(|t| t.track_id == id).unwrap();
        let target = t.detection_ids().all(|d| labels[d]);
        assert_eq!(s["decision"], if target { "match" } else { "non_match" }, "{id}");
        assert_eq!(s.as_object().unwrap().len(), 3);
    }

    run(d, &["speakers", "silence-set", "--diarization", "rec/diarization.jsonl", "--clusters", "0", "--frames", "rec/frames"]);
    let silence: Vec<Interval> = read_json(&d.join("silence.json"));
    assert!(!silence.is_empty());

    let refused = try_run(d, &["plan", "--tracks", "tracks.json", "--scores", "scores.json", "--frames", "rec/frames"]);
    assert!(!refused.status.success());
    assert!(String::from_utf8_lossy(&refused.stderr).contains("--force"));

    run(
        d,
        &[
            "plan", "--tracks", "tracks.json", "orphans.json", "--scores", "scores.json", "--frames", "rec/frames",
            "--silence", "silence.json", "--style", "blackout", "--force",
        ],
    );
    let plan: RedactionPlan = read_json(&d.join("plan.json"));
    let matched_obs: usize = tracks
        .iter()
        .filter(|t| t.detection_ids().all(|d| labels[d]))
        .map(|t| t.observations.len())
        .sum();
    assert_eq!(plan.video.len(), matched_obs);
    assert_eq!(plan.audio, silence);

    run(
        d,
        &[
            "redact", "--plan", "plan.json", "--frames-in", "rec/frames", "--frames-out", "out/frames",
            "--audio-in", "rec/audio.wav", "--audio-out", "out/audio.wav",
        ],
    );
    let out = FrameStore::open(d.join("out/frames")).unwrap();
    let op = &plan.video[0];
    let frame = out.read_frame(op.frame).unwrap();
    let cx = (op.bbox.x + op.bbox.w / 2.0) as u32;
    let cy = (op.bbox.y + op.bbox.h / 2.0) as u32;
    assert_eq!(frame.get_pixel(cx, cy).0, [0, 0, 0]);
    let audio = read_audio(&d.join("out/audio.wav")).unwrap();
    let mid = (silence[0].start + silence[0].end) / 2.0;
    assert_eq!(audio.samples[(mid * 16_000.0) as usize], 0);

    run(d, &["eval", "--scores", "scores.json", "--labels", "rec/labels.json", "--tracks", "tracks.json", "--plot", "pr.svg", "roc.svg"]);
    let metrics: Value = read_json(&d.join("metrics.json"));
    assert_eq!(metrics["auc"], 1.0);
    assert!(std::fs::read_to_string(d.join("roc.svg")).unwrap().contains("<polyline"));

    run(d, &["export", "via", "--frames", "rec/frames", "--tracks", "tracks.json", "--scores", "scores.json"]);
    let regions = parse_via(&read_json(&d.join("via.json"))).unwrap();
    assert_eq!(regions.len(), tracks.iter().map(|t| t.observations.len()).sum::<usize>());
    run(d, &["export", "eaf", "--frames", "rec/frames", "--diarization", "rec/diarization.jsonl", "--clusters", "0"]);
    let doc = parse_eaf(&std::fs::read_to_string(d.join("annotations.eaf")).unwrap()).unwrap();
    let media = doc.media_url.unwrap();
    assert!(media.ends_with("audio.wav") && !media.contains(".."), "{media}");
}

#[test]
fn eval_counts_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let scores = serde_json::json!([
        {"track_id": "a", "score": 0.9, "decision": "match"},
        {"track_id": "b", "score": 0.7, "decision": "match"},
        {"track_id": "c", "score": 0.6, "decision": "match"},
        {"track_id": "d", "score": 0.1, "decision": "non_match"},
        {"track_id": "e", "score": null, "decision": "match"}
    ]);
    let labels = serde_json::json!({"a": true, "b": false, "c": true, "d": false, "e": true});
    std::fs::write(d.join("scores.json"), scores.to_string()).unwrap();
    std::fs::write(d.join("labels.json"), labels.to_string()).unwrap();
    let out = run(d, &["eval", "--scores", "scores.json", "--labels", "labels.json"]);
    assert!(out.contains("items 4 positives 2 negatives 2 auc 0.750000"), "{out}");
}

#[test]
fn project_commands_and_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_recording(d);
    let project = |args: &[&str]| {
        let mut all = vec!["project", "--root", "projects"];
        all.extend_from_slice(args);
        try_run(d, &all)
    };
    let p = |args: &[&str]| {
        let out = project(args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice::<Value>(&out.stdout).unwrap()
    };
    p(&[
        "create", "--id", "demo", "--frames", "rec/frames", "--detections", "rec/detections.jsonl", "--embeddings",
        "rec/embeddings.jsonl", "--diarization", "rec/diarization.jsonl", "--shots", "rec/shots.json", "--labels",
        "rec/labels.json",
    ]);
    assert_eq!(p(&["track", "demo"])["tracklets"], 4);
    let listed = p(&["tracklets", "demo"]);
    assert_eq!(listed.as_array().unwrap().len(), 4);

    let data: Value = read_json(&d.join("projects/demo/tracks.json"));
    let tracks: Vec<Tracklet> = serde_json::from_value(data["tracklets"].clone()).unwrap();
    let labels: BTreeMap<String, bool> = read_json(&d.join("rec/labels.json"));
    let reference = target_track(&tracks, &labels);

    assert_eq!(p(&["reference", "demo", &reference])["state"], "refs_chosen");
    assert_eq!(p(&["threshold", "demo", "0.5"])["matches"], 2);
    assert_eq!(p(&["pick", "demo", "1", "2"])["picked"], serde_json::json!([1, 2]));
    let approved = p(&["approve", "demo"]);
    let report = p(&["execute", "demo"]);
    assert_eq!(report["plan_hash"], approved["plan_hash"]);

    let replayed = p(&["replay", "--log", "projects/demo/log.jsonl", "--new-id", "again"]);
    assert_eq!(replayed["identical"], true);
    assert_eq!(
        std::fs::read(d.join("projects/demo/plan.json")).unwrap(),
        std::fs::read(d.join("projects/again/plan.json")).unwrap()
    );

    let frozen = project(&["threshold", "demo", "0.1"]);
    assert!(!frozen.status.success());
    assert!(String::from_utf8_lossy(&frozen.stderr).contains("redacted"));

    let missing = project(&["show", "nope"]);
    assert!(!missing.status.success());
}
