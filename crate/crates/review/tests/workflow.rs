mod common;

use anonymise_core::identity::{select_reference_candidates, Decision};
use anonymise_core::io::{load_diarization, read_audio, FrameStore};
use anonymise_core::model::{Interval, TaskMode};
use anonymise_review::project::{read_log, sha256_hex, TrackData};
use anonymise_review::{Action, ProjectState, ReviewError};
use common::*;

/// Track id of the longest tracklet showing the target face.
fn target_reference(f: &Fixture, id: &str) -> String {
    let labels = labels(&f.paths);
    let data: TrackData =
        serde_json::from_slice(&read(&f.service.project_dir(id).join("tracks.json"))).unwrap();
    let units: Vec<_> = data.units().cloned().collect();
    select_reference_candidates(&units)
        .into_iter()
        .map(|i| &units[i])
        .find(|t| t.detection_ids().all(|d| labels[d]))
        .unwrap()
        .track_id
        .clone()
}

#[test]
fn create_validates_inputs() {
    let f = fixture();
    let p = f.service.create_project(request(&f.paths, "a")).unwrap();
    assert_eq!(p.state, ProjectState::Draft);
    assert!(matches!(
        f.service.create_project(request(&f.paths, "a")),
        Err(ReviewError::Exists(m)) if m.contains("exists")
    ));

    let mut bad = request(&f.paths, "b");
    bad.inputs.detections = f.paths.root.join("missing.jsonl");
    let err = f.service.create_project(bad).unwrap_err();
    assert!(err.to_string().contains("missing.jsonl"), "{err}");
    assert!(!f.service.project_dir("b").exists());

    let mut bad = request(&f.paths, "c");
    bad.threshold = 1.5;
    assert!(f.service.create_project(bad).is_err());

    assert!(matches!(f.service.project("nope"), Err(ReviewError::NotFound(_))));
    assert!(matches!(f.service.project("../etc"), Err(ReviewError::NotFound(_))));
}

#[test]
fn tracklets_need_tracking_and_follow_suggestion_order() {
    let f = fixture();
    f.service.create_project(request(&f.paths, "p")).unwrap();
    let err = f.service.list_tracklets("p", None).unwrap_err();
    assert!(err.to_string().contains("run tracking first"));

    let summary = f.service.run_tracking("p").unwrap();
    assert_eq!((summary.scenes, summary.tracklets, summary.orphans), (2, 4, 0));

    let list = f.service.list_tracklets("p", None).unwrap();
    let lengths: Vec<usize> = list.iter().map(|t| t.length).collect();
    assert!(lengths.windows(2).all(|w| w[0] >= w[1]));
    assert!(list.iter().enumerate().all(|(i, t)| t.suggestion_rank == i));
    assert!(f.service.list_tracklets("p", Some(99)).unwrap().is_empty());
    let scene1 = f.service.list_tracklets("p", Some(1)).unwrap();
    assert_eq!(scene1.len(), 2);
    assert!(scene1.iter().all(|t| t.scene_id == 1));
}

#[test]
fn full_review_cycle() {
    let f = fixture();
    let s = &f.service;
    s.create_project(request(&f.paths, "p")).unwrap();
    s.run_tracking("p").unwrap();
    assert!(matches!(s.set_threshold("p", 0.5), Err(ReviewError::Conflict(_))));

    let reference = target_reference(&f, "p");
    let scored = s.set_reference("p", vec![reference.clone()]).unwrap();
    assert_eq!(scored.state, ProjectState::RefsChosen);
    assert!(matches!(s.set_reference("p", vec!["t-9-9".into()]), Err(ReviewError::NotFound(_))));

    assert!(matches!(s.set_threshold("p", 1.01), Err(ReviewError::Core(_))));
    let scored = s.set_threshold("p", 0.5).unwrap();
    assert_eq!(scored.state, ProjectState::Scored);
    assert_eq!((scored.total, scored.matches, scored.non_matches), (4, 2, 2));
    assert_eq!((scored.precision, scored.recall, scored.auc), (Some(1.0), Some(1.0), Some(1.0)));
    let matched: Vec<&str> = scored
        .decisions
        .iter()
        .filter(|d| d.decision == Decision::Match)
        .map(|d| d.track_id.as_str())
        .collect();
    assert!(matched.contains(&reference.as_str()));

    // cluster picks: the selection summary is the union of segment lengths
    let segments = load_diarization(&f.paths.diarization).unwrap();
    let view = s.pick_clusters("p", vec![0, 1]).unwrap();
    let mut picked: Vec<Interval> = segments.iter().filter(|s| s.cluster_id <= 1).map(|s| s.interval()).collect();
    picked.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut union = 0.0;
    let mut reach = f64::NEG_INFINITY;
    for i in &picked {
        let start = i.start.max(reach);
        if i.end > start {
            union += i.end - start;
        }
        reach = reach.max(i.end);
    }
    assert!((view.selected_seconds - union).abs() < 1e-9);
    assert!(view.silence_seconds >= view.selected_seconds);
    assert!(matches!(s.pick_clusters("p", vec![42]), Err(ReviewError::NotFound(_))));

    // snippets
    let wav = s.snippet("p", "s0").unwrap();
    let clip = anonymise_core::io::AudioBuffer::from_wav_bytes(&wav).unwrap();
    let expected = ((segments[0].end - segments[0].start) * 16_000.0).round() as usize;
    assert!(clip.samples.len().abs_diff(expected) <= 1);
    assert!(matches!(s.snippet("p", "s999"), Err(ReviewError::NotFound(_))));

    // approval freezes
    let approved = s.approve("p", false).unwrap();
    let plan_bytes = read(&s.project_dir("p").join("plan.json"));
    assert_eq!(approved.plan_hash, sha256_hex(&plan_bytes));
    let log = read_log(&s.project_dir("p").join("log.jsonl")).unwrap();
    let logged = log.iter().find_map(|e| match &e.action {
        Action::Approve { plan_hash, .. } => Some(plan_hash.clone()),
        _ => None,
    });
    assert_eq!(logged.as_deref(), Some(approved.plan_hash.as_str()));
    assert!(matches!(s.set_threshold("p", 0.4), Err(ReviewError::Conflict(_))));
    assert!(matches!(s.set_reference("p", vec![reference]), Err(ReviewError::Conflict(_))));
    assert!(matches!(s.pick_clusters("p", vec![0]), Err(ReviewError::Conflict(_))));
    assert!(matches!(s.run_tracking("p"), Err(ReviewError::Conflict(_))));
    assert!(matches!(s.approve("p", true), Err(ReviewError::Conflict(_))));

    // execution is idempotent
    let report = s.execute("p").unwrap();
    assert_eq!(s.project("p").unwrap().project.state, ProjectState::Redacted);
    assert!(report.video.frames_touched > 0);
    assert!(report.audio_samples_silenced > 0);
    let again = s.execute("p").unwrap();
    assert_eq!(report, again);
    let executes = read_log(&s.project_dir("p").join("log.jsonl"))
        .unwrap()
        .iter()
        .filter(|e| matches!(e.action, Action::Execute { .. }))
        .count();
    assert_eq!(executes, 1);
    assert_eq!(s.report("p").unwrap(), report);

    // media now comes from the redacted copy only
    let redacted = FrameStore::open(&report.frames_dir).unwrap();
    let original = FrameStore::open(&f.paths.frames).unwrap();
    let frame = approved.plan.video[0].frame;
    let png = s.thumbnail("p", frame, None).unwrap();
    let served = image::load_from_memory(&png).unwrap().into_rgb8();
    assert_eq!(served, redacted.read_frame(frame).unwrap());
    assert_ne!(served, original.read_frame(frame).unwrap());
    let wav = s.snippet("p", "s0").unwrap();
    let served = anonymise_core::io::AudioBuffer::from_wav_bytes(&wav).unwrap();
    let redacted_audio = read_audio(report.audio.as_ref().unwrap()).unwrap();
    assert_eq!(served, redacted_audio.clip(segments[0].start, segments[0].end));

    // replay reproduces the plan byte for byte
    let outcome = s.replay("p", Some("p-replay".into())).unwrap();
    assert!(outcome.identical);
    assert_eq!(read(&s.project_dir("p-replay").join("plan.json")), plan_bytes);
    assert_eq!(s.project("p-replay").unwrap().project.state, ProjectState::Approved);
}

#[test]
fn empty_targets_plan_needs_confirmation() {
    let f = fixture();
    let s = &f.service;
    s.create_project(request(&f.paths, "p")).unwrap();
    s.run_tracking("p").unwrap();
    let reference = target_reference(&f, "p");
    s.set_reference("p", vec![reference]).unwrap();
    let summary = s.set_threshold("p", 1.0).unwrap();
    assert_eq!(summary.matches, 0);
    assert!(matches!(s.approve("p", false), Err(ReviewError::ConfirmRequired(_))));
    assert_eq!(s.project("p").unwrap().project.state, ProjectState::Scored);
    let approved = s.approve("p", true).unwrap();
    assert!(approved.plan.video.is_empty());
}

#[test]
fn all_except_protects_the_reference() {
    let f = fixture();
    let s = &f.service;
    let mut req = request(&f.paths, "p");
    req.mode = TaskMode::AllExcept;
    s.create_project(req).unwrap();
    s.run_tracking("p").unwrap();
    s.set_reference("p", vec![target_reference(&f, "p")]).unwrap();
    let summary = s.set_threshold("p", 0.5).unwrap();
    assert_eq!((summary.protected, summary.matches), (2, 2));
}

#[test]
fn retracking_returns_to_draft() {
    let f = fixture();
    let s = &f.service;
    s.create_project(request(&f.paths, "p")).unwrap();
    s.run_tracking("p").unwrap();
    s.set_reference("p", vec![target_reference(&f, "p")]).unwrap();
    s.set_threshold("p", 0.5).unwrap();
    s.run_tracking("p").unwrap();
    let view = s.project("p").unwrap();
    assert_eq!(view.project.state, ProjectState::Draft);
    assert!(view.project.task.identity_refs.is_empty());
    assert!(matches!(s.approve("p", true), Err(ReviewError::Conflict(_))));
}

#[test]
fn sweep_removes_expired_projects() {
    let f = fixture();
    let s = &f.service;
    s.create_project(request(&f.paths, "old")).unwrap();
    assert!(s.sweep_expired(chrono::Duration::hours(1)).unwrap().is_empty());
    std::thread::sleep(std::time::Duration::from_millis(5));
    let removed = s.sweep_expired(chrono::Duration::zero()).unwrap();
    assert_eq!(removed, vec!["old".to_string()]);
    assert!(!s.project_dir("old").exists());
}
