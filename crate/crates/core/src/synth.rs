//! Seeded synthetic data: tracking scenes, embedding populations and a full
//! recording on disk with every sidecar. Used by tests, the acceptance suite
//! and the `synth` command.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{write_audio, write_json, AudioBuffer, FrameStore};
use crate::model::{detection_id, AudioRef, BBox, Detection, Manifest, SpeakerSegment};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Uniformly distributed direction.
pub fn uniform_sphere(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `center` plus per-component Gaussian noise, renormalized.
pub fn noisy_copy(rng: &mut impl Rng, center: &[f64], sigma: f64) -> Vec<f64> {
    let noise = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    let v: Vec<f64> = center.iter().map(|c| c + noise.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Detections of one scene together with the identity behind each one.
#[derive(Debug, Clone)]
pub struct TrackingScene {
    pub frames: u64,
    pub detections: Vec<Detection>,
    pub identity_of: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrackingSpec {
    pub identities: usize,
    pub frames: u64,
    pub dropout: f64,
    /// Longest allowed run of missed frames.
    pub max_gap: u64,
}

impl Default for TrackingSpec {
    fn default() -> Self {
        TrackingSpec {
            identities: 4,
            frames: 120,
            dropout: 0.1,
            max_gap: 10,
        }
    }
}

/// Identities move linearly, each inside its own cell of a 3x2 grid on a
/// 1280x720 canvas, so boxes of different identities never overlap. The
/// first and last frame of every identity are always detected.
pub fn tracking_scene(seed: u64, spec: &TrackingSpec) -> TrackingScene {
    assert!((1..=6).contains(&spec.identities), "1 to 6 identities");
    let mut rng = rng(seed);
    let (cell_w, cell_h, size) = (1280.0 / 3.0, 360.0, 60.0);
    let travel = spec.frames as f64;
    let tracks: Vec<(f64, f64, f64, f64)> = (0..spec.identities)
        .map(|k| {
            let (cx, cy) = ((k % 3) as f64 * cell_w, (k / 3) as f64 * cell_h);
            let vx: f64 = rng.random_range(-1.0..1.0);
            let vy: f64 = rng.random_range(-1.0..1.0);
            // start so the whole path stays inside the cell
            let x0 = cx + cell_w / 2.0 - size / 2.0 - vx * travel / 2.0;
            let y0 = cy + cell_h / 2.0 - size / 2.0 - vy * travel / 2.0;
            (x0, y0, vx, vy)
        })
        .collect();

    let mut present = vec![vec![true; spec.frames as usize]; spec.identities];
    for row in &mut present {
        let mut run = 0u64;
        for f in 1..spec.frames.saturating_sub(1) as usize {
            if run < spec.max_gap && rng.random_bool(spec.dropout) {
                row[f] = false;
                run += 1;
            } else {
                run = 0;
            }
        }
    }

    let mut detections = Vec::new();
    let mut identity_of = BTreeMap::new();
    for f in 0..spec.frames {
        let mut ids: Vec<usize> = (0..spec.identities).filter(|&k| present[k][f as usize]).collect();
        ids.shuffle(&mut rng);
        for (ordinal, k) in ids.into_iter().enumerate() {
            let (x0, y0, vx, vy) = tracks[k];
            let id = detection_id(f, ordinal);
            identity_of.insert(id.clone(), k);
            detections.push(Detection {
                id,
                frame_index: f,
                bbox: BBox::new(x0 + vx * f as f64, y0 + vy * f as f64, size, size).expect("positive size"),
                confidence: 0.9,
            });
        }
    }
    TrackingScene {
        frames: spec.frames,
        detections,
        identity_of,
    }
}

/// Knobs of [`write_recording`].
#[derive(Debug, Clone)]
pub struct RecordingSpec {
    pub seed: u64,
    pub frames: u64,
    pub width: u32,
    pub height: u32,
    pub audio_seconds: f64,
    pub sample_rate: u32,
    pub clusters: usize,
    /// Frame where the background changes.
    pub cut_at: u64,
    pub face_dim: usize,
    pub face_sigma: f64,
    pub dvec_dim: usize,
    pub dropout: f64,
}

impl Default for RecordingSpec {
    fn default() -> Self {
        RecordingSpec {
            seed: 7,
            frames: 200,
            width: 320,
            height: 240,
            audio_seconds: 30.0,
            sample_rate: 16_000,
            clusters: 3,
            cut_at: 100,
            face_dim: crate::model::FACE_EMBEDDING_DIM,
            face_sigma: 0.02,
            dvec_dim: 64,
            dropout: 0.05,
        }
    }
}

/// Where [`write_recording`] put everything.
#[derive(Debug, Clone, Serialize)]
pub struct RecordingPaths {
    pub root: PathBuf,
    pub frames: PathBuf,
    pub audio: PathBuf,
    pub shots: PathBuf,
    pub detections: PathBuf,
    pub embeddings: PathBuf,
    pub diarization: PathBuf,
    /// Detection id to "is the target face".
    pub labels: PathBuf,
}

pub const FACE_SIZE: u32 = 40;
pub const TARGET_COLOR: Rgb<u8> = Rgb([220, 40, 40]);
pub const OTHER_COLOR: Rgb<u8> = Rgb([40, 60, 220]);

fn background(scene: usize, x: u32, y: u32) -> Rgb<u8> {
    let t = ((x * 7 + y * 3) % 40) as u8;
    if scene == 0 {
        Rgb([170 + t, 170 + t, 160 + t])
    } else {
        Rgb([30 + t, 100 + t, 40 + t])
    }
}

/// Face `k` at frame `f`: target moves right along the upper band, the other
/// face moves left along the lower band.
pub fn face_box(spec: &RecordingSpec, k: usize, f: u64) -> BBox {
    let span = f64::from(spec.width - FACE_SIZE - 20);
    let p = f as f64 / spec.frames.max(1) as f64;
    let (x, y) = if k == 0 {
        (10.0 + span * p, f64::from(spec.height) * 0.2)
    } else {
        (10.0 + span * (1.0 - p), f64::from(spec.height) * 0.6)
    };
    BBox::new(x.round(), y.round(), f64::from(FACE_SIZE), f64::from(FACE_SIZE)).expect("positive size")
}

/// Writes frames, audio and sidecars of a synthetic classroom recording into
/// `root`.
pub fn write_recording(root: &Path, spec: &RecordingSpec) -> Result<RecordingPaths> {
    if spec.cut_at == 0 || spec.cut_at >= spec.frames {
        return Err(Error::invalid("cut_at must lie inside the recording"));
    }
    let paths = RecordingPaths {
        root: root.to_path_buf(),
        frames: root.join("frames"),
        audio: root.join("audio.wav"),
        shots: root.join("shots.json"),
        detections: root.join("detections.jsonl"),
        embeddings: root.join("embeddings.jsonl"),
        diarization: root.join("diarization.jsonl"),
        labels: root.join("labels.json"),
    };
    let mut rng = rng(spec.seed);
    let manifest = Manifest {
        fps: spec.frames as f64 / spec.audio_seconds,
        width: spec.width,
        height: spec.height,
        total_frames: spec.frames,
        audio: Some(AudioRef {
            path: "../audio.wav".into(),
            sample_rate: spec.sample_rate,
        }),
    };
    let store = FrameStore::create(&paths.frames, manifest)?;

    let centers = [uniform_sphere(&mut rng, spec.face_dim), uniform_sphere(&mut rng, spec.face_dim)];
    let mut det_lines = String::new();
    let mut emb_lines = String::new();
    let mut labels: BTreeMap<String, bool> = BTreeMap::new();
    let mut last_seen = [0u64; 2];
    for f in 0..spec.frames {
        let scene = usize::from(f >= spec.cut_at);
        let mut raster = RgbImage::from_fn(spec.width, spec.height, |x, y| background(scene, x, y));
        let mut ordinal = 0;
        for k in 0..2 {
            let b = face_box(spec, k, f);
            let color = if k == 0 { TARGET_COLOR } else { OTHER_COLOR };
            for y in b.y as u32..(b.y + b.h) as u32 {
                for x in b.x as u32..(b.x + b.w) as u32 {
                    raster.put_pixel(x, y, color);
                }
            }
            let edge = f == 0 || f + 1 == spec.frames || f == spec.cut_at || f + 1 == spec.cut_at;
            if !edge && f - last_seen[k] < 3 && rng.random_bool(spec.dropout) {
                continue;
            }
            last_seen[k] = f;
            let id = detection_id(f, ordinal);
            ordinal += 1;
            let det = Detection {
                id: id.clone(),
                frame_index: f,
                bbox: b,
                confidence: 0.95,
            };
            det_lines.push_str(&serde_json::to_string(&det)?);
            det_lines.push('\n');
            let vec = noisy_copy(&mut rng, &centers[k], spec.face_sigma);
            emb_lines.push_str(&serde_json::to_string(&serde_json::json!({"id": id, "vec": vec}))?);
            emb_lines.push('\n');
            labels.insert(id, k == 0);
        }
        store.write_frame(f, &raster)?;
    }
    write_text(&paths.detections, &det_lines)?;
    write_text(&paths.embeddings, &emb_lines)?;
    write_json(&paths.labels, &labels)?;
    write_json(&paths.shots, &[spec.cut_at])?;

    let segments = speaker_segments(&mut rng, spec);
    let mut dia_lines = String::new();
    for s in &segments {
        dia_lines.push_str(&serde_json::to_string(s)?);
        dia_lines.push('\n');
    }
    write_text(&paths.diarization, &dia_lines)?;
    write_audio(&speech_audio(&mut rng, spec, &segments)?, &paths.audio)?;
    Ok(paths)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Alternating speakers; every cluster speaks at least once when time allows.
fn speaker_segments(rng: &mut StdRng, spec: &RecordingSpec) -> Vec<SpeakerSegment> {
    let centers: Vec<Vec<f64>> = (0..spec.clusters).map(|_| uniform_sphere(rng, spec.dvec_dim)).collect();
    let mut out = Vec::new();
    let mut t = 0.2;
    let mut order: Vec<usize> = Vec::new();
    loop {
        let len: f64 = rng.random_range(1.0..3.0);
        if t + len > spec.audio_seconds - 0.2 {
            break;
        }
        if order.is_empty() {
            order = (0..spec.clusters).collect();
            order.shuffle(rng);
        }
        let c = order.pop().expect("refilled above");
        let start = (t * 1000.0).round() / 1000.0;
        let end = ((t + len) * 1000.0).round() / 1000.0;
        let mut s = SpeakerSegment::new(start, end, c as i64);
        s.dvec = Some(noisy_copy(rng, &centers[c], 0.05));
        out.push(s);
        t += len + rng.random_range(0.1..0.6);
    }
    out
}

/// One tone per cluster during its segments, faint noise elsewhere.
fn speech_audio(rng: &mut StdRng, spec: &RecordingSpec, segments: &[SpeakerSegment]) -> Result<AudioBuffer> {
    let rate = f64::from(spec.sample_rate);
    let n = (spec.audio_seconds * rate).round() as usize;
    let mut samples: Vec<i16> = (0..n).map(|_| rng.random_range(-40..=40)).collect();
    for s in segments {
        let freq = 180.0 + 110.0 * s.cluster_id as f64;
        let lo = (s.start * rate).ceil() as usize;
        let hi = ((s.end * rate).floor() as usize).min(n.saturating_sub(1));
        for (i, sample) in samples.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let t = i as f64 / rate;
            *sample = (8000.0 * (2.0 * PI * freq * t).sin()).round() as i16;
        }
    }
    AudioBuffer::new(samples, spec.sample_rate)
}
