//! Sidecar loaders and media access.
//!
//! Sidecars are line-delimited JSON (one record per line). Every record that
//! violates a type invariant is reported with its line number; nothing is
//! skipped silently.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    canonicalize_segments, frame_file_name, validate_recording_manifest, Detection, Embedding,
    Manifest, SpeakerSegment,
};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Record {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })
}

/// Pretty JSON with a trailing newline. Output is a pure function of `value`.
pub fn to_json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let bytes = to_json_bytes(value)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses every non-blank line of a JSONL file with `parse`, which receives
/// the 1-based line number.
fn read_lines<T>(path: &Path, mut parse: impl FnMut(usize, &str) -> Result<T, String>) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse(line_no, line).map_err(|msg| Error::Record {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn parse_record<T: DeserializeOwned>(line: &str) -> Result<T, String> {
    serde_json::from_str(line).map_err(|e| format!("malformed record: {e}"))
}

#[derive(Deserialize)]
struct RawDetection {
    frame: u64,
    id: String,
    bbox: [f64; 4],
    conf: f64,
}

/// Loads `detections.jsonl`. Frame indices must be below `total_frames`.
pub fn load_detections(path: &Path, total_frames: u64) -> Result<Vec<Detection>> {
    let mut seen = BTreeSet::new();
    read_lines(path, |line_no, line| {
        let raw: RawDetection = parse_record(line)?;
        let [x, y, w, h] = raw.bbox;
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(format!("non-finite bbox at line {line_no}"));
        }
        if w <= 0.0 {
            return Err(format!("non-positive width at line {line_no}"));
        }
        if h <= 0.0 {
            return Err(format!("non-positive height at line {line_no}"));
        }
        let det = Detection {
            id: raw.id,
            frame_index: raw.frame,
            bbox: crate::model::BBox { x, y, w, h },
            confidence: raw.conf,
        };
        det.validate().map_err(|e| format!("{e} at line {line_no}"))?;
        if det.frame_index >= total_frames {
            return Err(format!(
                "frame index {} out of range (total_frames {total_frames})",
                det.frame_index
            ));
        }
        if !seen.insert(det.id.clone()) {
            return Err(format!("duplicate detection id {:?}", det.id));
        }
        Ok(det)
    })
}

#[derive(Deserialize)]
struct RawEmbedding {
    id: String,
    vec: Vec<f64>,
}

/// Face embeddings keyed by detection id, as loaded (not normalized).
#[derive(Debug, Clone, Default)]
pub struct EmbeddingSet {
    pub embeddings: BTreeMap<String, Embedding>,
    /// Ids that reference no known detection. They are kept.
    pub unknown_ids: Vec<String>,
}

/// Loads `embeddings.jsonl`. When `known_ids` is given, records pointing at
/// other ids are kept but reported in [`EmbeddingSet::unknown_ids`].
pub fn load_embeddings(
    path: &Path,
    expected_dim: usize,
    known_ids: Option<&BTreeSet<String>>,
) -> Result<EmbeddingSet> {
    let records = read_lines(path, |_, line| {
        let raw: RawEmbedding = parse_record(line)?;
        if raw.vec.len() != expected_dim {
            return Err(format!(
                "dim mismatch: expected {expected_dim}, got {}",
                raw.vec.len()
            ));
        }
        if let Some(k) = raw.vec.iter().position(|v| !v.is_finite()) {
            return Err(format!("non-finite component at index {k}"));
        }
        Ok(raw)
    })?;
    let mut set = EmbeddingSet::default();
    for raw in records {
        if known_ids.is_some_and(|k| !k.contains(&raw.id)) {
            log::warn!("{}: embedding for unknown detection {}", path.display(), raw.id);
            set.unknown_ids.push(raw.id.clone());
        }
        if set
            .embeddings
            .insert(raw.id.clone(), Embedding::face(raw.vec))
            .is_some()
        {
            return Err(Error::invalid(format!(
                "{}: duplicate embedding id {:?}",
                path.display(),
                raw.id
            )));
        }
    }
    Ok(set)
}

/// Loads `diarization.jsonl` and canonicalizes it. All d-vectors must share
/// one dimension, which is taken from the file.
pub fn load_diarization(path: &Path) -> Result<Vec<SpeakerSegment>> {
    let mut dim: Option<usize> = None;
    let segments = read_lines(path, |_, line| {
        let s: SpeakerSegment = parse_record(line)?;
        if !s.start.is_finite() || !s.end.is_finite() {
            return Err("non-finite time".into());
        }
        if s.start < 0.0 || s.end < 0.0 {
            return Err(format!("negative time ({}, {})", s.start, s.end));
        }
        if s.end <= s.start {
            return Err(format!("end {} <= start {}", s.end, s.start));
        }
        if let Some(d) = &s.dvec {
            if d.iter().any(|v| !v.is_finite()) {
                return Err("non-finite d-vector component".into());
            }
            match dim {
                None => dim = Some(d.len()),
                Some(expected) if expected != d.len() => {
                    return Err(format!("d-vector dim mismatch: expected {expected}, got {}", d.len()))
                }
                _ => {}
            }
        }
        Ok(s)
    })?;
    canonicalize_segments(&segments)
}

/// Loads `shots.json`: strictly increasing boundary indices in `(0, total_frames)`.
pub fn load_shot_boundaries(path: &Path, total_frames: u64) -> Result<Vec<u64>> {
    let raw: Vec<i64> = read_json(path)?;
    validate_boundaries(&raw, total_frames).map_err(|msg| Error::Record {
        path: path.to_path_buf(),
        line: 1,
        msg,
    })
}

pub fn validate_boundaries(raw: &[i64], total_frames: u64) -> Result<Vec<u64>, String> {
    let mut prev = 0i64;
    let mut out = Vec::with_capacity(raw.len());
    for (k, &b) in raw.iter().enumerate() {
        if b <= 0 || b as u64 >= total_frames {
            return Err(format!(
                "boundary {b} at position {k} outside (0, {total_frames})"
            ));
        }
        if b <= prev {
            return Err(format!("boundary {b} at position {k} is not increasing"));
        }
        prev = b;
        out.push(b as u64);
    }
    Ok(out)
}

/// Mono 16-bit PCM samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioBuffer {
    pub samples: Vec<i16>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<i16>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::AudioFormat("sample rate must be positive".into()));
        }
        Ok(AudioBuffer {
            samples,
            sample_rate,
        })
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Samples in `[start, end)` seconds, clamped to the buffer.
    pub fn clip(&self, start: f64, end: f64) -> AudioBuffer {
        let rate = self.sample_rate as f64;
        let n = self.samples.len();
        let lo = ((start.max(0.0) * rate).round() as usize).min(n);
        let hi = ((end.max(0.0) * rate).round() as usize).clamp(lo, n);
        AudioBuffer {
            samples: self.samples[lo..hi].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn to_wav_bytes(&self) -> Result<Vec<u8>> {
        let mut cursor = Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(&mut cursor, wav_spec(self.sample_rate))
                .map_err(|e| Error::AudioFormat(e.to_string()))?;
            let mut w16 = w.get_i16_writer(self.samples.len() as u32);
            for &s in &self.samples {
                w16.write_sample(s);
            }
            w16.flush().map_err(|e| Error::AudioFormat(e.to_string()))?;
            w.finalize().map_err(|e| Error::AudioFormat(e.to_string()))?;
        }
        Ok(cursor.into_inner())
    }

    pub fn from_wav_bytes(bytes: &[u8]) -> Result<Self> {
        let reader =
            hound::WavReader::new(Cursor::new(bytes)).map_err(|e| Error::AudioFormat(e.to_string()))?;
        decode_wav(reader)
    }
}

fn wav_spec(sample_rate: u32) -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

fn decode_wav<R: std::io::Read>(reader: hound::WavReader<R>) -> Result<AudioBuffer> {
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::NotMono(spec.channels));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::AudioFormat(format!(
            "{:?} {}-bit samples, expected 16-bit PCM",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Error::AudioFormat(e.to_string()))?;
    AudioBuffer::new(samples, spec.sample_rate)
}

pub fn read_audio(path: &Path) -> Result<AudioBuffer> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::AudioFormat(format!("{}: {other}", path.display())),
    })?;
    decode_wav(reader)
}

pub fn write_audio(buffer: &AudioBuffer, path: &Path) -> Result<()> {
    let bytes = buffer.to_wav_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// The manifest's audio file. Relative paths are resolved against the
/// directory holding the manifest. Existing files come back canonical.
pub fn resolve_audio_path(manifest_dir: &Path, manifest: &Manifest) -> Option<PathBuf> {
    manifest.audio.as_ref().map(|a| {
        let p = Path::new(&a.path);
        let joined = if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_dir.join(p)
        };
        joined.canonicalize().unwrap_or(joined)
    })
}

/// Directory of `frame_%06d.png` files plus `manifest.json`.
#[derive(Debug, Clone)]
pub struct FrameStore {
    root: PathBuf,
    manifest: Manifest,
}

impl FrameStore {
    /// Opens an existing store and checks that every frame file is present.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let manifest: Manifest = read_json(&root.join(MANIFEST_FILE))?;
        let manifest = validate_recording_manifest(manifest, Some(&root))?;
        Ok(FrameStore { root, manifest })
    }

    /// Creates an empty store (manifest only); frames are written afterwards.
    pub fn create(root: impl Into<PathBuf>, manifest: Manifest) -> Result<Self> {
        let root = root.into();
        let manifest = validate_recording_manifest(manifest, None)?;
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        write_json(&root.join(MANIFEST_FILE), &manifest)?;
        Ok(FrameStore { root, manifest })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn frame_path(&self, frame_index: u64) -> PathBuf {
        self.root.join(frame_file_name(frame_index))
    }

    fn check_index(&self, frame_index: u64) -> Result<()> {
        if frame_index >= self.manifest.total_frames {
            return Err(Error::invalid(format!(
                "frame index {frame_index} out of range (total_frames {})",
                self.manifest.total_frames
            )));
        }
        Ok(())
    }

    fn check_dims(&self, raster: &RgbImage) -> Result<()> {
        let (w, h) = raster.dimensions();
        if (w, h) != (self.manifest.width, self.manifest.height) {
            return Err(Error::invalid(format!(
                "frame is {w}x{h}, manifest declares {}x{}",
                self.manifest.width, self.manifest.height
            )));
        }
        Ok(())
    }

    pub fn read_frame(&self, frame_index: u64) -> Result<RgbImage> {
        self.check_index(frame_index)?;
        let path = self.frame_path(frame_index);
        if !path.is_file() {
            return Err(Error::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "missing frame file"),
            ));
        }
        let raster = image::open(&path)?.into_rgb8();
        self.check_dims(&raster)?;
        Ok(raster)
    }

    pub fn write_frame(&self, frame_index: u64, raster: &RgbImage) -> Result<()> {
        self.check_index(frame_index)?;
        self.check_dims(raster)?;
        raster
            .save_with_format(self.frame_path(frame_index), image::ImageFormat::Png)
            .map_err(Error::from)
    }

    /// Byte-for-byte copy of a frame file from another store.
    pub fn copy_frame_from(&self, src: &FrameStore, frame_index: u64) -> Result<()> {
        self.check_index(frame_index)?;
        let from = src.frame_path(frame_index);
        let to = self.frame_path(frame_index);
        fs::copy(&from, &to).map_err(|e| Error::io(&from, e))?;
        Ok(())
    }
}
