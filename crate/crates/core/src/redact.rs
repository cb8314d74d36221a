//! Redaction plans and their execution.
//!
//! A [`RedactionPlan`] is compiled once from approved decisions and executed
//! verbatim; execution never re-derives decisions. Masked pixels are either
//! zeroed (blackout) or replaced by a coarse mosaic. Silenced samples are
//! zeroed. Everything outside the plan is copied bit-for-bit.

use std::collections::BTreeMap;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{AudioBuffer, FrameStore};
use crate::model::{BBox, Interval, Manifest, TaskMode, Tracklet};

/// Smallest mosaic cell side in pixels.
pub const MIN_CELL: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStyle {
    #[default]
    Blur,
    Blackout,
}

impl std::str::FromStr for MaskStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blur" => Ok(MaskStyle::Blur),
            "blackout" => Ok(MaskStyle::Blackout),
            other => Err(Error::invalid(format!("unknown mask style {other:?}"))),
        }
    }
}

/// Box growth as fractions of the box size, to cover hair and head outline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginConfig {
    pub top: f64,
    pub sides: f64,
    pub bottom: f64,
}

impl Default for MarginConfig {
    fn default() -> Self {
        MarginConfig {
            top: 0.5,
            sides: 0.2,
            bottom: 0.1,
        }
    }
}

impl MarginConfig {
    pub const ZERO: MarginConfig = MarginConfig {
        top: 0.0,
        sides: 0.0,
        bottom: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if [self.top, self.sides, self.bottom]
            .iter()
            .any(|m| !(m.is_finite() && *m >= 0.0))
        {
            return Err(Error::invalid("margins must be non-negative"));
        }
        Ok(())
    }
}

pub fn expand_box(b: &BBox, m: &MarginConfig) -> BBox {
    BBox {
        x: b.x - m.sides * b.w,
        y: b.y - m.top * b.h,
        w: b.w * (1.0 + 2.0 * m.sides),
        h: b.h * (1.0 + m.top + m.bottom),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoOp {
    pub frame: u64,
    pub bbox: BBox,
    pub style: MaskStyle,
}

/// Where a plan came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub mode: Option<TaskMode>,
    pub threshold: Option<f64>,
    pub reference_ids: Vec<String>,
    /// Tracklets whose observations are masked.
    pub track_ids: Vec<String>,
    pub cluster_ids: Vec<i64>,
    pub margins: Option<MarginConfig>,
    pub temporal_pad_frames: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RedactionPlan {
    pub video: Vec<VideoOp>,
    pub audio: Vec<Interval>,
    pub provenance: Provenance,
}

impl RedactionPlan {
    pub fn is_empty(&self) -> bool {
        self.video.is_empty() && self.audio.is_empty()
    }

    pub fn validate(&self, manifest: &Manifest) -> Result<()> {
        for op in &self.video {
            if op.frame >= manifest.total_frames {
                return Err(Error::invalid(format!(
                    "plan references frame {} beyond {}",
                    op.frame, manifest.total_frames
                )));
            }
            op.bbox.validate()?;
        }
        for w in self.audio.windows(2) {
            if w[1].start <= w[0].end {
                return Err(Error::invalid("plan audio intervals must be sorted and disjoint"));
            }
        }
        if self.audio.iter().any(|i| i.start.is_nan() || i.end.is_nan() || i.start >= i.end || i.start < 0.0) {
            return Err(Error::invalid("plan audio interval is empty or negative"));
        }
        Ok(())
    }

    /// Number of distinct frames with at least one op.
    pub fn frames_touched(&self) -> usize {
        let mut frames: Vec<u64> = self.video.iter().map(|o| o.frame).collect();
        frames.dedup();
        frames.sort_unstable();
        frames.dedup();
        frames.len()
    }
}

/// Compiles masked tracklets and a silence set into a plan.
///
/// Every observation (coasted ones included) yields one op with the expanded
/// box. Each tracklet is additionally widened by `temporal_pad_frames` on
/// both ends, reusing the box of the nearest real observation and clamped to
/// the recording. Ops are ordered by frame, then by tracklet order.
pub fn compile_plan(
    masked: &[&Tracklet],
    margins: &MarginConfig,
    style: MaskStyle,
    silence: &[Interval],
    temporal_pad_frames: u64,
    total_frames: u64,
    mut provenance: Provenance,
) -> Result<RedactionPlan> {
    margins.validate()?;
    let mut ops: Vec<(u64, usize, VideoOp)> = Vec::new();
    for (ti, t) in masked.iter().enumerate() {
        if let Some(o) = t.observations.iter().find(|o| o.frame >= total_frames) {
            return Err(Error::invalid(format!(
                "tracklet {} references frame {} beyond {total_frames}",
                t.track_id, o.frame
            )));
        }
        let (Some(first), Some(last)) = (t.observations.first(), t.observations.last()) else {
            continue;
        };
        let first_real = t.observations.iter().find(|o| !o.interpolated).unwrap_or(first);
        let last_real = t.observations.iter().rev().find(|o| !o.interpolated).unwrap_or(last);
        let mut push = |frame: u64, bbox: &BBox| {
            ops.push((
                frame,
                ti,
                VideoOp {
                    frame,
                    bbox: expand_box(bbox, margins),
                    style,
                },
            ))
        };
        for f in first.frame.saturating_sub(temporal_pad_frames)..first.frame {
            push(f, &first_real.bbox);
        }
        for o in &t.observations {
            push(o.frame, &o.bbox);
        }
        let after_end = last.frame.saturating_add(temporal_pad_frames).min(total_frames - 1);
        for f in last.frame + 1..=after_end {
            push(f, &last_real.bbox);
        }
    }
    ops.sort_by_key(|(frame, ti, _)| (*frame, *ti));

    provenance.track_ids = masked.iter().map(|t| t.track_id.clone()).collect();
    provenance.margins = Some(*margins);
    provenance.temporal_pad_frames = temporal_pad_frames;
    let plan = RedactionPlan {
        video: ops.into_iter().map(|(_, _, op)| op).collect(),
        audio: silence.to_vec(),
        provenance,
    };
    for w in plan.audio.windows(2) {
        if w[1].start <= w[0].end {
            return Err(Error::invalid("silence set must be sorted and disjoint"));
        }
    }
    Ok(plan)
}

/// Pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    fn intersects(&self, o: &PixelRect) -> bool {
        self.x0 < o.x1 && o.x0 < self.x1 && self.y0 < o.y1 && o.y0 < self.y1
    }

    fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// Every pixel the box touches, clamped to the frame. `None` when the box
/// lies entirely outside.
pub fn rasterize(b: &BBox, width: u32, height: u32) -> Option<PixelRect> {
    let x0 = b.x.floor().max(0.0);
    let y0 = b.y.floor().max(0.0);
    let x1 = b.right().ceil().min(f64::from(width));
    let y1 = b.bottom().ceil().min(f64::from(height));
    (x1 > x0 && y1 > y0).then_some(PixelRect {
        x0: x0 as u32,
        y0: y0 as u32,
        x1: x1 as u32,
        y1: y1 as u32,
    })
}

/// Mosaic cell side for a box: one tenth of its larger side, at least
/// [`MIN_CELL`].
pub fn cell_size(b: &BBox) -> u32 {
    let side = (b.w.max(b.h) / 10.0).ceil();
    (side as u32).max(MIN_CELL)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameOutcome {
    pub pixels_masked: u64,
    pub skipped_ops: usize,
}

/// Applies `ops` to one frame in place.
///
/// Overlapping blur regions are mosaicked together on one grid (anchored at
/// their common top-left, with the largest member cell size), and blackout
/// regions are excluded from the mosaic before being zeroed. This keeps the
/// operation idempotent for any op layout.
pub fn apply_ops_to_frame(raster: &mut RgbImage, ops: &[&VideoOp]) -> FrameOutcome {
    let (w, h) = raster.dimensions();
    let mut outcome = FrameOutcome::default();
    let mut black: Vec<PixelRect> = Vec::new();
    let mut blur: Vec<(PixelRect, u32)> = Vec::new();
    for op in ops {
        match (rasterize(&op.bbox, w, h), op.style) {
            (None, _) => {
                log::warn!("frame {}: region {:?} is outside the frame", op.frame, op.bbox);
                outcome.skipped_ops += 1;
            }
            (Some(r), MaskStyle::Blackout) => black.push(r),
            (Some(r), MaskStyle::Blur) => blur.push((r, cell_size(&op.bbox))),
        }
    }
    let in_black = |x: u32, y: u32| black.iter().any(|r| r.contains(x, y));

    let mut masked = vec![false; (w as usize) * (h as usize)];
    for group in overlap_groups(&blur) {
        let rects: Vec<PixelRect> = group.iter().map(|&i| blur[i].0).collect();
        let cell = group.iter().map(|&i| blur[i].1).max().expect("non-empty group");
        let bx0 = rects.iter().map(|r| r.x0).min().expect("non-empty");
        let by0 = rects.iter().map(|r| r.y0).min().expect("non-empty");
        let bx1 = rects.iter().map(|r| r.x1).max().expect("non-empty");
        let by1 = rects.iter().map(|r| r.y1).max().expect("non-empty");
        let member = |x: u32, y: u32| rects.iter().any(|r| r.contains(x, y)) && !in_black(x, y);
        for cy in (by0..by1).step_by(cell as usize) {
            for cx in (bx0..bx1).step_by(cell as usize) {
                let ys = cy..(cy + cell).min(by1);
                let xs = cx..(cx + cell).min(bx1);
                let mut sum = [0u64; 3];
                let mut n = 0u64;
                for y in ys.clone() {
                    for x in xs.clone() {
                        if member(x, y) {
                            let p = raster.get_pixel(x, y).0;
                            for c in 0..3 {
                                sum[c] += u64::from(p[c]);
                            }
                            n += 1;
                        }
                    }
                }
                if n == 0 {
                    continue;
                }
                let mean = image::Rgb(sum.map(|s| ((s + n / 2) / n) as u8));
                for y in ys.clone() {
                    for x in xs.clone() {
                        if member(x, y) {
                            raster.put_pixel(x, y, mean);
                            masked[(y as usize) * (w as usize) + x as usize] = true;
                        }
                    }
                }
            }
        }
    }
    for r in &black {
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                raster.put_pixel(x, y, image::Rgb([0, 0, 0]));
                masked[(y as usize) * (w as usize) + x as usize] = true;
            }
        }
    }
    outcome.pixels_masked = masked.iter().filter(|m| **m).count() as u64;
    outcome
}

/// Connected components of the rectangle-overlap graph, in index order.
fn overlap_groups(rects: &[(PixelRect, u32)]) -> Vec<Vec<usize>> {
    let n = rects.len();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut groups = Vec::new();
    for start in 0..n {
        if label[start].is_some() {
            continue;
        }
        let g = groups.len();
        let mut stack = vec![start];
        let mut members = Vec::new();
        label[start] = Some(g);
        while let Some(i) = stack.pop() {
            members.push(i);
            for j in 0..n {
                if label[j].is_none() && rects[i].0.intersects(&rects[j].0) {
                    label[j] = Some(g);
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }
    groups
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoReport {
    pub frames_touched: u64,
    pub frames_copied: u64,
    pub pixels_masked: u64,
    pub skipped_ops: u64,
}

/// Runs the video part of `plan` from `input` into `output`. Frames are
/// processed in parallel; ops of one frame apply in plan order. Frames without
/// ops are copied byte-for-byte.
pub fn apply_video(plan: &RedactionPlan, input: &FrameStore, output: &FrameStore) -> Result<VideoReport> {
    plan.validate(input.manifest())?;
    let mut by_frame: BTreeMap<u64, Vec<&VideoOp>> = BTreeMap::new();
    for op in &plan.video {
        by_frame.entry(op.frame).or_default().push(op);
    }
    let total = input.manifest().total_frames;
    let outcomes = (0..total)
        .into_par_iter()
        .map(|i| match by_frame.get(&i) {
            None => output.copy_frame_from(input, i).map(|_| None),
            Some(ops) => {
                let mut raster = input.read_frame(i)?;
                let o = apply_ops_to_frame(&mut raster, ops);
                output.write_frame(i, &raster)?;
                Ok(Some(o))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = VideoReport::default();
    for o in outcomes {
        match o {
            None => report.frames_copied += 1,
            Some(o) => {
                if o.pixels_masked > 0 {
                    report.frames_touched += 1;
                } else {
                    report.frames_copied += 1;
                }
                report.pixels_masked += o.pixels_masked;
                report.skipped_ops += o.skipped_ops as u64;
            }
        }
    }
    Ok(report)
}

/// Zeroes every sample whose time `i / sample_rate` lies in one of
/// `intervals` (endpoints included). Returns the output and the number of
/// samples zeroed.
pub fn apply_audio(intervals: &[Interval], audio: &AudioBuffer) -> (AudioBuffer, u64) {
    let rate = f64::from(audio.sample_rate);
    let n = audio.samples.len();
    let mut out = audio.clone();
    let mut silenced = 0u64;
    let mut zeroed = vec![false; n];
    let t = |i: usize| i as f64 / rate;
    for iv in intervals {
        if iv.start.is_nan() || iv.end.is_nan() || iv.end < iv.start || n == 0 {
            continue;
        }
        let mut lo = ((iv.start * rate).floor().max(0.0) as usize).min(n);
        while lo > 0 && iv.contains(t(lo - 1)) {
            lo -= 1;
        }
        while lo < n && t(lo) < iv.start {
            lo += 1;
        }
        let mut hi = ((iv.end * rate).ceil().max(0.0) as usize).min(n);
        while hi > lo && t(hi - 1) > iv.end {
            hi -= 1;
        }
        while hi < n && iv.contains(t(hi)) {
            hi += 1;
        }
        for i in lo..hi {
            if !zeroed[i] {
                zeroed[i] = true;
                silenced += 1;
            }
            out.samples[i] = 0;
        }
    }
    (out, silenced)
}
