//! Scene partitioning from shot boundaries, with a histogram-based hard-cut
//! detector for recordings that come without a boundary sidecar.
//!
//! The fallback detector only finds hard cuts. Gradual transitions (fades,
//! dissolves) need an externally computed `shots.json`.

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::FrameStore;
use crate::model::Scene;

pub const HISTOGRAM_BINS: usize = 64;
pub const DEFAULT_CUT_THRESHOLD: f64 = 0.5;

/// Splits `[0, total_frames)` at each boundary. Boundary `b` starts a new
/// scene at frame `b`.
pub fn scenes_from_boundaries(boundaries: &[u64], total_frames: u64) -> Result<Vec<Scene>> {
    if total_frames == 0 {
        return Err(Error::invalid("total_frames must be positive"));
    }
    let mut prev = 0;
    for &b in boundaries {
        if b <= prev || b >= total_frames {
            return Err(Error::invalid(format!(
                "boundary {b} must be increasing and inside (0, {total_frames})"
            )));
        }
        prev = b;
    }
    let starts = std::iter::once(0).chain(boundaries.iter().copied());
    let ends = boundaries.iter().copied().chain(std::iter::once(total_frames));
    Ok(starts
        .zip(ends)
        .enumerate()
        .map(|(scene_id, (start, end))| Scene {
            scene_id,
            start,
            end,
        })
        .collect())
}

/// Dissimilarity between frame `frame_index - 1` and `frame_index`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutScore {
    pub frame_index: u64,
    pub score: f64,
}

/// Per-channel 64-bin color histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorHistogram {
    bins: [[u32; HISTOGRAM_BINS]; 3],
    pixels: u64,
}

impl ColorHistogram {
    pub fn of(raster: &RgbImage) -> Self {
        let mut bins = [[0u32; HISTOGRAM_BINS]; 3];
        for p in raster.pixels() {
            for (c, &v) in p.0.iter().enumerate() {
                bins[c][v as usize * HISTOGRAM_BINS / 256] += 1;
            }
        }
        ColorHistogram {
            bins,
            pixels: u64::from(raster.width()) * u64::from(raster.height()),
        }
    }

    /// Mean over channels of the L1 histogram distance divided by
    /// `2 * pixel_count`; lies in `[0, 1]`.
    pub fn distance(&self, other: &ColorHistogram) -> f64 {
        debug_assert_eq!(self.pixels, other.pixels);
        if self.pixels == 0 {
            return 0.0;
        }
        let l1: u64 = self
            .bins
            .iter()
            .zip(&other.bins)
            .flat_map(|(a, b)| a.iter().zip(b))
            .map(|(&x, &y)| u64::from(x.abs_diff(y)))
            .sum();
        l1 as f64 / (3.0 * 2.0 * self.pixels as f64)
    }
}

/// Scores for every consecutive frame pair, in frame order.
pub fn cut_scores(frames: &[RgbImage]) -> Vec<CutScore> {
    let hists: Vec<ColorHistogram> = frames.par_iter().map(ColorHistogram::of).collect();
    hists
        .windows(2)
        .enumerate()
        .map(|(i, w)| CutScore {
            frame_index: i as u64 + 1,
            score: w[0].distance(&w[1]),
        })
        .collect()
}

/// Boundary indices whose cut score exceeds `threshold`.
pub fn hard_cuts(frames: &[RgbImage], threshold: f64) -> Vec<u64> {
    cut_scores(frames)
        .into_iter()
        .filter(|c| c.score > threshold)
        .map(|c| c.frame_index)
        .collect()
}

/// Hard-cut detection over a frame store. Frames are read and histogrammed in
/// parallel; only histograms are kept in memory.
pub fn detect_hard_cuts(store: &FrameStore, threshold: f64) -> Result<Vec<u64>> {
    let n = store.manifest().total_frames;
    if n < 2 {
        return Err(Error::invalid("hard-cut detection needs at least 2 frames"));
    }
    let hists = (0..n)
        .into_par_iter()
        .map(|i| store.read_frame(i).map(|f| ColorHistogram::of(&f)))
        .collect::<Result<Vec<_>>>()?;
    Ok(hists
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].distance(&w[1]) > threshold)
        .map(|(i, _)| i as u64 + 1)
        .collect())
}
