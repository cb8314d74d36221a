//! From diarised speech segments to the intervals that must be silenced.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identity::{cosine, normalize};
use crate::model::{frame_time, Embedding, Interval, SpeakerSegment, Tracklet};

pub const DEFAULT_PAD_SECONDS: f64 = 0.15;
const REPRESENTATIVES: usize = 5;

/// Segment id as exposed to operators: position in the canonical list.
pub fn segment_id(index: usize) -> String {
    format!("s{index}")
}

pub fn parse_segment_id(id: &str) -> Option<usize> {
    id.strip_prefix('s')?.parse().ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRef {
    pub segment_id: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster_id: i64,
    pub total_speech_seconds: f64,
    pub segment_count: usize,
    /// Up to five longest member segments, for audition.
    pub representatives: Vec<SegmentRef>,
}

/// One summary per cluster, most speech first (ties by cluster id).
pub fn summarize_clusters(segments: &[SpeakerSegment]) -> Vec<ClusterSummary> {
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, s) in segments.iter().enumerate() {
        groups.entry(s.cluster_id).or_default().push(i);
    }
    let mut out: Vec<ClusterSummary> = groups
        .into_iter()
        .map(|(cluster_id, mut idx)| {
            let total = idx.iter().map(|&i| segments[i].duration()).sum();
            let count = idx.len();
            idx.sort_by(|&a, &b| {
                segments[b]
                    .duration()
                    .total_cmp(&segments[a].duration())
                    .then(a.cmp(&b))
            });
            ClusterSummary {
                cluster_id,
                total_speech_seconds: total,
                segment_count: count,
                representatives: idx
                    .into_iter()
                    .take(REPRESENTATIVES)
                    .map(|i| SegmentRef {
                        segment_id: segment_id(i),
                        start: segments[i].start,
                        end: segments[i].end,
                    })
                    .collect(),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.total_speech_seconds
            .total_cmp(&a.total_speech_seconds)
            .then(a.cluster_id.cmp(&b.cluster_id))
    });
    out
}

/// Operator-picked example d-vectors of the person to find.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalQuery {
    exemplars: Vec<Embedding>,
    pub top_k: usize,
}

impl RetrievalQuery {
    pub fn new(exemplars: &[Embedding], top_k: usize) -> Result<Self> {
        if exemplars.is_empty() {
            return Err(Error::invalid("retrieval needs at least one exemplar"));
        }
        Ok(RetrievalQuery {
            exemplars: exemplars.iter().map(normalize).collect::<Result<_>>()?,
            top_k,
        })
    }

    pub fn exemplars(&self) -> &[Embedding] {
        &self.exemplars
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedSegment {
    /// Index into the canonical segment list.
    pub index: usize,
    pub score: f64,
}

fn rank(mut ranked: Vec<RankedSegment>) -> Vec<RankedSegment> {
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    ranked
}

/// Ranks segments by the best cosine similarity to any exemplar.
pub fn retrieve_segments(query: &RetrievalQuery, segments: &[SpeakerSegment]) -> Result<Vec<RankedSegment>> {
    let scored: Vec<RankedSegment> = segments
        .iter()
        .enumerate()
        .filter_map(|(index, s)| {
            let d = normalize(&s.dvec_embedding()?).ok()?;
            let score = query
                .exemplars
                .iter()
                .map(|e| cosine(e, &d))
                .fold(f64::NEG_INFINITY, f64::max);
            Some(RankedSegment { index, score })
        })
        .collect();
    if scored.is_empty() {
        return Err(Error::invalid(
            "no segment carries a d-vector; pick clusters instead of retrieving by example",
        ));
    }
    let mut ranked = rank(scored);
    ranked.truncate(query.top_k);
    Ok(ranked)
}

/// Per-second visibility of the matched face(s).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FaceTimeline {
    pub visible: Vec<bool>,
}

impl FaceTimeline {
    /// Second `k` is visible when any observation of a matched tracklet has
    /// its timestamp in `[k, k+1)`.
    pub fn from_tracklets<'a>(tracklets: impl IntoIterator<Item = &'a Tracklet>, fps: f64, duration: f64) -> Self {
        let mut visible = vec![false; duration.max(0.0).ceil() as usize];
        for t in tracklets {
            for o in &t.observations {
                let k = frame_time(o.frame, fps).floor() as usize;
                if let Some(v) = visible.get_mut(k) {
                    *v = true;
                }
            }
        }
        FaceTimeline { visible }
    }

    /// Fraction of `[start, end]` covered by visible seconds.
    pub fn visible_fraction(&self, start: f64, end: f64) -> f64 {
        let len = end - start;
        if len <= 0.0 {
            return 0.0;
        }
        let covered: f64 = self
            .visible
            .iter()
            .enumerate()
            .filter(|(_, v)| **v)
            .map(|(k, _)| {
                let (a, b) = (k as f64, k as f64 + 1.0);
                (end.min(b) - start.max(a)).max(0.0)
            })
            .sum();
        covered / len
    }
}

/// Adds `boost` to segments during which the target's face is visible for
/// more than half of the time, then re-ranks.
pub fn face_presence_prior(
    ranked: &[RankedSegment],
    segments: &[SpeakerSegment],
    timeline: &FaceTimeline,
    boost: f64,
) -> Vec<RankedSegment> {
    rank(
        ranked
            .iter()
            .map(|r| {
                let s = &segments[r.index];
                let bonus = if timeline.visible_fraction(s.start, s.end) > 0.5 {
                    boost
                } else {
                    0.0
                };
                RankedSegment {
                    index: r.index,
                    score: r.score + bonus,
                }
            })
            .collect(),
    )
}

/// Single-linkage agglomerative clustering on cosine similarity.
///
/// Merging continues while the most similar pair of clusters reaches
/// `threshold`; with single linkage this equals the connected components of
/// the graph whose edges are pairs at or above the threshold. Labels are
/// numbered by first member.
pub fn cluster_fallback(dvecs: &[Embedding], threshold: f64) -> Result<Vec<usize>> {
    let unit = dvecs.iter().map(normalize).collect::<Result<Vec<_>>>()?;
    let n = unit.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if cosine(&unit[i], &unit[j]) >= threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut labels = Vec::with_capacity(n);
    let mut names: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        let next = names.len();
        labels.push(*names.entry(root).or_insert(next));
    }
    Ok(labels)
}

/// Relabels segments with [`cluster_fallback`] on their d-vectors.
pub fn recluster_segments(segments: &[SpeakerSegment], threshold: f64) -> Result<Vec<SpeakerSegment>> {
    let dvecs = segments
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.dvec_embedding()
                .ok_or_else(|| Error::invalid(format!("segment {} has no d-vector", segment_id(i))))
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = cluster_fallback(&dvecs, threshold)?;
    Ok(segments
        .iter()
        .zip(labels)
        .map(|(s, l)| SpeakerSegment {
            cluster_id: l as i64,
            ..s.clone()
        })
        .collect())
}

/// Intervals of the segments belonging to `clusters` plus the explicitly
/// listed segment indices.
pub fn select_segments(segments: &[SpeakerSegment], clusters: &[i64], extra: &[usize]) -> Vec<Interval> {
    let clusters: BTreeSet<i64> = clusters.iter().copied().collect();
    let extra: BTreeSet<usize> = extra.iter().copied().collect();
    segments
        .iter()
        .enumerate()
        .filter(|(i, s)| clusters.contains(&s.cluster_id) || extra.contains(i))
        .map(|(_, s)| s.interval())
        .collect()
}

/// Widens each selection by `pad` on both sides, clamps to
/// `[0, duration]`, and merges overlaps. Output is sorted and disjoint.
pub fn build_silence_set(selected: &[Interval], pad: f64, duration: Option<f64>) -> Result<Vec<Interval>> {
    if !(pad >= 0.0 && pad.is_finite()) {
        return Err(Error::invalid(format!("pad {pad} must be non-negative")));
    }
    let hi = duration.unwrap_or(f64::INFINITY);
    let mut widened: Vec<Interval> = selected
        .iter()
        .map(|i| Interval::new((i.start - pad).max(0.0), (i.end + pad).min(hi)))
        .filter(|i| i.end > i.start)
        .collect();
    widened.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
    let mut out: Vec<Interval> = Vec::with_capacity(widened.len());
    for i in widened {
        match out.last_mut() {
            Some(last) if i.start <= last.end => last.end = last.end.max(i.end),
            _ => out.push(i),
        }
    }
    Ok(out)
}
