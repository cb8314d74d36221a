//! Verification of tracklets against operator-chosen reference tracklets.
//!
//! A candidate's score is an aggregate (by default the minimum) of the cosine
//! similarities between every sampled reference embedding and every sampled
//! candidate embedding. Tracks that cannot be scored are redacted in every
//! mode.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_threshold, AnonymisationTask, Embedding, TaskMode, Tracklet};

pub const DEFAULT_SAMPLE_STRIDE: usize = 5;

/// Scales `e` to unit Euclidean norm.
pub fn normalize(e: &Embedding) -> Result<Embedding> {
    if !e.is_finite() {
        return Err(Error::invalid("non-finite embedding component"));
    }
    let norm = e.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::invalid("cannot normalize a zero vector"));
    }
    Ok(Embedding {
        kind: e.kind,
        vec: e.vec.iter().map(|v| v / norm).collect(),
    })
}

/// Dot product of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine(a: &Embedding, b: &Embedding) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    let dot: f64 = a.vec.iter().zip(&b.vec).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    #[default]
    Min,
    Mean,
    Max,
}

impl Aggregator {
    fn reduce(self, values: impl Iterator<Item = f64>) -> Option<f64> {
        let mut n = 0usize;
        let mut acc = match self {
            Aggregator::Min => f64::INFINITY,
            Aggregator::Max => f64::NEG_INFINITY,
            Aggregator::Mean => 0.0,
        };
        for v in values {
            n += 1;
            acc = match self {
                Aggregator::Min => acc.min(v),
                Aggregator::Max => acc.max(v),
                Aggregator::Mean => acc + v,
            };
        }
        match (n, self) {
            (0, _) => None,
            (_, Aggregator::Mean) => Some((acc / n as f64).clamp(-1.0, 1.0)),
            _ => Some(acc),
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregator::Min => "min",
            Aggregator::Mean => "mean",
            Aggregator::Max => "max",
        })
    }
}

impl std::str::FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Aggregator::Min),
            "mean" => Ok(Aggregator::Mean),
            "max" => Ok(Aggregator::Max),
            other => Err(Error::invalid(format!("unknown aggregator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub aggregator: Aggregator,
    /// Keep every `stride`-th embedding of a track (1 keeps all).
    pub stride: usize,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            aggregator: Aggregator::Min,
            stride: DEFAULT_SAMPLE_STRIDE,
        }
    }
}

/// Every `stride`-th item, starting with the first.
pub fn sample<T>(items: &[T], stride: usize) -> impl Iterator<Item = &T> {
    items.iter().step_by(stride.max(1))
}

/// Normalized embeddings of the reference identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    pub track_ids: Vec<String>,
    pub embeddings: Vec<Embedding>,
}

impl ReferenceSet {
    pub fn new(track_ids: Vec<String>, embeddings: &[Embedding]) -> Result<Self> {
        if embeddings.is_empty() {
            return Err(Error::invalid("reference set has no embeddings"));
        }
        let embeddings = embeddings.iter().map(normalize).collect::<Result<Vec<_>>>()?;
        Ok(ReferenceSet {
            track_ids,
            embeddings,
        })
    }

    /// Collects the sampled embeddings of the reference tracklets.
    pub fn from_tracks(
        refs: &[&Tracklet],
        embeddings: &BTreeMap<String, Embedding>,
        stride: usize,
    ) -> Result<Self> {
        if refs.is_empty() {
            return Err(Error::invalid("no reference track given"));
        }
        let mut picked = Vec::new();
        for t in refs {
            let own = track_embeddings(t, embeddings);
            if own.is_empty() {
                return Err(Error::invalid(format!(
                    "reference track {} has no embeddings",
                    t.track_id
                )));
            }
            picked.extend(sample(&own, stride).map(|e| (*e).clone()));
        }
        ReferenceSet::new(refs.iter().map(|t| t.track_id.clone()).collect(), &picked)
    }
}

/// Embeddings of a tracklet's real detections, in frame order.
pub fn track_embeddings<'a>(t: &Tracklet, embeddings: &'a BTreeMap<String, Embedding>) -> Vec<&'a Embedding> {
    t.detection_ids().filter_map(|id| embeddings.get(id)).collect()
}

/// Aggregated cosine similarity between the reference set and a candidate.
///
/// Candidate embeddings are sampled with `stride` and normalized here;
/// vectors that cannot be normalized are skipped. Returns `None` when no
/// usable candidate embedding remains.
pub fn track_similarity(
    reference: &ReferenceSet,
    candidate: &[&Embedding],
    aggregator: Aggregator,
    stride: usize,
) -> Option<f64> {
    let cand: Vec<Embedding> = sample(candidate, stride)
        .filter_map(|e| match normalize(e) {
            Ok(n) => Some(n),
            Err(err) => {
                log::warn!("skipping candidate embedding: {err}");
                None
            }
        })
        .collect();
    aggregator.reduce(
        reference
            .embeddings
            .iter()
            .flat_map(|r| cand.iter().map(move |c| cosine(r, c))),
    )
}

/// Reference suggestions: longest tracklets first, ties by earliest start.
/// Returns indices into `tracklets`.
pub fn select_reference_candidates(tracklets: &[Tracklet]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..tracklets.len()).collect();
    order.sort_by_key(|&i| {
        let t = &tracklets[i];
        (std::cmp::Reverse(t.observations.len()), t.start_frame(), i)
    });
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    /// Redact.
    Match,
    NonMatch,
    /// Verified as a protected identity in `all_except` mode.
    Protected,
}

impl Decision {
    pub fn redact(self) -> bool {
        self == Decision::Match
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Match => "match",
            Decision::NonMatch => "non_match",
            Decision::Protected => "protected",
        })
    }
}

impl std::str::FromStr for Decision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "match" => Ok(Decision::Match),
            "non_match" => Ok(Decision::NonMatch),
            "protected" => Ok(Decision::Protected),
            other => Err(Error::invalid(format!("unknown decision {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackScore {
    pub track_id: String,
    /// `None` when the track had no usable embedding (deferred).
    pub score: Option<f64>,
    pub aggregator: Aggregator,
    pub decision: Decision,
}

/// Scores every tracklet against the references named in `ref_ids`.
/// Output order follows `tracklets`.
pub fn score_tracks(
    tracklets: &[Tracklet],
    embeddings: &BTreeMap<String, Embedding>,
    ref_ids: &[String],
    config: &ScoringConfig,
) -> Result<Vec<(String, Option<f64>)>> {
    let refs = ref_ids
        .iter()
        .map(|id| {
            tracklets
                .iter()
                .find(|t| &t.track_id == id)
                .ok_or_else(|| Error::invalid(format!("unknown reference track {id}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let reference = ReferenceSet::from_tracks(&refs, embeddings, config.stride)?;
    Ok(tracklets
        .par_iter()
        .map(|t| {
            let cand = track_embeddings(t, embeddings);
            let score = track_similarity(&reference, &cand, config.aggregator, config.stride);
            (t.track_id.clone(), score)
        })
        .collect())
}

/// Thresholds scores into decisions.
///
/// In `targets` mode a track matches when its score reaches the threshold.
/// In `all_except` mode the listed identities are protected and every track
/// below the threshold matches. Unscored tracks match in both modes.
pub fn classify_tracks(
    scores: &[(String, Option<f64>)],
    task: &AnonymisationTask,
    aggregator: Aggregator,
) -> Result<Vec<TrackScore>> {
    validate_threshold(task.threshold)?;
    Ok(scores
        .iter()
        .map(|(id, score)| {
            let decision = match (score, task.mode) {
                (None, _) => Decision::Match,
                (Some(s), TaskMode::Targets) if *s >= task.threshold => Decision::Match,
                (Some(_), TaskMode::Targets) => Decision::NonMatch,
                (Some(s), TaskMode::AllExcept) if *s >= task.threshold => Decision::Protected,
                (Some(_), TaskMode::AllExcept) => Decision::Match,
            };
            TrackScore {
                track_id: id.clone(),
                score: *score,
                aggregator,
                decision,
            }
        })
        .collect())
}
