//! Anonymisation of selected participants in audio-visual classroom recordings.
//!
//! The pipeline consumes externally computed sidecars (shot boundaries, face
//! detections, face embeddings, speaker diarisation) and turns them into an
//! auditable [`redact::RedactionPlan`]:
//!
//! 1. [`scenes`] splits the frame range at shot boundaries.
//! 2. [`tracking`] links detections of consecutive frames into tracklets with
//!    negated-IoU costs and an optimal bipartite assignment.
//! 3. [`identity`] scores each tracklet against operator-chosen reference
//!    tracklets by cosine similarity of face embeddings and thresholds it.
//! 4. [`speakers`] turns diarised segments into the intervals to silence.
//! 5. [`redact`] compiles the decisions into a plan and executes it on frames
//!    and audio.
//!
//! [`metrics`] and [`export`] support evaluation and manual inspection;
//! [`synth`] generates seeded test recordings.

pub mod error;
pub mod export;
pub mod identity;
pub mod io;
pub mod metrics;
pub mod model;
pub mod redact;
pub mod scenes;
pub mod speakers;
pub mod synth;
pub mod tracking;

pub use error::{Error, Result};
