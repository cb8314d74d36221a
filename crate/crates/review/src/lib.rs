//! Review projects for the anonymisation pipeline.
//!
//! A project wraps one recording and its sidecars. The operator runs
//! tracking, picks reference tracklets, tunes the threshold, picks speaker
//! clusters, approves the plan and executes it. Every step is appended to a
//! decision log; replaying that log reproduces the approved plan byte for
//! byte.
//!
//! [`ReviewService`] holds the operations; [`http::router`] exposes them as a
//! local JSON API.

mod error;
pub mod http;
pub mod project;
mod service;

pub use error::{Result, ReviewError};
pub use project::{
    Action, CreateRequest, LogEntry, ProjectInputs, ProjectSettings, ProjectState, Report, ReviewProject,
};
pub use service::*;
