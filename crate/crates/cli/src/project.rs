//! Review projects from the command line, and the HTTP server.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anonymise_core::model::TaskMode;
use anonymise_review::project::read_log;
use anonymise_review::{CreateRequest, ProjectInputs, ProjectSettings, ReviewService};
use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use serde::Serialize;

const DEFAULT_ROOT: &str = "projects";

#[derive(Args)]
pub struct ProjectArgs {
    /// Directory holding all projects.
    #[arg(long, env = "ANONYMISE_PROJECTS", default_value = DEFAULT_ROOT)]
    root: PathBuf,
    #[command(subcommand)]
    command: ProjectCommand,
}

#[derive(Subcommand)]
enum ProjectCommand {
    Create {
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        diarization: Option<PathBuf>,
        #[arg(long)]
        shots: Option<PathBuf>,
        /// Per-detection ground truth for live metrics.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value = "targets")]
        mode: TaskMode,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// JSON file with project settings.
        #[arg(long)]
        settings: Option<PathBuf>,
    },
    List,
    Show {
        id: String,
    },
    Log {
        id: String,
    },
    Track {
        id: String,
    },
    Tracklets {
        id: String,
        #[arg(long)]
        scene: Option<usize>,
    },
    Reference {
        id: String,
        #[arg(required = true)]
        track_ids: Vec<String>,
    },
    Threshold {
        id: String,
        #[arg(allow_negative_numbers = true)]
        threshold: f64,
    },
    Scores {
        id: String,
    },
    Clusters {
        id: String,
    },
    Pick {
        id: String,
        cluster_ids: Vec<i64>,
    },
    Approve {
        id: String,
        /// Accept a plan that redacts no face.
        #[arg(long)]
        confirm: bool,
    },
    Execute {
        id: String,
    },
    /// Rebuild a project from a decision log and compare plan hashes.
    Replay {
        /// Source project id.
        #[arg(required_unless_present = "log")]
        id: Option<String>,
        /// A log.jsonl file instead of a project.
        #[arg(long, conflicts_with = "id")]
        log: Option<PathBuf>,
        #[arg(long)]
        new_id: Option<String>,
    },
    Export {
        id: String,
        #[arg(value_parser = ["via", "eaf"])]
        format: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Delete projects older than the given age.
    Sweep {
        #[arg(long)]
        max_age_hours: i64,
    },
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn run(a: ProjectArgs) -> Result<()> {
    let s = ReviewService::new(&a.root)?;
    match a.command {
        ProjectCommand::Create {
            id,
            frames,
            detections,
            embeddings,
            diarization,
            shots,
            labels,
            mode,
            threshold,
            settings,
        } => {
            let settings: ProjectSettings = match settings {
                Some(p) => anonymise_core::io::read_json(&p)?,
                None => ProjectSettings::default(),
            };
            let request = CreateRequest {
                project_id: id,
                inputs: ProjectInputs {
                    frames_dir: std::path::absolute(frames)?,
                    detections: std::path::absolute(detections)?,
                    embeddings: embeddings.map(std::path::absolute).transpose()?,
                    diarization: diarization.map(std::path::absolute).transpose()?,
                    shots: shots.map(std::path::absolute).transpose()?,
                    labels: labels.map(std::path::absolute).transpose()?,
                },
                mode,
                threshold,
                settings,
            };
            print(&s.create_project(request)?)
        }
        ProjectCommand::List => print(&s.list_projects()?),
        ProjectCommand::Show { id } => print(&s.project(&id)?),
        ProjectCommand::Log { id } => print(&s.decision_log(&id)?),
        ProjectCommand::Track { id } => print(&s.run_tracking(&id)?),
        ProjectCommand::Tracklets { id, scene } => print(&s.list_tracklets(&id, scene)?),
        ProjectCommand::Reference { id, track_ids } => print(&s.set_reference(&id, track_ids)?),
        ProjectCommand::Threshold { id, threshold } => print(&s.set_threshold(&id, threshold)?),
        ProjectCommand::Scores { id } => print(&s.scores(&id)?),
        ProjectCommand::Clusters { id } => print(&s.clusters(&id)?),
        ProjectCommand::Pick { id, cluster_ids } => print(&s.pick_clusters(&id, cluster_ids)?),
        ProjectCommand::Approve { id, confirm } => print(&s.approve(&id, confirm)?),
        ProjectCommand::Execute { id } => print(&s.execute(&id)?),
        ProjectCommand::Replay { id, log, new_id } => {
            let outcome = match (id, log) {
                (Some(id), _) => s.replay(&id, new_id)?,
                (None, Some(path)) => s.replay_entries(&read_log(&path)?, new_id)?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            print(&outcome)?;
            anyhow::ensure!(outcome.identical, "replayed plan differs from the original");
            Ok(())
        }
        ProjectCommand::Export { id, format, out } => {
            let text = match format.as_str() {
                "via" => s.export_via(&id)?,
                _ => s.export_eaf(&id)?,
            };
            match out {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display())),
                None => {
                    println!("{text}");
                    Ok(())
                }
            }
        }
        ProjectCommand::Sweep { max_age_hours } => print(&s.sweep_expired(chrono::Duration::hours(max_age_hours))?),
    }
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long, env = "ANONYMISE_PROJECTS", default_value = DEFAULT_ROOT)]
    root: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
}

pub fn serve(a: ServeArgs) -> Result<()> {
    let service = Arc::new(ReviewService::new(&a.root)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(anonymise_review::http::serve(service, a.addr))?;
    Ok(())
}
