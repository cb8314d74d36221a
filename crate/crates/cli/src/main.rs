//! `anonymise`: run the pipeline stage by stage, drive review projects, or
//! serve the review API.

mod pipeline;
mod project;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "anonymise", version, about = "Anonymise faces and voices in classroom recordings")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a recording and its sidecar files.
    Validate(pipeline::ValidateArgs),
    /// Split the recording into scenes.
    Segment(pipeline::SegmentArgs),
    /// Link detections into tracklets.
    Track(pipeline::TrackArgs),
    /// Score tracklets against reference tracks.
    Identify(pipeline::IdentifyArgs),
    /// Speaker cluster tools.
    #[command(subcommand)]
    Speakers(pipeline::SpeakersCommand),
    /// Compile a redaction plan outside the review workflow.
    Plan(pipeline::PlanArgs),
    /// Execute a redaction plan.
    Redact(pipeline::RedactArgs),
    /// Precision, recall and ROC of verification scores.
    Eval(pipeline::EvalArgs),
    /// Export to annotation tool formats.
    #[command(subcommand)]
    Export(pipeline::ExportCommand),
    /// Review projects on disk.
    Project(project::ProjectArgs),
    /// Serve the review API.
    Serve(project::ServeArgs),
    /// Write a synthetic recording with sidecars.
    Synth(pipeline::SynthArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Validate(a) => pipeline::validate(a),
        Command::Segment(a) => pipeline::segment(a),
        Command::Track(a) => pipeline::track(a),
        Command::Identify(a) => pipeline::identify(a),
        Command::Speakers(c) => pipeline::speakers(c),
        Command::Plan(a) => pipeline::plan(a),
        Command::Redact(a) => pipeline::redact(a),
        Command::Eval(a) => pipeline::eval(a),
        Command::Export(c) => pipeline::export(c),
        Command::Project(a) => project::run(a),
        Command::Serve(a) => project::serve(a),
        Command::Synth(a) => pipeline::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
