//! `asdkit`: command suite over the active speaker detection toolkit.
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.

mod commands;
mod manifest;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "asdkit",
    about = "Audio-face-body active speaker detection toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic audio-visual dataset
    Synth(commands::synth::Args),
    /// Train a model on a dataset directory
    Train(commands::train::Args),
    /// Score a dataset with a trained model
    Infer(commands::infer::Args),
    /// Score a dataset with modalities zeroed at the fusion gate
    Ablate(commands::ablate::Args),
    /// Render SE attention heatmaps for one clip
    Heatmap(commands::heatmap::Args),
    /// Report per-clip modality importance from the fusion gate
    Importance(commands::importance::Args),
    /// Evaluate predictions against a manifest
    Eval(commands::eval::Args),
    /// Emit the caption-template bank as COCO-style JSON
    Captions(commands::captions::Args),
    /// Score candidate captions against references
    CaptionEval(commands::caption_eval::Args),
}

/// Failures carry the intended process exit code.
pub enum CliError {
    /// Bad flags, malformed inputs, contract violations: exit 1.
    Validation(String),
    /// IO, training or model failures at runtime: exit 2.
    Runtime(String),
}

impl CliError {
    fn validation(e: impl std::fmt::Display) -> Self {
        CliError::Validation(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are successful exits; anything else is usage.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Infer(args) => commands::infer::run(args),
        Command::Ablate(args) => commands::ablate::run(args),
        Command::Heatmap(args) => commands::heatmap::run(args),
        Command::Importance(args) => commands::importance::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Captions(args) => commands::captions::run(args),
        Command::CaptionEval(args) => commands::caption_eval::run(args),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
    }
}
