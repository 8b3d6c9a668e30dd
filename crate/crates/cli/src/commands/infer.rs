use std::path::{Path, PathBuf};

use asd_core::data::Dataset;
use asd_core::fusion::{Modality, ModalitySet};
use asd_core::train::score_clips;
use clap::Parser;

use crate::manifest::RunManifest;
use crate::CliError;

#[derive(Parser)]
pub struct Args {
    /// Checkpoint produced by `train`
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory to score
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for pred.csv
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<(), CliError> {
    run_scoring(
        "infer",
        &args.model,
        &args.data,
        &args.out,
        ModalitySet::empty(),
    )
}

/// Shared by `infer` and `ablate`.
pub fn run_scoring(
    command: &str,
    model_path: &Path,
    data: &Path,
    out: &Path,
    zero: ModalitySet,
) -> Result<(), CliError> {
    let (model, ps, meta) = super::load_model(model_path)?;
    let dataset = Dataset::open_dir(data).map_err(CliError::validation)?;
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let scored = score_clips(&dataset, &indices, &model, &ps, meta.input_size, zero)
        .map_err(CliError::runtime)?;
    std::fs::create_dir_all(out).map_err(CliError::runtime)?;
    let rows: Vec<_> = scored.iter().map(|s| (s.key.clone(), s.score)).collect();
    super::write_predictions(&out.join("pred.csv"), &rows)?;
    println!(
        "scored {} frames from {} clips -> {}",
        rows.len(),
        dataset.len(),
        out.join("pred.csv").display()
    );
    let mut manifest = RunManifest::start(command);
    manifest.input(model_path)?;
    manifest.input(data)?;
    let zeroed: Vec<&str> = Modality::ALL
        .into_iter()
        .filter(|m| zero.contains(*m))
        .map(|m| m.name())
        .collect();
    manifest
        .arg("zero", zeroed.join(","))
        .arg("input_size", meta.input_size)
        .arg("out", out.display());
    manifest.finish(out)
}
