pub mod ablate;
pub mod caption_eval;
pub mod captions;
pub mod eval;
pub mod heatmap;
pub mod importance;
pub mod infer;
pub mod synth;
pub mod train;

use std::path::Path;

use asd_core::checkpoint::{self, CheckpointMeta};
use asd_core::eval::FrameKey;
use asd_core::model::AsdModel;
use asd_core::nn::ParamStore;

use crate::CliError;

/// Rebuild a model from a checkpoint and load its weights.
pub fn load_model(path: &Path) -> Result<(AsdModel, ParamStore, CheckpointMeta), CliError> {
    let meta = checkpoint::read_meta(path).map_err(CliError::validation)?;
    let (model, mut ps) = AsdModel::new(&meta.model, 0).map_err(CliError::runtime)?;
    let meta = checkpoint::load_into(path, &mut ps).map_err(CliError::validation)?;
    Ok((model, ps, meta))
}

pub const PREDICTION_HEADER: &str = "video_id,entity_id,frame_timestamp,score";

pub fn write_predictions(
    path: &Path,
    rows: &[(FrameKey, f64)],
) -> Result<(), CliError> {
    let mut text = String::from(PREDICTION_HEADER);
    text.push('\n');
    for (key, score) in rows {
        text.push_str(&format!(
            "{},{},{},{}\n",
            key.video_id,
            key.entity_id,
            key.timestamp(),
            score
        ));
    }
    std::fs::write(path, text).map_err(CliError::runtime)
}

pub fn read_predictions(path: &Path) -> Result<Vec<(FrameKey, f64)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::runtime)?;
    let mut rows = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == PREDICTION_HEADER => {}
        _ => {
            return Err(CliError::Validation(format!(
                "{}: expected header '{PREDICTION_HEADER}'",
                path.display()
            )))
        }
    }
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(CliError::Validation(format!(
                "{}:{}: expected 4 fields",
                path.display(),
                idx + 1
            )));
        }
        let ts: f64 = fields[2].parse().map_err(|_| {
            CliError::Validation(format!("{}:{}: bad timestamp", path.display(), idx + 1))
        })?;
        let score: f64 = fields[3].parse().map_err(|_| {
            CliError::Validation(format!("{}:{}: bad score", path.display(), idx + 1))
        })?;
        rows.push((FrameKey::new(fields[0], fields[1], ts), score));
    }
    Ok(rows)
}
