//! Sample types, manifest parsing, image/audio IO and the synthetic
//! scenario generator.

mod bbox;
mod clip;
mod imageops;
mod manifest;
mod synth;
mod wav;

pub use bbox::BoundingBox;
pub use clip::{ClipSample, ClipSource, Dataset};
pub use imageops::{
    crop_and_resize, flip_horizontal, from_rgb8, mask_face_region, rotate, to_rgb8, Image,
};
pub use manifest::{parse_manifest, serialize_manifest, ManifestRecord, SpeakingLabel};
pub use synth::{frame_rms, generate_synthetic, generate_synthetic_clip, SyntheticConfig};
pub use wav::{read_wav, write_wav};

use thiserror::Error;

/// Errors from sample construction, manifest parsing and dataset IO.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid bounding box ({x1}, {y1}, {x2}, {y2}): {reason}")]
    InvalidBox {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        reason: &'static str,
    },
    #[error("manifest line {line}: {reason}")]
    ManifestParse { line: usize, reason: String },
    #[error("box degenerates to zero pixel area in a {width}x{height} frame")]
    DegenerateCrop { width: usize, height: usize },
    #[error("clip invariant violated: {0}")]
    ClipInvariant(String),
    #[error("wav: {0}")]
    Wav(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("image error on {path}: {message}")]
    Image { path: String, message: String },
}

pub(crate) fn io_err(path: &std::path::Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}
