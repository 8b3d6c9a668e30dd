use std::path::PathBuf;

use asd_core::fusion::{Modality, ModalitySet};
use clap::Parser;

use crate::CliError;

#[derive(Parser)]
pub struct Args {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated modalities whose gates are zeroed
    /// (audio, face, body)
    #[arg(long, value_delimiter = ',')]
    pub zero: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<(), CliError> {
    if args.zero.is_empty() {
        return Err(CliError::Validation(
            "--zero needs at least one of: audio, face, body".into(),
        ));
    }
    let mut zero = ModalitySet::empty();
    for name in &args.zero {
        match Modality::parse(name) {
            Some(m) => zero = zero.with(m),
            None => {
                return Err(CliError::Validation(format!(
                    "unknown modality '{name}' (expected audio, face or body)"
                )))
            }
        }
    }
    super::infer::run_scoring("ablate", &args.model, &args.data, &args.out, zero)
}
