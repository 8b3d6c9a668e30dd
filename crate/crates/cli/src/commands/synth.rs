use std::path::PathBuf;

use asd_core::data::{generate_synthetic, Dataset, SyntheticConfig};
use clap::Parser;

use crate::manifest::RunManifest;
use crate::CliError;

#[derive(Parser)]
pub struct Args {
    /// Output dataset directory
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub clips: usize,
    /// Frames per clip
    #[arg(long, default_value_t = 25)]
    pub frames: usize,
    #[arg(long, default_value_t = 25.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 16_000)]
    pub sample_rate: u32,
    /// Square frame side in pixels
    #[arg(long, default_value_t = 64)]
    pub image_size: usize,
    #[arg(long, default_value_t = 1_000.0)]
    pub tone_hz: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise_level: f64,
    #[arg(long, default_value_t = 0.5)]
    pub speaking_prob: f64,
}

pub fn run(args: Args) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&args.speaking_prob) {
        return Err(CliError::Validation(format!(
            "--speaking-prob {} outside [0, 1]",
            args.speaking_prob
        )));
    }
    if args.frames == 0 || args.clips == 0 {
        return Err(CliError::Validation(
            "--frames and --clips must be positive".into(),
        ));
    }
    let config = SyntheticConfig {
        num_clips: args.clips,
        frames_per_clip: args.frames,
        fps: args.fps,
        sample_rate: args.sample_rate,
        image_size: args.image_size,
        tone_hz: args.tone_hz,
        noise_level: args.noise_level,
        speaking_prob: args.speaking_prob,
        seed: args.seed,
    };
    let clips = generate_synthetic(&config);
    Dataset::save_dir(&clips, &args.out).map_err(CliError::runtime)?;
    println!(
        "wrote {} clips ({} frames each) to {}",
        clips.len(),
        args.frames,
        args.out.display()
    );
    let mut manifest = RunManifest::start("synth");
    manifest
        .seed(args.seed)
        .arg("clips", args.clips)
        .arg("frames", args.frames)
        .arg("fps", args.fps)
        .arg("sample_rate", args.sample_rate)
        .arg("image_size", args.image_size)
        .arg("tone_hz", args.tone_hz)
        .arg("noise_level", args.noise_level)
        .arg("speaking_prob", args.speaking_prob)
        .arg("out", args.out.display());
    manifest.finish(&args.out)
}
