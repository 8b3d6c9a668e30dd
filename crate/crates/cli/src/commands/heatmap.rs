use std::path::PathBuf;

use asd_core::data::{crop_and_resize, to_rgb8, ClipSample};
use asd_core::fusion::ModalitySet;
use asd_core::interpret::{render_heatmap, select_channels, DEFAULT_FRACTION};
use asd_core::train::clip_tensors;
use clap::Parser;
use ndarray::Axis;

use crate::manifest::RunManifest;
use crate::CliError;

pub const HEATMAP_SIZE: usize = 112;

#[derive(Parser)]
pub struct Args {
    #[arg(long)]
    pub model: PathBuf,
    /// One clip directory (frames/, audio.wav, manifest.csv)
    #[arg(long)]
    pub clip: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Top fraction of SE channels to aggregate
    #[arg(long, default_value_t = DEFAULT_FRACTION)]
    pub fraction: f64,
    /// Weight selected channels by their gate values
    #[arg(long, default_value_t = false)]
    pub gate_weighted: bool,
}

pub fn run(args: Args) -> Result<(), CliError> {
    if !(args.fraction > 0.0 && args.fraction < 1.0) {
        return Err(CliError::Validation(format!(
            "--fraction {} outside (0, 1)",
            args.fraction
        )));
    }
    let (model, ps, meta) = super::load_model(&args.model)?;
    let clip = ClipSample::load_dir(&args.clip).map_err(CliError::validation)?;
    let tensors = clip_tensors(&clip, meta.input_size, false).map_err(CliError::runtime)?;
    let out = model
        .forward_eval(&ps, &tensors, ModalitySet::empty(), true)
        .map_err(CliError::runtime)?;
    let captures = out.captures.expect("capture requested");

    std::fs::create_dir_all(&args.out).map_err(CliError::runtime)?;
    let mut gates_csv = String::from("stream,frame,channel,gate,selected\n");
    for (stream, backbone) in [("face", &captures.face), ("body", &captures.body)] {
        for t in 0..clip.len() {
            let gate_row = backbone.se_gates.row(t).to_owned();
            let selection = select_channels(&gate_row.view(), args.fraction)
                .map_err(CliError::runtime)?;
            let boxes = if stream == "face" {
                &clip.face_boxes
            } else {
                &clip.body_boxes
            };
            let base = crop_and_resize(&clip.frames[t].view(), &boxes[t], HEATMAP_SIZE)
                .map_err(CliError::runtime)?;
            let maps = backbone.pre_pool_maps.index_axis(Axis(0), t);
            let weights = args.gate_weighted.then(|| gate_row.view());
            let overlay = render_heatmap(&maps, &selection, &base.view(), weights.as_ref())
                .map_err(CliError::runtime)?;
            let path = args.out.join(format!("{stream}_{t:05}.png"));
            to_rgb8(&overlay.composite.view())
                .save(&path)
                .map_err(CliError::runtime)?;
            for (c, g) in gate_row.iter().enumerate() {
                gates_csv.push_str(&format!(
                    "{stream},{t},{c},{g},{}\n",
                    usize::from(selection.selected.contains(&c))
                ));
            }
        }
    }
    std::fs::write(args.out.join("gates.csv"), gates_csv).map_err(CliError::runtime)?;
    println!(
        "wrote {} face and body heatmaps (+ gates.csv) to {}",
        2 * clip.len(),
        args.out.display()
    );

    let mut manifest = RunManifest::start("heatmap");
    manifest.input(&args.model)?;
    manifest.input(&args.clip)?;
    manifest
        .arg("fraction", args.fraction)
        .arg("gate_weighted", args.gate_weighted)
        .arg("out", args.out.display());
    manifest.finish(&args.out)
}
