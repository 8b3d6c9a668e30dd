use std::collections::BTreeMap;
use std::path::PathBuf;

use asd_core::data::Dataset;
use asd_core::eval::category_of;
use asd_core::fusion::ModalitySet;
use asd_core::interpret::modality_importance;
use asd_core::train::clip_tensors;
use clap::Parser;

use crate::manifest::RunManifest;
use crate::CliError;

#[derive(Parser)]
pub struct Args {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let (model, ps, meta) = super::load_model(&args.model)?;
    let dataset = Dataset::open_dir(&args.data).map_err(CliError::validation)?;

    let mut rows = String::from("video_id,category,audio,face,body\n");
    let mut per_category: BTreeMap<String, (f64, f64, f64, usize)> = BTreeMap::new();
    for source in &dataset.clips {
        let clip = source.load().map_err(CliError::runtime)?;
        let tensors = clip_tensors(&clip, meta.input_size, false).map_err(CliError::runtime)?;
        let out = model
            .forward_eval(&ps, &tensors, ModalitySet::empty(), true)
            .map_err(CliError::runtime)?;
        let gate = out.captures.expect("capture requested").fused.gate;
        let imp = modality_importance(&gate.view(), model.config.embed_dim);
        let category = category_of(&clip.video_id).to_string();
        rows.push_str(&format!(
            "{},{},{},{},{}\n",
            clip.video_id, category, imp.audio, imp.face, imp.body
        ));
        let slot = per_category.entry(category).or_insert((0.0, 0.0, 0.0, 0));
        slot.0 += imp.audio;
        slot.1 += imp.face;
        slot.2 += imp.body;
        slot.3 += 1;
    }

    std::fs::create_dir_all(&args.out).map_err(CliError::runtime)?;
    std::fs::write(args.out.join("importance.csv"), rows).map_err(CliError::runtime)?;
    let mut summary = String::from("category,clips,audio,face,body\n");
    for (category, (a, f, b, n)) in &per_category {
        let n_f = *n as f64;
        summary.push_str(&format!(
            "{category},{n},{},{},{}\n",
            a / n_f,
            f / n_f,
            b / n_f
        ));
    }
    std::fs::write(args.out.join("importance_summary.csv"), summary)
        .map_err(CliError::runtime)?;
    println!(
        "wrote importance for {} clips ({} categories) to {}",
        dataset.len(),
        per_category.len(),
        args.out.display()
    );

    let mut manifest = RunManifest::start("importance");
    manifest.input(&args.model)?;
    manifest.input(&args.data)?;
    manifest.arg("out", args.out.display());
    manifest.finish(&args.out)
}
