use std::path::PathBuf;

use asd_core::asdtext::{action_catalog, build_annotations, split_90_10, CaptionRecord, Gender};
use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::manifest::RunManifest;
use crate::CliError;

#[derive(Parser)]
pub struct Args {
    /// Number of annotated images to synthesize
    #[arg(long, default_value_t = 100)]
    pub images: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<(), CliError> {
    if args.images < 10 {
        return Err(CliError::Validation(
            "--images must be at least 10 (the split needs 10 records)".into(),
        ));
    }
    // Seeded demo annotations: a gender and one to three actions per image.
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let catalog = action_catalog();
    let annotations: Vec<(String, Gender, Vec<u8>)> = (0..args.images)
        .map(|i| {
            let gender = if rng.gen_bool(0.5) {
                Gender::Female
            } else {
                Gender::Male
            };
            let count = rng.gen_range(1..=3usize);
            let mut actions: Vec<u8> = Vec::with_capacity(count);
            while actions.len() < count {
                let id = catalog[rng.gen_range(0..catalog.len())].id;
                if !actions.contains(&id) {
                    actions.push(id);
                }
            }
            (format!("img_{i:06}"), gender, actions)
        })
        .collect();
    let records = build_annotations(&annotations, args.seed).map_err(CliError::validation)?;
    let (train_split, test_split) = split_90_10(&records, args.seed).map_err(CliError::validation)?;

    std::fs::create_dir_all(&args.out).map_err(CliError::runtime)?;
    write_coco(&args.out.join("captions_train.json"), &train_split)?;
    write_coco(&args.out.join("captions_test.json"), &test_split)?;
    println!(
        "wrote {} train / {} test caption records to {}",
        train_split.len(),
        test_split.len(),
        args.out.display()
    );

    let mut manifest = RunManifest::start("captions");
    manifest
        .seed(args.seed)
        .arg("images", args.images)
        .arg("out", args.out.display());
    manifest.finish(&args.out)
}

fn write_coco(path: &std::path::Path, records: &[CaptionRecord]) -> Result<(), CliError> {
    let images: Vec<Value> = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            json!({
                "id": i,
                "file_name": r.image_id,
                "gender": r.gender.as_str(),
                "actions": r.actions.iter().map(|a| a.id).collect::<Vec<u8>>(),
            })
        })
        .collect();
    let mut annotations = Vec::new();
    let mut next_id = 0usize;
    for (i, r) in records.iter().enumerate() {
        for caption in &r.captions {
            annotations.push(json!({
                "id": next_id,
                "image_id": i,
                "caption": caption,
            }));
            next_id += 1;
        }
    }
    let body = json!({ "images": images, "annotations": annotations });
    std::fs::write(
        path,
        serde_json::to_string_pretty(&body).map_err(CliError::runtime)?,
    )
    .map_err(CliError::runtime)
}
