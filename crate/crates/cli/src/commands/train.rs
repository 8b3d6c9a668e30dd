use std::path::PathBuf;

use asd_core::checkpoint::{self, CheckpointMeta};
use asd_core::config::{parse_kv, ModelConfig};
use asd_core::data::Dataset;
use asd_core::model::AsdModel;
use asd_core::train::{train, TrainConfig, TrainError};
use clap::Parser;

use crate::manifest::RunManifest;
use crate::CliError;

#[derive(Parser)]
pub struct Args {
    /// Dataset directory (one subdirectory per clip)
    #[arg(long)]
    pub data: PathBuf,
    /// key=value config file (model and training keys)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config epoch count
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Output directory: model.ckpt, last.ckpt, train_log.csv
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let kv = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(CliError::validation)?;
            parse_kv(&text).map_err(CliError::validation)?
        }
        None => Default::default(),
    };
    // Reject unknown keys early.
    let model_keys: std::collections::BTreeSet<String> =
        ModelConfig::default().to_kv().keys().cloned().collect();
    for key in kv.keys() {
        if !model_keys.contains(key) && !TrainConfig::KEYS.contains(&key.as_str()) {
            return Err(CliError::Validation(format!("config: unknown key '{key}'")));
        }
    }
    let model_config = ModelConfig::from_kv(&kv).map_err(CliError::validation)?;
    let mut train_config = TrainConfig::from_kv(&kv).map_err(CliError::validation)?;
    if let Some(seed) = args.seed {
        train_config.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        train_config.epochs = epochs;
    }

    let dataset = Dataset::open_dir(&args.data).map_err(CliError::validation)?;
    let (model, mut ps) =
        AsdModel::new(&model_config, train_config.seed).map_err(CliError::validation)?;
    println!(
        "training on {} clips for {} epochs (crop {}, batch {}, seed {})",
        dataset.len(),
        train_config.epochs,
        train_config.input_size,
        train_config.batch_size,
        train_config.seed
    );
    let result = match train(&dataset, &model, &mut ps, &train_config) {
        Ok(r) => r,
        Err(e @ TrainError::EmptyDataset) => return Err(CliError::validation(e)),
        Err(e) => return Err(CliError::runtime(e)),
    };

    std::fs::create_dir_all(&args.out).map_err(CliError::runtime)?;
    let meta = CheckpointMeta {
        model: model_config,
        input_size: train_config.input_size,
    };
    checkpoint::save(&args.out.join("model.ckpt"), &meta, &result.best_params)
        .map_err(CliError::runtime)?;
    checkpoint::save(&args.out.join("last.ckpt"), &meta, &result.final_params)
        .map_err(CliError::runtime)?;

    let mut log = String::from("epoch,lr,train_loss,val_map\n");
    for row in &result.log {
        log.push_str(&format!(
            "{},{},{},{}\n",
            row.epoch, row.lr, row.train_loss, row.val_map
        ));
        println!(
            "epoch {:>3}  lr {:.3e}  loss {:.4}  val mAP {:.4}",
            row.epoch, row.lr, row.train_loss, row.val_map
        );
    }
    std::fs::write(args.out.join("train_log.csv"), log).map_err(CliError::runtime)?;
    println!(
        "best validation mAP {:.4} at epoch {} -> {}",
        result.best_val_map,
        result.best_epoch,
        args.out.join("model.ckpt").display()
    );

    let mut manifest = RunManifest::start("train");
    manifest.seed(train_config.seed);
    manifest.input(&args.data)?;
    if let Some(config) = &args.config {
        manifest.input(config)?;
    }
    for (k, v) in train_config.to_kv() {
        manifest.arg(&k, v);
    }
    for (k, v) in meta.model.to_kv() {
        manifest.arg(&k, v);
    }
    manifest.arg("out", args.out.display());
    manifest.finish(&args.out)
}
