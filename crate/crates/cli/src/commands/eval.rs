use std::path::PathBuf;

use asd_core::data::parse_manifest;
use asd_core::eval::{map_report, EvalError, Slicing};
use clap::Parser;
use serde_json::{json, Value};

use crate::manifest::RunManifest;
use crate::CliError;

#[derive(Parser)]
pub struct Args {
    /// Prediction CSV from `infer` or `ablate`
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth manifest CSV
    #[arg(long)]
    pub gt: PathBuf,
    /// Slicing: none, category, hbp
    #[arg(long, default_value = "none")]
    pub slice: String,
    /// Report JSON path
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let slicing = Slicing::parse(&args.slice).ok_or_else(|| {
        CliError::Validation(format!(
            "--slice '{}' not one of none, category, hbp",
            args.slice
        ))
    })?;
    let predictions = super::read_predictions(&args.pred)?;
    let gt_text = std::fs::read_to_string(&args.gt).map_err(CliError::runtime)?;
    let manifest_rows = parse_manifest(&gt_text).map_err(CliError::validation)?;
    let (reports, warnings) = match map_report(&predictions, &manifest_rows, slicing) {
        Ok(v) => v,
        Err(e @ EvalError::UnmatchedKeys { .. }) => return Err(CliError::validation(e)),
        Err(e @ EvalError::NoPositives) => return Err(CliError::validation(e)),
        Err(e) => return Err(CliError::runtime(e)),
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let mut slices = serde_json::Map::new();
    let mut global = Value::Null;
    for report in &reports {
        if report.slice == "global" {
            global = json!(report.value);
        } else {
            slices.insert(report.slice.clone(), json!(report.value));
        }
        println!("{} [{}] = {:.4}", report.metric, report.slice, report.value);
    }
    let body = json!({
        "metric": "average_precision",
        "global": global,
        "slices": Value::Object(slices),
        "warnings": warnings,
    });
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(CliError::runtime)?;
        }
    }
    std::fs::write(
        &args.out,
        serde_json::to_string_pretty(&body).map_err(CliError::runtime)?,
    )
    .map_err(CliError::runtime)?;

    let out_dir = args
        .out
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."));
    let mut manifest = RunManifest::start("eval");
    manifest.input(&args.pred)?;
    manifest.input(&args.gt)?;
    manifest
        .arg("slice", &args.slice)
        .arg("out", args.out.display());
    manifest.finish(&out_dir)
}
