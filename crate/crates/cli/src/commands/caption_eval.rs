use std::path::PathBuf;

use asd_core::eval::caption::{bleu_n, meteor, rouge_l, tokenize};
use clap::Parser;
use serde_json::json;

use crate::manifest::RunManifest;
use crate::CliError;

#[derive(Parser)]
pub struct Args {
    /// Candidate captions, one per line
    #[arg(long)]
    pub cand: PathBuf,
    /// Reference captions, one per line (aligned with candidates)
    #[arg(long)]
    pub refs: PathBuf,
    /// Optional JSON report path (metrics also print to stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let cand = read_lines(&args.cand)?;
    let refs = read_lines(&args.refs)?;
    if cand.len() != refs.len() {
        return Err(CliError::Validation(format!(
            "{} candidates but {} references; files must be line-aligned",
            cand.len(),
            refs.len()
        )));
    }
    if cand.is_empty() {
        return Err(CliError::Validation("no captions to score".into()));
    }
    let n = cand.len() as f64;
    let mut sums = [0.0f64; 6]; // rouge_l, meteor, bleu1..4
    for (c, r) in cand.iter().zip(refs.iter()) {
        let ct = tokenize(c);
        let rt = tokenize(r);
        sums[0] += rouge_l(&ct, &rt);
        sums[1] += meteor(&ct, &rt);
        for k in 1..=4usize {
            sums[1 + k] += bleu_n(&ct, &[rt.clone()], k);
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / n).collect();
    println!("rouge_l = {:.4}", means[0]);
    println!("meteor  = {:.4}", means[1]);
    for k in 1..=4 {
        println!("bleu{k}   = {:.4}", means[1 + k]);
    }
    if let Some(out) = &args.out {
        let body = json!({
            "captions": cand.len(),
            "rouge_l": means[0],
            "meteor": means[1],
            "bleu1": means[2],
            "bleu2": means[3],
            "bleu3": means[4],
            "bleu4": means[5],
        });
        if let Some(parent) = out.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(CliError::runtime)?;
            }
        }
        std::fs::write(
            out,
            serde_json::to_string_pretty(&body).map_err(CliError::runtime)?,
        )
        .map_err(CliError::runtime)?;
        let out_dir = out
            .parent()
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|| PathBuf::from("."));
        let mut manifest = RunManifest::start("caption-eval");
        manifest.input(&args.cand)?;
        manifest.input(&args.refs)?;
        manifest.arg("out", out.display());
        manifest.finish(&out_dir)?;
    }
    Ok(())
}

fn read_lines(path: &PathBuf) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::validation)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}
