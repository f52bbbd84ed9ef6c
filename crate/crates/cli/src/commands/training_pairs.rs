//! `make-training-pairs`: calibrated noise replayed onto clean frames.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use endoraw_core::{load_frame, make_training_pairs, PgParams, TrainingPairOptions};

use crate::common::{list_pgms, read_json};
use crate::config::SuiteConfig;

#[derive(Args, Debug)]
pub struct TrainingPairsArgs {
    /// Directory of clean source frames (16-bit PGM + sidecar).
    #[arg(long, value_name = "DIR")]
    pub clean: PathBuf,
    /// Calibrated variance-line JSON.
    #[arg(long, value_name = "FILE")]
    pub pg: PathBuf,
    /// Analog gain whose noise level to replay.
    #[arg(long)]
    pub gain: f64,
    /// Number of pairs to generate.
    #[arg(long)]
    pub count: usize,
    /// Output dataset directory.
    #[arg(long, value_name = "DIR")]
    pub output: PathBuf,
    /// Generation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Crop size as WIDTH HEIGHT (forced even, clamped to the source).
    #[arg(long, num_args = 2, value_names = ["WIDTH", "HEIGHT"])]
    pub crop: Option<Vec<usize>>,
    /// Fail instead of blending between calibrated gains.
    #[arg(long)]
    pub no_interpolate: bool,
    /// Contrast augmentation range.
    #[arg(long, default_value_t = 0.6)]
    pub contrast_min: f64,
    #[arg(long, default_value_t = 1.4)]
    pub contrast_max: f64,
}

pub fn run(args: TrainingPairsArgs, suite: &SuiteConfig) -> anyhow::Result<()> {
    let params: PgParams = read_json(&args.pg)?;
    let sources = list_pgms(&args.clean)?
        .iter()
        .map(|p| load_frame(p).with_context(|| format!("loading {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut opts = TrainingPairOptions {
        interpolate_gain: !args.no_interpolate,
        contrast_range: (args.contrast_min, args.contrast_max),
        ..TrainingPairOptions::default()
    };
    if let Some(crop) = &args.crop {
        opts.crop_width = crop[0];
        opts.crop_height = crop[1];
    }
    let seed = args.seed.or(suite.seed).unwrap_or(0);

    let manifest = make_training_pairs(
        &sources,
        &params,
        args.gain,
        args.count,
        seed,
        &args.output,
        &opts,
    )?;
    log::info!(
        "wrote {} pairs (a = {:.4}, b = {:.4}, seed {seed}) to {}",
        manifest.pairs.len(),
        manifest.a,
        manifest.b,
        args.output.display()
    );
    Ok(())
}
