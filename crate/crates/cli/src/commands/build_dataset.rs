//! `build-dataset`: dark + lit capture stacks in, evaluation pairs out.

use std::path::PathBuf;

use clap::Args;
use endoraw_core::build_test_pair;

use crate::common::{load_stack, save_pairs};
use crate::config::SuiteConfig;

#[derive(Args, Debug)]
pub struct BuildDatasetArgs {
    /// Dark-stack directory; repeat per capture condition, paired with the
    /// `--lit` given at the same position.
    #[arg(long = "dark", value_name = "DIR", required = true)]
    pub dark: Vec<PathBuf>,
    /// Lit-stack directory captured under the same settings as its dark.
    #[arg(long = "lit", value_name = "DIR", required = true)]
    pub lit: Vec<PathBuf>,
    /// Output dataset directory.
    #[arg(long, value_name = "DIR")]
    pub output: PathBuf,
    /// Number of lit frames to keep as noisy samples per condition.
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    /// Gain-class boundary: gains <= this are Low.
    #[arg(long)]
    pub low_max: Option<f64>,
    /// Gain-class boundary: gains <= this (above Low) are Medium.
    #[arg(long)]
    pub medium_max: Option<f64>,
}

pub fn run(args: BuildDatasetArgs, suite: &SuiteConfig) -> anyhow::Result<()> {
    if args.dark.len() != args.lit.len() {
        anyhow::bail!(
            "got {} --dark and {} --lit directories; they pair positionally",
            args.dark.len(),
            args.lit.len()
        );
    }
    let mut thresholds = suite.thresholds();
    if let Some(v) = args.low_max {
        thresholds.low_max = v;
    }
    if let Some(v) = args.medium_max {
        thresholds.medium_max = v;
    }

    let mut pairs = Vec::new();
    for (set_index, (dark_dir, lit_dir)) in args.dark.iter().zip(args.lit.iter()).enumerate() {
        let dark = load_stack(dark_dir)?;
        let lit = load_stack(lit_dir)?;
        let take = args.samples.min(lit.len());
        for sample in 0..take {
            let mut pair = build_test_pair(&dark, &lit, sample, &thresholds)?;
            pair.id = format!("{set_index:02}_{sample:03}");
            log::info!(
                "pair {} ({:?}, gain {})",
                pair.id,
                pair.gain_class,
                pair.noisy.analog_gain
            );
            pairs.push((pair, lit.len(), dark.len()));
        }
    }
    save_pairs(&args.output, &pairs, thresholds)?;
    log::info!("wrote {} pairs to {}", pairs.len(), args.output.display());
    Ok(())
}
