//! `evaluate`: stage-by-stage metrics over an evaluation pair set.

use std::path::PathBuf;

use clap::Args;
use endoraw_core::{evaluate_suite, load_fpn_map, PgParams};

use crate::common::{load_pairs, read_json, write_json};
use crate::config::SuiteConfig;

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Pair dataset directory produced by `build-dataset`.
    #[arg(long, value_name = "DIR")]
    pub pairs: PathBuf,
    /// Calibrated `.fpn` map.
    #[arg(long, value_name = "FILE")]
    pub fpn: PathBuf,
    /// Calibrated variance-line JSON.
    #[arg(long, value_name = "FILE")]
    pub pg: PathBuf,
    /// Denoise settings JSON.
    #[arg(long = "denoise-config", value_name = "FILE")]
    pub denoise_config: Option<PathBuf>,
    /// Report JSON output path.
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
}

pub fn run(args: EvaluateArgs, suite: &SuiteConfig) -> anyhow::Result<()> {
    let pairs = load_pairs(&args.pairs)?;
    let fpn = load_fpn_map(&args.fpn)?;
    let pg: PgParams = read_json(&args.pg)?;
    let config = match &args.denoise_config {
        Some(path) => read_json(path)?,
        None => suite.denoise_config(),
    };
    log::info!("evaluating {} pairs", pairs.len());
    let report = evaluate_suite(&pairs, &fpn, &pg, &config)?;
    write_json(&args.output, &report)?;
    print!("{}", report.render_table());
    log::info!("wrote {}", args.output.display());
    Ok(())
}
