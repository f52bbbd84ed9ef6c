//! `calibrate-fpn`: dark-frame sets in, slope/offset map file out.

use std::path::PathBuf;

use clap::Args;
use endoraw_core::{calibrate_fpn, save_fpn_map};

use crate::common::load_stack;
use crate::config::SuiteConfig;

pub const DEFAULT_PBN_THETA: f64 = 16.0;

#[derive(Args, Debug)]
pub struct CalibrateFpnArgs {
    /// Directory holding one dark-frame set; repeat for each set. Sets must
    /// span at least two distinct gain*exposure products.
    #[arg(long = "dark-set", value_name = "DIR", required = true)]
    pub dark_sets: Vec<PathBuf>,
    /// Output `.fpn` map file.
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
    /// Flatness threshold (DN) for the banding estimator run on each frame.
    #[arg(long)]
    pub theta: Option<f64>,
}

pub fn run(args: CalibrateFpnArgs, suite: &SuiteConfig) -> anyhow::Result<()> {
    let theta = args
        .theta
        .or(suite.pbn_theta)
        .unwrap_or(DEFAULT_PBN_THETA);
    let mut stacks = Vec::with_capacity(args.dark_sets.len());
    for dir in &args.dark_sets {
        let stack = load_stack(dir)?;
        let s = stack.settings();
        log::info!(
            "dark set {}: {} frames, gain {} x {} ms",
            dir.display(),
            stack.len(),
            s.analog_gain,
            s.exposure_time_ms
        );
        stacks.push(stack);
    }
    let map = calibrate_fpn(&stacks, theta)?;
    log::info!(
        "calibrated {}x{} map, fit residual rms {:.4} DN over {} points",
        map.width,
        map.height,
        map.fit_residual_rms,
        map.calibration_points.len()
    );
    save_fpn_map(&map, &args.output)?;
    log::info!("wrote {}", args.output.display());
    Ok(())
}
