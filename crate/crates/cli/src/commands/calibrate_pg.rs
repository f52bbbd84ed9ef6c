//! `calibrate-pg`: flat-field sets in, variance-line entry out.

use std::path::PathBuf;

use clap::Args;
use endoraw_core::{calibrate_pg, load_fpn_map, PgParams};

use crate::commands::calibrate_fpn::DEFAULT_PBN_THETA;
use crate::common::{load_stack, read_json, write_json};
use crate::config::SuiteConfig;

#[derive(Args, Debug)]
pub struct CalibratePgArgs {
    /// Directory holding one flat-field stack; repeat per illumination
    /// level. All sets must share one analog gain.
    #[arg(long = "flat-set", value_name = "DIR", required = true)]
    pub flat_sets: Vec<PathBuf>,
    /// Calibrated `.fpn` map for the sensor (removed before statistics).
    #[arg(long, value_name = "FILE")]
    pub fpn: PathBuf,
    /// Output variance-line JSON.
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
    /// Flatness threshold (DN) for the banding estimator.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Merge into an existing output file instead of replacing it.
    #[arg(long)]
    pub merge: bool,
}

pub fn run(args: CalibratePgArgs, suite: &SuiteConfig) -> anyhow::Result<()> {
    let theta = args
        .theta
        .or(suite.pbn_theta)
        .unwrap_or(DEFAULT_PBN_THETA);
    let fpn = load_fpn_map(&args.fpn)?;
    let mut stacks = Vec::with_capacity(args.flat_sets.len());
    for dir in &args.flat_sets {
        let stack = load_stack(dir)?;
        log::info!(
            "flat set {}: {} frames at gain {}",
            dir.display(),
            stack.len(),
            stack.settings().analog_gain
        );
        stacks.push(stack);
    }

    let calibration = calibrate_pg(&stacks, &fpn, theta)?;
    log::info!(
        "gain {}: a = {:.6}, b = {:.4} ({} samples, {} discarded near full scale{})",
        calibration.entry.gain,
        calibration.entry.a,
        calibration.entry.b,
        calibration.samples_used,
        calibration.samples_discarded,
        if calibration.clamped {
            ", negative fit clamped"
        } else {
            ""
        }
    );

    let mut params: PgParams = if args.merge && args.output.exists() {
        read_json(&args.output)?
    } else {
        PgParams::new("flat-field temporal statistics")
    };
    if calibration.clamped {
        params.source = format!("{} [gain {} clamped at zero]", params.source, calibration.entry.gain);
    }
    params.insert(calibration.entry);
    params.validate()?;
    write_json(&args.output, &params)?;
    log::info!("wrote {}", args.output.display());
    Ok(())
}
