//! `estimate-pbn`: banding amplitude/phase audit for one frame.

use std::path::PathBuf;

use clap::Args;
use endoraw_core::{estimate_pbn, load_frame, DEFAULT_PBN_PERIOD};

use crate::commands::calibrate_fpn::DEFAULT_PBN_THETA;
use crate::common::write_json;
use crate::config::SuiteConfig;

#[derive(Args, Debug)]
pub struct EstimatePbnArgs {
    /// Frame to analyze (PGM + sidecar).
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Flatness threshold in DN.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Square-wave period in pixels.
    #[arg(long, default_value_t = DEFAULT_PBN_PERIOD)]
    pub period: usize,
    /// Also write the estimate JSON here (it always prints to stdout).
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

pub fn run(args: EstimatePbnArgs, suite: &SuiteConfig) -> anyhow::Result<()> {
    let theta = args
        .theta
        .or(suite.pbn_theta)
        .unwrap_or(DEFAULT_PBN_THETA);
    let frame = load_frame(&args.input)?;
    let estimate = estimate_pbn(&frame.to_float(), theta, args.period)?;
    log::info!(
        "kappa {:.4} DN, phase {}, {} rows used, flat fraction {:.3}",
        estimate.kappa,
        estimate.phase,
        estimate.rows_used,
        estimate.flat_fraction
    );
    println!("{}", serde_json::to_string_pretty(&estimate)?);
    if let Some(path) = &args.output {
        write_json(path, &estimate)?;
    }
    Ok(())
}
