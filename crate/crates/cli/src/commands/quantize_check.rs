//! `quantize-check`: fixed-point pipeline fidelity against the float path.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use endoraw_core::{
    load_fpn_map, load_frame, profile_qplan, run_pipeline_fixed, PgParams, QPlan, RawFrame,
};
use serde::{Deserialize, Serialize};

use crate::common::{list_pgms, load_pairs, read_json, write_json};
use crate::config::SuiteConfig;

#[derive(Args, Debug)]
pub struct QuantizeCheckArgs {
    /// Pair dataset directory; the noisy frames drive both pipelines.
    #[arg(long, value_name = "DIR", conflicts_with = "input")]
    pub pairs: Option<PathBuf>,
    /// Directory of raw frames to use instead of a pair dataset.
    #[arg(long, value_name = "DIR")]
    pub input: Option<PathBuf>,
    /// Calibrated `.fpn` map.
    #[arg(long, value_name = "FILE")]
    pub fpn: PathBuf,
    /// Calibrated variance-line JSON.
    #[arg(long, value_name = "FILE")]
    pub pg: PathBuf,
    /// Denoise settings JSON.
    #[arg(long = "denoise-config", value_name = "FILE")]
    pub denoise_config: Option<PathBuf>,
    /// Per-stage quantization plan JSON; derived by range profiling when
    /// absent.
    #[arg(long, value_name = "FILE")]
    pub qplan: Option<PathBuf>,
    /// Write the plan that was used (handy when it was profiled).
    #[arg(long, value_name = "FILE")]
    pub emit_qplan: Option<PathBuf>,
    /// Report JSON output path.
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
    /// Frames used for range profiling when no plan is given.
    #[arg(long, default_value_t = 4)]
    pub profile_frames: usize,
}

#[derive(Serialize, Deserialize)]
struct FrameReport {
    id: String,
    psnr_vs_float: f64,
    max_abs_diff: f64,
}

#[derive(Serialize, Deserialize)]
struct QuantizeReport {
    qplan: QPlan,
    min_psnr_vs_float: f64,
    mean_psnr_vs_float: f64,
    /// Worst per-stage saturation fraction across frames.
    saturation: BTreeMap<String, f64>,
    frames: Vec<FrameReport>,
}

pub fn run(args: QuantizeCheckArgs, suite: &SuiteConfig) -> anyhow::Result<()> {
    let fpn = load_fpn_map(&args.fpn)?;
    let pg: PgParams = read_json(&args.pg)?;
    let config = match &args.denoise_config {
        Some(path) => read_json(path)?,
        None => suite.denoise_config(),
    };

    let frames: Vec<(String, RawFrame)> = match (&args.pairs, &args.input) {
        (Some(pairs_dir), _) => load_pairs(pairs_dir)?
            .into_iter()
            .map(|p| (p.id, p.noisy))
            .collect(),
        (None, Some(input)) => list_pgms(input)?
            .iter()
            .map(|p| {
                let frame = load_frame(p)?;
                Ok((crate::common::stem(p), frame))
            })
            .collect::<anyhow::Result<Vec<_>>>()?,
        (None, None) => anyhow::bail!("one of --pairs or --input is required"),
    };
    if frames.is_empty() {
        anyhow::bail!("no frames to check");
    }

    let plan: QPlan = match &args.qplan {
        Some(path) => read_json(path)?,
        None => {
            let sample: Vec<RawFrame> = frames
                .iter()
                .take(args.profile_frames.max(1))
                .map(|(_, f)| f.clone())
                .collect();
            log::info!("profiling dynamic ranges over {} frames", sample.len());
            profile_qplan(&sample, &fpn, &pg, &config)?
        }
    };
    if let Some(path) = &args.emit_qplan {
        write_json(path, &plan)?;
    }

    let mut reports = Vec::with_capacity(frames.len());
    let mut saturation: BTreeMap<String, f64> = BTreeMap::new();
    for (id, frame) in &frames {
        let (_, stats) = run_pipeline_fixed(frame, &fpn, &pg, &config, &plan)?;
        log::info!(
            "{id}: fixed vs float {:.2} dB, max |diff| {:.4} DN",
            stats.psnr_vs_float,
            stats.max_abs_diff
        );
        for (stage, &frac) in &stats.saturation {
            let entry = saturation.entry(stage.clone()).or_insert(0.0);
            *entry = entry.max(frac);
        }
        reports.push(FrameReport {
            id: id.clone(),
            psnr_vs_float: stats.psnr_vs_float,
            max_abs_diff: stats.max_abs_diff,
        });
    }

    let min = reports
        .iter()
        .map(|r| r.psnr_vs_float)
        .fold(f64::INFINITY, f64::min);
    let mean = reports.iter().map(|r| r.psnr_vs_float).sum::<f64>() / reports.len() as f64;
    let report = QuantizeReport {
        qplan: plan,
        min_psnr_vs_float: min,
        mean_psnr_vs_float: mean,
        saturation,
        frames: reports,
    };
    write_json(&args.output, &report)?;
    println!(
        "fixed-vs-float: min {:.2} dB, mean {:.2} dB over {} frames",
        report.min_psnr_vs_float,
        report.mean_psnr_vs_float,
        report.frames.len()
    );
    Ok(())
}
