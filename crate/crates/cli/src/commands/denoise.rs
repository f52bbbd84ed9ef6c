//! `denoise`: run the pipeline over a frame or directory, optionally keeping
//! per-stage intermediates and preview images.

use std::path::{Path, PathBuf};

use clap::Args;
use endoraw_core::{
    demosaic_preview_raw, denoise_pipeline_stages, load_fpn_map, load_frame, quantize_to_raw,
};

use crate::common::{list_pgms, read_json, stem, write_json};
use crate::config::SuiteConfig;

#[derive(Args, Debug)]
pub struct DenoiseArgs {
    /// Frame file or directory of frames.
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub output: PathBuf,
    /// Calibrated `.fpn` map; without it no fixed pattern is subtracted.
    #[arg(long, value_name = "FILE")]
    pub fpn: Option<PathBuf>,
    /// Calibrated variance-line JSON; without it the denoise config's own
    /// entry applies at every gain.
    #[arg(long, value_name = "FILE")]
    pub pg: Option<PathBuf>,
    /// Denoise settings JSON (smoother, strength, per-phase flag).
    #[arg(long = "denoise-config", value_name = "FILE")]
    pub denoise_config: Option<PathBuf>,
    /// Keep per-stage intermediates (noisy, banding removed, fixed pattern
    /// removed) alongside the final output.
    #[arg(long)]
    pub stages: bool,
    /// Write demosaiced preview images (PPM) of input and output.
    #[arg(long)]
    pub preview: bool,
}

pub fn run(args: DenoiseArgs, suite: &SuiteConfig) -> anyhow::Result<()> {
    let config = match &args.denoise_config {
        Some(path) => read_json(path)?,
        None => suite.denoise_config(),
    };
    let fpn = args.fpn.as_deref().map(load_fpn_map).transpose()?;
    let pg: Option<endoraw_core::PgParams> = args.pg.as_deref().map(read_json).transpose()?;

    let inputs: Vec<PathBuf> = if args.input.is_dir() {
        list_pgms(&args.input)?
    } else {
        vec![args.input.clone()]
    };
    std::fs::create_dir_all(&args.output)?;

    for (index, path) in inputs.iter().enumerate() {
        process_frame(path, index, &args, &config, fpn.as_ref(), pg.as_ref())?;
    }
    Ok(())
}

fn process_frame(
    path: &Path,
    index: usize,
    args: &DenoiseArgs,
    config: &endoraw_core::DenoiseConfig,
    fpn: Option<&endoraw_core::FpnMap>,
    pg: Option<&endoraw_core::PgParams>,
) -> anyhow::Result<()> {
    let raw = load_frame(path)?;
    let zero_map;
    let map = match fpn {
        Some(map) => map,
        None => {
            zero_map = endoraw_core::FpnMap::zeros(raw.width, raw.height, &raw.sensor_id);
            &zero_map
        }
    };
    let single_entry;
    let table = match pg {
        Some(table) => table,
        None => {
            let mut t = endoraw_core::PgParams::new("denoise-config entry");
            t.insert(config.pg);
            single_entry = t;
            &single_entry
        }
    };

    let stages = denoise_pipeline_stages(&raw, map, table, config)?;
    let base = stem(path);
    let out_dir = &args.output;

    endoraw_core::save_frame(
        &quantize_to_raw(&stages.denoised, &raw),
        &out_dir.join(format!("{base}_denoised.pgm")),
    )?;
    write_json(
        &out_dir.join(format!("{base}_pbn.json")),
        &stages.pbn_estimate,
    )?;
    if stages.pbn_fallback {
        log::warn!("{base}: banding estimation failed; nothing subtracted");
    }
    if args.stages {
        for (name, frame) in [
            ("noisy", &stages.noisy),
            ("pbn_removed", &stages.pbn_removed),
            ("fpn_removed", &stages.fpn_removed),
        ] {
            endoraw_core::save_frame(
                &quantize_to_raw(frame, &raw),
                &out_dir.join(format!("{base}_{name}.pgm")),
            )?;
        }
    }
    if args.preview {
        let before = demosaic_preview_raw(&raw);
        endoraw_core::write_ppm(
            &out_dir.join(format!("{base}_input_preview.ppm")),
            before.width,
            before.height,
            &before.data,
        )?;
        let after_raw = quantize_to_raw(&stages.denoised, &raw);
        let after = demosaic_preview_raw(&after_raw);
        endoraw_core::write_ppm(
            &out_dir.join(format!("{base}_denoised_preview.ppm")),
            after.width,
            after.height,
            &after.data,
        )?;
    }
    log::info!(
        "[{index}] {base}: kappa {:.3}, done",
        stages.pbn_estimate.kappa
    );
    Ok(())
}
