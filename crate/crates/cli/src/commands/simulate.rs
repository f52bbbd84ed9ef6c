//! `simulate`: clean frames in, noisy raw frames out.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use endoraw_core::{
    load_fpn_map, load_frame, save_frame, synthesize_noise, CaptureSettings, FpnMap,
    NoiseModelParams, NOISE_RNG_ALGORITHM,
};
use serde::{Deserialize, Serialize};

use crate::common::{list_pgms, read_json, stem, write_json};
use crate::config::SuiteConfig;

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Directory of clean frames (PGM + sidecar).
    #[arg(long, value_name = "DIR")]
    pub input: PathBuf,
    /// Output directory for noisy frames and the manifest.
    #[arg(long, value_name = "DIR")]
    pub output: PathBuf,
    /// Noise model JSON; falls back to the config file's `noise` section.
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Noisy realizations to draw per clean frame.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Analog gain override stamped onto outputs (defaults to each clean
    /// frame's sidecar value).
    #[arg(long)]
    pub gain: Option<f64>,
    /// Exposure time override in milliseconds.
    #[arg(long)]
    pub exposure: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct SimulatedFrame {
    input: String,
    output: String,
    frame_index: u64,
}

#[derive(Serialize, Deserialize)]
struct SimulateManifest {
    algorithm: String,
    seed: u64,
    count: usize,
    params: NoiseModelParams,
    frames: Vec<SimulatedFrame>,
}

pub fn run(args: SimulateArgs, suite: &SuiteConfig) -> anyhow::Result<()> {
    let mut params: NoiseModelParams = match &args.params {
        Some(path) => read_json(path)?,
        None => suite.noise.clone().unwrap_or_default(),
    };
    if let Some(seed) = args.seed.or(suite.seed) {
        params.seed = seed;
    }

    // A relative map path resolves against the params file location.
    let fpn: Option<FpnMap> = match &params.fpn_path {
        None => None,
        Some(path) => {
            let resolved = if path.is_relative() {
                args.params
                    .as_ref()
                    .and_then(|p| p.parent())
                    .map(|dir| dir.join(path))
                    .unwrap_or_else(|| path.clone())
            } else {
                path.clone()
            };
            Some(load_fpn_map(&resolved).context("loading fpn map for simulation")?)
        }
    };

    std::fs::create_dir_all(&args.output)?;
    let inputs = list_pgms(&args.input)?;
    let mut manifest = SimulateManifest {
        algorithm: NOISE_RNG_ALGORITHM.to_string(),
        seed: params.seed,
        count: args.count,
        params: params.clone(),
        frames: Vec::new(),
    };

    let mut frame_index = 0u64;
    for input_path in &inputs {
        let clean = load_frame(input_path)?;
        let clean_float = clean.to_float();
        for rep in 0..args.count {
            let capture = CaptureSettings {
                bit_depth: clean.bit_depth,
                bayer_pattern: clean.bayer_pattern,
                black_level: clean.black_level,
                analog_gain: args.gain.unwrap_or(clean.analog_gain),
                exposure_time_ms: args.exposure.unwrap_or(clean.exposure_time_ms),
                sensor_id: clean.sensor_id.clone(),
                frame_index,
            };
            let noisy = synthesize_noise(&clean_float, &params, fpn.as_ref(), &capture)?;
            let out_name = format!("{}_n{rep:03}.pgm", stem(input_path));
            save_frame(&noisy, &args.output.join(&out_name))?;
            log::info!("simulated {out_name} (frame {frame_index})");
            manifest.frames.push(SimulatedFrame {
                input: input_path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                output: out_name,
                frame_index,
            });
            frame_index += 1;
        }
    }

    write_json(&args.output.join("manifest.json"), &manifest)?;
    log::info!(
        "wrote {} noisy frames to {}",
        manifest.frames.len(),
        args.output.display()
    );
    Ok(())
}
