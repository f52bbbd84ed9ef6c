//! Residual Poisson-Gaussian denoising and full pipeline orchestration.
//!
//! After banding and fixed-pattern subtraction the remaining noise follows
//! `var = a * mean + b`. A generalized Anscombe transform maps that to
//! approximately unit-variance Gaussian noise, a classical smoother (Gaussian
//! convolution or non-local means) runs in the stabilized domain, and the
//! algebraic inverse maps back to DN. Mosaics are not spatially smooth across
//! color sites, so smoothing defaults to operating on each Bayer phase
//! subimage independently.
//!
//! The residual stage is pluggable: a file-exchange hook lets an externally
//! trained denoiser replace the built-in smoothers during offline evaluation.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpn::FpnMap;
use crate::frame::{FloatFrame, RawFrame};
use crate::pbn::{estimate_pbn, remove_pbn, PbnEstimate, DEFAULT_PBN_PERIOD};
use crate::pg::{PgEntry, PgParams};

/// Residual smoother operating in the variance-stabilized domain, except for
/// the external hook which exchanges whole DN-domain frames.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Smoother {
    /// Separable Gaussian convolution; `sigma = 0` is the identity.
    Gaussian { sigma: f64 },
    /// Patch-based non-local means.
    Nlm {
        patch_radius: usize,
        search_radius: usize,
    },
    /// Directory contract for an external denoiser: the pipeline writes
    /// `NNNN_input.pgm` and polls for `NNNN_output.pgm` of the same shape.
    External {
        dir: PathBuf,
        timeout_ms: u64,
        poll_interval_ms: u64,
    },
}

impl Default for Smoother {
    fn default() -> Self {
        Smoother::Nlm {
            patch_radius: 1,
            search_radius: 5,
        }
    }
}

/// Configuration of the residual stage plus the pipeline knobs that feed it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DenoiseConfig {
    /// Variance line used when no calibrated table is supplied.
    pub pg: PgEntry,
    #[serde(default)]
    pub smoother: Smoother,
    /// Multiplier on the stabilized-domain noise std assumed by the smoother.
    #[serde(default = "default_strength")]
    pub strength: f64,
    #[serde(default = "default_true")]
    pub process_per_bayer_phase: bool,
    /// Lower clamp on the output; the pipeline defaults this to the negative
    /// black level so removal residue cannot run away below the pedestal.
    #[serde(default)]
    pub output_floor: Option<f64>,
    /// Flatness threshold for banding estimation; derived from the variance
    /// line (`max(4*sqrt(b), 8)`) when absent.
    #[serde(default)]
    pub pbn_theta: Option<f64>,
    #[serde(default = "default_period")]
    pub pbn_period: usize,
}

fn default_strength() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_period() -> usize {
    DEFAULT_PBN_PERIOD
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        DenoiseConfig {
            pg: PgEntry {
                gain: 1.0,
                a: 1.0,
                b: 0.0,
            },
            smoother: Smoother::default(),
            strength: 1.0,
            process_per_bayer_phase: true,
            output_floor: None,
            pbn_theta: None,
            pbn_period: DEFAULT_PBN_PERIOD,
        }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.strength > 0.0) {
            return Err(Error::argument("smoother strength must be > 0"));
        }
        match &self.smoother {
            Smoother::Gaussian { sigma } => {
                if !(*sigma >= 0.0) {
                    return Err(Error::argument("gaussian sigma must be >= 0"));
                }
            }
            Smoother::Nlm {
                patch_radius,
                search_radius,
            } => {
                if *patch_radius == 0 || *search_radius == 0 {
                    return Err(Error::argument("nlm radii must be positive"));
                }
            }
            Smoother::External { .. } => {}
        }
        if self.pbn_period < 2 || self.pbn_period % 2 != 0 {
            return Err(Error::argument("pbn period must be even and >= 2"));
        }
        Ok(())
    }
}

/// Generalized Anscombe transform: maps `var = a*mean + b` noise to unit
/// variance. `z = (2/a) * sqrt(max(a*x + (3/8)*a^2 + b, 0))`.
pub fn vst_forward(frame: &FloatFrame, a: f64, b: f64) -> Result<FloatFrame> {
    if !(a > 0.0) {
        return Err(Error::argument("vst requires a > 0"));
    }
    if !(b >= 0.0) {
        return Err(Error::argument("vst requires b >= 0"));
    }
    let offset = 0.375 * a * a + b;
    Ok(frame.map("vst_forward", |x| {
        2.0 / a * (a * x + offset).max(0.0).sqrt()
    }))
}

/// Algebraic inverse of [`vst_forward`]: `x = (a/4)z^2 - (3/8)a - b/a`.
pub fn vst_inverse(frame: &FloatFrame, a: f64, b: f64) -> Result<FloatFrame> {
    if !(a > 0.0) {
        return Err(Error::argument("vst requires a > 0"));
    }
    Ok(frame.map("vst_inverse", |z| {
        0.25 * a * z * z - 0.375 * a - b / a
    }))
}

fn gaussian_smooth(samples: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return samples.to_vec();
    }
    let radius = (4.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (0..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();

    // Horizontal then vertical pass, renormalizing over in-bounds taps.
    let mut tmp = vec![0.0f64; samples.len()];
    for y in 0..height {
        let row = &samples[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for d in -radius..=radius {
                let nx = x as i64 + d;
                if nx < 0 || nx >= width as i64 {
                    continue;
                }
                let k = kernel[d.unsigned_abs() as usize];
                acc += k * row[nx as usize];
                wsum += k;
            }
            tmp[y * width + x] = acc / wsum;
        }
    }
    let mut out = vec![0.0f64; samples.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for d in -radius..=radius {
                let ny = y as i64 + d;
                if ny < 0 || ny >= height as i64 {
                    continue;
                }
                let k = kernel[d.unsigned_abs() as usize];
                acc += k * tmp[ny as usize * width + x];
                wsum += k;
            }
            out[y * width + x] = acc / wsum;
        }
    }
    out
}

fn nlm_smooth(
    samples: &[f64],
    width: usize,
    height: usize,
    noise_sigma: f64,
    patch_radius: usize,
    search_radius: usize,
) -> Vec<f64> {
    let two_sigma2 = 2.0 * noise_sigma * noise_sigma;
    let h2 = (0.75 * noise_sigma).powi(2).max(1e-12);
    let pr = patch_radius as i64;
    let sr = search_radius as i64;
    let (w, h) = (width as i64, height as i64);

    let patch_distance = |px: i64, py: i64, qx: i64, qy: i64| -> f64 {
        let mut sum = 0.0;
        let mut count = 0u32;
        for dy in -pr..=pr {
            for dx in -pr..=pr {
                let (ax, ay) = (px + dx, py + dy);
                let (bx, by) = (qx + dx, qy + dy);
                if ax < 0 || ay < 0 || ax >= w || ay >= h {
                    continue;
                }
                if bx < 0 || by < 0 || bx >= w || by >= h {
                    continue;
                }
                let d = samples[(ay * w + ax) as usize] - samples[(by * w + bx) as usize];
                sum += d * d;
                count += 1;
            }
        }
        sum / count.max(1) as f64
    };

    let mut out = vec![0.0f64; samples.len()];
    out.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        let py = y as i64;
        for (x, out_px) in row.iter_mut().enumerate() {
            let px = x as i64;
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for qy in (py - sr).max(0)..=(py + sr).min(h - 1) {
                for qx in (px - sr).max(0)..=(px + sr).min(w - 1) {
                    let d2 = patch_distance(px, py, qx, qy);
                    let weight = (-((d2 - two_sigma2).max(0.0)) / h2).exp();
                    acc += weight * samples[(qy * w + qx) as usize];
                    wsum += weight;
                }
            }
            *out_px = acc / wsum;
        }
    });
    out
}

fn phase_dims(width: usize, height: usize, px: usize, py: usize) -> (usize, usize) {
    ((width - px).div_ceil(2), (height - py).div_ceil(2))
}

fn extract_phase(frame: &FloatFrame, px: usize, py: usize) -> FloatFrame {
    let (sw, sh) = phase_dims(frame.width, frame.height, px, py);
    let mut samples = Vec::with_capacity(sw * sh);
    for sy in 0..sh {
        let y = py + sy * 2;
        for sx in 0..sw {
            samples.push(frame.at(px + sx * 2, y));
        }
    }
    FloatFrame {
        width: sw,
        height: sh,
        samples,
        provenance: frame.provenance.clone(),
    }
}

fn write_phase(dst: &mut FloatFrame, sub: &[f64], px: usize, py: usize) {
    let (sw, sh) = phase_dims(dst.width, dst.height, px, py);
    for sy in 0..sh {
        let y = py + sy * 2;
        for sx in 0..sw {
            dst.samples[y * dst.width + (px + sx * 2)] = sub[sy * sw + sx];
        }
    }
}

/// Hook points where the fixed-point simulator intercepts pipeline values.
/// Planes are mutated in place; scalars pass through.
pub(crate) trait StageTap: Send {
    fn plane(&mut self, stage: &str, samples: &mut [f64]);
    fn scalar(&mut self, stage: &str, value: f64) -> f64;
}

pub(crate) struct NoopTap;

impl StageTap for NoopTap {
    fn plane(&mut self, _stage: &str, _samples: &mut [f64]) {}
    fn scalar(&mut self, _stage: &str, value: f64) -> f64 {
        value
    }
}

fn smooth_plane(
    samples: &[f64],
    width: usize,
    height: usize,
    sigma: f64,
    smoother: &Smoother,
) -> Vec<f64> {
    match smoother {
        Smoother::Gaussian { sigma: ksigma } => gaussian_smooth(samples, width, height, *ksigma),
        Smoother::Nlm {
            patch_radius,
            search_radius,
        } => nlm_smooth(samples, width, height, sigma, *patch_radius, *search_radius),
        Smoother::External { .. } => unreachable!("external hook bypasses plane smoothing"),
    }
}

fn external_exchange(
    frame: &FloatFrame,
    dir: &PathBuf,
    timeout_ms: u64,
    poll_interval_ms: u64,
    tag: u64,
) -> Result<FloatFrame> {
    std::fs::create_dir_all(dir)?;
    let input_path = dir.join(format!("{tag:04}_input.pgm"));
    let output_path = dir.join(format!("{tag:04}_output.pgm"));
    let quantized: Vec<u16> = frame
        .samples
        .iter()
        .map(|&v| v.round().clamp(0.0, 65535.0) as u16)
        .collect();
    crate::io::write_pgm(&input_path, frame.width, frame.height, &quantized)?;

    let deadline = Instant::now() + Duration::from_millis(timeout_ms);
    loop {
        if output_path.exists() {
            // Partially written files fail to parse; keep polling until the
            // deadline in that case.
            if let Ok((w, h, samples)) = crate::io::read_pgm(&output_path) {
                if w != frame.width || h != frame.height {
                    return Err(Error::argument(format!(
                        "external denoiser returned {w}x{h}, expected {}x{}",
                        frame.width, frame.height
                    )));
                }
                let samples = samples.into_iter().map(|v| v as f64).collect();
                return FloatFrame::new(w, h, samples, "residual_denoised");
            }
        }
        if Instant::now() >= deadline {
            return Err(Error::HookTimeout {
                path: output_path,
                timeout_ms,
            });
        }
        std::thread::sleep(Duration::from_millis(poll_interval_ms.max(1)));
    }
}

fn residual_denoise_tap(
    frame: &FloatFrame,
    a: f64,
    b: f64,
    config: &DenoiseConfig,
    floor: Option<f64>,
    frame_tag: u64,
    tap: &mut dyn StageTap,
) -> Result<FloatFrame> {
    config.validate()?;
    let mut out = if let Smoother::External {
        dir,
        timeout_ms,
        poll_interval_ms,
    } = &config.smoother
    {
        // The external model owns the whole residual stage and works on the
        // DN-domain frame directly.
        let mut hooked = external_exchange(frame, dir, *timeout_ms, *poll_interval_ms, frame_tag)?;
        tap.plane("smoothed", &mut hooked.samples);
        hooked
    } else {
        let mut out = frame.clone();
        let phases: &[(usize, usize)] = if config.process_per_bayer_phase {
            &[(0, 0), (1, 0), (0, 1), (1, 1)]
        } else {
            &[(0, 0)]
        };
        for &(px, py) in phases {
            let sub = if config.process_per_bayer_phase {
                extract_phase(frame, px, py)
            } else {
                frame.clone()
            };
            let mut z = vst_forward(&sub, a, b)?;
            tap.plane("vst_domain", &mut z.samples);
            let mut smoothed =
                smooth_plane(&z.samples, z.width, z.height, config.strength, &config.smoother);
            tap.plane("smoothed", &mut smoothed);
            let z_smoothed = FloatFrame {
                width: z.width,
                height: z.height,
                samples: smoothed,
                provenance: "smoothed".to_string(),
            };
            let restored = vst_inverse(&z_smoothed, a, b)?;
            if config.process_per_bayer_phase {
                write_phase(&mut out, &restored.samples, px, py);
            } else {
                out.samples = restored.samples;
            }
        }
        out
    };

    if let Some(floor) = floor {
        for v in out.samples.iter_mut() {
            *v = v.max(floor);
        }
    }
    out.provenance = "residual_denoised".to_string();
    out.validate()?;
    Ok(out)
}

/// Removes residual Poisson-Gaussian noise from a frame that already had
/// banding and the fixed pattern subtracted. Uses the variance line carried
/// in `config.pg`.
pub fn denoise_residual(frame: &FloatFrame, config: &DenoiseConfig) -> Result<FloatFrame> {
    residual_denoise_tap(
        frame,
        config.pg.a,
        config.pg.b,
        config,
        config.output_floor,
        0,
        &mut NoopTap,
    )
}

/// Every stage output of one pipeline run, retained for ablation reporting.
#[derive(Clone, Debug)]
pub struct PipelineStages {
    pub noisy: FloatFrame,
    pub pbn_removed: FloatFrame,
    pub fpn_removed: FloatFrame,
    pub denoised: FloatFrame,
    pub pbn_estimate: PbnEstimate,
    /// True when banding estimation failed and the stage degraded to
    /// subtracting nothing.
    pub pbn_fallback: bool,
}

pub(crate) fn run_pipeline_tap(
    raw: &RawFrame,
    fpn: &FpnMap,
    pg: &PgParams,
    config: &DenoiseConfig,
    tap: &mut dyn StageTap,
) -> Result<PipelineStages> {
    raw.validate()?;
    config.validate()?;
    if raw.width != fpn.width || raw.height != fpn.height {
        return Err(Error::argument(format!(
            "frame {}x{} does not match fpn map {}x{}",
            raw.width, raw.height, fpn.width, fpn.height
        )));
    }

    let mut noisy = raw.to_float();
    tap.plane("raw_input", &mut noisy.samples);

    let (a, b) = pg.entry_for(raw.analog_gain, true)?;
    let a = tap.scalar("pg_params", a);
    let b = tap.scalar("pg_params", b);

    let theta = config.pbn_theta.unwrap_or((4.0 * b.sqrt()).max(8.0));
    let (mut estimate, pbn_fallback) = match estimate_pbn(&noisy, theta, config.pbn_period) {
        Ok(est) => (est, false),
        Err(Error::EstimationFailed(msg)) => {
            // A live stream must not drop frames over a failed estimate.
            log::warn!("banding estimation failed ({msg}); subtracting nothing");
            (PbnEstimate::zero(config.pbn_period), true)
        }
        Err(e) => return Err(e),
    };
    estimate.kappa = tap.scalar("pbn_kappa", estimate.kappa);
    let mut pbn_removed = remove_pbn(&noisy, &estimate);
    tap.plane("pbn_removed", &mut pbn_removed.samples);

    let mut k_plane: Vec<f64> = fpn.k.iter().map(|&v| v as f64).collect();
    let mut b_plane: Vec<f64> = fpn.b.iter().map(|&v| v as f64).collect();
    tap.plane("fpn_map", &mut k_plane);
    tap.plane("fpn_map", &mut b_plane);
    let u = raw.analog_gain * raw.exposure_time_ms;
    let mut fpn_removed = FloatFrame {
        width: noisy.width,
        height: noisy.height,
        samples: pbn_removed
            .samples
            .iter()
            .enumerate()
            .map(|(idx, &v)| v - (k_plane[idx] * u + b_plane[idx]))
            .collect(),
        provenance: "fpn_removed".to_string(),
    };
    tap.plane("fpn_removed", &mut fpn_removed.samples);

    let floor = config
        .output_floor
        .or(Some(-(raw.black_level as f64)));
    let mut denoised = residual_denoise_tap(
        &fpn_removed,
        a,
        b,
        config,
        floor,
        raw.frame_index,
        tap,
    )?;
    tap.plane("output", &mut denoised.samples);

    Ok(PipelineStages {
        noisy,
        pbn_removed,
        fpn_removed,
        denoised,
        pbn_estimate: estimate,
        pbn_fallback,
    })
}

/// Full denoising chain with stage retention: banding removal, fixed-pattern
/// removal using the frame's own gain and exposure metadata, then the
/// residual stage with coefficients resolved from `pg` at the frame's gain.
pub fn denoise_pipeline_stages(
    raw: &RawFrame,
    fpn: &FpnMap,
    pg: &PgParams,
    config: &DenoiseConfig,
) -> Result<PipelineStages> {
    run_pipeline_tap(raw, fpn, pg, config, &mut NoopTap)
}

/// Final output of [`denoise_pipeline_stages`].
pub fn denoise_pipeline(
    raw: &RawFrame,
    fpn: &FpnMap,
    pg: &PgParams,
    config: &DenoiseConfig,
) -> Result<FloatFrame> {
    Ok(denoise_pipeline_stages(raw, fpn, pg, config)?.denoised)
}
