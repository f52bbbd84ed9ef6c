//! Forward sensor-noise model.
//!
//! Turns a clean real-valued frame into a realistic noisy raw capture:
//! signal-dependent shot noise first, then additive read noise, ADC
//! quantization noise, fixed-pattern noise predicted from a calibration map,
//! and the periodic column banding, with a final round-and-clamp modeling the
//! ADC output. Generation is seeded and counter-based: every pixel draws from
//! an independent stream keyed by (seed, frame_index, pixel_index), so
//! row-parallel synthesis is bit-identical to sequential synthesis.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpn::FpnMap;
use crate::frame::{max_value_for_depth, BayerPattern, FloatFrame, RawFrame};

/// Name of the per-pixel generator scheme, recorded in dataset manifests so
/// synthetic data is attributable to the algorithm that produced it.
pub const NOISE_RNG_ALGORITHM: &str = "chacha8-pixel-v1";

/// Periodic banding parameters: a square wave of amplitude `kappa` along x.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PbnParams {
    /// Amplitude in DN.
    pub kappa: f64,
    /// Full period in pixels; even, 50% duty cycle.
    #[serde(default = "default_period")]
    pub period: usize,
    /// Column offset of the positive half, in `[0, period)`.
    #[serde(default)]
    pub phase: usize,
}

fn default_period() -> usize {
    4
}

impl PbnParams {
    pub fn new(kappa: f64, period: usize, phase: usize) -> Result<Self> {
        let p = PbnParams {
            kappa,
            period,
            phase,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.period < 2 || self.period % 2 != 0 {
            return Err(Error::argument(format!(
                "banding period must be even and >= 2, got {}",
                self.period
            )));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::argument("banding amplitude must be >= 0"));
        }
        if self.phase >= self.period {
            return Err(Error::argument("banding phase must lie in [0, period)"));
        }
        Ok(())
    }
}

/// Full forward-model parameter set.
///
/// Shot noise is parameterized as `a * Poisson(I / a)` so its mean is the
/// clean signal and its variance `a * I`; `a = 0` is a sentinel that disables
/// the shot term entirely. The FPN map travels by file path in the JSON form
/// and is passed in separately at synthesis time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseModelParams {
    /// DN per photo-event; 0 disables shot noise.
    pub shot_gain_a: f64,
    /// Gaussian read-noise sigma in DN.
    pub read_sigma: f64,
    /// ADC quantization step: uniform noise on [-step/2, step/2]; 0 disables.
    #[serde(default = "default_quant_step")]
    pub quant_step: f64,
    /// Optional calibration map supplying the fixed-pattern term.
    #[serde(default)]
    pub fpn_path: Option<PathBuf>,
    #[serde(default)]
    pub pbn: Option<PbnParams>,
    pub seed: u64,
}

fn default_quant_step() -> f64 {
    1.0
}

impl Default for NoiseModelParams {
    fn default() -> Self {
        NoiseModelParams {
            shot_gain_a: 1.0,
            read_sigma: 0.0,
            quant_step: 1.0,
            fpn_path: None,
            pbn: None,
            seed: 0,
        }
    }
}

impl NoiseModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.shot_gain_a >= 0.0) {
            return Err(Error::argument("shot_gain_a must be >= 0"));
        }
        if !(self.read_sigma >= 0.0) {
            return Err(Error::argument("read_sigma must be >= 0"));
        }
        if !(self.quant_step >= 0.0) {
            return Err(Error::argument("quant_step must be >= 0"));
        }
        if let Some(pbn) = &self.pbn {
            pbn.validate()?;
        }
        Ok(())
    }
}

/// Capture settings stamped onto a synthesized frame.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CaptureSettings {
    pub bit_depth: u8,
    pub bayer_pattern: BayerPattern,
    pub black_level: u16,
    pub analog_gain: f64,
    pub exposure_time_ms: f64,
    pub sensor_id: String,
    pub frame_index: u64,
}

/// Per-column banding offsets for a row of `width` pixels: `+kappa` on the
/// first half-period, `-kappa` on the second.
pub fn pbn_pattern(width: usize, pbn: &PbnParams) -> Vec<f64> {
    let half = pbn.period / 2;
    (0..width)
        .map(|x| {
            let pos = (x as i64 - pbn.phase as i64).rem_euclid(pbn.period as i64) as usize;
            if pos < half {
                pbn.kappa
            } else {
                -pbn.kappa
            }
        })
        .collect()
}

/// Square-wave sign (+1/-1) for one column, without amplitude.
pub(crate) fn pbn_sign(x: usize, period: usize, phase: usize) -> f64 {
    let pos = (x as i64 - phase as i64).rem_euclid(period as i64) as usize;
    if pos < period / 2 {
        1.0
    } else {
        -1.0
    }
}

/// Independent generator stream for one pixel of one frame. The 256-bit key
/// embeds all three coordinates directly, so distinct (seed, frame, pixel)
/// triples can never collide.
pub(crate) fn pixel_rng(seed: u64, frame_index: u64, pixel_index: u64) -> ChaCha8Rng {
    const STREAM_TAG: u64 = 0x7261_7766_7278_6e6f; // ASCII "rawfrxno"
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&frame_index.to_le_bytes());
    key[16..24].copy_from_slice(&pixel_index.to_le_bytes());
    key[24..32].copy_from_slice(&STREAM_TAG.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn synthesize_pixel(
    clean: f64,
    params: &NoiseModelParams,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut value = if params.shot_gain_a > 0.0 && clean > 0.0 {
        let events = Poisson::new(clean / params.shot_gain_a)
            .expect("positive poisson mean")
            .sample(rng);
        params.shot_gain_a * events
    } else {
        clean
    };
    if params.read_sigma > 0.0 {
        value += Normal::new(0.0, params.read_sigma)
            .expect("valid sigma")
            .sample(rng);
    }
    if params.quant_step > 0.0 {
        let half = params.quant_step / 2.0;
        value += Uniform::new_inclusive(-half, half)
            .expect("valid range")
            .sample(rng);
    }
    value
}

/// Applies the full forward model to a clean frame.
///
/// Deterministic given `params.seed` and `capture.frame_index`; the output is
/// rounded to the nearest DN and clamped to the capture bit depth, modeling
/// ADC saturation at both ends.
pub fn synthesize_noise(
    clean: &FloatFrame,
    params: &NoiseModelParams,
    fpn: Option<&FpnMap>,
    capture: &CaptureSettings,
) -> Result<RawFrame> {
    clean.validate()?;
    params.validate()?;
    if clean.samples.iter().any(|&v| v < 0.0) {
        return Err(Error::argument("clean frame must be non-negative"));
    }
    if let Some(map) = fpn {
        if map.width != clean.width || map.height != clean.height {
            return Err(Error::argument(format!(
                "fpn map {}x{} does not match frame {}x{}",
                map.width, map.height, clean.width, clean.height
            )));
        }
    }

    let width = clean.width;
    let u = capture.analog_gain * capture.exposure_time_ms;
    let column_offsets: Option<Vec<f64>> = params.pbn.as_ref().map(|p| pbn_pattern(width, p));
    let max = max_value_for_depth(capture.bit_depth) as f64;

    let mut samples = vec![0u16; clean.samples.len()];
    samples
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let idx = y * width + x;
                let mut rng = pixel_rng(params.seed, capture.frame_index, idx as u64);
                let mut v = synthesize_pixel(clean.samples[idx], params, &mut rng);
                if let Some(map) = fpn {
                    v += map.k[idx] as f64 * u + map.b[idx] as f64;
                }
                if let Some(offsets) = &column_offsets {
                    v += offsets[x];
                }
                *out = v.round().clamp(0.0, max) as u16;
            }
        });

    let frame = RawFrame {
        width,
        height: clean.height,
        samples,
        bit_depth: capture.bit_depth,
        bayer_pattern: capture.bayer_pattern,
        black_level: capture.black_level,
        analog_gain: capture.analog_gain,
        exposure_time_ms: capture.exposure_time_ms,
        sensor_id: capture.sensor_id.clone(),
        frame_index: capture.frame_index,
    };
    frame.validate()?;
    Ok(frame)
}
