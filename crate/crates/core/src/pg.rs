//! Poisson-Gaussian noise-strength calibration and synthetic training pairs.
//!
//! After banding and fixed-pattern removal the residual noise obeys
//! `var = a * mean + b` per pixel. The calibration measures that line from
//! flat-field stacks using temporal statistics, which are immune to scene
//! texture: each stack yields a per-pixel (temporal mean, unbiased temporal
//! variance) scatter, the scatters from several illumination levels are
//! pooled, and a straight line is fit by least squares. Training-pair
//! generation replays calibrated noise onto clean frames with crop, flip,
//! right-angle rotation, and contrast augmentation.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpn::{remove_fpn, FpnMap};
use crate::frame::{BayerPattern, FloatFrame, FrameStack, RawFrame};
use crate::pbn::{estimate_pbn, remove_pbn, DEFAULT_PBN_PERIOD};
use crate::synth::{
    pixel_rng, synthesize_noise, CaptureSettings, NoiseModelParams, NOISE_RNG_ALGORITHM,
};

/// Variance-line coefficients for one analog gain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PgEntry {
    pub gain: f64,
    /// DN per photo-event: slope of the variance line.
    pub a: f64,
    /// DN^2 intercept: read noise plus quantization variance.
    pub b: f64,
}

/// Calibrated variance lines, one entry per analog gain.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PgParams {
    pub entries: Vec<PgEntry>,
    /// Free-text provenance: where the entries came from, including any
    /// negative-fit clamping.
    pub source: String,
}

impl PgParams {
    pub fn new(source: &str) -> Self {
        PgParams {
            entries: Vec::new(),
            source: source.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            if !(e.a >= 0.0) || !(e.b >= 0.0) {
                return Err(Error::argument(format!(
                    "pg entry at gain {} has negative coefficients",
                    e.gain
                )));
            }
        }
        Ok(())
    }

    /// Adds or replaces the entry for a gain.
    pub fn insert(&mut self, entry: PgEntry) {
        if let Some(existing) = self
            .entries
            .iter_mut()
            .find(|e| (e.gain - entry.gain).abs() < 1e-9)
        {
            *existing = entry;
        } else {
            self.entries.push(entry);
            self.entries.sort_by(|x, y| x.gain.total_cmp(&y.gain));
        }
    }

    /// Coefficients at a gain: exact match, or a linear blend of the two
    /// nearest entries when interpolation is allowed. Blended coefficients
    /// are clamped at zero.
    pub fn entry_for(&self, gain: f64, interpolate: bool) -> Result<(f64, f64)> {
        if let Some(e) = self.entries.iter().find(|e| (e.gain - gain).abs() < 1e-9) {
            return Ok((e.a, e.b));
        }
        if !interpolate {
            return Err(Error::argument(format!(
                "no variance-line entry at gain {gain} and interpolation is disabled"
            )));
        }
        match self.entries.len() {
            0 => return Err(Error::argument("no calibrated variance-line entries")),
            // With a single calibrated gain the nearest entry is all there is.
            1 => return Ok((self.entries[0].a, self.entries[0].b)),
            _ => {}
        }
        let mut sorted: Vec<&PgEntry> = self.entries.iter().collect();
        sorted.sort_by(|x, y| {
            (x.gain - gain)
                .abs()
                .total_cmp(&(y.gain - gain).abs())
        });
        let (e0, e1) = (sorted[0], sorted[1]);
        let span = e1.gain - e0.gain;
        let w = if span.abs() < 1e-12 {
            0.0
        } else {
            (gain - e0.gain) / span
        };
        let a = (e0.a + w * (e1.a - e0.a)).max(0.0);
        let b = (e0.b + w * (e1.b - e0.b)).max(0.0);
        Ok((a, b))
    }
}

/// Outcome of a flat-field calibration run.
#[derive(Clone, Debug)]
pub struct PgCalibration {
    pub entry: PgEntry,
    /// Pooled (mean, variance) samples that fed the fit.
    pub samples_used: usize,
    /// Samples discarded for sitting within 2% of full scale.
    pub samples_discarded: usize,
    /// True when a slightly negative fit was clamped to zero.
    pub clamped: bool,
}

/// Calibrates the variance line for one analog gain from flat-field stacks
/// at two or more illumination levels.
///
/// Every frame has banding and the fixed pattern removed before the temporal
/// statistics are taken, so the mean axis reflects clean signal level.
/// Pixels whose temporal mean sits within 2% of full scale are discarded;
/// clipping there biases the variance downward.
pub fn calibrate_pg(
    flat_sets: &[FrameStack],
    fpn: &FpnMap,
    pbn_theta: f64,
) -> Result<PgCalibration> {
    if flat_sets.len() < 2 {
        return Err(Error::RankDeficient(format!(
            "need >= 2 illumination levels, got {}",
            flat_sets.len()
        )));
    }
    let gain = flat_sets[0].settings().analog_gain;
    let full_scale = flat_sets[0].settings().max_value() as f64;
    for (i, set) in flat_sets.iter().enumerate() {
        if set.len() < 16 {
            return Err(Error::argument(format!(
                "flat set {i} has {} frames; need >= 16 for temporal statistics",
                set.len()
            )));
        }
        if set.settings().analog_gain != gain {
            return Err(Error::argument(
                "all flat sets must share one analog gain",
            ));
        }
        if set.width() != fpn.width || set.height() != fpn.height {
            return Err(Error::argument(format!(
                "flat set {i} does not match the fpn map shape"
            )));
        }
    }

    let mut means = Vec::new();
    let mut vars = Vec::new();
    let mut discarded = 0usize;
    let mut set_means = Vec::with_capacity(flat_sets.len());
    for (i, set) in flat_sets.iter().enumerate() {
        let s = set.settings();
        let cleaned: Vec<FloatFrame> = set
            .frames()
            .iter()
            .map(|f| {
                let float = f.to_float();
                let est = estimate_pbn(&float, pbn_theta, DEFAULT_PBN_PERIOD)
                    .map_err(|e| Error::EstimationFailed(format!("flat set {i}: {e}")))?;
                let debanded = remove_pbn(&float, &est);
                remove_fpn(&debanded, fpn, s.analog_gain, s.exposure_time_ms)
            })
            .collect::<Result<_>>()?;

        let n = cleaned.len() as f64;
        let pixels = fpn.width * fpn.height;
        let mut level_sum = 0.0;
        for idx in 0..pixels {
            let mut sum = 0.0;
            for f in &cleaned {
                sum += f.samples[idx];
            }
            let mean = sum / n;
            let mut sq = 0.0;
            for f in &cleaned {
                sq += (f.samples[idx] - mean).powi(2);
            }
            let var = sq / (n - 1.0);
            level_sum += mean;
            if mean >= 0.98 * full_scale {
                discarded += 1;
                continue;
            }
            means.push(mean);
            vars.push(var);
        }
        set_means.push(level_sum / pixels as f64);
    }

    let spread = set_means.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - set_means.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(spread > 1e-9) {
        return Err(Error::RankDeficient(
            "flat sets sit at a single illumination level".into(),
        ));
    }
    if means.len() < 2 {
        return Err(Error::RankDeficient(
            "too few usable mean/variance samples after clipping guard".into(),
        ));
    }

    let n = means.len() as f64;
    let mx = means.iter().sum::<f64>() / n;
    let my = vars.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in means.iter().zip(vars.iter()) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if !(sxx > 0.0) {
        return Err(Error::RankDeficient(
            "pooled means are degenerate; cannot fit a line".into(),
        ));
    }
    let mut a = sxy / sxx;
    let mut b = my - a * mx;

    // A slightly negative slope is fit noise on a flat variance line; a
    // strongly negative one means the data does not follow the model.
    let slope_tolerance = 0.01 * (my / mx.abs().max(1.0)).max(1e-6);
    let mut clamped = false;
    if a < 0.0 {
        if a < -slope_tolerance {
            return Err(Error::CalibrationQuality(format!(
                "fitted variance slope {a:.6} is negative beyond tolerance {slope_tolerance:.6}"
            )));
        }
        a = 0.0;
        b = my;
        clamped = true;
    }
    if b < 0.0 {
        b = 0.0;
        clamped = true;
    }

    Ok(PgCalibration {
        entry: PgEntry { gain, a, b },
        samples_used: means.len(),
        samples_discarded: discarded,
        clamped,
    })
}

/// Crop geometry recorded in the training manifest.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Augmentation applied to one training pair.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Augmentation {
    pub flip_h: bool,
    pub flip_v: bool,
    /// Clockwise quarter turns, 0..=3.
    pub rot90: u8,
    pub contrast: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainingPairRecord {
    pub index: usize,
    pub source_index: usize,
    pub clean_path: String,
    pub noisy_path: String,
    pub crop: CropRect,
    pub augmentation: Augmentation,
}

/// Manifest written alongside a generated pair dataset. Paths are relative
/// to the manifest's directory so the dataset can be relocated.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub algorithm: String,
    pub seed: u64,
    pub gain: f64,
    pub a: f64,
    pub b: f64,
    pub pairs: Vec<TrainingPairRecord>,
}

#[derive(Clone, Debug)]
pub struct TrainingPairOptions {
    pub crop_width: usize,
    pub crop_height: usize,
    /// Allow blending between calibrated gains when `gain` has no entry.
    pub interpolate_gain: bool,
    /// Contrast multiplier range; set both ends to 1.0 to disable.
    pub contrast_range: (f64, f64),
}

impl Default for TrainingPairOptions {
    fn default() -> Self {
        TrainingPairOptions {
            crop_width: 128,
            crop_height: 128,
            interpolate_gain: true,
            contrast_range: (0.6, 1.4),
        }
    }
}

struct MosaicView {
    frame: FloatFrame,
    pattern: BayerPattern,
}

fn crop_even(src: &FloatFrame, rect: CropRect) -> FloatFrame {
    let mut samples = Vec::with_capacity(rect.width * rect.height);
    for y in rect.y..rect.y + rect.height {
        let row = &src.samples[y * src.width..(y + 1) * src.width];
        samples.extend_from_slice(&row[rect.x..rect.x + rect.width]);
    }
    FloatFrame {
        width: rect.width,
        height: rect.height,
        samples,
        provenance: src.provenance.clone(),
    }
}

fn flip_horizontal(view: MosaicView) -> MosaicView {
    let (w, h) = (view.frame.width, view.frame.height);
    let mut samples = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            samples[y * w + x] = view.frame.samples[y * w + (w - 1 - x)];
        }
    }
    MosaicView {
        frame: FloatFrame {
            width: w,
            height: h,
            samples,
            provenance: view.frame.provenance,
        },
        pattern: view.pattern.flipped_horizontal(),
    }
}

fn flip_vertical(view: MosaicView) -> MosaicView {
    let (w, h) = (view.frame.width, view.frame.height);
    let mut samples = vec![0.0; w * h];
    for y in 0..h {
        samples[y * w..(y + 1) * w]
            .copy_from_slice(&view.frame.samples[(h - 1 - y) * w..(h - y) * w]);
    }
    MosaicView {
        frame: FloatFrame {
            width: w,
            height: h,
            samples,
            provenance: view.frame.provenance,
        },
        pattern: view.pattern.flipped_vertical(),
    }
}

fn rotate_cw(view: MosaicView) -> MosaicView {
    let (w, h) = (view.frame.width, view.frame.height);
    let mut samples = vec![0.0; w * h];
    // Clockwise quarter turn: output (x', y') takes input (y', h-1-x').
    for y in 0..w {
        for x in 0..h {
            samples[y * h + x] = view.frame.samples[(h - 1 - x) * w + y];
        }
    }
    MosaicView {
        frame: FloatFrame {
            width: h,
            height: w,
            samples,
            provenance: view.frame.provenance,
        },
        pattern: view.pattern.transposed().flipped_horizontal(),
    }
}

/// Generates `count` (noisy, clean) pairs under `out_dir` and returns the
/// manifest (also written to `out_dir/manifest.json`).
///
/// Deterministic given `seed`: the same seed reproduces the manifest and
/// every pixel bit-for-bit.
pub fn make_training_pairs(
    clean_sources: &[RawFrame],
    params: &PgParams,
    gain: f64,
    count: usize,
    seed: u64,
    out_dir: &Path,
    opts: &TrainingPairOptions,
) -> Result<TrainingManifest> {
    if clean_sources.is_empty() {
        return Err(Error::argument("no clean source frames supplied"));
    }
    let (a, b) = params.entry_for(gain, opts.interpolate_gain)?;
    fs::create_dir_all(out_dir)?;

    let mut manifest = TrainingManifest {
        algorithm: NOISE_RNG_ALGORITHM.to_string(),
        seed,
        gain,
        a,
        b,
        pairs: Vec::with_capacity(count),
    };

    let noise = NoiseModelParams {
        shot_gain_a: a,
        read_sigma: b.sqrt(),
        quant_step: 0.0,
        fpn_path: None,
        pbn: None,
        seed,
    };

    for index in 0..count {
        // Stream tag u64::MAX keeps pair-level draws disjoint from the
        // per-pixel noise streams of the same seed.
        let mut rng = pixel_rng(seed, index as u64, u64::MAX);
        let source_index = rng.random_range(0..clean_sources.len());
        let src = &clean_sources[source_index];

        let cw = opts.crop_width.min(src.width) & !1;
        let ch = opts.crop_height.min(src.height) & !1;
        let max_x = (src.width - cw) / 2;
        let max_y = (src.height - ch) / 2;
        let rect = CropRect {
            x: rng.random_range(0..=max_x) * 2,
            y: rng.random_range(0..=max_y) * 2,
            width: cw,
            height: ch,
        };
        let augmentation = Augmentation {
            flip_h: rng.random_range(0..2) == 1,
            flip_v: rng.random_range(0..2) == 1,
            rot90: rng.random_range(0..4) as u8,
            contrast: rng.random_range(opts.contrast_range.0..=opts.contrast_range.1),
        };

        let mut view = MosaicView {
            frame: crop_even(&src.to_float(), rect),
            pattern: src.bayer_pattern,
        };
        if augmentation.flip_h {
            view = flip_horizontal(view);
        }
        if augmentation.flip_v {
            view = flip_vertical(view);
        }
        for _ in 0..augmentation.rot90 {
            view = rotate_cw(view);
        }

        let max = src.max_value() as f64;
        let clean_samples: Vec<u16> = view
            .frame
            .samples
            .iter()
            .map(|&v| (v * augmentation.contrast).round().clamp(0.0, max) as u16)
            .collect();
        let clean = RawFrame {
            width: view.frame.width,
            height: view.frame.height,
            samples: clean_samples,
            bit_depth: src.bit_depth,
            bayer_pattern: view.pattern,
            black_level: src.black_level,
            analog_gain: gain,
            exposure_time_ms: src.exposure_time_ms,
            sensor_id: src.sensor_id.clone(),
            frame_index: index as u64,
        };

        let capture = CaptureSettings {
            bit_depth: clean.bit_depth,
            bayer_pattern: clean.bayer_pattern,
            black_level: clean.black_level,
            analog_gain: gain,
            exposure_time_ms: clean.exposure_time_ms,
            sensor_id: clean.sensor_id.clone(),
            frame_index: index as u64,
        };
        let noisy = synthesize_noise(&clean.to_float(), &noise, None, &capture)?;

        let clean_name = format!("{index:05}_clean.pgm");
        let noisy_name = format!("{index:05}_noisy.pgm");
        crate::io::save_frame(&clean, &out_dir.join(&clean_name))?;
        crate::io::save_frame(&noisy, &out_dir.join(&noisy_name))?;
        manifest.pairs.push(TrainingPairRecord {
            index,
            source_index,
            clean_path: clean_name,
            noisy_path: noisy_name,
            crop: rect,
            augmentation,
        });
    }

    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
    fs::write(out_dir.join("manifest.json"), json + "\n")?;
    Ok(manifest)
}
