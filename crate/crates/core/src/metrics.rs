//! Quality metrics, paired test-set construction, and the ablation report.
//!
//! Metrics run in the raw domain, before any demosaic. PSNR uses the
//! container peak (`2^bit_depth - 1`) unless told otherwise and returns the
//! +infinity sentinel on identical frames. SSIM is the standard
//! luminance-contrast-structure product over 8x8 uniform sliding windows
//! (stride 1) with C1 = (0.01*peak)^2, C2 = (0.03*peak)^2; a Gaussian window
//! is available as an option. Reference frames for pairs follow the
//! dark-subtraction recipe: average a lit stack, average a dark stack taken
//! under the same settings, and subtract.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoise::{denoise_pipeline_stages, DenoiseConfig};
use crate::error::{Error, Result};
use crate::fpn::FpnMap;
use crate::frame::{temporal_average, FloatFrame, FrameStack, RawFrame};
use crate::pg::PgParams;

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` when the frames match.
pub fn psnr(reference: &FloatFrame, test: &FloatFrame, peak: f64) -> Result<f64> {
    if !reference.same_shape(test) {
        return Err(Error::argument("psnr requires frames of the same shape"));
    }
    if !(peak > 0.0) {
        return Err(Error::argument("psnr peak must be > 0"));
    }
    let n = reference.samples.len() as f64;
    let mse = reference
        .samples
        .iter()
        .zip(test.samples.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Window shape for SSIM local statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SsimWindow {
    /// 8x8 uniform window, stride 1. The default everywhere.
    Uniform8,
    /// Gaussian-weighted window of `2*radius + 1` taps.
    Gaussian { radius: usize, sigma: f64 },
}

impl Default for SsimWindow {
    fn default() -> Self {
        SsimWindow::Uniform8
    }
}

/// Mean local SSIM with the default uniform 8x8 window.
pub fn ssim(reference: &FloatFrame, test: &FloatFrame, peak: f64) -> Result<f64> {
    ssim_with(reference, test, peak, SsimWindow::Uniform8)
}

/// Mean local SSIM with an explicit window choice.
pub fn ssim_with(
    reference: &FloatFrame,
    test: &FloatFrame,
    peak: f64,
    window: SsimWindow,
) -> Result<f64> {
    if !reference.same_shape(test) {
        return Err(Error::argument("ssim requires frames of the same shape"));
    }
    if !(peak > 0.0) {
        return Err(Error::argument("ssim peak must be > 0"));
    }
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    match window {
        SsimWindow::Uniform8 => ssim_uniform(reference, test, 8, c1, c2),
        SsimWindow::Gaussian { radius, sigma } => {
            ssim_gaussian(reference, test, radius, sigma, c1, c2)
        }
    }
}

/// Summed-area table with a zero top row and left column.
fn integral(values: impl Iterator<Item = f64>, width: usize, height: usize) -> Vec<f64> {
    let stride = width + 1;
    let mut table = vec![0.0f64; stride * (height + 1)];
    let mut values = values;
    for y in 1..=height {
        let mut row_sum = 0.0;
        for x in 1..=width {
            row_sum += values.next().expect("value count matches dimensions");
            table[y * stride + x] = table[(y - 1) * stride + x] + row_sum;
        }
    }
    table
}

#[inline]
fn window_sum(table: &[f64], stride: usize, x: usize, y: usize, win: usize) -> f64 {
    table[(y + win) * stride + (x + win)] + table[y * stride + x]
        - table[y * stride + (x + win)]
        - table[(y + win) * stride + x]
}

fn ssim_uniform(
    reference: &FloatFrame,
    test: &FloatFrame,
    win: usize,
    c1: f64,
    c2: f64,
) -> Result<f64> {
    let (w, h) = (reference.width, reference.height);
    if w < win || h < win {
        return Err(Error::argument(format!(
            "frame {w}x{h} is smaller than the {win}x{win} ssim window"
        )));
    }
    let stride = w + 1;
    let sx = integral(reference.samples.iter().copied(), w, h);
    let sy = integral(test.samples.iter().copied(), w, h);
    let sxx = integral(reference.samples.iter().map(|&v| v * v), w, h);
    let syy = integral(test.samples.iter().map(|&v| v * v), w, h);
    let sxy = integral(
        reference
            .samples
            .iter()
            .zip(test.samples.iter())
            .map(|(&a, &b)| a * b),
        w,
        h,
    );

    let n = (win * win) as f64;
    let mut total = 0.0f64;
    let mut windows = 0usize;
    for y in 0..=h - win {
        for x in 0..=w - win {
            let mx = window_sum(&sx, stride, x, y, win) / n;
            let my = window_sum(&sy, stride, x, y, win) / n;
            let vx = window_sum(&sxx, stride, x, y, win) / n - mx * mx;
            let vy = window_sum(&syy, stride, x, y, win) / n - my * my;
            let cov = window_sum(&sxy, stride, x, y, win) / n - mx * my;
            let value = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            total += value;
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

fn ssim_gaussian(
    reference: &FloatFrame,
    test: &FloatFrame,
    radius: usize,
    sigma: f64,
    c1: f64,
    c2: f64,
) -> Result<f64> {
    let size = 2 * radius + 1;
    let (w, h) = (reference.width, reference.height);
    if w < size || h < size || !(sigma > 0.0) {
        return Err(Error::argument(
            "frame smaller than the gaussian ssim window or sigma <= 0",
        ));
    }
    let mut weights = vec![0.0f64; size * size];
    let mut wsum = 0.0;
    for dy in 0..size {
        for dx in 0..size {
            let rx = dx as f64 - radius as f64;
            let ry = dy as f64 - radius as f64;
            let val = (-(rx * rx + ry * ry) / (2.0 * sigma * sigma)).exp();
            weights[dy * size + dx] = val;
            wsum += val;
        }
    }
    for v in weights.iter_mut() {
        *v /= wsum;
    }

    let mut total = 0.0f64;
    let mut windows = 0usize;
    for y in 0..=h - size {
        for x in 0..=w - size {
            let (mut mx, mut my) = (0.0, 0.0);
            for dy in 0..size {
                for dx in 0..size {
                    let wgt = weights[dy * size + dx];
                    mx += wgt * reference.at(x + dx, y + dy);
                    my += wgt * test.at(x + dx, y + dy);
                }
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for dy in 0..size {
                for dx in 0..size {
                    let wgt = weights[dy * size + dx];
                    let a = reference.at(x + dx, y + dy) - mx;
                    let b = test.at(x + dx, y + dy) - my;
                    vx += wgt * a * a;
                    vy += wgt * b * b;
                    cov += wgt * a * b;
                }
            }
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

/// Analog-gain bucket used by the ablation report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GainClass {
    Low,
    Medium,
    Large,
}

impl GainClass {
    pub fn as_str(self) -> &'static str {
        match self {
            GainClass::Low => "Low",
            GainClass::Medium => "Medium",
            GainClass::Large => "Large",
        }
    }
}

/// Boundaries mapping analog gain to a class.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GainThresholds {
    /// Gains `<= low_max` are Low.
    pub low_max: f64,
    /// Gains `<= medium_max` (and above `low_max`) are Medium.
    pub medium_max: f64,
}

impl Default for GainThresholds {
    fn default() -> Self {
        GainThresholds {
            low_max: 4.0,
            medium_max: 12.0,
        }
    }
}

impl GainThresholds {
    pub fn classify(&self, gain: f64) -> GainClass {
        if gain <= self.low_max {
            GainClass::Low
        } else if gain <= self.medium_max {
            GainClass::Medium
        } else {
            GainClass::Large
        }
    }
}

/// One evaluation pair: a single noisy capture and its dark-subtracted
/// temporal-average reference.
#[derive(Clone, Debug)]
pub struct TestPair {
    pub id: String,
    pub noisy: RawFrame,
    pub clean: FloatFrame,
    pub gain_class: GainClass,
}

/// Builds a pair from a dark stack and a lit stack captured under the same
/// settings: reference = mean(lit) - mean(dark), noisy = lit[sample_index].
pub fn build_test_pair(
    dark_stack: &FrameStack,
    lit_stack: &FrameStack,
    sample_index: usize,
    thresholds: &GainThresholds,
) -> Result<TestPair> {
    let d = dark_stack.settings();
    let l = lit_stack.settings();
    let same = d.width == l.width
        && d.height == l.height
        && d.bit_depth == l.bit_depth
        && d.bayer_pattern == l.bayer_pattern
        && d.analog_gain == l.analog_gain
        && d.exposure_time_ms == l.exposure_time_ms
        && d.sensor_id == l.sensor_id;
    if !same {
        return Err(Error::argument(
            "dark and lit stacks must share shape and capture settings",
        ));
    }
    if sample_index >= lit_stack.len() {
        return Err(Error::argument(format!(
            "sample index {sample_index} out of range for {} lit frames",
            lit_stack.len()
        )));
    }
    let lit_mean = temporal_average(lit_stack);
    let dark_mean = temporal_average(dark_stack);
    let samples = lit_mean
        .samples
        .iter()
        .zip(dark_mean.samples.iter())
        .map(|(&l, &d)| l - d)
        .collect();
    let clean = FloatFrame {
        width: lit_mean.width,
        height: lit_mean.height,
        samples,
        provenance: format!(
            "test_pair(lit={},dark={})",
            lit_stack.len(),
            dark_stack.len()
        ),
    };
    let noisy = lit_stack.frames()[sample_index].clone();
    let gain_class = thresholds.classify(noisy.analog_gain);
    Ok(TestPair {
        id: format!("{}_{:04}", noisy.sensor_id, noisy.frame_index),
        noisy,
        clean,
        gain_class,
    })
}

pub const STAGE_NAMES: [&str; 4] = ["noisy", "pbn_removed", "fpn_removed", "denoised"];

/// Mean metrics for one pipeline stage.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct StageMetrics {
    pub psnr_mean: f64,
    pub ssim_mean: f64,
}

/// Metrics of one gain class (or the overall bucket).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ClassReport {
    pub pair_count: usize,
    #[serde(flatten)]
    pub stages: BTreeMap<String, StageMetrics>,
}

/// Stage-by-stage metric table in the shape of the denoising ablation:
/// rows noisy / banding removed / fixed pattern removed / denoised, columns
/// per gain class plus the overall bucket.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationReport {
    pub pairs: usize,
    pub classes: BTreeMap<String, ClassReport>,
}

impl AblationReport {
    /// Mean PSNR of a stage within a class bucket.
    pub fn stage_psnr(&self, class: &str, stage: &str) -> Option<f64> {
        self.classes
            .get(class)
            .and_then(|c| c.stages.get(stage))
            .map(|m| m.psnr_mean)
    }

    /// Aligned text table mirroring the ablation layout.
    pub fn render_table(&self) -> String {
        let classes = ["Low", "Medium", "Large", "All"];
        let mut out = String::new();
        out.push_str(&format!("{:<14}", "Stage"));
        for class in classes {
            out.push_str(&format!("|{:^17}", class));
        }
        out.push('\n');
        out.push_str(&format!("{:<14}", ""));
        for _ in classes {
            out.push_str(&format!("|{:>8} {:>8}", "PSNR", "SSIM"));
        }
        out.push('\n');
        out.push_str(&"-".repeat(14 + classes.len() * 18));
        out.push('\n');
        for stage in STAGE_NAMES {
            out.push_str(&format!("{stage:<14}"));
            for class in classes {
                match self.classes.get(class).and_then(|c| c.stages.get(stage)) {
                    Some(m) => {
                        out.push_str(&format!("|{:>8.2} {:>8.4}", m.psnr_mean, m.ssim_mean))
                    }
                    None => out.push_str(&format!("|{:>8} {:>8}", "-", "-")),
                }
            }
            out.push('\n');
        }
        let counts: Vec<String> = classes
            .iter()
            .filter_map(|c| {
                self.classes
                    .get(*c)
                    .map(|r| format!("{c}: {}", r.pair_count))
            })
            .collect();
        out.push_str(&format!("pairs  {}\n", counts.join(", ")));
        out
    }
}

struct PairMetrics {
    gain_class: GainClass,
    // Indexed like STAGE_NAMES.
    psnr: [f64; 4],
    ssim: [f64; 4],
}

/// Runs the full pipeline with stage retention over every pair and
/// aggregates mean PSNR/SSIM per stage, per gain class, and overall.
pub fn evaluate_suite(
    pairs: &[TestPair],
    fpn: &FpnMap,
    pg: &PgParams,
    config: &DenoiseConfig,
) -> Result<AblationReport> {
    if pairs.is_empty() {
        return Err(Error::argument("cannot evaluate an empty pair list"));
    }
    let per_pair: Vec<PairMetrics> = pairs
        .par_iter()
        .map(|pair| -> Result<PairMetrics> {
            let peak = pair.noisy.max_value() as f64;
            let stages = denoise_pipeline_stages(&pair.noisy, fpn, pg, config)?;
            let frames = [
                &stages.noisy,
                &stages.pbn_removed,
                &stages.fpn_removed,
                &stages.denoised,
            ];
            let mut psnr_v = [0.0; 4];
            let mut ssim_v = [0.0; 4];
            for (i, frame) in frames.iter().enumerate() {
                psnr_v[i] = psnr(&pair.clean, frame, peak)?;
                ssim_v[i] = ssim(&pair.clean, frame, peak)?;
            }
            Ok(PairMetrics {
                gain_class: pair.gain_class,
                psnr: psnr_v,
                ssim: ssim_v,
            })
        })
        .collect::<Result<_>>()?;

    let mut buckets: BTreeMap<String, Vec<&PairMetrics>> = BTreeMap::new();
    for m in &per_pair {
        buckets
            .entry(m.gain_class.as_str().to_string())
            .or_default()
            .push(m);
        buckets.entry("All".to_string()).or_default().push(m);
    }

    let mut classes = BTreeMap::new();
    for (name, metrics) in buckets {
        let n = metrics.len() as f64;
        let mut stages = BTreeMap::new();
        for (i, stage) in STAGE_NAMES.iter().enumerate() {
            let psnr_mean = metrics.iter().map(|m| m.psnr[i]).sum::<f64>() / n;
            let ssim_mean = metrics.iter().map(|m| m.ssim[i]).sum::<f64>() / n;
            stages.insert(
                stage.to_string(),
                StageMetrics {
                    psnr_mean,
                    ssim_mean,
                },
            );
        }
        classes.insert(
            name,
            ClassReport {
                pair_count: metrics.len(),
                stages,
            },
        );
    }

    Ok(AblationReport {
        pairs: pairs.len(),
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::BayerPattern;

    fn flat(w: usize, h: usize, v: f64) -> FloatFrame {
        FloatFrame::constant(w, h, v, "t")
    }

    #[test]
    fn identical_frames_hit_the_infinity_sentinel() {
        let f = flat(8, 8, 123.0);
        assert_eq!(psnr(&f, &f, 255.0).unwrap(), f64::INFINITY);
        assert!((ssim(&f, &f, 255.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_offset_psnr_matches_closed_form() {
        let a = flat(16, 16, 100.0);
        let b = flat(16, 16, 116.0);
        let expected = 20.0 * (255.0f64 / 16.0).log10();
        let got = psnr(&a, &b, 255.0).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn offset_equal_to_peak_gives_zero_db() {
        let a = flat(8, 8, 0.0);
        let b = flat(8, 8, 255.0);
        assert!((psnr(&a, &b, 255.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn psnr_is_symmetric_and_shift_invariant() {
        let a = FloatFrame::new(8, 8, (0..64).map(|i| i as f64).collect(), "t").unwrap();
        let b = FloatFrame::new(8, 8, (0..64).map(|i| (i * 3 % 50) as f64).collect(), "t").unwrap();
        let ab = psnr(&a, &b, 255.0).unwrap();
        let ba = psnr(&b, &a, 255.0).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        let a2 = a.map("t", |v| v + 7.5);
        let b2 = b.map("t", |v| v + 7.5);
        assert!((psnr(&a2, &b2, 255.0).unwrap() - ab).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = flat(8, 8, 1.0);
        let b = flat(8, 6, 1.0);
        assert!(psnr(&a, &b, 255.0).is_err());
        assert!(ssim(&a, &b, 255.0).is_err());
        let small = flat(4, 4, 1.0);
        assert!(ssim(&small, &small, 255.0).is_err());
    }

    #[test]
    fn negated_checkerboard_drives_ssim_negative() {
        // Zero-mean +-100 checkerboard against its negation: luminance term
        // is 1, structure term is (-2*var + C2)/(2*var + C2).
        let (w, h) = (16, 16);
        let c = 100.0;
        let samples: Vec<f64> = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                if (x + y) % 2 == 0 {
                    c
                } else {
                    -c
                }
            })
            .collect();
        let a = FloatFrame::new(w, h, samples.clone(), "t").unwrap();
        let b = FloatFrame::new(w, h, samples.iter().map(|v| -v).collect(), "t").unwrap();
        let c2 = (0.03f64 * 255.0).powi(2);
        let var = c * c;
        let expected = (-2.0 * var + c2) / (2.0 * var + c2);
        let got = ssim(&a, &b, 255.0).unwrap();
        assert!(got < 0.0);
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn constant_offset_ssim_matches_luminance_term() {
        let m1 = 100.0;
        let m2 = 140.0;
        let a = flat(16, 16, m1);
        let b = flat(16, 16, m2);
        let c1 = (0.01f64 * 255.0).powi(2);
        let expected = (2.0 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
        let got = ssim(&a, &b, 255.0).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn ssim_is_symmetric() {
        let a = FloatFrame::new(
            16,
            16,
            (0..256).map(|i| (i * 37 % 211) as f64).collect(),
            "t",
        )
        .unwrap();
        let b = FloatFrame::new(
            16,
            16,
            (0..256).map(|i| (i * 53 % 197) as f64).collect(),
            "t",
        )
        .unwrap();
        let ab = ssim(&a, &b, 255.0).unwrap();
        let ba = ssim(&b, &a, 255.0).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn gaussian_window_option_works() {
        let a = FloatFrame::new(
            24,
            24,
            (0..576).map(|i| (i % 97) as f64).collect(),
            "t",
        )
        .unwrap();
        let val = ssim_with(
            &a,
            &a,
            255.0,
            SsimWindow::Gaussian {
                radius: 5,
                sigma: 1.5,
            },
        )
        .unwrap();
        assert!((val - 1.0).abs() < 1e-12);
    }

    fn stack_of(value: u16, n: usize, gain: f64) -> FrameStack {
        let frame = RawFrame {
            width: 16,
            height: 16,
            samples: vec![value; 256],
            bit_depth: 12,
            bayer_pattern: BayerPattern::Rggb,
            black_level: 0,
            analog_gain: gain,
            exposure_time_ms: 4.0,
            sensor_id: "m".to_string(),
            frame_index: 0,
        };
        FrameStack::new(vec![frame; n]).unwrap()
    }

    #[test]
    fn noiseless_pair_subtracts_the_dark_mean() {
        let dark = stack_of(10, 8, 2.0);
        let lit = stack_of(100, 8, 2.0);
        let pair = build_test_pair(&dark, &lit, 3, &GainThresholds::default()).unwrap();
        assert!(pair.clean.samples.iter().all(|&v| v == 90.0));
        assert!(pair.noisy.samples.iter().all(|&v| v == 100));
        assert_eq!(pair.gain_class, GainClass::Low);
        assert!(pair.clean.provenance.contains("lit=8"));
        assert!(pair.clean.provenance.contains("dark=8"));
    }

    #[test]
    fn mismatched_stack_settings_are_rejected() {
        let dark = stack_of(10, 4, 2.0);
        let mut frames = stack_of(100, 4, 2.0).frames().to_vec();
        for f in frames.iter_mut() {
            f.exposure_time_ms = 8.0;
        }
        let lit = FrameStack::new(frames).unwrap();
        assert!(matches!(
            build_test_pair(&dark, &lit, 0, &GainThresholds::default()),
            Err(Error::Argument(_))
        ));
        let lit_short = stack_of(100, 4, 2.0);
        assert!(build_test_pair(&dark, &lit_short, 4, &GainThresholds::default()).is_err());
    }

    #[test]
    fn gain_classes_follow_thresholds() {
        let t = GainThresholds::default();
        assert_eq!(t.classify(2.0), GainClass::Low);
        assert_eq!(t.classify(8.0), GainClass::Medium);
        assert_eq!(t.classify(16.0), GainClass::Large);
    }

    #[test]
    fn empty_suite_is_rejected() {
        let fpn = FpnMap::zeros(16, 16, "m");
        let pg = PgParams::new("m");
        let config = DenoiseConfig::default();
        assert!(matches!(
            evaluate_suite(&[], &fpn, &pg, &config),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn report_table_renders_all_stages() {
        let mut stages = BTreeMap::new();
        for s in STAGE_NAMES {
            stages.insert(
                s.to_string(),
                StageMetrics {
                    psnr_mean: 30.0,
                    ssim_mean: 0.9,
                },
            );
        }
        let mut classes = BTreeMap::new();
        classes.insert(
            "All".to_string(),
            ClassReport {
                pair_count: 3,
                stages,
            },
        );
        let report = AblationReport { pairs: 3, classes };
        let table = report.render_table();
        for s in STAGE_NAMES {
            assert!(table.contains(s), "missing {s} in\n{table}");
        }
        assert!(table.contains("All: 3"));
    }
}
