//! 12-bit fixed-point execution mode.
//!
//! Simulates running the denoising pipeline with every stage's values and
//! parameters held in 12-bit fixed point instead of f64. Values are quantized
//! (round-to-nearest-even, saturating two's-complement rails); arithmetic
//! between quantization points stays in f64 because the claim under test is
//! output quality, not gate-level equivalence.
//!
//! A range-profiling pass over representative frames picks each stage's
//! fractional bit count and signedness from its observed dynamic range.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::denoise::{run_pipeline_tap, DenoiseConfig, NoopTap, PipelineStages, StageTap};
use crate::error::{Error, Result};
use crate::fpn::FpnMap;
use crate::frame::{FloatFrame, RawFrame};
use crate::metrics::psnr;
use crate::pg::PgParams;

pub const FIXED_TOTAL_BITS: u8 = 12;

/// Stages whose values pass through quantization, in pipeline order.
pub const PIPELINE_STAGE_NAMES: [&str; 9] = [
    "raw_input",
    "pg_params",
    "pbn_kappa",
    "pbn_removed",
    "fpn_map",
    "fpn_removed",
    "vst_domain",
    "smoothed",
    "output",
];

/// Fixed-point format: total bits, fractional bits, signedness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QFormat {
    pub total_bits: u8,
    pub frac_bits: u8,
    pub signed: bool,
}

impl QFormat {
    /// 12-bit format with the given fractional split.
    pub fn q12(frac_bits: u8, signed: bool) -> Result<Self> {
        let q = QFormat {
            total_bits: FIXED_TOTAL_BITS,
            frac_bits,
            signed,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_bits == 0 || self.total_bits > 31 {
            return Err(Error::argument("total_bits must be in 1..=31"));
        }
        if self.frac_bits >= self.total_bits {
            return Err(Error::argument(
                "frac_bits must leave at least one integer bit",
            ));
        }
        Ok(())
    }

    /// Grid spacing.
    pub fn step(&self) -> f64 {
        (2.0f64).powi(-(self.frac_bits as i32))
    }

    pub fn max_code(&self) -> i64 {
        if self.signed {
            (1i64 << (self.total_bits - 1)) - 1
        } else {
            (1i64 << self.total_bits) - 1
        }
    }

    pub fn min_code(&self) -> i64 {
        if self.signed {
            -(1i64 << (self.total_bits - 1))
        } else {
            0
        }
    }

    pub fn max_value(&self) -> f64 {
        self.max_code() as f64 * self.step()
    }

    pub fn min_value(&self) -> f64 {
        self.min_code() as f64 * self.step()
    }
}

/// Rounds to the nearest representable grid point (ties to even) and
/// saturates at the format rails. Returns the integer code and its value.
pub fn quantize_value(x: f64, q: QFormat) -> (i64, f64) {
    let raw = (x / q.step()).round_ties_even();
    let code = (raw as i64).clamp(q.min_code(), q.max_code());
    (code, code as f64 * q.step())
}

/// Per-stage format assignment, serializable as
/// `{"stage": {"frac_bits": N, "signed": bool}}`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct QPlan {
    #[serde(flatten)]
    pub stages: BTreeMap<String, QPlanEntry>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QPlanEntry {
    pub frac_bits: u8,
    pub signed: bool,
}

impl QPlan {
    pub fn format_for(&self, stage: &str) -> Result<QFormat> {
        let entry = self.stages.get(stage).ok_or_else(|| {
            Error::argument(format!("quantization plan missing stage {stage:?}"))
        })?;
        QFormat::q12(entry.frac_bits, entry.signed)
    }

    /// Checks that every pipeline stage has a valid format.
    pub fn validate_complete(&self) -> Result<()> {
        for stage in PIPELINE_STAGE_NAMES {
            self.format_for(stage)?;
        }
        Ok(())
    }
}

/// Records per-stage extrema during a float profiling run.
struct RangeTap {
    ranges: BTreeMap<String, (f64, f64)>,
}

impl RangeTap {
    fn new() -> Self {
        RangeTap {
            ranges: BTreeMap::new(),
        }
    }

    fn observe(&mut self, stage: &str, value: f64) {
        let entry = self
            .ranges
            .entry(stage.to_string())
            .or_insert((f64::INFINITY, f64::NEG_INFINITY));
        entry.0 = entry.0.min(value);
        entry.1 = entry.1.max(value);
    }
}

impl StageTap for RangeTap {
    fn plane(&mut self, stage: &str, samples: &mut [f64]) {
        for &v in samples.iter() {
            self.observe(stage, v);
        }
    }

    fn scalar(&mut self, stage: &str, value: f64) -> f64 {
        self.observe(stage, value);
        value
    }
}

/// Derives a 12-bit plan from the dynamic ranges observed while running the
/// float pipeline over `frames`. A 25% headroom factor guards against other
/// frames exceeding the profiled extrema.
pub fn profile_qplan(
    frames: &[RawFrame],
    fpn: &FpnMap,
    pg: &PgParams,
    config: &DenoiseConfig,
) -> Result<QPlan> {
    if frames.is_empty() {
        return Err(Error::argument("profiling needs at least one frame"));
    }
    let mut tap = RangeTap::new();
    for frame in frames {
        run_pipeline_tap(frame, fpn, pg, config, &mut tap)?;
    }

    const HEADROOM: f64 = 1.25;
    let mut stages = BTreeMap::new();
    for stage in PIPELINE_STAGE_NAMES {
        let entry = match tap.ranges.get(stage) {
            Some(&(min, max)) => {
                let signed = min < 0.0;
                let max_code = if signed {
                    ((1i64 << (FIXED_TOTAL_BITS - 1)) - 1) as f64
                } else {
                    ((1i64 << FIXED_TOTAL_BITS) - 1) as f64
                };
                let max_abs = min.abs().max(max.abs()) * HEADROOM;
                let frac_bits = if max_abs <= 0.0 {
                    (FIXED_TOTAL_BITS - 1) as i32
                } else {
                    (max_code / max_abs).log2().floor() as i32
                };
                QPlanEntry {
                    frac_bits: frac_bits.clamp(0, (FIXED_TOTAL_BITS - 1) as i32) as u8,
                    signed,
                }
            }
            // Stage never exercised under this configuration; give it the
            // finest signed format so it cannot mask anything later.
            None => QPlanEntry {
                frac_bits: FIXED_TOTAL_BITS - 1,
                signed: true,
            },
        };
        stages.insert(stage.to_string(), entry);
    }
    Ok(QPlan { stages })
}

/// Quantizes every tapped value per the plan and counts saturations.
struct QuantizeTap<'a> {
    plan: &'a QPlan,
    saturated: BTreeMap<String, u64>,
    total: BTreeMap<String, u64>,
    error: Option<Error>,
}

impl<'a> QuantizeTap<'a> {
    fn new(plan: &'a QPlan) -> Self {
        QuantizeTap {
            plan,
            saturated: BTreeMap::new(),
            total: BTreeMap::new(),
            error: None,
        }
    }

    fn quantize(&mut self, stage: &str, value: f64) -> f64 {
        let format = match self.plan.format_for(stage) {
            Ok(f) => f,
            Err(e) => {
                if self.error.is_none() {
                    self.error = Some(e);
                }
                return value;
            }
        };
        let (code, quantized) = quantize_value(value, format);
        *self.total.entry(stage.to_string()).or_insert(0) += 1;
        if code == format.max_code() || code == format.min_code() {
            *self.saturated.entry(stage.to_string()).or_insert(0) += 1;
        }
        quantized
    }
}

impl StageTap for QuantizeTap<'_> {
    fn plane(&mut self, stage: &str, samples: &mut [f64]) {
        for v in samples.iter_mut() {
            *v = self.quantize(stage, *v);
        }
    }

    fn scalar(&mut self, stage: &str, value: f64) -> f64 {
        self.quantize(stage, value)
    }
}

/// Comparison between one frame's fixed-point and float pipeline runs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FixedRunStats {
    /// PSNR of the fixed-mode output against the float-mode output.
    pub psnr_vs_float: f64,
    pub max_abs_diff: f64,
    /// Fraction of quantizations that hit a rail, per stage.
    pub saturation: BTreeMap<String, f64>,
}

/// Runs the pipeline twice, float and fixed, and reports the fixed output
/// plus its fidelity against the float output.
pub fn run_pipeline_fixed(
    raw: &RawFrame,
    fpn: &FpnMap,
    pg: &PgParams,
    config: &DenoiseConfig,
    plan: &QPlan,
) -> Result<(FloatFrame, FixedRunStats)> {
    plan.validate_complete()?;

    let float_stages: PipelineStages = run_pipeline_tap(raw, fpn, pg, config, &mut NoopTap)?;
    let mut tap = QuantizeTap::new(plan);
    let fixed_stages = run_pipeline_tap(raw, fpn, pg, config, &mut tap)?;
    if let Some(e) = tap.error {
        return Err(e);
    }

    let peak = raw.max_value() as f64;
    let psnr_vs_float = psnr(&float_stages.denoised, &fixed_stages.denoised, peak)?;
    let max_abs_diff = float_stages
        .denoised
        .samples
        .iter()
        .zip(fixed_stages.denoised.samples.iter())
        .map(|(&a, &b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let saturation = tap
        .total
        .iter()
        .map(|(stage, &total)| {
            let sat = tap.saturated.get(stage).copied().unwrap_or(0);
            (stage.clone(), sat as f64 / total.max(1) as f64)
        })
        .collect();

    Ok((
        fixed_stages.denoised,
        FixedRunStats {
            psnr_vs_float,
            max_abs_diff,
            saturation,
        },
    ))
}
