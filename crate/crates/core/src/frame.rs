//! Frame containers: integer raw frames, real-valued working frames, and
//! homogeneous frame stacks.
//!
//! All values are kept in DN (digital numbers, the post-ADC integer unit) so
//! calibration constants apply without rescaling. Black level is carried as
//! metadata and never subtracted implicitly. Every type here is immutable
//! after construction and every operation is a pure function of its inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2x2 color-filter-array layout of the sensor mosaic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BayerPattern {
    #[serde(rename = "RGGB")]
    Rggb,
    #[serde(rename = "BGGR")]
    Bggr,
    #[serde(rename = "GRBG")]
    Grbg,
    #[serde(rename = "GBRG")]
    Gbrg,
}

/// Color channel of a CFA site.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CfaColor {
    Red,
    Green,
    Blue,
}

impl BayerPattern {
    /// 2x2 cell as `[top-left, top-right, bottom-left, bottom-right]`.
    pub fn cell(self) -> [CfaColor; 4] {
        use CfaColor::*;
        match self {
            BayerPattern::Rggb => [Red, Green, Green, Blue],
            BayerPattern::Bggr => [Blue, Green, Green, Red],
            BayerPattern::Grbg => [Green, Red, Blue, Green],
            BayerPattern::Gbrg => [Green, Blue, Red, Green],
        }
    }

    /// Color of the CFA site at absolute coordinates `(x, y)`.
    pub fn color_at(self, x: usize, y: usize) -> CfaColor {
        self.cell()[(y % 2) * 2 + (x % 2)]
    }

    fn from_cell(cell: [CfaColor; 4]) -> Self {
        for p in [
            BayerPattern::Rggb,
            BayerPattern::Bggr,
            BayerPattern::Grbg,
            BayerPattern::Gbrg,
        ] {
            if p.cell() == cell {
                return p;
            }
        }
        unreachable!("every valid Bayer cell maps to a named pattern")
    }

    /// Pattern after mirroring the image left-right.
    pub fn flipped_horizontal(self) -> Self {
        let [tl, tr, bl, br] = self.cell();
        Self::from_cell([tr, tl, br, bl])
    }

    /// Pattern after mirroring the image top-bottom.
    pub fn flipped_vertical(self) -> Self {
        let [tl, tr, bl, br] = self.cell();
        Self::from_cell([bl, br, tl, tr])
    }

    /// Pattern after transposing the image (swap x and y).
    pub fn transposed(self) -> Self {
        let [tl, tr, bl, br] = self.cell();
        Self::from_cell([tl, bl, tr, br])
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BayerPattern::Rggb => "RGGB",
            BayerPattern::Bggr => "BGGR",
            BayerPattern::Grbg => "GRBG",
            BayerPattern::Gbrg => "GBRG",
        }
    }
}

impl std::str::FromStr for BayerPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(BayerPattern::Rggb),
            "BGGR" => Ok(BayerPattern::Bggr),
            "GRBG" => Ok(BayerPattern::Grbg),
            "GBRG" => Ok(BayerPattern::Gbrg),
            other => Err(Error::Metadata(format!("unknown bayer pattern {other:?}"))),
        }
    }
}

/// A Bayer-mosaiced integer frame in a 16-bit container, plus the capture
/// metadata needed to interpret and calibrate it.
#[derive(Clone, Debug, PartialEq)]
pub struct RawFrame {
    pub width: usize,
    pub height: usize,
    /// Row-major samples, top-left origin.
    pub samples: Vec<u16>,
    /// Bits per sample actually used by the sensor: 8, 10, 12, or 16.
    pub bit_depth: u8,
    pub bayer_pattern: BayerPattern,
    /// Dark pedestal in DN. Metadata only: nothing here subtracts it.
    pub black_level: u16,
    /// Pre-ADC amplification, >= 1.
    pub analog_gain: f64,
    /// Exposure time in milliseconds, > 0.
    pub exposure_time_ms: f64,
    pub sensor_id: String,
    pub frame_index: u64,
}

impl RawFrame {
    /// Largest representable sample for this frame's bit depth.
    pub fn max_value(&self) -> u16 {
        max_value_for_depth(self.bit_depth)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.width % 2 != 0 || self.height % 2 != 0 {
            return Err(Error::argument(format!(
                "frame dimensions must be even and nonzero, got {}x{}",
                self.width, self.height
            )));
        }
        if self.samples.len() != self.width * self.height {
            return Err(Error::argument(format!(
                "sample count {} does not match {}x{}",
                self.samples.len(),
                self.width,
                self.height
            )));
        }
        if ![8, 10, 12, 16].contains(&self.bit_depth) {
            return Err(Error::Metadata(format!(
                "unsupported bit depth {}",
                self.bit_depth
            )));
        }
        let max = self.max_value();
        if let Some((i, &v)) = self
            .samples
            .iter()
            .enumerate()
            .find(|(_, &v)| v > max)
        {
            return Err(Error::Range(format!(
                "sample {v} at index {i} exceeds {}-bit maximum {max}",
                self.bit_depth
            )));
        }
        if !(self.analog_gain >= 1.0) {
            return Err(Error::Metadata(format!(
                "analog_gain must be >= 1.0, got {}",
                self.analog_gain
            )));
        }
        if !(self.exposure_time_ms > 0.0) {
            return Err(Error::Metadata(format!(
                "exposure_time_ms must be > 0, got {}",
                self.exposure_time_ms
            )));
        }
        Ok(())
    }

    /// Real-valued copy of this frame, in DN.
    pub fn to_float(&self) -> FloatFrame {
        FloatFrame {
            width: self.width,
            height: self.height,
            samples: self.samples.iter().map(|&v| v as f64).collect(),
            provenance: "raw".to_string(),
        }
    }
}

/// Real-valued frame in DN units: temporal averages, calibrated predictions,
/// and intermediate pipeline stages.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatFrame {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<f64>,
    /// Free-text tag recording which operation produced the frame.
    pub provenance: String,
}

impl FloatFrame {
    pub fn new(width: usize, height: usize, samples: Vec<f64>, provenance: &str) -> Result<Self> {
        let frame = FloatFrame {
            width,
            height,
            samples,
            provenance: provenance.to_string(),
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn constant(width: usize, height: usize, value: f64, provenance: &str) -> Self {
        FloatFrame {
            width,
            height,
            samples: vec![value; width * height],
            provenance: provenance.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() != self.width * self.height {
            return Err(Error::argument(format!(
                "sample count {} does not match {}x{}",
                self.samples.len(),
                self.width,
                self.height
            )));
        }
        if self.samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("frame contains non-finite samples"));
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.samples[y * self.width + x]
    }

    pub fn same_shape(&self, other: &FloatFrame) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Element-wise map into a new frame with fresh provenance.
    pub fn map(&self, provenance: &str, f: impl Fn(f64) -> f64) -> FloatFrame {
        FloatFrame {
            width: self.width,
            height: self.height,
            samples: self.samples.iter().map(|&v| f(v)).collect(),
            provenance: provenance.to_string(),
        }
    }
}

/// Ordered stack of frames captured under identical settings.
#[derive(Clone, Debug)]
pub struct FrameStack {
    frames: Vec<RawFrame>,
}

impl FrameStack {
    /// Builds a stack, checking that all frames share shape, bit depth,
    /// Bayer pattern, analog gain, and exposure time.
    pub fn new(frames: Vec<RawFrame>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::argument("frame stack must be non-empty"))?;
        for (i, f) in frames.iter().enumerate() {
            f.validate()?;
            let same = f.width == first.width
                && f.height == first.height
                && f.bit_depth == first.bit_depth
                && f.bayer_pattern == first.bayer_pattern
                && f.analog_gain == first.analog_gain
                && f.exposure_time_ms == first.exposure_time_ms;
            if !same {
                return Err(Error::argument(format!(
                    "frame {i} does not share the stack's shape/settings"
                )));
            }
        }
        Ok(FrameStack { frames })
    }

    pub fn frames(&self) -> &[RawFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Settings shared by every frame in the stack.
    pub fn settings(&self) -> &RawFrame {
        &self.frames[0]
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }
}

pub(crate) fn max_value_for_depth(bit_depth: u8) -> u16 {
    if bit_depth >= 16 {
        u16::MAX
    } else {
        ((1u32 << bit_depth) - 1) as u16
    }
}

/// Per-pixel arithmetic mean over a stack.
pub fn temporal_average(stack: &FrameStack) -> FloatFrame {
    let n = stack.len() as f64;
    let mut acc = vec![0.0f64; stack.width() * stack.height()];
    for frame in stack.frames() {
        for (a, &v) in acc.iter_mut().zip(frame.samples.iter()) {
            *a += v as f64;
        }
    }
    for a in acc.iter_mut() {
        *a /= n;
    }
    FloatFrame {
        width: stack.width(),
        height: stack.height(),
        samples: acc,
        provenance: "temporal_average".to_string(),
    }
}

/// Per-pixel arithmetic mean over real-valued frames of identical shape.
pub fn average_float_frames(frames: &[FloatFrame], provenance: &str) -> Result<FloatFrame> {
    let first = frames
        .first()
        .ok_or_else(|| Error::argument("cannot average an empty frame list"))?;
    let mut acc = vec![0.0f64; first.samples.len()];
    for f in frames {
        if !f.same_shape(first) {
            return Err(Error::argument("frames to average must share a shape"));
        }
        for (a, &v) in acc.iter_mut().zip(f.samples.iter()) {
            *a += v;
        }
    }
    let n = frames.len() as f64;
    for a in acc.iter_mut() {
        *a /= n;
    }
    FloatFrame::new(first.width, first.height, acc, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn test_frame(width: usize, height: usize, samples: Vec<u16>) -> RawFrame {
        RawFrame {
            width,
            height,
            samples,
            bit_depth: 16,
            bayer_pattern: BayerPattern::Rggb,
            black_level: 0,
            analog_gain: 1.0,
            exposure_time_ms: 10.0,
            sensor_id: "test".to_string(),
            frame_index: 0,
        }
    }

    #[test]
    fn validate_rejects_odd_dimensions() {
        let f = test_frame(3, 2, vec![0; 6]);
        assert!(matches!(f.validate(), Err(Error::Argument(_))));
    }

    #[test]
    fn validate_rejects_out_of_depth_samples() {
        let mut f = test_frame(2, 2, vec![0, 1, 2, 300]);
        f.bit_depth = 8;
        assert!(matches!(f.validate(), Err(Error::Range(_))));
    }

    #[test]
    fn stack_requires_homogeneous_settings() {
        let a = test_frame(2, 2, vec![0; 4]);
        let mut b = a.clone();
        b.analog_gain = 2.0;
        assert!(FrameStack::new(vec![a, b]).is_err());
        assert!(FrameStack::new(vec![]).is_err());
    }

    #[test]
    fn temporal_average_of_identical_frames_is_constant() {
        let frames = vec![test_frame(2, 2, vec![64; 4]); 128];
        let stack = FrameStack::new(frames).unwrap();
        let avg = temporal_average(&stack);
        assert!(avg.samples.iter().all(|&v| v == 64.0));
        assert_eq!(avg.provenance, "temporal_average");
    }

    #[test]
    fn temporal_average_of_two_levels_is_midpoint() {
        let a = test_frame(2, 2, vec![10; 4]);
        let b = test_frame(2, 2, vec![20; 4]);
        let stack = FrameStack::new(vec![a, b]).unwrap();
        let avg = temporal_average(&stack);
        assert!(avg.samples.iter().all(|&v| v == 15.0));
    }

    #[test]
    fn bayer_transforms_roundtrip() {
        for p in [
            BayerPattern::Rggb,
            BayerPattern::Bggr,
            BayerPattern::Grbg,
            BayerPattern::Gbrg,
        ] {
            assert_eq!(p.flipped_horizontal().flipped_horizontal(), p);
            assert_eq!(p.flipped_vertical().flipped_vertical(), p);
            assert_eq!(p.transposed().transposed(), p);
        }
        assert_eq!(
            BayerPattern::Rggb.flipped_horizontal(),
            BayerPattern::Grbg
        );
        assert_eq!(BayerPattern::Rggb.flipped_vertical(), BayerPattern::Gbrg);
    }

    #[test]
    fn color_at_follows_cell_layout() {
        let p = BayerPattern::Rggb;
        assert_eq!(p.color_at(0, 0), CfaColor::Red);
        assert_eq!(p.color_at(1, 0), CfaColor::Green);
        assert_eq!(p.color_at(0, 1), CfaColor::Green);
        assert_eq!(p.color_at(1, 1), CfaColor::Blue);
        assert_eq!(p.color_at(2, 2), CfaColor::Red);
    }
}
