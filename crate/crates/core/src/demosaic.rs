//! Bilinear demosaic for visual inspection.
//!
//! Quality is deliberately modest: each missing channel is the mean of the
//! in-bounds 3x3 neighbors carrying that channel, which reproduces the classic
//! bilinear stencils in the interior and degrades gracefully at borders.
//! Output is for preview only and never feeds any metric.

use crate::frame::{BayerPattern, FloatFrame, RawFrame};

/// Interleaved 8-bit RGB image.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

/// Demosaics a real-valued mosaic and scales `[black_level, white_level]`
/// to `[0, 255]` with clamping.
pub fn demosaic_preview(
    frame: &FloatFrame,
    pattern: BayerPattern,
    black_level: f64,
    white_level: f64,
) -> RgbImage {
    let (w, h) = (frame.width, frame.height);
    let span = (white_level - black_level).max(1e-12);
    let mut data = vec![0u8; w * h * 3];

    let channel_at = |x: usize, y: usize, color| -> f64 {
        if pattern.color_at(x, y) == color {
            return frame.at(x, y);
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let nx = x as i64 + dx;
                let ny = y as i64 + dy;
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if pattern.color_at(nx, ny) == color {
                    sum += frame.at(nx, ny);
                    count += 1;
                }
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    };

    for y in 0..h {
        for x in 0..w {
            let idx = (y * w + x) * 3;
            for (c, color) in [
                crate::frame::CfaColor::Red,
                crate::frame::CfaColor::Green,
                crate::frame::CfaColor::Blue,
            ]
            .into_iter()
            .enumerate()
            {
                let v = channel_at(x, y, color);
                let scaled = (v - black_level) / span * 255.0;
                data[idx + c] = scaled.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    RgbImage {
        width: w,
        height: h,
        data,
    }
}

/// Preview of a raw frame using its own black level and bit depth.
pub fn demosaic_preview_raw(frame: &RawFrame) -> RgbImage {
    demosaic_preview(
        &frame.to_float(),
        frame.bayer_pattern,
        frame.black_level as f64,
        frame.max_value() as f64,
    )
}
