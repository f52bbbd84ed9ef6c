//! Fixed-pattern noise calibration and removal.
//!
//! FPN is modeled per pixel as `K(x,y) * analog_gain * t + B(x,y)`. The
//! calibration captures several dark-frame sets at distinct `gain * t`
//! products, strips banding from each frame, temporally averages each set to
//! suppress random noise, and fits the per-pixel line by ordinary least
//! squares on the single regressor `u = gain * t`. The offset plane absorbs
//! whatever dark pedestal the sensor emits, which is why nothing else in the
//! pipeline subtracts a black level.
//!
//! Maps persist in a `.fpn` file: 8-byte magic `FPNMAP01`, a little-endian
//! u32 header length, a JSON header, then the K and B planes as row-major
//! little-endian f32.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{average_float_frames, FloatFrame, FrameStack};
use crate::pbn::{estimate_pbn, remove_pbn, DEFAULT_PBN_PERIOD};

const FPN_MAGIC: &[u8; 8] = b"FPNMAP01";

/// Per-pixel slope/offset calibration of the fixed pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct FpnMap {
    pub width: usize,
    pub height: usize,
    /// Slope plane in DN per (gain * ms), row-major.
    pub k: Vec<f32>,
    /// Offset plane in DN, row-major. Includes the dark pedestal.
    pub b: Vec<f32>,
    /// RMS of (observed - K*u - B) over all pixels and calibration sets.
    pub fit_residual_rms: f64,
    /// (analog_gain, exposure_time_ms) of each calibration set.
    pub calibration_points: Vec<(f64, f64)>,
    /// Sensor the map belongs to; maps are never shared across sensors.
    pub sensor_id: String,
}

#[derive(Serialize, Deserialize)]
struct FpnHeader {
    width: usize,
    height: usize,
    fit_residual_rms: f64,
    calibration_points: Vec<(f64, f64)>,
    sensor_id: String,
}

impl FpnMap {
    /// Map with the same K and B at every pixel. Calibration points are
    /// synthetic placeholders satisfying the two-distinct-products rule.
    pub fn uniform(width: usize, height: usize, k: f32, b: f32, sensor_id: &str) -> Self {
        FpnMap {
            width,
            height,
            k: vec![k; width * height],
            b: vec![b; width * height],
            fit_residual_rms: 0.0,
            calibration_points: vec![(1.0, 1.0), (1.0, 2.0)],
            sensor_id: sensor_id.to_string(),
        }
    }

    /// All-zero map: predicts no fixed pattern anywhere.
    pub fn zeros(width: usize, height: usize, sensor_id: &str) -> Self {
        Self::uniform(width, height, 0.0, 0.0, sensor_id)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.width * self.height;
        if self.k.len() != n || self.b.len() != n {
            return Err(Error::argument(
                "fpn planes do not match the declared shape",
            ));
        }
        if self.k.iter().chain(self.b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::argument("fpn planes contain non-finite values"));
        }
        if !(self.fit_residual_rms >= 0.0) {
            return Err(Error::argument("fit residual must be >= 0"));
        }
        let mut products: Vec<f64> = self
            .calibration_points
            .iter()
            .map(|(g, t)| g * t)
            .collect();
        products.sort_by(f64::total_cmp);
        products.dedup();
        if products.len() < 2 {
            return Err(Error::argument(
                "calibration points must span >= 2 distinct gain*t products",
            ));
        }
        Ok(())
    }
}

/// Calibrates per-pixel slope and offset from dark-frame sets.
///
/// Every set must share the frame shape; gain and exposure come from each
/// stack's own metadata. Banding is estimated and removed from every frame
/// before the temporal average (with `theta` as the flatness threshold); an
/// estimation failure aborts with the offending set's index.
pub fn calibrate_fpn(dark_sets: &[FrameStack], theta: f64) -> Result<FpnMap> {
    if dark_sets.len() < 2 {
        return Err(Error::RankDeficient(format!(
            "need >= 2 dark sets with distinct gain*t, got {}",
            dark_sets.len()
        )));
    }
    let first = dark_sets[0].settings();
    let (width, height) = (first.width, first.height);
    for (i, set) in dark_sets.iter().enumerate() {
        if set.width() != width || set.height() != height {
            return Err(Error::argument(format!(
                "dark set {i} shape {}x{} differs from {}x{}",
                set.width(),
                set.height(),
                width,
                height
            )));
        }
    }

    let mut u_values = Vec::with_capacity(dark_sets.len());
    let mut points = Vec::with_capacity(dark_sets.len());
    let mut averages = Vec::with_capacity(dark_sets.len());
    for (i, set) in dark_sets.iter().enumerate() {
        let s = set.settings();
        u_values.push(s.analog_gain * s.exposure_time_ms);
        points.push((s.analog_gain, s.exposure_time_ms));
        let cleaned: Vec<FloatFrame> = set
            .frames()
            .iter()
            .map(|f| {
                let float = f.to_float();
                let est = estimate_pbn(&float, theta, DEFAULT_PBN_PERIOD).map_err(|e| {
                    Error::EstimationFailed(format!("dark set {i}: {e}"))
                })?;
                Ok(remove_pbn(&float, &est))
            })
            .collect::<Result<_>>()?;
        averages.push(average_float_frames(&cleaned, "dark_average")?);
    }

    let mut distinct = u_values.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::RankDeficient(
            "dark sets share a single gain*t product; the line fit is underdetermined".into(),
        ));
    }

    let n = u_values.len() as f64;
    let su: f64 = u_values.iter().sum();
    let suu: f64 = u_values.iter().map(|u| u * u).sum();
    let denom = n * suu - su * su;

    let pixels = width * height;
    let mut k = vec![0.0f32; pixels];
    let mut b = vec![0.0f32; pixels];
    k.par_iter_mut()
        .zip(b.par_iter_mut())
        .enumerate()
        .for_each(|(idx, (k_px, b_px))| {
            let mut sy = 0.0f64;
            let mut suy = 0.0f64;
            for (set, &u) in averages.iter().zip(u_values.iter()) {
                let y = set.samples[idx];
                sy += y;
                suy += u * y;
            }
            let slope = (n * suy - su * sy) / denom;
            let offset = (sy - slope * su) / n;
            *k_px = slope as f32;
            *b_px = offset as f32;
        });

    let mut sq_sum = 0.0f64;
    for (set, &u) in averages.iter().zip(u_values.iter()) {
        for idx in 0..pixels {
            let predicted = k[idx] as f64 * u + b[idx] as f64;
            sq_sum += (set.samples[idx] - predicted).powi(2);
        }
    }
    let fit_residual_rms = (sq_sum / (pixels as f64 * n)).sqrt();

    let map = FpnMap {
        width,
        height,
        k,
        b,
        fit_residual_rms,
        calibration_points: points,
        sensor_id: first.sensor_id.clone(),
    };
    map.validate()?;
    Ok(map)
}

/// Predicted fixed pattern at the given gain and exposure.
pub fn predict_fpn(map: &FpnMap, gain: f64, t_ms: f64) -> Result<FloatFrame> {
    if !(gain >= 1.0) || !(t_ms > 0.0) {
        return Err(Error::argument(
            "prediction requires gain >= 1 and exposure > 0",
        ));
    }
    let u = gain * t_ms;
    let samples = map
        .k
        .iter()
        .zip(map.b.iter())
        .map(|(&k, &b)| k as f64 * u + b as f64)
        .collect();
    FloatFrame::new(map.width, map.height, samples, "fpn_prediction")
}

/// Subtracts the predicted fixed pattern from a frame.
pub fn remove_fpn(frame: &FloatFrame, map: &FpnMap, gain: f64, t_ms: f64) -> Result<FloatFrame> {
    if frame.width != map.width || frame.height != map.height {
        return Err(Error::argument(format!(
            "frame {}x{} does not match fpn map {}x{}",
            frame.width, frame.height, map.width, map.height
        )));
    }
    let predicted = predict_fpn(map, gain, t_ms)?;
    let samples = frame
        .samples
        .iter()
        .zip(predicted.samples.iter())
        .map(|(&v, &p)| v - p)
        .collect();
    FloatFrame::new(frame.width, frame.height, samples, "fpn_removed")
}

/// Writes a map to its binary container.
pub fn save_fpn_map(map: &FpnMap, path: &Path) -> Result<()> {
    map.validate()?;
    let header = serde_json::to_vec(&FpnHeader {
        width: map.width,
        height: map.height,
        fit_residual_rms: map.fit_residual_rms,
        calibration_points: map.calibration_points.clone(),
        sensor_id: map.sensor_id.clone(),
    })
    .map_err(|e| Error::Format(format!("fpn header serialization: {e}")))?;
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(FPN_MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for plane in [&map.k, &map.b] {
        for &v in plane {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a map back; inverse of [`save_fpn_map`], bit-exact on the planes.
pub fn load_fpn_map(path: &Path) -> Result<FpnMap> {
    let mut file = fs::File::open(path)?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != FPN_MAGIC {
        return Err(Error::Format(format!(
            "{}: not an fpn map file",
            path.display()
        )));
    }
    let mut len_bytes = [0u8; 4];
    file.read_exact(&mut len_bytes)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)?;
    let header: FpnHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Format(format!("fpn header: {e}")))?;
    let n = header.width * header.height;
    let mut read_plane = || -> Result<Vec<f32>> {
        let mut bytes = vec![0u8; n * 4];
        file.read_exact(&mut bytes)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let k = read_plane()?;
    let b = read_plane()?;
    let map = FpnMap {
        width: header.width,
        height: header.height,
        k,
        b,
        fit_residual_rms: header.fit_residual_rms,
        calibration_points: header.calibration_points,
        sensor_id: header.sensor_id,
    };
    map.validate()?;
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{BayerPattern, RawFrame};

    fn dark_stack(value: u16, gain: f64, t_ms: f64, frames: usize) -> FrameStack {
        let frame = RawFrame {
            width: 64,
            height: 16,
            samples: vec![value; 64 * 16],
            bit_depth: 16,
            bayer_pattern: BayerPattern::Rggb,
            black_level: 0,
            analog_gain: gain,
            exposure_time_ms: t_ms,
            sensor_id: "fpn-test".to_string(),
            frame_index: 0,
        };
        FrameStack::new(vec![frame; frames]).unwrap()
    }

    #[test]
    fn exact_two_point_line() {
        // Dark means 5 at u=1 and 7 at u=2: K=2, B=3, zero residual.
        let sets = vec![dark_stack(5, 1.0, 1.0, 4), dark_stack(7, 1.0, 2.0, 4)];
        let map = calibrate_fpn(&sets, 8.0).unwrap();
        assert!(map.k.iter().all(|&k| k == 2.0));
        assert!(map.b.iter().all(|&b| b == 3.0));
        assert_eq!(map.fit_residual_rms, 0.0);
        assert_eq!(map.calibration_points, vec![(1.0, 1.0), (1.0, 2.0)]);

        // Prediction at a calibration point reproduces that set's dark mean.
        let at_point = predict_fpn(&map, 1.0, 2.0).unwrap();
        assert!(at_point.samples.iter().all(|&v| v == 7.0));
    }

    #[test]
    fn single_set_is_rank_deficient() {
        let sets = vec![dark_stack(5, 1.0, 1.0, 4)];
        assert!(matches!(
            calibrate_fpn(&sets, 8.0),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn equal_products_are_rank_deficient() {
        // gain*t = 2 in both sets even though gain and t differ.
        let sets = vec![dark_stack(5, 1.0, 2.0, 4), dark_stack(7, 2.0, 1.0, 4)];
        assert!(matches!(
            calibrate_fpn(&sets, 8.0),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = dark_stack(5, 1.0, 1.0, 2);
        let frame = RawFrame {
            width: 32,
            height: 16,
            samples: vec![5; 32 * 16],
            bit_depth: 16,
            bayer_pattern: BayerPattern::Rggb,
            black_level: 0,
            analog_gain: 1.0,
            exposure_time_ms: 2.0,
            sensor_id: "fpn-test".to_string(),
            frame_index: 0,
        };
        let b = FrameStack::new(vec![frame; 2]).unwrap();
        assert!(matches!(
            calibrate_fpn(&[a, b], 8.0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn predict_matches_line_arithmetic() {
        let map = FpnMap::uniform(4, 4, 2.0, 3.0, "t");
        let p = predict_fpn(&map, 2.0, 8.0).unwrap();
        assert!(p.samples.iter().all(|&v| v == 35.0));

        let flat_b = FpnMap::uniform(4, 4, 0.0, 9.5, "t");
        let p2 = predict_fpn(&flat_b, 3.0, 2.0).unwrap();
        assert!(p2.samples.iter().all(|&v| v == 9.5));
    }

    #[test]
    fn remove_with_zero_map_is_identity() {
        let map = FpnMap::zeros(4, 4, "t");
        let frame = FloatFrame::constant(4, 4, 123.25, "t");
        let out = remove_fpn(&frame, &map, 2.0, 4.0).unwrap();
        assert_eq!(out.samples, frame.samples);
        assert_eq!(out.provenance, "fpn_removed");
    }

    #[test]
    fn remove_shape_mismatch_is_rejected() {
        let map = FpnMap::zeros(4, 4, "t");
        let frame = FloatFrame::constant(8, 4, 1.0, "t");
        assert!(matches!(
            remove_fpn(&frame, &map, 1.0, 1.0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn map_file_roundtrips_bit_exactly() {
        let mut map = FpnMap::uniform(6, 4, 0.125, 3.75, "sensor-7");
        map.k[5] = 1.2345678;
        map.b[17] = -0.0625;
        map.fit_residual_rms = 0.0371;
        map.calibration_points = vec![(1.0, 4.0), (2.0, 4.0), (4.0, 4.0)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fpn");
        save_fpn_map(&map, &path).unwrap();
        let loaded = load_fpn_map(&path).unwrap();
        assert_eq!(loaded, map);

        // Re-saving the loaded map reproduces the file byte for byte.
        let path2 = dir.path().join("m2.fpn");
        save_fpn_map(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn least_squares_beats_grid_candidates() {
        // Three noisy observations per pixel; the closed-form fit must not
        // lose to any nearby (K, B) candidate on total squared residual.
        let sets = vec![
            dark_stack(10, 1.0, 1.0, 2),
            dark_stack(13, 1.0, 2.0, 2),
            dark_stack(19, 1.0, 4.0, 2),
        ];
        let map = calibrate_fpn(&sets, 8.0).unwrap();
        let u = [1.0, 2.0, 4.0];
        let y = [10.0, 13.0, 19.0];
        let ssr = |k: f64, b: f64| -> f64 {
            u.iter()
                .zip(y.iter())
                .map(|(&u, &y)| (y - (k * u + b)).powi(2))
                .sum()
        };
        let fitted = ssr(map.k[0] as f64, map.b[0] as f64);
        let mut grid_best = f64::INFINITY;
        for ki in -20..=20 {
            for bi in -20..=20 {
                let k = map.k[0] as f64 + ki as f64 * 0.05;
                let b = map.b[0] as f64 + bi as f64 * 0.05;
                grid_best = grid_best.min(ssr(k, b));
            }
        }
        assert!(fitted <= grid_best + 1e-9, "{fitted} vs {grid_best}");
    }

    #[test]
    fn prediction_precondition_is_enforced() {
        let map = FpnMap::zeros(4, 4, "t");
        assert!(predict_fpn(&map, 0.5, 1.0).is_err());
        assert!(predict_fpn(&map, 1.0, 0.0).is_err());
    }
}
