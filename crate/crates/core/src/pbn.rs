//! Periodic banding noise estimation and removal.
//!
//! The banding is a vertical square wave of fixed period (4 pixels on the
//! target sensor class). Within a row, pixels `period/2` apart share a Bayer
//! phase but sit on opposite halves of the wave, so on locally flat content
//! the lag-`period/2` second difference has magnitude `4*kappa` and the
//! lag-`period` difference vanishes. The estimator exploits both: the
//! vanishing difference gates which pixels count as flat, the second
//! difference measures the amplitude, and the sign of the half-period
//! difference votes for the phase.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FloatFrame;
use crate::synth::pbn_sign;

pub const DEFAULT_PBN_PERIOD: usize = 4;

/// Result of banding estimation on a single frame.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PbnEstimate {
    /// Global amplitude: mean of the retained per-row estimates.
    pub kappa: f64,
    /// Column offset of the positive half-wave, in `[0, period)`.
    pub phase: usize,
    pub period: usize,
    /// Per-row amplitude; `None` for rows without enough flat pixels.
    pub per_row_kappa: Vec<Option<f64>>,
    pub rows_used: usize,
    /// Fraction of interior pixels that passed the flatness gate.
    pub flat_fraction: f64,
}

impl PbnEstimate {
    /// Identity estimate used when estimation fails and the caller chooses
    /// to degrade gracefully instead of aborting.
    pub fn zero(period: usize) -> Self {
        PbnEstimate {
            kappa: 0.0,
            phase: 0,
            period,
            per_row_kappa: Vec::new(),
            rows_used: 0,
            flat_fraction: 0.0,
        }
    }
}

/// Minimum flat pixels a row needs before its amplitude estimate counts.
fn min_flat_pixels(width: usize) -> usize {
    (width / 16).max(16)
}

/// Estimates banding amplitude and phase from one frame.
///
/// Works on any frame whose content is flat somewhere; rows where fewer than
/// `max(16, width/16)` pixels pass the threshold gate are skipped. Fails if
/// every row is skipped.
pub fn estimate_pbn(frame: &FloatFrame, theta: f64, period: usize) -> Result<PbnEstimate> {
    frame.validate()?;
    if !(theta > 0.0) {
        return Err(Error::argument("flatness threshold theta must be > 0"));
    }
    if period < 2 || period % 2 != 0 {
        return Err(Error::argument("period must be even and >= 2"));
    }
    if frame.width < 2 * period {
        return Err(Error::argument(format!(
            "frame width {} too small for period {period}",
            frame.width
        )));
    }

    let half = period / 2;
    let width = frame.width;
    let min_flat = min_flat_pixels(width);

    struct RowResult {
        kappa: Option<f64>,
        flat: usize,
        // Sign votes of I(i+half) - I(i) per column class, at flat pixels.
        votes_pos: Vec<u64>,
        votes_neg: Vec<u64>,
    }

    let rows: Vec<RowResult> = (0..frame.height)
        .into_par_iter()
        .map(|y| {
            let row = &frame.samples[y * width..(y + 1) * width];
            let mut sum = 0.0f64;
            let mut flat = 0usize;
            let mut votes_pos = vec![0u64; period];
            let mut votes_neg = vec![0u64; period];
            for i in half..width - half {
                let lag_diff = row[i + half] - row[i - half];
                if lag_diff.abs() >= theta {
                    continue;
                }
                flat += 1;
                sum += (row[i - half] + row[i + half] - 2.0 * row[i]).abs();
                let sign_diff = row[i + half] - row[i];
                let cls = i % period;
                if sign_diff > 0.0 {
                    votes_pos[cls] += 1;
                } else if sign_diff < 0.0 {
                    votes_neg[cls] += 1;
                }
            }
            let kappa = if flat >= min_flat {
                Some(sum / (4.0 * flat as f64))
            } else {
                None
            };
            RowResult {
                kappa,
                flat,
                votes_pos,
                votes_neg,
            }
        })
        .collect();

    let per_row_kappa: Vec<Option<f64>> = rows.iter().map(|r| r.kappa).collect();
    let retained: Vec<f64> = per_row_kappa.iter().filter_map(|k| *k).collect();
    if retained.is_empty() {
        return Err(Error::EstimationFailed(format!(
            "no row kept >= {min_flat} flat pixels at theta {theta}"
        )));
    }
    let kappa = retained.iter().sum::<f64>() / retained.len() as f64;

    let mut votes_pos = vec![0u64; period];
    let mut votes_neg = vec![0u64; period];
    let mut total_flat = 0usize;
    for r in &rows {
        total_flat += r.flat;
        for c in 0..period {
            votes_pos[c] += r.votes_pos[c];
            votes_neg[c] += r.votes_neg[c];
        }
    }

    // On flat content the half-period difference equals -2 * s(i), so a
    // column whose observed differences are negative votes for candidates
    // placing the positive half there. Majority vote across column classes;
    // ties resolve toward phase 0.
    let mut phase = 0usize;
    let mut best = 0u64;
    for candidate in 0..period {
        let mut score = 0u64;
        for cls in 0..period {
            if pbn_sign(cls, period, candidate) > 0.0 {
                score += votes_neg[cls];
            } else {
                score += votes_pos[cls];
            }
        }
        if score > best {
            best = score;
            phase = candidate;
        }
    }

    let interior = (width - 2 * half) * frame.height;
    Ok(PbnEstimate {
        kappa,
        phase,
        period,
        per_row_kappa,
        rows_used: retained.len(),
        flat_fraction: total_flat as f64 / interior as f64,
    })
}

/// Subtracts the estimated square wave from every row.
pub fn remove_pbn(frame: &FloatFrame, estimate: &PbnEstimate) -> FloatFrame {
    let offsets: Vec<f64> = (0..frame.width)
        .map(|x| estimate.kappa * pbn_sign(x, estimate.period, estimate.phase))
        .collect();
    let samples = frame
        .samples
        .iter()
        .enumerate()
        .map(|(idx, &v)| v - offsets[idx % frame.width])
        .collect();
    FloatFrame {
        width: frame.width,
        height: frame.height,
        samples,
        provenance: "pbn_removed".to_string(),
    }
}
