//! Frame file I/O.
//!
//! Pixel data travels as binary 16-bit PGM (P5, maxval 65535, big-endian
//! samples, row-major from the top-left). PGM has no metadata fields, so every
//! frame gets a JSON sidecar with the same basename and a `.json` suffix
//! holding the capture metadata. Real-valued frames use a small binary plane
//! format (`.ffr`) that round-trips f64 samples bit-exactly.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{BayerPattern, FloatFrame, RawFrame};

pub const PGM_MAXVAL: u32 = 65535;

/// Sidecar schema. All fields are required.
#[derive(Debug, Serialize, Deserialize)]
pub struct Sidecar {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub bayer_pattern: BayerPattern,
    pub black_level: u16,
    pub analog_gain: f64,
    pub exposure_time_ms: f64,
    pub sensor_id: String,
    pub frame_index: u64,
}

/// Path of the metadata sidecar adjacent to a pixel file.
pub fn sidecar_path(pgm_path: &Path) -> PathBuf {
    pgm_path.with_extension("json")
}

fn read_token<'a>(bytes: &'a [u8], pos: &mut usize, what: &str) -> Result<&'a [u8]> {
    // Skip whitespace and `#` comments, then take a run of non-whitespace.
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format(format!("truncated PGM header: missing {what}")));
    }
    Ok(&bytes[start..*pos])
}

fn parse_usize(token: &[u8], what: &str) -> Result<usize> {
    std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| Error::Format(format!("invalid {what} in PGM header")))
}

/// Reads a bare 16-bit P5 PGM: `(width, height, samples)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    let magic = read_token(&bytes, &mut pos, "magic")?;
    if magic != b"P5" {
        return Err(Error::Format(format!(
            "{}: not a binary PGM (expected P5)",
            path.display()
        )));
    }
    let width = parse_usize(read_token(&bytes, &mut pos, "width")?, "width")?;
    let height = parse_usize(read_token(&bytes, &mut pos, "height")?, "height")?;
    let maxval = parse_usize(read_token(&bytes, &mut pos, "maxval")?, "maxval")?;
    if maxval != PGM_MAXVAL as usize {
        return Err(Error::Format(format!(
            "{}: expected maxval {PGM_MAXVAL}, got {maxval}",
            path.display()
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("missing separator before PGM raster".into()));
    }
    pos += 1;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(2))
        .ok_or_else(|| Error::Format("PGM dimensions overflow".into()))?;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(Error::Format(format!(
            "{}: raster truncated ({} of {expected} bytes)",
            path.display(),
            raster.len()
        )));
    }
    let samples = raster[..expected]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((width, height, samples))
}

/// Writes a bare 16-bit P5 PGM.
pub fn write_pgm(path: &Path, width: usize, height: usize, samples: &[u16]) -> Result<()> {
    if samples.len() != width * height {
        return Err(Error::argument("sample count does not match dimensions"));
    }
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write!(w, "P5\n{width} {height}\n{PGM_MAXVAL}\n")?;
    let mut buf = Vec::with_capacity(samples.len() * 2);
    for &v in samples {
        buf.extend_from_slice(&v.to_be_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

/// Loads a raw frame from a PGM file plus its JSON sidecar.
pub fn load_frame(path: &Path) -> Result<RawFrame> {
    let (width, height, samples) = read_pgm(path)?;
    let sc_path = sidecar_path(path);
    let sc_bytes = fs::read(&sc_path).map_err(|e| {
        Error::Metadata(format!("cannot read sidecar {}: {e}", sc_path.display()))
    })?;
    let sidecar: Sidecar = serde_json::from_slice(&sc_bytes)
        .map_err(|e| Error::Metadata(format!("sidecar {}: {e}", sc_path.display())))?;
    if sidecar.width != width || sidecar.height != height {
        return Err(Error::Metadata(format!(
            "sidecar dimensions {}x{} disagree with PGM {}x{}",
            sidecar.width, sidecar.height, width, height
        )));
    }
    let frame = RawFrame {
        width,
        height,
        samples,
        bit_depth: sidecar.bit_depth,
        bayer_pattern: sidecar.bayer_pattern,
        black_level: sidecar.black_level,
        analog_gain: sidecar.analog_gain,
        exposure_time_ms: sidecar.exposure_time_ms,
        sensor_id: sidecar.sensor_id,
        frame_index: sidecar.frame_index,
    };
    match frame.validate() {
        Ok(()) => Ok(frame),
        // Depth violations surface as range errors; the rest as metadata.
        Err(e @ Error::Range(_)) => Err(e),
        Err(Error::Argument(m)) | Err(Error::Metadata(m)) => Err(Error::Metadata(m)),
        Err(e) => Err(e),
    }
}

/// Saves a raw frame as PGM plus sidecar such that `load_frame` inverts it
/// bit-exactly. The frame is validated before anything touches the disk.
pub fn save_frame(frame: &RawFrame, path: &Path) -> Result<()> {
    frame.validate()?;
    let sidecar = Sidecar {
        width: frame.width,
        height: frame.height,
        bit_depth: frame.bit_depth,
        bayer_pattern: frame.bayer_pattern,
        black_level: frame.black_level,
        analog_gain: frame.analog_gain,
        exposure_time_ms: frame.exposure_time_ms,
        sensor_id: frame.sensor_id.clone(),
        frame_index: frame.frame_index,
    };
    write_pgm(path, frame.width, frame.height, &frame.samples)?;
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Format(format!("sidecar serialization: {e}")))?;
    fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

const FLOAT_FRAME_MAGIC: &[u8; 8] = b"FFRAME01";

#[derive(Serialize, Deserialize)]
struct FloatHeader {
    width: usize,
    height: usize,
    provenance: String,
}

/// Writes a real-valued frame: magic, u32-le header length, JSON header,
/// then row-major f64-le samples.
pub fn save_float_frame(frame: &FloatFrame, path: &Path) -> Result<()> {
    frame.validate()?;
    let header = serde_json::to_vec(&FloatHeader {
        width: frame.width,
        height: frame.height,
        provenance: frame.provenance.clone(),
    })
    .map_err(|e| Error::Format(format!("header serialization: {e}")))?;
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(FLOAT_FRAME_MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for &v in &frame.samples {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_float_frame(path: &Path) -> Result<FloatFrame> {
    let mut file = fs::File::open(path)?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != FLOAT_FRAME_MAGIC {
        return Err(Error::Format(format!(
            "{}: not a float frame file",
            path.display()
        )));
    }
    let mut len_bytes = [0u8; 4];
    file.read_exact(&mut len_bytes)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)?;
    let header: FloatHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Format(format!("float frame header: {e}")))?;
    let n = header.width * header.height;
    let mut data = vec![0u8; n * 8];
    file.read_exact(&mut data)?;
    let samples = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FloatFrame::new(header.width, header.height, samples, &header.provenance)
}

/// Writes an 8-bit RGB image as binary PPM (P6).
pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    if rgb.len() != width * height * 3 {
        return Err(Error::argument("rgb buffer does not match dimensions"));
    }
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write!(w, "P6\n{width} {height}\n255\n")?;
    w.write_all(rgb)?;
    w.flush()?;
    Ok(())
}

/// Real-valued frame rounded to the nearest DN and clamped to `[0, max]`,
/// for writing pipeline outputs back into the integer container.
pub fn quantize_to_raw(frame: &FloatFrame, template: &RawFrame) -> RawFrame {
    let max = template.max_value();
    let samples = frame
        .samples
        .iter()
        .map(|&v| v.round().clamp(0.0, max as f64) as u16)
        .collect();
    RawFrame {
        width: frame.width,
        height: frame.height,
        samples,
        ..template.clone()
    }
}
