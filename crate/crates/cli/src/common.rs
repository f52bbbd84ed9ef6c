//! Shared plumbing: sorted directory listings, stack loading, manifest I/O,
//! and the on-disk evaluation-pair format.

use std::path::{Path, PathBuf};

use anyhow::Context;
use endoraw_core::{
    load_float_frame, load_frame, save_float_frame, save_frame, FrameStack, GainClass,
    GainThresholds, TestPair,
};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

/// All `.pgm` files in a directory, sorted lexicographically by file name.
pub fn list_pgms(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
        .collect();
    files.sort_by_key(|p| p.file_name().map(|n| n.to_os_string()));
    if files.is_empty() {
        anyhow::bail!("no .pgm frames found in {}", dir.display());
    }
    Ok(files)
}

/// Loads every frame of a directory as one homogeneous stack.
pub fn load_stack(dir: &Path) -> anyhow::Result<FrameStack> {
    let frames = list_pgms(dir)?
        .iter()
        .map(|p| load_frame(p).with_context(|| format!("loading {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    FrameStack::new(frames).with_context(|| format!("stacking {}", dir.display()))
}

/// Writes pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub const PAIRS_MANIFEST: &str = "pairs.json";

/// One stored evaluation pair; paths are relative to the manifest directory.
#[derive(Debug, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub gain_class: GainClass,
    pub noisy_path: String,
    pub clean_path: String,
    pub analog_gain: f64,
    pub exposure_time_ms: f64,
    pub lit_frames: usize,
    pub dark_frames: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PairsManifest {
    pub thresholds: GainThresholds,
    pub pairs: Vec<PairRecord>,
}

/// Persists evaluation pairs: noisy as PGM+sidecar, reference as a float
/// frame file, plus the manifest.
pub fn save_pairs(
    dir: &Path,
    pairs: &[(TestPair, usize, usize)],
    thresholds: GainThresholds,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = PairsManifest {
        thresholds,
        pairs: Vec::with_capacity(pairs.len()),
    };
    for (pair, lit_frames, dark_frames) in pairs {
        let noisy_name = format!("{}_noisy.pgm", pair.id);
        let clean_name = format!("{}_clean.ffr", pair.id);
        save_frame(&pair.noisy, &dir.join(&noisy_name))?;
        save_float_frame(&pair.clean, &dir.join(&clean_name))?;
        manifest.pairs.push(PairRecord {
            id: pair.id.clone(),
            gain_class: pair.gain_class,
            noisy_path: noisy_name,
            clean_path: clean_name,
            analog_gain: pair.noisy.analog_gain,
            exposure_time_ms: pair.noisy.exposure_time_ms,
            lit_frames: *lit_frames,
            dark_frames: *dark_frames,
        });
    }
    write_json(&dir.join(PAIRS_MANIFEST), &manifest)
}

/// Loads an evaluation pair set written by [`save_pairs`].
pub fn load_pairs(dir: &Path) -> anyhow::Result<Vec<TestPair>> {
    let manifest: PairsManifest = read_json(&dir.join(PAIRS_MANIFEST))?;
    manifest
        .pairs
        .iter()
        .map(|record| {
            let noisy = load_frame(&dir.join(&record.noisy_path))
                .with_context(|| format!("pair {}", record.id))?;
            let clean = load_float_frame(&dir.join(&record.clean_path))
                .with_context(|| format!("pair {}", record.id))?;
            Ok(TestPair {
                id: record.id.clone(),
                noisy,
                clean,
                gain_class: record.gain_class,
            })
        })
        .collect()
}

/// Stem of a path's file name, for deriving output names.
pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "frame".to_string())
}
