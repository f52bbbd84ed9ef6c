//! Optional JSON config file supplying defaults; flags always win.

use std::path::Path;

use anyhow::Context;
use endoraw_core::{DenoiseConfig, GainThresholds, NoiseModelParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct SuiteConfig {
    /// Default seed for generation commands.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Forward noise model for `simulate`.
    #[serde(default)]
    pub noise: Option<NoiseModelParams>,
    /// Residual-denoiser settings for `denoise`, `evaluate`,
    /// `quantize-check`.
    #[serde(default)]
    pub denoise: Option<DenoiseConfig>,
    /// Gain-class boundaries for `build-dataset`.
    #[serde(default)]
    pub thresholds: Option<GainThresholds>,
    /// Flatness threshold for banding estimation in calibration commands.
    #[serde(default)]
    pub pbn_theta: Option<f64>,
}

impl SuiteConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(SuiteConfig::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))
            }
        }
    }

    pub fn denoise_config(&self) -> DenoiseConfig {
        self.denoise.clone().unwrap_or_default()
    }

    pub fn thresholds(&self) -> GainThresholds {
        self.thresholds.unwrap_or_default()
    }
}
