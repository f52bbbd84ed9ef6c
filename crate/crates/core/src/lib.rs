//! Raw-domain noise modeling, calibration, and denoising for ultra-compact
//! analog image sensors.
//!
//! The crate covers the full loop around a physically motivated sensor noise
//! model:
//!
//! - [`synth`]: forward model turning clean frames into noisy raw captures
//!   (shot, read, ADC quantization, fixed-pattern, periodic banding noise).
//! - [`pbn`]: single-frame estimation and removal of the periodic column
//!   banding introduced by analog signal transmission.
//! - [`fpn`]: dark-frame calibration of per-pixel slope/offset fixed-pattern
//!   noise and its subtraction at capture settings.
//! - [`pg`]: flat-field calibration of the Poisson-Gaussian variance line
//!   and synthetic training-pair generation.
//! - [`denoise`]: variance-stabilized residual denoising and the full
//!   pipeline (banding, fixed pattern, residual) with stage retention.
//! - [`metrics`]: raw-domain PSNR/SSIM, paired test-set construction, and
//!   the stage-by-stage ablation report.
//! - [`fixedpoint`]: 12-bit fixed-point execution mode with range profiling
//!   and fixed-vs-float fidelity reporting.
//! - [`frame`], [`io`], [`demosaic`]: containers, PGM+sidecar file I/O, and a
//!   bilinear preview demosaic for visualization.

pub mod demosaic;
pub mod denoise;
pub mod error;
pub mod fixedpoint;
pub mod fpn;
pub mod frame;
pub mod io;
pub mod metrics;
pub mod pbn;
pub mod pg;
pub mod synth;

pub use demosaic::{demosaic_preview, demosaic_preview_raw, RgbImage};
pub use denoise::{
    denoise_pipeline, denoise_pipeline_stages, denoise_residual, vst_forward, vst_inverse,
    DenoiseConfig, PipelineStages, Smoother,
};
pub use error::{Error, Result};
pub use fixedpoint::{
    profile_qplan, quantize_value, run_pipeline_fixed, FixedRunStats, QFormat, QPlan, QPlanEntry,
    FIXED_TOTAL_BITS, PIPELINE_STAGE_NAMES,
};
pub use fpn::{calibrate_fpn, load_fpn_map, predict_fpn, remove_fpn, save_fpn_map, FpnMap};
pub use frame::{
    average_float_frames, temporal_average, BayerPattern, CfaColor, FloatFrame, FrameStack,
    RawFrame,
};
pub use io::{
    load_float_frame, load_frame, quantize_to_raw, read_pgm, save_float_frame, save_frame,
    sidecar_path, write_pgm, write_ppm, Sidecar,
};
pub use metrics::{
    build_test_pair, evaluate_suite, psnr, ssim, ssim_with, AblationReport, ClassReport,
    GainClass, GainThresholds, SsimWindow, StageMetrics, TestPair, STAGE_NAMES,
};
pub use pbn::{estimate_pbn, remove_pbn, PbnEstimate, DEFAULT_PBN_PERIOD};
pub use pg::{
    calibrate_pg, make_training_pairs, Augmentation, CropRect, PgCalibration, PgEntry, PgParams,
    TrainingManifest, TrainingPairOptions, TrainingPairRecord,
};
pub use synth::{
    pbn_pattern, synthesize_noise, CaptureSettings, NoiseModelParams, PbnParams,
    NOISE_RNG_ALGORITHM,
};
