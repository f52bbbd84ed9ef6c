//! Operator-facing workflows wiring the calibration, simulation, denoising,
//! dataset, and evaluation modules into one binary.
//!
//! Conventions shared by every subcommand:
//! - logs go to standard error, data to files or standard output;
//! - directory inputs are processed in lexicographic filename order;
//! - every emitted manifest embeds the seeds and parameters needed to
//!   reproduce its artifacts byte for byte.

pub mod commands;
pub mod common;
pub mod config;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "endoraw",
    version,
    about = "Raw-domain noise modeling, calibration, and denoising toolkit",
    propagate_version = true
)]
pub struct Cli {
    /// JSON config file with defaults (seed, noise model, denoise settings,
    /// gain-class thresholds). Command-line flags win over config values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<std::path::PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize noisy raw frames from clean frames with the forward
    /// noise model.
    Simulate(commands::simulate::SimulateArgs),
    /// Calibrate the per-pixel fixed-pattern slope/offset map from
    /// dark-frame sets.
    CalibrateFpn(commands::calibrate_fpn::CalibrateFpnArgs),
    /// Calibrate the Poisson-Gaussian variance line from flat-field sets.
    CalibratePg(commands::calibrate_pg::CalibratePgArgs),
    /// Estimate periodic banding amplitude and phase for one frame.
    EstimatePbn(commands::estimate_pbn::EstimatePbnArgs),
    /// Run the denoising pipeline over a frame or a directory.
    Denoise(commands::denoise::DenoiseArgs),
    /// Build evaluation pairs from dark and lit capture stacks.
    BuildDataset(commands::build_dataset::BuildDatasetArgs),
    /// Generate synthetic (noisy, clean) training pairs from clean frames.
    MakeTrainingPairs(commands::training_pairs::TrainingPairsArgs),
    /// Evaluate the pipeline stage by stage over an evaluation pair set.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Compare the 12-bit fixed-point pipeline against the float pipeline.
    QuantizeCheck(commands::quantize_check::QuantizeCheckArgs),
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let suite = config::SuiteConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(args) => commands::simulate::run(args, &suite),
        Command::CalibrateFpn(args) => commands::calibrate_fpn::run(args, &suite),
        Command::CalibratePg(args) => commands::calibrate_pg::run(args, &suite),
        Command::EstimatePbn(args) => commands::estimate_pbn::run(args, &suite),
        Command::Denoise(args) => commands::denoise::run(args, &suite),
        Command::BuildDataset(args) => commands::build_dataset::run(args, &suite),
        Command::MakeTrainingPairs(args) => commands::training_pairs::run(args, &suite),
        Command::Evaluate(args) => commands::evaluate::run(args, &suite),
        Command::QuantizeCheck(args) => commands::quantize_check::run(args, &suite),
    }
}
