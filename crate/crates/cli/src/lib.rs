//! Command-line front end: `disparity <command>`.

pub mod colormap;
pub mod commands;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use error::{exit, CliError, CliResult};
pub use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "disparity", version, about = "Stereo disparity training, inference and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 64×128 stereograms, 8 base channels, abbreviated rounds
    Desk,
    /// full-size defaults (20/20/20/30 epochs, 384×768 crops)
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Predictor {
    Model,
    /// constant zero disparity
    Zero,
    /// the ground truth itself
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchKernel {
    PatchCorr,
    PointwiseCorr,
    Warp,
    Conv2d,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train with the four-round loss-weight schedule.
    Train {
        /// TOML configuration; unspecified fields take the preset's values
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
        /// Training manifest; synthetic stereograms are generated when absent
        #[arg(long)]
        data: Option<PathBuf>,
        /// Held-out manifest used for per-epoch test metrics
        #[arg(long)]
        test_data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Stop after this many epochs (the schedule may be resumed later)
        #[arg(long)]
        max_epochs: Option<usize>,
        /// Continue from a checkpoint written by an earlier run
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Predict disparity for one stereo pair.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        /// Output disparity (.pfm or 16-bit .png)
        #[arg(long)]
        out: PathBuf,
        /// Also write a colour-mapped PNG
        #[arg(long)]
        color: Option<PathBuf>,
    },
    /// Report EPE and D1 over a manifest.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "model")]
        predictor: Predictor,
        /// Write the report as JSON
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Write random-dot stereograms and a manifest.
    GenData {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Upper bound of layered disparity fields
        #[arg(long, default_value_t = 12.0)]
        max_disparity: f64,
        /// Use a constant field instead of layered surfaces
        #[arg(long)]
        constant: Option<f64>,
        #[arg(long, default_value_t = 2)]
        objects: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time a kernel.
    Bench {
        #[arg(long, value_enum)]
        kernel: BenchKernel,
        /// NxCxHxW
        #[arg(long, default_value = "1x64x48x96")]
        shape: String,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = 5)]
        warmup: usize,
        /// Correlation search range D
        #[arg(long, default_value_t = 20)]
        max_range: usize,
        /// Patch half-size k for patch correlation
        #[arg(long, default_value_t = 1)]
        kernel_half_size: usize,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Print a complete configuration file.
    DumpConfig {
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
    },
    /// Colour-map a disparity file.
    Render {
        #[arg(long)]
        disparity: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Disparity mapped to the top of the colormap (default: map maximum)
        #[arg(long)]
        max: Option<f32>,
    },
    /// Replay the command recorded in a run manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
    },
}

/// Executes a parsed command. `argv` excludes the program name.
pub fn run(cli: Cli, argv: &[String]) -> CliResult<()> {
    commands::dispatch(cli.command, argv)
}

/// Parses `argv` (without program name) and runs it.
pub fn run_args(argv: &[String]) -> CliResult<()> {
    let full = std::iter::once("disparity".to_string()).chain(argv.iter().cloned());
    let cli = Cli::try_parse_from(full).map_err(|e| CliError::usage(e.to_string()))?;
    run(cli, argv)
}
