//! `mfst` command-line front end.

pub mod commands;
pub mod config;
pub mod error;
pub mod frames;
pub mod ppm;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mfst_core::synth::SyntheticSpec;
use mfst_core::{BoundingBox, FusionStrategy};

use config::{ConfigValues, RunConfig};
use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "mfst", version, about = "Multi-feature siamese object tracker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track a target through a directory of PPM frames.
    Track(TrackArgs),
    /// Run the reset-based accuracy/robustness protocol on a sequence.
    Reset(TrackArgs),
    /// Score a result file against ground truth.
    Eval(EvalArgs),
    /// Render a synthetic sequence with exact ground truth.
    Synth(SynthArgs),
    /// List the tensors of a weight file.
    Inspect {
        weights: PathBuf,
    },
    /// Write seeded random weights to a file.
    ExportWeights {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args, Default)]
pub struct TrackArgs {
    /// key = value file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// MFSTW001 weight file.
    #[arg(long, conflicts_with = "seed")]
    pub weights: Option<PathBuf>,
    /// Use seeded random weights instead of a file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory of numbered .ppm frames.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Ground-truth boxes; the first line initializes the tracker.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Initial box `x,y,w,h`; overrides the first ground-truth line.
    #[arg(long, value_parser = parse_box_arg, allow_hyphen_values = true)]
    pub init: Option<BoundingBox>,
    /// Output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fusion of the S layers (hw, sm, sw).
    #[arg(long)]
    pub s_fusion: Option<FusionStrategy>,
    /// Fusion of the A layers (hw, sm, sw).
    #[arg(long)]
    pub a_fusion: Option<FusionStrategy>,
    /// Fusion of the two model maps (hw, sm, sw).
    #[arg(long)]
    pub cross_fusion: Option<FusionStrategy>,
    /// Cosine-window influence in [0, 1].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Disable the cosine window.
    #[arg(long)]
    pub no_window: bool,
    /// Comma-separated scale factors, e.g. 0.9756,1,1.025.
    #[arg(long, value_parser = parse_scales_arg)]
    pub scales: Option<Vec<f64>>,
    /// Write the six layer maps and the fused map of every frame here.
    #[arg(long)]
    pub dump_responses: Option<PathBuf>,
    /// Write frames with the predicted box drawn here.
    #[arg(long)]
    pub overlay: Option<PathBuf>,
    /// Evaluate the scales in parallel.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Also write report.txt, precision.txt and success.txt here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub length: usize,
    #[arg(long, default_value_t = 360)]
    pub width: usize,
    #[arg(long, default_value_t = 240)]
    pub height: usize,
    /// Side of the square target.
    #[arg(long, default_value_t = 40.0)]
    pub size: f64,
    /// Per-frame motion `dx,dy`.
    #[arg(long, default_value = "2,1", value_parser = parse_pair_arg, allow_hyphen_values = true)]
    pub velocity: (f64, f64),
    /// Center on frame 0 as `x,y`; defaults to centering the trajectory.
    #[arg(long, value_parser = parse_pair_arg)]
    pub start: Option<(f64, f64)>,
    /// `solid`, `checker` or `checker:CELL`.
    #[arg(long, default_value = "solid", value_parser = parse_texture_arg)]
    pub texture: mfst_core::synth::Texture,
    /// Standard deviation of background noise; 0 for a flat background.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_box_arg(s: &str) -> std::result::Result<BoundingBox, String> {
    config::parse_box(s).ok_or_else(|| format!("expected x,y,w,h with positive size, got {s:?}"))
}

fn parse_scales_arg(s: &str) -> std::result::Result<Vec<f64>, String> {
    config::parse_scales(s).ok_or_else(|| format!("expected comma-separated numbers, got {s:?}"))
}

fn parse_pair_arg(s: &str) -> std::result::Result<(f64, f64), String> {
    let parts: Option<Vec<f64>> = s.split(',').map(|p| p.trim().parse().ok()).collect();
    match parts.as_deref() {
        Some([a, b]) => Ok((*a, *b)),
        _ => Err(format!("expected two comma-separated numbers, got {s:?}")),
    }
}

fn parse_texture_arg(s: &str) -> std::result::Result<mfst_core::synth::Texture, String> {
    commands::parse_texture(s).ok_or_else(|| format!("expected solid, checker or checker:CELL, got {s:?}"))
}

impl TrackArgs {
    fn values(&self) -> ConfigValues {
        ConfigValues {
            weights: self.weights.clone(),
            seed: self.seed,
            s_fusion: self.s_fusion,
            a_fusion: self.a_fusion,
            cross_fusion: self.cross_fusion,
            gamma: self.gamma,
            window: self.no_window.then_some(false),
            scales: self.scales.clone(),
            frames: self.frames.clone(),
            gt: self.gt.clone(),
            init: self.init,
            out: self.out.clone(),
            dump_responses: self.dump_responses.clone(),
            overlay: self.overlay.clone(),
            parallel: self.parallel.then_some(true),
        }
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(path) => {
                if !path.exists() {
                    return Err(CliError::missing(path, "config file not found"));
                }
                ConfigValues::load(path)?
            }
            None => ConfigValues::default(),
        };
        RunConfig::resolve(base.overridden_by(self.values()))
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Track(args) => {
            let cfg = args.resolve()?;
            let summary = commands::track(&cfg)?;
            eprintln!("tracked {} frames -> {}", summary.frames, cfg.out.display());
        }
        Command::Reset(args) => {
            let cfg = args.resolve()?;
            commands::print(&commands::reset_run(&cfg)?);
        }
        Command::Eval(args) => {
            let report = commands::evaluate(&args.result, &args.gt, args.out_dir.as_deref())?;
            commands::print(&report);
        }
        Command::Synth(args) => {
            let spec = SyntheticSpec {
                width: args.width,
                height: args.height,
                target_size: args.size,
                start: args.start,
                velocity: args.velocity,
                texture: args.texture,
                background: commands::background(args.noise),
                seed: args.seed,
                length: args.length,
                ..SyntheticSpec::default()
            };
            let n = commands::synth(spec, &args.out)?;
            eprintln!("wrote {n} frames to {}", args.out.display());
        }
        Command::Inspect { weights } => commands::print(&commands::inspect(&weights)?),
        Command::ExportWeights { seed, out } => commands::export_weights(seed, &out)?,
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
