use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use srvc_core::adaptation::TrainingConfig;
use srvc_core::pipeline::EncodeJob;
use srvc_core::sr_model::ModelConfig;

/// Super-resolution video compression: a downsampled content stream plus a
/// stream of sparse model updates.
#[derive(Debug, Parser)]
#[command(name = "srvc", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads for parallel sections (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,

    /// Print progress to stderr; repeat for more detail.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    /// key=value file whose entries act as default flag values for the subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode a video into an output directory.
    #[command(args_override_self = true)]
    Encode(EncodeArgs),
    /// Decode an encoded directory into a PNG sequence.
    #[command(args_override_self = true)]
    Decode(DecodeArgs),
    /// Compare two videos with PSNR and SSIM.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Run a rate-distortion sweep.
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
    /// Print a model stream's header and per-update statistics.
    #[command(args_override_self = true)]
    Inspect(InspectArgs),
    /// Write a synthetic moving-texture clip.
    #[command(args_override_self = true)]
    Synth(SynthArgs),
    /// Time one forward pass of the model.
    #[command(args_override_self = true)]
    Bench(BenchArgs),
}

/// Parses `inf`/`infinity` or a positive number of seconds.
pub fn parse_tau(s: &str) -> Result<f64, String> {
    match s.to_ascii_lowercase().as_str() {
        "inf" | "infinity" => Ok(f64::INFINITY),
        other => match other.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
            _ => Err(format!("`{s}` is not a positive number of seconds or `inf`")),
        },
    }
}

/// Parses `start:end` as a half-open frame range.
pub fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("`{s}` is not of the form start:end"))?;
    let a: usize = a.parse().map_err(|_| format!("bad range start `{a}`"))?;
    let b: usize = b.parse().map_err(|_| format!("bad range end `{b}`"))?;
    if b <= a {
        return Err(format!("range `{s}` is empty"));
    }
    Ok((a, b))
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Feature channels of the adaptive convolution.
    #[arg(short = 'F', long, default_value_t = ModelConfig::default().feature_channels)]
    pub feature_channels: usize,
    /// Patch side for the kernel generator.
    #[arg(short = 'P', long, default_value_t = ModelConfig::default().patch_size)]
    pub patch: usize,
    /// Upscaling factor.
    #[arg(short = 'k', long, default_value_t = ModelConfig::default().scale)]
    pub scale: usize,
    /// Hidden width of the kernel generator.
    #[arg(long, default_value_t = ModelConfig::default().generator_width)]
    pub generator_width: usize,
    /// Width of the regular convolution after the adaptive block.
    #[arg(long, default_value_t = ModelConfig::default().regular_width)]
    pub regular_width: usize,
}

impl ModelArgs {
    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            feature_channels: self.feature_channels,
            patch_size: self.patch,
            scale: self.scale,
            generator_width: self.generator_width,
            regular_width: self.regular_width,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct JobArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Fraction of parameters updated per segment.
    #[arg(long, default_value_t = TrainingConfig::default().eta)]
    pub eta: f64,
    /// Update interval in seconds, or `inf` for a single model.
    #[arg(long, value_parser = parse_tau, default_value = "10")]
    pub tau: f64,
    /// Training epochs per segment.
    #[arg(long, default_value_t = TrainingConfig::default().epochs_per_segment)]
    pub epochs: usize,
    /// Epochs over the whole video for the initial model.
    #[arg(long, default_value_t = EncodeJob::default().initial_epochs)]
    pub initial_epochs: usize,
    /// Adam learning rate for segment training.
    #[arg(long, default_value_t = TrainingConfig::default().learning_rate)]
    pub lr: f64,
    /// Adam learning rate for the initial model (defaults to --lr).
    #[arg(long)]
    pub initial_lr: Option<f64>,
    /// Train on random half-size crops.
    #[arg(long, action = ArgAction::Set, default_value_t = true)]
    pub crop: bool,
    /// Seed for crop sampling during training.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed for the initial weights.
    #[arg(long, default_value_t = 0)]
    pub init_seed: u64,
    /// Content codec: lossless, quant or external.
    #[arg(long, default_value = "lossless")]
    pub codec: String,
    /// Codec quality setting (levels for quant, CRF for external).
    #[arg(long, default_value_t = 0)]
    pub quality: u32,
}

impl JobArgs {
    pub fn job(&self) -> EncodeJob {
        EncodeJob {
            model: self.model.config(),
            tau: self.tau,
            training: TrainingConfig {
                learning_rate: self.lr,
                eta: self.eta,
                epochs_per_segment: self.epochs,
                crop: self.crop,
                seed: self.seed,
                ..TrainingConfig::default()
            },
            initial_epochs: self.initial_epochs,
            initial_learning_rate: self.initial_lr.unwrap_or(self.lr),
            codec_id: self.codec.clone(),
            quality: self.quality,
            init_seed: self.init_seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Raw video file, directory containing video.rgbp, or PNG directory.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub output: PathBuf,
    /// Frame rate for PNG input.
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    #[command(flatten)]
    pub job: JobArgs,
    /// Directory for a resumable checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// CSV file for per-segment training statistics.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Encoded directory.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory for the decoded PNG frames.
    #[arg(long)]
    pub output: PathBuf,
    /// Half-open frame range start:end.
    #[arg(long, value_parser = parse_range)]
    pub frames: Option<(usize, usize)>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Frame rate for PNG input.
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    /// CSV file for per-frame PSNR and SSIM.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Frame rate for PNG input.
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    #[command(flatten)]
    pub job: JobArgs,
    /// Quality settings to sweep.
    #[arg(long, value_delimiter = ',', required = true)]
    pub qualities: Vec<u32>,
    /// Update fractions to sweep (defaults to --eta).
    #[arg(long, value_delimiter = ',')]
    pub etas: Vec<f64>,
    /// Update intervals to sweep (defaults to --tau).
    #[arg(long, value_delimiter = ',', value_parser = parse_tau)]
    pub taus: Vec<f64>,
    /// Feature-channel counts to sweep (defaults to -F).
    #[arg(long, value_delimiter = ',')]
    pub feature_values: Vec<usize>,
    /// Rate-distortion CSV output.
    #[arg(long)]
    pub csv: PathBuf,
    /// Per-frame CSV output.
    #[arg(long)]
    pub cdf: Option<PathBuf>,
    /// SVG plot rendered from the CSV.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Model stream file or encoded directory.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output raw file (`.rgbp`) or PNG directory.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 60)]
    pub frames: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 10.0)]
    pub fps: f64,
    /// Switch to a second texture halfway through.
    #[arg(long)]
    pub scene_change: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// LR input height.
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    /// LR input width.
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 10)]
    pub repetitions: usize,
}
