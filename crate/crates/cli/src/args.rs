use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gmxc_core::codec::CodingMode;
use gmxc_core::metrics::DistortionMetric;

#[derive(Parser, Debug)]
#[command(name = "gmxc", version, about = "Learned image codec with Gaussian-mixture entropy models")]
pub struct Cli {
    /// Print timings and extra detail to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compress a PPM/PGM or TNSR image into a GMMC container.
    Encode(EncodeArgs),
    /// Reconstruct an image from a GMMC container.
    Decode(DecodeArgs),
    /// Describe a container; with a model, also the per-element rate.
    Inspect(InspectArgs),
    /// Run the built-in property checks.
    Selftest(SelftestArgs),
    /// Encode every image in a directory and emit CSV rate-distortion rows.
    Bench(BenchArgs),
    /// Write randomly initialized weights to a GMXW file.
    InitWeights(InitWeightsArgs),
}

#[derive(Args, Debug, Clone)]
#[group(required = false, multiple = false)]
pub struct ModelSource {
    /// GMXW weight file.
    #[arg(long, value_name = "FILE")]
    pub weights: Option<PathBuf>,
    /// Use deterministic random weights generated from this seed.
    #[arg(long, value_name = "SEED")]
    pub init_seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelShape {
    /// Latent channel count (only with --init-seed).
    #[arg(short = 'N', long = "channels", value_name = "N")]
    pub n: Option<usize>,
    /// Mixture components (only with --init-seed).
    #[arg(short = 'K', long = "components", value_name = "K")]
    pub k: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeArg {
    Hyperprior,
    Joint,
}

impl From<ModeArg> for CodingMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Hyperprior => CodingMode::Hyperprior,
            ModeArg::Joint => CodingMode::Joint,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricArg {
    Mse,
    MsSsim,
}

impl From<MetricArg> for DistortionMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Mse => DistortionMetric::Mse,
            MetricArg::MsSsim => DistortionMetric::MsSsim,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct RdArgs {
    #[arg(long, value_enum, default_value = "joint")]
    pub mode: ModeArg,
    /// Rate-distortion trade-off reported in the loss.
    #[arg(long, default_value_t = 0.015)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value = "mse")]
    pub metric: MetricArg,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub model: ModelSource,
    #[command(flatten)]
    pub shape: ModelShape,
    #[command(flatten)]
    pub rd: RdArgs,
    /// Also write the quantized latent ŷ as an i32 TNSR file.
    #[arg(long, value_name = "FILE")]
    pub latents: Option<PathBuf>,
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub model: ModelSource,
    #[command(flatten)]
    pub shape: ModelShape,
    /// Also write the decoded ŷ as an i32 TNSR file.
    #[arg(long, value_name = "FILE")]
    pub latents: Option<PathBuf>,
    pub input: PathBuf,
    /// `.tnsr` writes f32 [3, H, W]; anything else writes a binary PPM.
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[command(flatten)]
    pub model: ModelSource,
    #[command(flatten)]
    pub shape: ModelShape,
    /// Export the required-bits map: `.tnsr` gives f32 [N, h, w], `.pgm` a
    /// heatmap of bits summed over channels. Needs a model.
    #[arg(long, value_name = "FILE")]
    pub bits_map: Option<PathBuf>,
    pub input: PathBuf,
}

#[derive(Args, Debug)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Use this model for the pipeline check instead of a small random one.
    #[arg(long, value_name = "FILE")]
    pub weights: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelSource,
    #[command(flatten)]
    pub shape: ModelShape,
    #[command(flatten)]
    pub rd: RdArgs,
    /// CSV destination; stdout when omitted.
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    pub dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct InitWeightsArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(short = 'N', long = "channels", default_value_t = 128)]
    pub n: usize,
    #[arg(short = 'K', long = "components", default_value_t = 3)]
    pub k: usize,
    pub output: PathBuf,
}
