use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use maskbeam::mask::Condense;
use maskbeam::simulate::MaskKind;
use maskbeam::stft::{StftConfig, WindowKind};

#[derive(Debug, Parser)]
#[command(name = "maskbeam", version, about = "Mask-based multichannel speech enhancement")]
pub struct Cli {
    /// Worker threads for parallel stages (0 = one per CPU).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic multichannel scene.
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
    /// Enhance a multichannel mixture.
    #[command(args_override_self = true)]
    Enhance(EnhanceArgs),
    /// Score estimates against references (SDR, STOI, eSTOI).
    #[command(args_override_self = true)]
    Metrics(MetricsArgs),
    /// Train the BLSTM mask estimator.
    #[command(name = "train-mask", args_override_self = true)]
    TrainMask(TrainArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WindowArg {
    Hann,
    SqrtHann,
    Blackman,
    Rectangular,
}

impl From<WindowArg> for WindowKind {
    fn from(w: WindowArg) -> Self {
        match w {
            WindowArg::Hann => WindowKind::Hann,
            WindowArg::SqrtHann => WindowKind::SqrtHann,
            WindowArg::Blackman => WindowKind::Blackman,
            WindowArg::Rectangular => WindowKind::Rectangular,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct StftArgs {
    /// STFT frame and FFT length in samples.
    #[arg(long, default_value_t = 1024)]
    pub fft_size: usize,
    /// STFT hop in samples.
    #[arg(long, default_value_t = 256)]
    pub hop: usize,
    /// STFT analysis/synthesis window.
    #[arg(long, value_enum, default_value_t = WindowArg::Hann)]
    pub window: WindowArg,
}

impl StftArgs {
    pub fn config(&self) -> StftConfig {
        StftConfig { fft_size: self.fft_size, hop: self.hop, window: self.window.into() }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// JSON file whose keys supply default values for the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Mono clean source WAV. A synthetic speech-like source is used when absent.
    #[arg(long)]
    pub clean: Option<PathBuf>,
    /// Noise: "white", "pink" or a mono WAV path.
    #[arg(long, default_value = "white")]
    pub noise: String,
    /// Number of microphones.
    #[arg(long, default_value_t = 6)]
    pub channels: usize,
    /// Input SNR at channel 0 in dB.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub snr_db: f64,
    /// Comma-separated per-channel source delays in samples.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub delays: Option<Vec<f64>>,
    /// Inter-microphone delay of the linear array used when --delays is absent.
    #[arg(long, default_value_t = maskbeam::simulate::DEFAULT_DELAY_STEP, allow_negative_numbers = true)]
    pub delay_step: f64,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Length of the synthetic source in seconds.
    #[arg(long, default_value_t = 2.0)]
    pub duration: f64,
    /// Sample rate of the synthetic source in Hz.
    #[arg(long, default_value_t = 16000)]
    pub sample_rate: u32,
    #[command(flatten)]
    pub stft: StftArgs,
    /// Output scene directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    GevOracle,
    GevNet,
    Ds,
    Mask1chOracle,
    Mask1chNet,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::GevOracle => "gev-oracle",
            Method::GevNet => "gev-net",
            Method::Ds => "ds",
            Method::Mask1chOracle => "mask1ch-oracle",
            Method::Mask1chNet => "mask1ch-net",
        }
    }

    pub fn uses_net(self) -> bool {
        matches!(self, Method::GevNet | Method::Mask1chNet)
    }

    pub fn uses_oracle(self) -> bool {
        matches!(self, Method::GevOracle | Method::Mask1chOracle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskKindArg {
    Ibm,
    Irm,
}

impl From<MaskKindArg> for MaskKind {
    fn from(k: MaskKindArg) -> Self {
        match k {
            MaskKindArg::Ibm => MaskKind::Ibm,
            MaskKindArg::Irm => MaskKind::Irm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CondenseArg {
    Median,
    Mean,
}

impl From<CondenseArg> for Condense {
    fn from(c: CondenseArg) -> Self {
        match c {
            CondenseArg::Median => Condense::Median,
            CondenseArg::Mean => Condense::Mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskOverride {
    Ones,
    Zeros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncodingArg {
    Float32,
    Pcm16,
}

#[derive(Debug, Clone, Args)]
pub struct EnhanceArgs {
    /// JSON file whose keys supply default values for the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Enhancement method.
    #[arg(long, value_enum, default_value_t = Method::GevOracle)]
    pub method: Method,
    /// Scene directory written by `simulate` (needed by oracle methods).
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Multichannel mixture WAV (alternative to --scene for non-oracle methods).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Mask-network weight manifest (needed by net methods).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Oracle mask type.
    #[arg(long, value_enum, default_value_t = MaskKindArg::Irm)]
    pub mask_kind: MaskKindArg,
    /// Replace the speech mask by all ones or all zeros (noise mask is its complement).
    #[arg(long, value_enum)]
    pub mask_override: Option<MaskOverride>,
    /// How per-channel network masks are combined.
    #[arg(long, value_enum, default_value_t = CondenseArg::Median)]
    pub condense: CondenseArg,
    /// Apply blind analytic normalization to the GEV filters.
    #[arg(long)]
    pub ban: bool,
    /// Relative diagonal loading of the noise PSD.
    #[arg(long, default_value_t = maskbeam::beamform::DEFAULT_DIAG_LOADING)]
    pub diag_loading: f64,
    /// Reference channel for single-channel and delay-and-sum methods.
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    /// Largest lag searched by delay-and-sum, in samples.
    #[arg(long, default_value_t = 16)]
    pub max_lag: usize,
    /// Write the GEV filters and eigenvalues as JSON.
    #[arg(long)]
    pub weights_dump: Option<PathBuf>,
    /// Sample encoding of the output WAV.
    #[arg(long, value_enum, default_value_t = EncodingArg::Float32)]
    pub encoding: EncodingArg,
    #[command(flatten)]
    pub stft: StftArgs,
    /// Output WAV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct MetricsArgs {
    /// JSON file whose keys supply default values for the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reference WAV, or a directory of references in batch mode.
    #[arg(long)]
    pub reference: PathBuf,
    /// Estimate WAV, or a directory of estimates with matching file names.
    #[arg(long)]
    pub estimate: PathBuf,
    /// Channel of the reference file to score against.
    #[arg(long, default_value_t = 0)]
    pub ref_channel: usize,
    /// Channel of the estimate file to score.
    #[arg(long, default_value_t = 0)]
    pub est_channel: usize,
    /// Resample the estimate to the reference rate when they differ.
    #[arg(long)]
    pub resample: bool,
    /// Utterance id (single-pair mode; defaults to the estimate file stem).
    #[arg(long)]
    pub id: Option<String>,
    /// Method label stored in the report.
    #[arg(long, default_value = "unknown")]
    pub method: String,
    /// Optional track label stored in the report.
    #[arg(long)]
    pub track: Option<String>,
    /// Externally computed PESQ value (single-pair mode).
    #[arg(long)]
    pub pesq: Option<f64>,
    /// Largest delay searched by SDR, in samples.
    #[arg(long, default_value_t = maskbeam::metrics::REPORT_MAX_DELAY)]
    pub max_delay: usize,
    /// Output JSON path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// JSON file whose keys supply default values for the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory containing scene directories.
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    /// Generate this many single-channel scenes instead of reading --scenes.
    #[arg(long)]
    pub auto_generate: Option<usize>,
    /// Length of generated scenes in seconds.
    #[arg(long, default_value_t = 0.5)]
    pub auto_duration: f64,
    /// SNR of generated scenes in dB.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub auto_snr_db: f64,
    /// Seed for initialization, batch order, dropout and generated scenes.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of SGD steps.
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Learning rate.
    #[arg(long, default_value_t = 5.0)]
    pub lr: f64,
    /// Utterances per step.
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    /// Steps between loss-log entries (the final step is always logged).
    #[arg(long, default_value_t = 10)]
    pub log_every: usize,
    /// Start from these weights instead of a fresh initialization.
    #[arg(long)]
    pub init_weights: Option<PathBuf>,
    /// JSON-lines loss log path (default: next to --out with a .loss.jsonl extension).
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
    #[command(flatten)]
    pub stft: StftArgs,
    /// Output weight manifest path; the blob is written next to it with a .bin extension.
    #[arg(long)]
    pub out: PathBuf,
}
