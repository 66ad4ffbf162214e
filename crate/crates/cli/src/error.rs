use std::fmt;
use std::path::Path;

use maskbeam::audio_io::AudioError;
use maskbeam::beamform::BeamformError;
use maskbeam::mask::MaskError;
use maskbeam::metrics::MetricsError;
use maskbeam::pipeline::PipelineError;
use maskbeam::simulate::SimulateError;
use maskbeam::stft::StftError;

/// A failure reported as `error: <code>: <message>`.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new("usage", message)
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", message)
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new("validation", message)
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self::new("io", format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        if self.code == "usage" {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error: {}: {}", self.code, self.message.replace('\n', " "))
    }
}

impl From<AudioError> for CliError {
    fn from(e: AudioError) -> Self {
        let code = match e {
            AudioError::Io { .. } | AudioError::MissingFile(_) => "io",
            _ => "audio",
        };
        Self::new(code, e.to_string())
    }
}

impl From<StftError> for CliError {
    fn from(e: StftError) -> Self {
        Self::new("stft", e.to_string())
    }
}

impl From<MaskError> for CliError {
    fn from(e: MaskError) -> Self {
        let code = match e {
            MaskError::Io { .. } => "io",
            MaskError::Tensor { .. } | MaskError::Structure(_) => "weights",
            _ => "mask",
        };
        Self::new(code, e.to_string())
    }
}

impl From<BeamformError> for CliError {
    fn from(e: BeamformError) -> Self {
        Self::new("beamform", e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        Self::new("metrics", e.to_string())
    }
}

impl From<SimulateError> for CliError {
    fn from(e: SimulateError) -> Self {
        match e {
            SimulateError::Audio(a) => a.into(),
            SimulateError::Stft(s) => s.into(),
            SimulateError::Mask(m) => m.into(),
            SimulateError::InvalidGeometry(_) | SimulateError::InvalidInput(_) => Self::validation(e.to_string()),
            other => Self::new("simulate", other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Audio(a) => a.into(),
            PipelineError::Stft(s) => s.into(),
            PipelineError::Mask(m) => m.into(),
            PipelineError::Beamform(b) => b.into(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
