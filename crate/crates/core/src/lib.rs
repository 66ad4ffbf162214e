pub mod audio_io;
pub mod stft;
pub mod mask;
pub mod beamform;
pub mod metrics;
pub mod simulate;
pub mod pipeline;
