//! End-to-end enhancement paths built from the individual modules.

use thiserror::Error;

use crate::audio_io::{AudioError, Waveform};
use crate::beamform::{
    apply_beamformer, ban_postfilter, delay_and_sum, estimate_psd, gev_solve, mask_enhance_1ch, BeamformError, BeamformerWeights,
    DEFAULT_DIAG_LOADING,
};
use crate::mask::{condense, normalize_features, Condense, MaskError, MaskNet, MaskPair};
use crate::stft::{istft, magnitude, stft, Spectrogram, StftConfig, StftError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Stft(#[from] StftError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Beamform(#[from] BeamformError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GevOptions {
    pub diag_loading: f64,
    pub ban: bool,
}

impl Default for GevOptions {
    fn default() -> Self {
        GevOptions { diag_loading: DEFAULT_DIAG_LOADING, ban: false }
    }
}

/// Mask-based GEV beamforming of a multichannel mixture.
pub fn enhance_gev(
    mixture: &Waveform,
    masks: &MaskPair,
    cfg: &StftConfig,
    opts: GevOptions,
) -> Result<Waveform, PipelineError> {
    Ok(gev_beamform(mixture, masks, cfg, opts)?.0)
}

/// As [`enhance_gev`], also returning the filters that were applied.
pub fn gev_beamform(
    mixture: &Waveform,
    masks: &MaskPair,
    cfg: &StftConfig,
    opts: GevOptions,
) -> Result<(Waveform, BeamformerWeights), PipelineError> {
    let spec = stft(mixture, cfg)?;
    let psd = estimate_psd(&spec, masks)?;
    let mut weights = gev_solve(&psd, opts.diag_loading)?;
    if opts.ban {
        weights = ban_postfilter(&weights, &psd)?;
    }
    let out = apply_beamformer(&spec, &weights)?;
    Ok((istft(&out, cfg, mixture.num_frames())?, weights))
}

/// Speech mask applied to a single channel of the mixture.
pub fn enhance_mask_1ch(
    mixture: &Waveform,
    channel: usize,
    speech_mask: &ndarray::Array2<f64>,
    cfg: &StftConfig,
) -> Result<Waveform, PipelineError> {
    let spec = stft(mixture, cfg)?;
    let out = mask_enhance_1ch(&spec, channel, speech_mask)?;
    Ok(istft(&out, cfg, mixture.num_frames())?)
}

pub fn enhance_delay_and_sum(mixture: &Waveform, ref_channel: usize, max_lag: usize) -> Result<Waveform, PipelineError> {
    Ok(delay_and_sum(mixture, ref_channel, max_lag)?)
}

/// Per-channel network masks in inference mode.
pub fn net_masks_per_channel(net: &MaskNet, spec: &Spectrogram) -> Result<Vec<MaskPair>, PipelineError> {
    (0..spec.num_channels())
        .map(|ch| {
            let features = normalize_features(&magnitude(spec, ch)?);
            Ok(net.forward(&features, false, 0)?)
        })
        .collect()
}

/// Network masks for every channel, condensed into one pair.
pub fn net_masks(net: &MaskNet, spec: &Spectrogram, method: Condense) -> Result<MaskPair, PipelineError> {
    Ok(condense(&net_masks_per_channel(net, spec)?, method)?)
}
