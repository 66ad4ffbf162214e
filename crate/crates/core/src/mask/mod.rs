//! Time-frequency masks: oracle targets from separated components, the
//! BLSTM mask estimator, and channel condensation.

mod net;
mod weights;

use ndarray::{Array2, Axis, Zip};
use thiserror::Error;

use crate::stft::Spectrogram;

pub use net::{MaskNet, MaskNetDims, GRAD_CLIP_NORM, KEEP_PROB};
pub use weights::{load_net, load_net_expecting, save_net, TensorEntry, WeightManifest};

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mask values must lie in [0, 1]: {0}")]
    OutOfRange(String),
    #[error("channel {channel} out of range for {channels} channels")]
    ChannelOutOfRange { channel: usize, channels: usize },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("weight file error in tensor {tensor:?}: {message}")]
    Tensor { tensor: String, message: String },
    #[error("weight file structure: {0}")]
    Structure(String),
    #[error("weight file i/o on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Speech and noise masks over frames × bins, every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    speech: Array2<f64>,
    noise: Array2<f64>,
}

impl MaskPair {
    pub fn new(speech: Array2<f64>, noise: Array2<f64>) -> Result<Self, MaskError> {
        if speech.dim() != noise.dim() {
            return Err(MaskError::ShapeMismatch(format!(
                "speech mask {:?} vs noise mask {:?}",
                speech.dim(),
                noise.dim()
            )));
        }
        let bad = |m: &Array2<f64>| m.iter().any(|v| !(0.0..=1.0).contains(v));
        if bad(&speech) || bad(&noise) {
            return Err(MaskError::OutOfRange("found an entry outside [0, 1] or NaN".into()));
        }
        Ok(Self { speech, noise })
    }

    /// Pair with `noise = 1 - speech`.
    pub fn complementary(speech: Array2<f64>) -> Result<Self, MaskError> {
        let noise = speech.mapv(|s| 1.0 - s);
        Self::new(speech, noise)
    }

    pub fn speech(&self) -> &Array2<f64> {
        &self.speech
    }

    pub fn noise(&self) -> &Array2<f64> {
        &self.noise
    }

    /// (frames, bins)
    pub fn dim(&self) -> (usize, usize) {
        self.speech.dim()
    }
}

fn channel_magnitudes(
    clean: &Spectrogram,
    noise: &Spectrogram,
    channel: usize,
) -> Result<(Array2<f64>, Array2<f64>), MaskError> {
    if clean.data.dim() != noise.data.dim() {
        return Err(MaskError::ShapeMismatch(format!(
            "clean spectrogram {:?} vs noise spectrogram {:?}",
            clean.data.dim(),
            noise.data.dim()
        )));
    }
    if channel >= clean.num_channels() {
        return Err(MaskError::ChannelOutOfRange { channel, channels: clean.num_channels() });
    }
    let c = clean.data.index_axis(Axis(0), channel).mapv(|v| v.norm());
    let n = noise.data.index_axis(Axis(0), channel).mapv(|v| v.norm());
    Ok((c, n))
}

/// Ideal binary mask: speech is 1 where the local SNR strictly exceeds
/// `threshold_db`.
pub fn oracle_ibm(
    clean: &Spectrogram,
    noise: &Spectrogram,
    channel: usize,
    threshold_db: f64,
) -> Result<MaskPair, MaskError> {
    let (c, n) = channel_magnitudes(clean, noise, channel)?;
    let speech = Zip::from(&c).and(&n).map_collect(|&c, &n| {
        let dominated = if n == 0.0 {
            c > 0.0
        } else if c == 0.0 {
            false
        } else {
            20.0 * (c / n).log10() > threshold_db
        };
        if dominated {
            1.0
        } else {
            0.0
        }
    });
    MaskPair::complementary(speech)
}

/// Ideal ratio mask from component powers; `0/0` gives speech 0, noise 1.
pub fn oracle_irm(clean: &Spectrogram, noise: &Spectrogram, channel: usize) -> Result<MaskPair, MaskError> {
    let (c, n) = channel_magnitudes(clean, noise, channel)?;
    let mut speech = Array2::zeros(c.dim());
    let mut noise_mask = Array2::zeros(c.dim());
    Zip::from(&mut speech).and(&mut noise_mask).and(&c).and(&n).for_each(|s, nm, &c, &n| {
        let (pc, pn) = (c * c, n * n);
        let total = pc + pn;
        if total > 0.0 {
            *s = pc / total;
            *nm = pn / total;
        } else {
            *s = 0.0;
            *nm = 1.0;
        }
    });
    MaskPair::new(speech, noise_mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Condense {
    #[default]
    Median,
    Mean,
}

impl std::str::FromStr for Condense {
    type Err = MaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "median" => Ok(Condense::Median),
            "mean" => Ok(Condense::Mean),
            other => Err(MaskError::InvalidArgument(format!("unknown condense method {other:?}"))),
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn condense_matrices(mats: &[&Array2<f64>], method: Condense) -> Array2<f64> {
    let (t, b) = mats[0].dim();
    let mut scratch = vec![0.0; mats.len()];
    Array2::from_shape_fn((t, b), |idx| {
        for (s, m) in scratch.iter_mut().zip(mats) {
            *s = m[idx];
        }
        match method {
            Condense::Median => median(&mut scratch),
            Condense::Mean => scratch.iter().sum::<f64>() / scratch.len() as f64,
        }
    })
}

/// Combines per-channel mask estimates entrywise; speech and noise are
/// condensed independently.
pub fn condense(per_channel: &[MaskPair], method: Condense) -> Result<MaskPair, MaskError> {
    let Some(first) = per_channel.first() else {
        return Err(MaskError::Empty("no masks to condense".into()));
    };
    if per_channel.iter().any(|m| m.dim() != first.dim()) {
        return Err(MaskError::ShapeMismatch("per-channel masks differ in shape".into()));
    }
    let speech: Vec<&Array2<f64>> = per_channel.iter().map(|m| &m.speech).collect();
    let noise: Vec<&Array2<f64>> = per_channel.iter().map(|m| &m.noise).collect();
    MaskPair::new(condense_matrices(&speech, method), condense_matrices(&noise, method))
}

pub const BCE_CLAMP: f64 = 1e-7;

pub(crate) fn bce_term(p: f64, y: f64) -> f64 {
    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Mean binary cross-entropy over both masks and all entries.
pub fn bce_loss(pred: &MaskPair, target: &MaskPair) -> Result<f64, MaskError> {
    if pred.dim() != target.dim() {
        return Err(MaskError::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let count = 2 * pred.speech.len();
    if count == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    Zip::from(&pred.speech).and(&target.speech).for_each(|&p, &y| total += bce_term(p, y));
    Zip::from(&pred.noise).and(&target.noise).for_each(|&p, &y| total += bce_term(p, y));
    Ok(total / count as f64)
}

/// Per-utterance feature normalization: each frequency bin of the magnitude
/// spectrum is shifted and scaled to zero mean and unit variance over time.
pub fn normalize_features(magnitude: &Array2<f64>) -> Array2<f64> {
    let frames = magnitude.nrows().max(1) as f64;
    let mean = magnitude.sum_axis(Axis(0)) / frames;
    let mut out = magnitude - &mean;
    let var = out.mapv(|v| v * v).sum_axis(Axis(0)) / frames;
    let inv_std = var.mapv(|v| if v > 1e-20 { 1.0 / v.sqrt() } else { 0.0 });
    out *= &inv_std;
    out
}
