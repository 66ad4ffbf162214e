//! Mask-based spatial filtering: PSD estimation, GEV filters, single-channel
//! masking and a delay-and-sum baseline.

mod delay;
mod gev;
pub mod linalg;

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::mask::MaskPair;
use crate::stft::Spectrogram;
use linalg::CMatrix;

pub use delay::{delay_and_sum, gcc_phat_delay, DelayEstimate};
pub use gev::{gev_solve, DEFAULT_DIAG_LOADING, HERMITIAN_TOL};

#[derive(Debug, Error)]
pub enum BeamformError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{which} PSD at bin {bin} is not Hermitian (deviation {deviation:e})")]
    NotHermitian { bin: usize, which: &'static str, deviation: f64 },
    #[error("{which} PSD at bin {bin} has non-finite entries")]
    NonFinite { bin: usize, which: &'static str },
    #[error("channel {channel} out of range for {available} channels")]
    ChannelOutOfRange { channel: usize, available: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Per-bin speech and noise spatial covariance matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdPair {
    pub speech: Vec<CMatrix>,
    pub noise: Vec<CMatrix>,
}

impl PsdPair {
    pub fn num_bins(&self) -> usize {
        self.speech.len()
    }

    pub fn num_channels(&self) -> usize {
        self.speech.first().map_or(0, |m| m.nrows())
    }

    fn check(&self) -> Result<(), BeamformError> {
        if self.speech.len() != self.noise.len() {
            return Err(BeamformError::ShapeMismatch(format!(
                "{} speech bins versus {} noise bins",
                self.speech.len(),
                self.noise.len()
            )));
        }
        let m = self.num_channels();
        for (b, (s, n)) in self.speech.iter().zip(&self.noise).enumerate() {
            if s.dim() != (m, m) || n.dim() != (m, m) {
                return Err(BeamformError::ShapeMismatch(format!("bin {b} matrices are not {m}x{m}")));
            }
        }
        Ok(())
    }
}

/// Per-bin filter vectors `f(b)` (rows of `filters`, shape `B × M`) and their
/// generalized eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerWeights {
    pub filters: Array2<Complex64>,
    pub eigenvalues: Vec<f64>,
}

impl BeamformerWeights {
    pub fn num_bins(&self) -> usize {
        self.filters.nrows()
    }

    pub fn num_channels(&self) -> usize {
        self.filters.ncols()
    }

    pub fn filter(&self, bin: usize) -> Vec<Complex64> {
        self.filters.row(bin).to_vec()
    }
}

fn weighted_covariance(s: &Spectrogram, weights: &Array2<f64>, bin: usize) -> CMatrix {
    let m = s.num_channels();
    let mut phi = Array2::from_elem((m, m), Complex64::new(0.0, 0.0));
    for t in 0..s.num_frames() {
        let w = weights[(t, bin)];
        for i in 0..m {
            let yi = s.data[(i, t, bin)] * w;
            for j in 0..m {
                phi[(i, j)] += yi * s.data[(j, t, bin)].conj();
            }
        }
    }
    linalg::hermitize(&phi)
}

/// `Φ_v(b) = Σ_t w_v(t,b) y(t,b) y(t,b)ᴴ` for the speech and noise masks,
/// without normalizing by the mask sum.
pub fn estimate_psd(s: &Spectrogram, masks: &MaskPair) -> Result<PsdPair, BeamformError> {
    let (t, b) = masks.dim();
    if (t, b) != (s.num_frames(), s.num_bins()) {
        return Err(BeamformError::ShapeMismatch(format!(
            "masks are {t}x{b} but the spectrogram has {} frames and {} bins",
            s.num_frames(),
            s.num_bins()
        )));
    }
    let (speech, noise) = (0..b)
        .into_par_iter()
        .map(|bin| (weighted_covariance(s, masks.speech(), bin), weighted_covariance(s, masks.noise(), bin)))
        .unzip();
    Ok(PsdPair { speech, noise })
}

/// `output(t,b) = f(b)ᴴ y(t,b)`.
pub fn apply_beamformer(s: &Spectrogram, w: &BeamformerWeights) -> Result<Spectrogram, BeamformError> {
    if w.num_bins() != s.num_bins() || w.num_channels() != s.num_channels() {
        return Err(BeamformError::ShapeMismatch(format!(
            "filters are {}x{} but the spectrogram has {} bins and {} channels",
            w.num_bins(),
            w.num_channels(),
            s.num_bins(),
            s.num_channels()
        )));
    }
    let (frames, bins) = (s.num_frames(), s.num_bins());
    let mut out = Array3::from_elem((1, frames, bins), Complex64::new(0.0, 0.0));
    for t in 0..frames {
        for b in 0..bins {
            out[(0, t, b)] = w
                .filters
                .row(b)
                .iter()
                .enumerate()
                .map(|(m, f)| f.conj() * s.data[(m, t, b)])
                .sum();
        }
    }
    Ok(Spectrogram { data: out, config: s.config, sample_rate: s.sample_rate })
}

/// Blind analytic normalization: scales each `f(b)` by
/// `sqrt(fᴴΦ_nΦ_n f / M) / (fᴴΦ_n f)`, leaving bins with a denominator at or
/// below 1e-12 untouched.
pub fn ban_postfilter(w: &BeamformerWeights, psd: &PsdPair) -> Result<BeamformerWeights, BeamformError> {
    psd.check()?;
    if w.num_bins() != psd.num_bins() || w.num_channels() != psd.num_channels() {
        return Err(BeamformError::ShapeMismatch(format!(
            "filters are {}x{} but the PSDs are {} bins of {}x{}",
            w.num_bins(),
            w.num_channels(),
            psd.num_bins(),
            psd.num_channels(),
            psd.num_channels()
        )));
    }
    let m = w.num_channels() as f64;
    let mut filters = w.filters.clone();
    for (b, mut row) in filters.axis_iter_mut(Axis(0)).enumerate() {
        let f = row.to_vec();
        let phi_n = &psd.noise[b];
        let nf = linalg::mat_vec(phi_n, &f);
        let den = linalg::quadratic_form(phi_n, &f);
        if den.abs() > 1e-12 {
            let num = nf.iter().map(|v| v.norm_sqr()).sum::<f64>();
            let g = (num / m).sqrt() / den;
            row.mapv_inplace(|v| v * g);
        }
    }
    Ok(BeamformerWeights { filters, eigenvalues: w.eigenvalues.clone() })
}

/// Hadamard product of one channel's spectrogram with a speech mask.
pub fn mask_enhance_1ch(
    s: &Spectrogram,
    channel: usize,
    speech_mask: &Array2<f64>,
) -> Result<Spectrogram, BeamformError> {
    if channel >= s.num_channels() {
        return Err(BeamformError::ChannelOutOfRange { channel, available: s.num_channels() });
    }
    if speech_mask.dim() != (s.num_frames(), s.num_bins()) {
        return Err(BeamformError::ShapeMismatch(format!(
            "mask is {:?} but the spectrogram has {} frames and {} bins",
            speech_mask.dim(),
            s.num_frames(),
            s.num_bins()
        )));
    }
    if speech_mask.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(BeamformError::InvalidInput("mask values must lie in [0, 1]".into()));
    }
    let y = s.data.index_axis(Axis(0), channel);
    let out = (&y * &speech_mask.mapv(|v| Complex64::new(v, 0.0))).insert_axis(Axis(0));
    Ok(Spectrogram { data: out, config: s.config, sample_rate: s.sample_rate })
}
