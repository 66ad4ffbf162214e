//! Short-time Fourier analysis and least-squares overlap-add synthesis.
//!
//! Frame `t` covers samples `[t*hop - (fft_size - hop), t*hop + hop)` of the
//! input, zero outside the signal, and there are `1 + ceil(N / hop)` frames.
//! Synthesis divides the overlap-added, synthesis-windowed frames by the
//! summed squared window, which reconstructs the input exactly for any window
//! whose squared overlap sum never vanishes (hann and sqrt-hann at 50% or 75%
//! overlap satisfy this, as does blackman).

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::Waveform;

#[derive(Debug, Error, PartialEq)]
pub enum StftError {
    #[error("invalid STFT config: {0}")]
    InvalidConfig(String),
    #[error("config mismatch: spectrogram was computed with {expected:?}, got {got:?}")]
    ConfigMismatch { expected: StftConfig, got: StftConfig },
    #[error("empty input signal")]
    EmptySignal,
    #[error("channel {channel} out of range for {channels} channels")]
    ChannelOutOfRange { channel: usize, channels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hann,
    SqrtHann,
    Blackman,
    /// Boxcar window; useful for analysis checks.
    Rectangular,
}

impl WindowKind {
    /// Periodic (DFT-even) window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let nf = n as f64;
        (0..n)
            .map(|i| {
                let x = 2.0 * PI * i as f64 / nf;
                match self {
                    WindowKind::Hann => 0.5 - 0.5 * x.cos(),
                    WindowKind::SqrtHann => (0.5 - 0.5 * x.cos()).sqrt(),
                    WindowKind::Blackman => 0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

impl std::str::FromStr for WindowKind {
    type Err = StftError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hann" => Ok(WindowKind::Hann),
            "sqrt_hann" | "sqrt-hann" => Ok(WindowKind::SqrtHann),
            "blackman" => Ok(WindowKind::Blackman),
            "rectangular" => Ok(WindowKind::Rectangular),
            other => Err(StftError::InvalidConfig(format!("unknown window {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { fft_size: 1024, hop: 256, window: WindowKind::Hann }
    }
}

impl StftConfig {
    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn num_frames(&self, len: usize) -> usize {
        1 + len.div_ceil(self.hop)
    }

    pub fn validate(&self) -> Result<(), StftError> {
        if self.fft_size == 0 || self.fft_size % 2 != 0 {
            return Err(StftError::InvalidConfig(format!(
                "fft_size must be positive and even, got {}",
                self.fft_size
            )));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(StftError::InvalidConfig(format!(
                "hop must be in 1..={}, got {}",
                self.fft_size, self.hop
            )));
        }
        // Least-squares synthesis needs the squared-window overlap sum to stay
        // away from zero.
        let w = self.window.coefficients(self.fft_size);
        let mut acc = vec![0.0; self.hop];
        for (i, v) in w.iter().enumerate() {
            acc[i % self.hop] += v * v;
        }
        let max = acc.iter().cloned().fold(0.0, f64::max);
        let min = acc.iter().cloned().fold(f64::INFINITY, f64::min);
        if min <= 1e-6 * max {
            return Err(StftError::InvalidConfig(format!(
                "{:?} window with fft_size {} and hop {} does not satisfy the overlap-add condition",
                self.window, self.fft_size, self.hop
            )));
        }
        Ok(())
    }

    fn lead(&self) -> usize {
        self.fft_size - self.hop
    }
}

/// Complex one-sided STFT, channels × frames × bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub data: Array3<Complex64>,
    pub config: StftConfig,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn num_channels(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn num_frames(&self) -> usize {
        self.data.len_of(Axis(1))
    }

    pub fn num_bins(&self) -> usize {
        self.data.len_of(Axis(2))
    }

    /// Single-channel spectrogram holding only `channel`.
    pub fn select_channel(&self, channel: usize) -> Result<Spectrogram, StftError> {
        self.check_channel(channel)?;
        Ok(Spectrogram {
            data: self.data.index_axis(Axis(0), channel).to_owned().insert_axis(Axis(0)),
            config: self.config,
            sample_rate: self.sample_rate,
        })
    }

    fn check_channel(&self, channel: usize) -> Result<(), StftError> {
        if channel >= self.num_channels() {
            return Err(StftError::ChannelOutOfRange { channel, channels: self.num_channels() });
        }
        Ok(())
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }
}

fn analyze_channel(x: &[f64], cfg: &StftConfig, window: &[f64], fft: &dyn Fft<f64>) -> Array2<Complex64> {
    let n_fft = cfg.fft_size;
    let frames = cfg.num_frames(x.len());
    let bins = cfg.num_bins();
    let lead = cfg.lead() as isize;
    let mut out = Array2::zeros((frames, bins));
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (t, mut row) in out.rows_mut().into_iter().enumerate() {
        let start = (t * cfg.hop) as isize - lead;
        for (i, slot) in buf.iter_mut().enumerate() {
            let idx = start + i as isize;
            let v = if idx >= 0 && (idx as usize) < x.len() { x[idx as usize] } else { 0.0 };
            *slot = Complex64::new(v * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (b, v) in row.iter_mut().enumerate() {
            *v = buf[b];
        }
    }
    out
}

/// Multichannel STFT of `w`.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<Spectrogram, StftError> {
    cfg.validate()?;
    if w.num_frames() == 0 {
        return Err(StftError::EmptySignal);
    }
    let window = cfg.window.coefficients(cfg.fft_size);
    let plans = Plans::new(cfg.fft_size);
    let channels: Vec<Vec<f64>> = w.samples().rows().into_iter().map(|r| r.to_vec()).collect();
    let per_channel: Vec<Array2<Complex64>> = channels
        .par_iter()
        .map(|x| analyze_channel(x, cfg, &window, plans.forward.as_ref()))
        .collect();
    let frames = cfg.num_frames(w.num_frames());
    let mut data = Array3::zeros((w.num_channels(), frames, cfg.num_bins()));
    for (m, spec) in per_channel.into_iter().enumerate() {
        data.index_axis_mut(Axis(0), m).assign(&spec);
    }
    Ok(Spectrogram { data, config: *cfg, sample_rate: w.sample_rate() })
}

fn synthesize_channel(
    spec: ndarray::ArrayView2<'_, Complex64>,
    cfg: &StftConfig,
    window: &[f64],
    ifft: &dyn Fft<f64>,
    out_len: usize,
) -> Vec<f64> {
    let n_fft = cfg.fft_size;
    let bins = cfg.num_bins();
    let lead = cfg.lead();
    let frames = spec.nrows();
    let total = frames.saturating_sub(1) * cfg.hop + n_fft;
    let mut acc = vec![0.0; total];
    let mut norm = vec![0.0; total];
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    let scale = 1.0 / n_fft as f64;
    for t in 0..frames {
        let row = spec.row(t);
        // Rebuild the full Hermitian spectrum; DC and Nyquist are forced real.
        buf[0] = Complex64::new(row[0].re, 0.0);
        for b in 1..bins - 1 {
            buf[b] = row[b];
            buf[n_fft - b] = row[b].conj();
        }
        buf[bins - 1] = Complex64::new(row[bins - 1].re, 0.0);
        ifft.process(&mut buf);
        let start = t * cfg.hop;
        for i in 0..n_fft {
            acc[start + i] += buf[i].re * scale * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    (0..out_len)
        .map(|n| {
            let idx = n + lead;
            if idx < total && norm[idx] > 1e-12 {
                acc[idx] / norm[idx]
            } else {
                0.0
            }
        })
        .collect()
}

/// Inverse STFT truncated or zero-padded to `out_len` samples.
pub fn istft(s: &Spectrogram, cfg: &StftConfig, out_len: usize) -> Result<Waveform, StftError> {
    if *cfg != s.config {
        return Err(StftError::ConfigMismatch { expected: s.config, got: *cfg });
    }
    cfg.validate()?;
    if s.num_bins() != cfg.num_bins() {
        return Err(StftError::InvalidConfig(format!(
            "spectrogram has {} bins, config implies {}",
            s.num_bins(),
            cfg.num_bins()
        )));
    }
    let window = cfg.window.coefficients(cfg.fft_size);
    let plans = Plans::new(cfg.fft_size);
    let channels: Vec<Vec<f64>> = (0..s.num_channels())
        .into_par_iter()
        .map(|m| {
            synthesize_channel(s.data.index_axis(Axis(0), m), cfg, &window, plans.inverse.as_ref(), out_len)
        })
        .collect();
    let mut samples = Array2::zeros((s.num_channels(), out_len));
    for (m, ch) in channels.into_iter().enumerate() {
        for (n, v) in ch.into_iter().enumerate() {
            samples[(m, n)] = v;
        }
    }
    Waveform::new(samples, s.sample_rate).map_err(|e| StftError::InvalidConfig(e.to_string()))
}

/// Entrywise modulus of one channel, frames × bins.
pub fn magnitude(s: &Spectrogram, channel: usize) -> Result<Array2<f64>, StftError> {
    s.check_channel(channel)?;
    Ok(s.data.index_axis(Axis(0), channel).mapv(|c| c.norm()))
}
