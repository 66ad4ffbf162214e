//! Seeded synthetic multichannel scenes: a fractionally delayed point source
//! plus independent per-channel noise.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`, so scenes are identical across platforms.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::{read_wav, write_wav, AudioError, Encoding, Waveform};
use crate::mask::{normalize_features, oracle_ibm, oracle_irm, MaskError, MaskPair};
use crate::stft::{magnitude, stft, StftConfig, StftError};

pub const MAX_DELAY: f64 = 32.0;
const DELAY_TAPS: i64 = 64;
pub const IBM_THRESHOLD_DB: f64 = 0.0;
/// Inter-microphone delay of the default compact linear array, in samples.
pub const DEFAULT_DELAY_STEP: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("clean signal is silent")]
    SilentClean,
    #[error("noise signal is silent")]
    SilentNoise,
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Stft(#[from] StftError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("scene sidecar {path}: {message}")]
    Sidecar { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSource {
    White,
    /// White noise shaped to a -3 dB/octave spectrum.
    Pink,
    /// A recording; each channel reads it circularly from a seeded offset.
    Recording(Waveform),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub mixture: Waveform,
    pub clean_image: Waveform,
    pub noise_image: Waveform,
    pub source_delays: Vec<f64>,
    pub snr_db: f64,
    pub seed: u64,
}

impl Scene {
    pub fn num_channels(&self) -> usize {
        self.mixture.num_channels()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    Ibm,
    #[default]
    Irm,
}

impl std::str::FromStr for MaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ibm" => Ok(MaskKind::Ibm),
            "irm" => Ok(MaskKind::Irm),
            other => Err(format!("unknown mask kind {other:?} (expected ibm or irm)")),
        }
    }
}

/// Uniform linear array with the source off-axis: channel `m` lags channel
/// 0 by `m * step` samples.
pub fn linear_array_delays(channels: usize, step: f64) -> Vec<f64> {
    (0..channels).map(|m| m as f64 * step).collect()
}

fn energy(x: impl IntoIterator<Item = f64>) -> f64 {
    x.into_iter().map(|v| v * v).sum()
}

/// Blackman-windowed sinc fractional delay: `y[n] ≈ x[n - delay]`. Integer
/// delays are exact shifts.
pub fn fractional_delay(x: &[f64], delay: f64) -> Vec<f64> {
    let len = x.len() as i64;
    let whole = delay.floor();
    let frac = delay - whole;
    let whole = whole as i64;
    let at = |j: i64| if (0..len).contains(&j) { x[j as usize] } else { 0.0 };
    if frac == 0.0 {
        return (0..len).map(|n| at(n - whole)).collect();
    }
    let half = (DELAY_TAPS / 2) as f64;
    let ks: Vec<i64> = (-(DELAY_TAPS / 2 - 1)..=DELAY_TAPS / 2).collect();
    let mut taps: Vec<f64> = ks
        .iter()
        .map(|&k| {
            let tau = k as f64 - frac;
            let px = std::f64::consts::PI * tau;
            let phase = std::f64::consts::PI * tau / half;
            let window = 0.42 + 0.5 * phase.cos() + 0.08 * (2.0 * phase).cos();
            px.sin() / px * window
        })
        .collect();
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= dc);
    (0..len)
        .map(|n| ks.iter().zip(&taps).map(|(&k, &h)| h * at(n - whole - k)).sum())
        .collect()
}

fn white(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// Seeded pink (-3 dB/octave) noise.
pub fn pink_noise(len: usize, seed: u64) -> Vec<f64> {
    pink(&mut ChaCha8Rng::seed_from_u64(seed), len)
}

fn pink(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let n = len.next_power_of_two().max(2);
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = white(rng, n).into_iter().map(|v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    buf[0] = Complex64::new(0.0, 0.0);
    for k in 1..n {
        let f = k.min(n - k) as f64;
        buf[k] /= f.sqrt();
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.truncate(len);
    buf.into_iter().map(|v| v.re / n as f64).collect()
}

fn noise_channels(source: &NoiseSource, channels: usize, len: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>, SimulateError> {
    match source {
        NoiseSource::White => Ok((0..channels).map(|_| white(rng, len)).collect()),
        NoiseSource::Pink => Ok((0..channels).map(|_| pink(rng, len)).collect()),
        NoiseSource::Recording(w) => {
            if w.num_channels() != 1 {
                return Err(SimulateError::InvalidInput(format!(
                    "noise recording has {} channels, expected 1",
                    w.num_channels()
                )));
            }
            let src = w.samples().row(0).to_vec();
            if energy(src.iter().copied()) == 0.0 {
                return Err(SimulateError::SilentNoise);
            }
            Ok((0..channels)
                .map(|_| {
                    let offset = rng.random_range(0..src.len());
                    (0..len).map(|n| src[(offset + n) % src.len()]).collect()
                })
                .collect())
        }
    }
}

/// Builds a scene whose channel-0 SNR equals `snr_db`. The noise is scaled
/// first, then added to the clean image.
pub fn make_scene(
    clean: &Waveform,
    noise: &NoiseSource,
    channels: usize,
    snr_db: f64,
    delays: &[f64],
    seed: u64,
) -> Result<Scene, SimulateError> {
    if channels == 0 {
        return Err(SimulateError::InvalidGeometry("at least one channel is required".into()));
    }
    if delays.len() != channels {
        return Err(SimulateError::InvalidGeometry(format!(
            "{} delays given for {channels} channels",
            delays.len()
        )));
    }
    if let Some(d) = delays.iter().find(|d| !d.is_finite() || d.abs() > MAX_DELAY) {
        return Err(SimulateError::InvalidGeometry(format!("delay {d} exceeds ±{MAX_DELAY} samples")));
    }
    if !snr_db.is_finite() {
        return Err(SimulateError::InvalidInput(format!("SNR must be finite, got {snr_db}")));
    }
    if clean.num_channels() != 1 {
        return Err(SimulateError::InvalidInput(format!("clean signal has {} channels, expected 1", clean.num_channels())));
    }
    let x = clean.samples().row(0).to_vec();
    if energy(x.iter().copied()) == 0.0 {
        return Err(SimulateError::SilentClean);
    }
    let len = x.len();
    let images: Vec<Array1<f64>> = delays.iter().map(|&d| Array1::from(fractional_delay(&x, d))).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = noise_channels(noise, channels, len, &mut rng)?;
    let noise_energy = energy(raw[0].iter().copied());
    if noise_energy == 0.0 {
        return Err(SimulateError::SilentNoise);
    }
    let clean_energy = energy(images[0].iter().copied());
    let gain = (clean_energy / (noise_energy * 10f64.powf(snr_db / 10.0))).sqrt();
    let noise_rows: Vec<Array1<f64>> = raw.into_iter().map(|r| Array1::from(r) * gain).collect();

    let rate = clean.sample_rate();
    let clean_image = Waveform::from_channels(&images, rate)?;
    let noise_image = Waveform::from_channels(&noise_rows, rate)?;
    let mixture = Waveform::new(clean_image.samples() + noise_image.samples(), rate)?;
    Ok(Scene { mixture, clean_image, noise_image, source_delays: delays.to_vec(), snr_db, seed })
}

/// Speech-like test signal: voiced syllables (harmonic series under a
/// formant envelope, gliding pitch) separated by short pauses, peak 0.5.
/// Draws from stream 1 of the seeded generator so that a scene built with
/// the same seed gets noise independent of its source.
pub fn synth_speech(len: usize, sample_rate: u32, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let fs = sample_rate as f64;
    let mut out = vec![0.0; len];
    let mut pos = (rng.random_range(0.01..0.05) * fs) as usize;
    while pos < len {
        let dur = (rng.random_range(0.08..0.25) * fs) as usize;
        let f0_start: f64 = rng.random_range(100.0..220.0);
        let f0_end = f0_start * rng.random_range(0.8..1.25);
        let formants = [
            (rng.random_range(300.0..900.0), 90.0),
            (rng.random_range(900.0..2300.0), 140.0),
            (rng.random_range(2300.0..3200.0), 220.0),
        ];
        let level = rng.random_range(0.4..1.0);
        let mut phase = 0.0f64;
        for i in 0..dur.min(len - pos) {
            let u = i as f64 / dur as f64;
            let f0 = f0_start + (f0_end - f0_start) * u;
            phase += 2.0 * std::f64::consts::PI * f0 / fs;
            let env = (std::f64::consts::PI * u).sin().powi(2) * level;
            let mut v = 0.0;
            let mut h = 1;
            while (h as f64) * f0 < 0.45 * fs.min(8000.0) {
                let f = h as f64 * f0;
                let gain: f64 = formants
                    .iter()
                    .map(|&(fc, bw)| 1.0 / (1.0 + ((f - fc) / bw).powi(2)))
                    .sum::<f64>()
                    + 0.02;
                v += gain * (h as f64 * phase).sin() / (h as f64).sqrt();
                h += 1;
            }
            out[pos + i] += env * v;
        }
        pos += dur + (rng.random_range(0.03..0.12) * fs) as usize;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    Waveform::mono(out, sample_rate).expect("finite samples")
}

/// Oracle masks from the channel-0 clean and noise images.
pub fn scene_to_oracle_masks(scene: &Scene, cfg: &StftConfig, kind: MaskKind) -> Result<MaskPair, SimulateError> {
    let clean = stft(&scene.clean_image.select_channel(0)?, cfg)?;
    let noise = stft(&scene.noise_image.select_channel(0)?, cfg)?;
    Ok(match kind {
        MaskKind::Ibm => oracle_ibm(&clean, &noise, 0, IBM_THRESHOLD_DB)?,
        MaskKind::Irm => oracle_irm(&clean, &noise, 0)?,
    })
}

/// Network input and IBM target for one channel of a scene.
pub fn training_example(scene: &Scene, cfg: &StftConfig, channel: usize) -> Result<(Array2<f64>, MaskPair), SimulateError> {
    if channel >= scene.num_channels() {
        return Err(SimulateError::InvalidInput(format!(
            "channel {channel} out of range for {} channels",
            scene.num_channels()
        )));
    }
    let mix = stft(&scene.mixture.select_channel(channel)?, cfg)?;
    let clean = stft(&scene.clean_image.select_channel(channel)?, cfg)?;
    let noise = stft(&scene.noise_image.select_channel(channel)?, cfg)?;
    let features = normalize_features(&magnitude(&mix, 0)?);
    Ok((features, oracle_ibm(&clean, &noise, 0, IBM_THRESHOLD_DB)?))
}

/// Scene parameters written next to the audio files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSidecar {
    pub seed: u64,
    pub snr_db: f64,
    pub delays: Vec<f64>,
    #[serde(rename = "M")]
    pub channels: usize,
    pub sample_rate: u32,
    pub stft: StftConfig,
}

pub const MIXTURE_FILE: &str = "mixture.wav";
pub const CLEAN_FILE: &str = "clean.wav";
pub const NOISE_FILE: &str = "noise.wav";
pub const SIDECAR_FILE: &str = "scene.json";

/// Writes `mixture.wav`, `clean.wav`, `noise.wav` (float32) and
/// `scene.json` into `dir`.
pub fn export_scene(scene: &Scene, dir: impl AsRef<Path>, stft: &StftConfig) -> Result<(), SimulateError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| AudioError::Io { path: dir.to_path_buf(), source: e })?;
    write_wav(dir.join(MIXTURE_FILE), &scene.mixture, Encoding::Float32)?;
    write_wav(dir.join(CLEAN_FILE), &scene.clean_image, Encoding::Float32)?;
    write_wav(dir.join(NOISE_FILE), &scene.noise_image, Encoding::Float32)?;
    let sidecar = SceneSidecar {
        seed: scene.seed,
        snr_db: scene.snr_db,
        delays: scene.source_delays.clone(),
        channels: scene.num_channels(),
        sample_rate: scene.mixture.sample_rate(),
        stft: *stft,
    };
    let path = dir.join(SIDECAR_FILE);
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&path, json + "\n").map_err(|e| AudioError::Io { path, source: e })?;
    Ok(())
}

pub fn read_sidecar(dir: impl AsRef<Path>) -> Result<SceneSidecar, SimulateError> {
    let path = dir.as_ref().join(SIDECAR_FILE);
    let text = fs::read_to_string(&path).map_err(|e| SimulateError::Sidecar { path: path.clone(), message: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| SimulateError::Sidecar { path, message: e.to_string() })
}

/// Reads a scene written by [`export_scene`].
pub fn import_scene(dir: impl AsRef<Path>) -> Result<(Scene, SceneSidecar), SimulateError> {
    let dir = dir.as_ref();
    let sidecar = read_sidecar(dir)?;
    let mixture = read_wav(dir.join(MIXTURE_FILE))?;
    let clean_image = read_wav(dir.join(CLEAN_FILE))?;
    let noise_image = read_wav(dir.join(NOISE_FILE))?;
    let shapes = [mixture.samples().dim(), clean_image.samples().dim(), noise_image.samples().dim()];
    if shapes.iter().any(|s| *s != shapes[0]) || shapes[0].0 != sidecar.channels {
        return Err(SimulateError::Sidecar {
            path: dir.join(SIDECAR_FILE),
            message: format!("audio shapes {shapes:?} disagree with M = {}", sidecar.channels),
        });
    }
    let scene = Scene {
        mixture,
        clean_image,
        noise_image,
        source_delays: sidecar.delays.clone(),
        snr_db: sidecar.snr_db,
        seed: sidecar.seed,
    };
    Ok((scene, sidecar))
}

/// Per-channel SNR of the scene in dB.
pub fn channel_snr_db(scene: &Scene) -> Vec<f64> {
    scene
        .clean_image
        .samples()
        .axis_iter(Axis(0))
        .zip(scene.noise_image.samples().axis_iter(Axis(0)))
        .map(|(c, n)| 10.0 * (energy(c.iter().copied()) / energy(n.iter().copied())).log10())
        .collect()
}
