//! STOI and extended STOI on 10 kHz signals.

use ndarray::{s, Array2, ArrayView2, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{resample, MetricsError};
use crate::audio_io::Waveform;

pub const STOI_RATE: u32 = 10_000;
const FRAME: usize = 256;
const HOP: usize = 128;
const NFFT: usize = 512;
const BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
const SEGMENT: usize = 30;
const DYN_RANGE: f64 = 40.0;
const BETA_DB: f64 = -15.0;
const EPS: f64 = f64::EPSILON;

/// Symmetric Hann of length `FRAME + 2` with the zero end points dropped.
fn frame_window() -> Vec<f64> {
    let n = FRAME + 2;
    (1..=FRAME)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Rows are bands, columns FFT bins 0..=NFFT/2.
fn third_octave_matrix() -> Array2<f64> {
    let bins = NFFT / 2 + 1;
    let freqs: Vec<f64> = (0..bins).map(|k| k as f64 * STOI_RATE as f64 / NFFT as f64).collect();
    let nearest = |f: f64| {
        let mut best = 0;
        for (k, &fk) in freqs.iter().enumerate() {
            if (fk - f).powi(2) < (freqs[best] - f).powi(2) {
                best = k;
            }
        }
        best
    };
    let mut obm = Array2::zeros((BANDS, bins));
    for band in 0..BANDS {
        let k = band as f64;
        let lo = nearest(MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0));
        let hi = nearest(MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0));
        obm.slice_mut(s![band, lo..hi]).fill(1.0);
    }
    obm
}

fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    let count = if len >= FRAME { (len - FRAME) / HOP + 1 } else { 0 };
    (0..count).map(|i| i * HOP)
}

/// Drops frames whose reference energy is more than 40 dB below the loudest
/// reference frame, applying the same selection to both signals, and
/// overlap-adds the survivors.
fn remove_silent_frames(x: &[f64], y: &[f64], window: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let energy = |sig: &[f64], st: usize| {
        let e: f64 = (0..FRAME).map(|i| (window[i] * sig[st + i]).powi(2)).sum();
        20.0 * (e.sqrt() + EPS).log10()
    };
    let energies: Vec<f64> = starts.iter().map(|&st| energy(x, st)).collect();
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, &e)| max - DYN_RANGE - e < 0.0)
        .map(|(&st, _)| st)
        .collect();
    if kept.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let out_len = (kept.len() - 1) * HOP + FRAME;
    let mut xs = vec![0.0; out_len];
    let mut ys = vec![0.0; out_len];
    for (k, &st) in kept.iter().enumerate() {
        for i in 0..FRAME {
            xs[k * HOP + i] += window[i] * x[st + i];
            ys[k * HOP + i] += window[i] * y[st + i];
        }
    }
    (xs, ys)
}

/// Third-octave band envelopes, shape `BANDS × frames`.
fn band_envelopes(x: &[f64], window: &[f64], obm: &Array2<f64>) -> Array2<f64> {
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let fft = FftPlanner::new().plan_fft_forward(NFFT);
    let bins = NFFT / 2 + 1;
    let mut power = Array2::zeros((bins, starts.len()));
    let mut buf = vec![Complex64::new(0.0, 0.0); NFFT];
    for (t, &st) in starts.iter().enumerate() {
        buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for i in 0..FRAME {
            buf[i] = Complex64::new(window[i] * x[st + i], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..bins {
            power[(k, t)] = buf[k].norm_sqr();
        }
    }
    obm.dot(&power).mapv(f64::sqrt)
}

/// Envelope segments of `SEGMENT` frames, one per end frame.
fn segments<'a>(env: &'a Array2<f64>) -> impl Iterator<Item = ArrayView2<'a, f64>> + 'a {
    (SEGMENT..=env.ncols()).map(move |m| env.slice(s![.., m - SEGMENT..m]))
}

fn front_end(reference: &Waveform, estimate: &Waveform) -> Result<(Array2<f64>, Array2<f64>), MetricsError> {
    if reference.num_channels() != 1 || estimate.num_channels() != 1 {
        return Err(MetricsError::InvalidInput("intelligibility measures need single-channel signals".into()));
    }
    if reference.sample_rate() != estimate.sample_rate() {
        return Err(MetricsError::SampleRateMismatch {
            reference: reference.sample_rate(),
            estimate: estimate.sample_rate(),
        });
    }
    if reference.num_frames() != estimate.num_frames() {
        return Err(MetricsError::LengthMismatch {
            reference: reference.num_frames(),
            estimate: estimate.num_frames(),
        });
    }
    let x = resample(reference, STOI_RATE)?.samples().row(0).to_vec();
    let y = resample(estimate, STOI_RATE)?.samples().row(0).to_vec();
    let window = frame_window();
    let (xs, ys) = remove_silent_frames(&x, &y, &window);
    let obm = third_octave_matrix();
    let xe = band_envelopes(&xs, &window, &obm);
    let ye = band_envelopes(&ys, &window, &obm);
    if xe.ncols() < SEGMENT {
        return Err(MetricsError::TooShort { frames: xe.ncols(), required: SEGMENT });
    }
    Ok((xe, ye))
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|a| a * a).sum::<f64>().sqrt()
}

/// Short-time objective intelligibility.
pub fn stoi(reference: &Waveform, estimate: &Waveform) -> Result<f64, MetricsError> {
    let (xe, ye) = front_end(reference, estimate)?;
    let clip = 10f64.powf(-BETA_DB / 20.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for (xs, ys) in segments(&xe).zip(segments(&ye)) {
        for band in 0..BANDS {
            let xr = xs.row(band);
            let yr = ys.row(band);
            let scale = norm(xr.iter().copied()) / (norm(yr.iter().copied()) + EPS);
            let yp: Vec<f64> = yr.iter().zip(xr.iter()).map(|(&y, &x)| (y * scale).min(x * (1.0 + clip))).collect();
            let xm = xr.iter().sum::<f64>() / SEGMENT as f64;
            let ym = yp.iter().sum::<f64>() / SEGMENT as f64;
            let xc: Vec<f64> = xr.iter().map(|v| v - xm).collect();
            let yc: Vec<f64> = yp.iter().map(|v| v - ym).collect();
            let xn = norm(xc.iter().copied()) + EPS;
            let yn = norm(yc.iter().copied()) + EPS;
            total += xc.iter().zip(&yc).map(|(a, b)| (a / xn) * (b / yn)).sum::<f64>();
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Row (band) then column (frame) mean and norm normalization of a segment.
fn row_col_normalize(seg: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut a = seg.to_owned();
    for mut row in a.axis_iter_mut(Axis(0)) {
        let mean = row.mean().unwrap_or(0.0);
        row.mapv_inplace(|v| v - mean);
        let n = norm(row.iter().copied()) + EPS;
        row.mapv_inplace(|v| v / n);
    }
    for mut col in a.axis_iter_mut(Axis(1)) {
        let mean = col.mean().unwrap_or(0.0);
        col.mapv_inplace(|v| v - mean);
        let n = norm(col.iter().copied()) + EPS;
        col.mapv_inplace(|v| v / n);
    }
    a
}

/// Extended STOI: unclipped, spectro-temporal segment correlation.
pub fn estoi(reference: &Waveform, estimate: &Waveform) -> Result<f64, MetricsError> {
    let (xe, ye) = front_end(reference, estimate)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (xs, ys) in segments(&xe).zip(segments(&ye)) {
        let xn = row_col_normalize(xs);
        let yn = row_col_normalize(ys);
        total += (&xn * &yn).sum() / SEGMENT as f64;
        count += 1;
    }
    Ok(total / count as f64)
}
