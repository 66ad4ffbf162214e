use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

use super::BeamformError;
use crate::audio_io::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelayEstimate {
    /// `other[n] ≈ ref[n - lag]`.
    pub lag: i64,
    /// Set when either input has no energy; `lag` is then 0.
    pub degenerate: bool,
}

/// Integer delay of `other` relative to `reference` by GCC-PHAT, searched
/// over `[-max_lag, max_lag]`. Ties go to the smaller `|lag|`, then to the
/// negative lag.
pub fn gcc_phat_delay(reference: &[f64], other: &[f64], max_lag: usize) -> Result<DelayEstimate, BeamformError> {
    if reference.len() != other.len() {
        return Err(BeamformError::ShapeMismatch(format!(
            "signals have lengths {} and {}",
            reference.len(),
            other.len()
        )));
    }
    let len = reference.len();
    if len < 2 * max_lag || len == 0 {
        return Err(BeamformError::InvalidInput(format!(
            "signal length {len} is shorter than twice the maximum lag {max_lag}"
        )));
    }
    let silent = |x: &[f64]| x.iter().all(|&v| v == 0.0);
    if silent(reference) || silent(other) {
        return Ok(DelayEstimate { lag: 0, degenerate: true });
    }

    let n = (2 * len).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let spectrum = |x: &[f64]| {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(n, Complex64::new(0.0, 0.0));
        fwd.process(&mut buf);
        buf
    };
    let r = spectrum(reference);
    let o = spectrum(other);
    let mut cross: Vec<Complex64> = o.iter().zip(&r).map(|(a, b)| a * b.conj()).collect();
    let peak = cross.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for v in cross.iter_mut() {
        let mag = v.norm();
        *v = if mag > 1e-12 * peak { *v / mag } else { Complex64::new(0.0, 0.0) };
    }
    inv.process(&mut cross);

    let at = |lag: i64| cross[lag.rem_euclid(n as i64) as usize].re;
    let mut best = 0i64;
    let mut best_val = at(0);
    for k in 1..=max_lag as i64 {
        for lag in [-k, k] {
            let v = at(lag);
            if v > best_val {
                best = lag;
                best_val = v;
            }
        }
    }
    Ok(DelayEstimate { lag: best, degenerate: false })
}

/// Aligns every channel to `ref_channel` by its GCC-PHAT lag (zero fill) and
/// averages.
pub fn delay_and_sum(w: &Waveform, ref_channel: usize, max_lag: usize) -> Result<Waveform, BeamformError> {
    let m = w.num_channels();
    if ref_channel >= m {
        return Err(BeamformError::ChannelOutOfRange { channel: ref_channel, available: m });
    }
    let len = w.num_frames();
    let samples = w.samples();
    let reference = samples.row(ref_channel).to_vec();
    let mut out = vec![0.0; len];
    for ch in 0..m {
        let channel = samples.row(ch).to_vec();
        let lag = gcc_phat_delay(&reference, &channel, max_lag)?.lag;
        for (n, o) in out.iter_mut().enumerate() {
            let src = n as i64 + lag;
            if (0..len as i64).contains(&src) {
                *o += channel[src as usize] / m as f64;
            }
        }
    }
    let samples = Array2::from_shape_vec((1, len), out).expect("length matches");
    Waveform::new(samples, w.sample_rate()).map_err(|e| BeamformError::InvalidInput(e.to_string()))
}
