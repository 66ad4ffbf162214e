use ndarray::Array2;

use super::MetricsError;
use crate::audio_io::Waveform;

const TAPS: usize = 64;
const KAISER_BETA: f64 = 14.0;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Taps for one polyphase branch whose output instant sits `frac` input
/// samples after the base input sample. Tap `k` weights input `base - 31 + k`.
fn branch(frac: f64, cutoff: f64) -> [f64; TAPS] {
    let half = (TAPS / 2) as f64;
    let norm = bessel_i0(KAISER_BETA);
    let mut taps = [0.0; TAPS];
    for (k, tap) in taps.iter_mut().enumerate() {
        let tau = frac + (TAPS / 2 - 1) as f64 - k as f64;
        let r = (tau / half).clamp(-1.0, 1.0);
        let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm;
        *tap = 2.0 * cutoff * sinc(2.0 * cutoff * tau) * window;
    }
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= dc);
    taps
}

/// Rational polyphase resampling with a Kaiser-windowed sinc (64 taps per
/// branch), cut off at the lower of the two Nyquist rates.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform, MetricsError> {
    if target_rate == 0 {
        return Err(MetricsError::InvalidInput("target sample rate must be positive".into()));
    }
    let source = w.sample_rate() as u64;
    if source == target_rate as u64 {
        return Ok(w.clone());
    }
    let g = gcd(source, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = source / g;
    let cutoff = 0.5 * (up as f64 / down as f64).min(1.0);
    let n_in = w.num_frames();
    let n_out = ((n_in as u128 * up as u128 + down as u128 / 2) / down as u128) as usize;
    let branches: Vec<[f64; TAPS]> = (0..up).map(|p| branch(p as f64 / up as f64, cutoff)).collect();

    let samples = w.samples();
    let mut out = Array2::zeros((w.num_channels(), n_out));
    for (ch, x) in samples.rows().into_iter().enumerate() {
        for n in 0..n_out {
            let pos = n as u64 * down;
            let base = (pos / up) as i64;
            let taps = &branches[(pos % up) as usize];
            let first = base - (TAPS / 2 - 1) as i64;
            let mut acc = 0.0;
            for (k, &h) in taps.iter().enumerate() {
                let j = first + k as i64;
                if j >= 0 && (j as usize) < n_in {
                    acc += h * x[j as usize];
                }
            }
            out[(ch, n)] = acc;
        }
    }
    Waveform::new(out, target_rate).map_err(|e| MetricsError::InvalidInput(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn sine(freq: f64, fs: u32, len: usize) -> Waveform {
        let x = (0..len).map(|n| (2.0 * std::f64::consts::PI * freq * n as f64 / fs as f64).sin()).collect();
        Waveform::mono(x, fs).unwrap()
    }

    #[test]
    fn bessel_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i0(14.0) - 129_418.562_700_648_56).abs() < 1e-9 * 129_418.0);
    }

    #[test]
    fn dc_preserved() {
        let w = Waveform::mono(vec![0.37; 3000], 16000).unwrap();
        let out = resample(&w, 10000).unwrap();
        assert_eq!(out.num_frames(), 1875);
        let inner = &out.samples().row(0).to_vec()[100..1775];
        assert!(inner.iter().all(|v| (v - 0.37).abs() < 1e-6));
        let up = resample(&w, 44100).unwrap();
        assert!(up.samples().row(0).iter().skip(200).take(7000).all(|v| (v - 0.37).abs() < 1e-6));
    }

    #[test]
    fn passband_sine_rms() {
        let out = resample(&sine(440.0, 16000, 16000), 10000).unwrap();
        let y = out.samples().row(0).to_vec();
        let inner = &y[200..y.len() - 200];
        let ratio = rms(inner) / (0.5f64).sqrt();
        assert!((ratio - 1.0).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn stopband_sine_rejected() {
        let input = sine(7900.0, 16000, 16000);
        let out = resample(&input, 10000).unwrap();
        let y = out.samples().row(0).to_vec();
        let ratio = rms(&y[200..y.len() - 200]) / rms(&input.samples().row(0).to_vec());
        assert!(ratio < 0.01, "ratio {ratio}");
    }

    #[test]
    fn lengths_round() {
        let w = Waveform::mono(vec![1.0; 1001], 16000).unwrap();
        assert_eq!(resample(&w, 10000).unwrap().num_frames(), 626);
        assert_eq!(resample(&w, 16000).unwrap(), w);
        assert!(resample(&w, 0).is_err());
    }
}
