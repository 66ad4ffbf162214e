//! Objective enhancement scores: delay-searched scale-invariant SDR, STOI and
//! eSTOI.

mod resample;
mod stoi;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::Waveform;

pub use resample::resample;
pub use stoi::{estoi, stoi, STOI_RATE};

pub const SDR_CAP_DB: f64 = 100.0;
pub const REPORT_MAX_DELAY: usize = 160;
pub const MEAN_ID: &str = "__mean__";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("reference signal has zero energy")]
    SilentReference,
    #[error("sample rates differ: reference {reference} Hz, estimate {estimate} Hz")]
    SampleRateMismatch { reference: u32, estimate: u32 },
    #[error("lengths differ: reference {reference}, estimate {estimate}")]
    LengthMismatch { reference: usize, estimate: usize },
    #[error("only {frames} non-silent frames, at least {required} are needed")]
    TooShort { frames: usize, required: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

fn mono(w: &Waveform, what: &str) -> Result<Vec<f64>, MetricsError> {
    if w.num_channels() != 1 {
        return Err(MetricsError::InvalidInput(format!("{what} has {} channels, expected 1", w.num_channels())));
    }
    Ok(w.samples().row(0).to_vec())
}

fn to_db(ratio: f64) -> f64 {
    (10.0 * ratio.log10()).clamp(-SDR_CAP_DB, SDR_CAP_DB)
}

/// Scale-invariant SDR maximized over integer delays `|d| <= max_delay` of
/// the reference, capped at ±100 dB.
pub fn sdr(reference: &Waveform, estimate: &Waveform, max_delay: usize) -> Result<f64, MetricsError> {
    if reference.sample_rate() != estimate.sample_rate() {
        return Err(MetricsError::SampleRateMismatch {
            reference: reference.sample_rate(),
            estimate: estimate.sample_rate(),
        });
    }
    let x = mono(reference, "reference")?;
    let s = mono(estimate, "estimate")?;
    if x.len().abs_diff(s.len()) > max_delay {
        return Err(MetricsError::LengthMismatch { reference: x.len(), estimate: s.len() });
    }
    let ex: f64 = x.iter().map(|v| v * v).sum();
    if ex == 0.0 {
        return Err(MetricsError::SilentReference);
    }
    let es: f64 = s.iter().map(|v| v * v).sum();
    if es == 0.0 {
        return Ok(-SDR_CAP_DB);
    }
    let mut prefix = vec![0.0; x.len() + 1];
    for (i, v) in x.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v * v;
    }
    // x_d[n] = x[n - d] for n in 0..len(s)
    let overlap = |d: i64| {
        let lo = d.max(0) as usize;
        let hi = (s.len() as i64).min(x.len() as i64 + d).max(lo as i64) as usize;
        (lo, hi)
    };
    let mut best: Option<(f64, i64)> = None;
    let md = max_delay as i64;
    for d in -md..=md {
        let (lo, hi) = overlap(d);
        if lo >= hi {
            continue;
        }
        let exd = prefix[(hi as i64 - d) as usize] - prefix[(lo as i64 - d) as usize];
        if exd <= 0.0 {
            continue;
        }
        let c: f64 = (lo..hi).map(|n| x[(n as i64 - d) as usize] * s[n]).sum();
        let score = c * c / exd;
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, d));
        }
    }
    let Some((_, d)) = best else {
        return Ok(-SDR_CAP_DB);
    };
    let (lo, hi) = overlap(d);
    let xd = |n: usize| if n >= lo && n < hi { x[(n as i64 - d) as usize] } else { 0.0 };
    let exd: f64 = (0..s.len()).map(|n| xd(n).powi(2)).sum();
    let c: f64 = (0..s.len()).map(|n| xd(n) * s[n]).sum();
    let alpha = c / exd;
    let target = alpha * alpha * exd;
    let err: f64 = (0..s.len()).map(|n| (alpha * xd(n) - s[n]).powi(2)).sum();
    if err == 0.0 {
        return Ok(SDR_CAP_DB);
    }
    Ok(to_db(target / err))
}

/// One scored utterance. `pesq` is only ever filled from an external tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub id: String,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track: Option<String>,
    pub sdr_db: f64,
    pub stoi: f64,
    pub estoi: f64,
    pub pesq: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReportMeta {
    pub id: String,
    pub method: String,
    pub track: Option<String>,
}

pub fn report(reference: &Waveform, estimate: &Waveform, meta: ReportMeta) -> Result<MetricReport, MetricsError> {
    Ok(MetricReport {
        id: meta.id,
        method: meta.method,
        track: meta.track,
        sdr_db: sdr(reference, estimate, REPORT_MAX_DELAY)?,
        stoi: stoi(reference, estimate)?,
        estoi: estoi(reference, estimate)?,
        pesq: None,
    })
}

/// Arithmetic mean record over `reports`, in the given order. `pesq` is
/// averaged only when every report carries one.
pub fn mean_report(reports: &[MetricReport]) -> Option<MetricReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let pesq = reports.iter().map(|r| r.pesq).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n);
    let method = if reports.iter().all(|r| r.method == reports[0].method) {
        reports[0].method.clone()
    } else {
        "mixed".into()
    };
    let track = reports[0].track.clone().filter(|t| reports.iter().all(|r| r.track.as_ref() == Some(t)));
    Some(MetricReport {
        id: MEAN_ID.into(),
        method,
        track,
        sdr_db: mean(|r| r.sdr_db),
        stoi: mean(|r| r.stoi),
        estoi: mean(|r| r.estoi),
        pesq,
    })
}

/// Reports followed by their mean record.
pub fn batch_with_mean(mut reports: Vec<MetricReport>) -> Vec<MetricReport> {
    if let Some(m) = mean_report(&reports) {
        reports.push(m);
    }
    reports
}
