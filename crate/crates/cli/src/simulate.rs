use std::fs;

use maskbeam::audio_io::read_wav;
use maskbeam::simulate::{export_scene, linear_array_delays, make_scene, synth_speech, NoiseSource};

use crate::args::SimulateArgs;
use crate::error::{CliError, CliResult};
use crate::util::require_file;

pub fn run(a: &SimulateArgs) -> CliResult<()> {
    if a.channels == 0 {
        return Err(CliError::validation("--channels must be at least 1"));
    }
    let cfg = a.stft.config();
    cfg.validate()?;
    if let Some(clean) = &a.clean {
        require_file(clean, "--clean")?;
    }
    let noise_path = match a.noise.as_str() {
        "white" | "pink" => None,
        path => Some(std::path::PathBuf::from(path)),
    };
    if let Some(p) = &noise_path {
        require_file(p, "--noise")?;
    }
    let delays = match &a.delays {
        Some(d) => d.clone(),
        None => linear_array_delays(a.channels, a.delay_step),
    };
    if delays.len() != a.channels {
        return Err(CliError::validation(format!(
            "--delays lists {} values for {} channels",
            delays.len(),
            a.channels
        )));
    }

    let clean = match &a.clean {
        Some(p) => read_wav(p)?,
        None => {
            if !(a.duration > 0.0 && a.duration.is_finite()) || a.sample_rate == 0 {
                return Err(CliError::validation("--duration and --sample-rate must be positive"));
            }
            synth_speech((a.duration * a.sample_rate as f64).round() as usize, a.sample_rate, a.seed)
        }
    };
    if clean.num_channels() != 1 {
        return Err(CliError::validation(format!("clean source has {} channels, expected 1", clean.num_channels())));
    }
    let noise = match (a.noise.as_str(), noise_path) {
        ("white", _) => NoiseSource::White,
        ("pink", _) => NoiseSource::Pink,
        (_, Some(p)) => {
            let w = read_wav(&p)?;
            if w.sample_rate() != clean.sample_rate() {
                return Err(CliError::validation(format!(
                    "noise is {} Hz but the clean source is {} Hz",
                    w.sample_rate(),
                    clean.sample_rate()
                )));
            }
            NoiseSource::Recording(w)
        }
        _ => unreachable!("noise path resolved above"),
    };
    let scene = make_scene(&clean, &noise, a.channels, a.snr_db, &delays, a.seed)?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    export_scene(&scene, &a.out, &cfg)?;
    Ok(())
}
