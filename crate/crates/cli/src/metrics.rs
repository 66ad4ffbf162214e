use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use maskbeam::audio_io::{read_wav, Waveform};
use maskbeam::metrics::{batch_with_mean, estoi, resample, sdr, stoi, MetricReport};

use crate::args::MetricsArgs;
use crate::error::{CliError, CliResult};
use crate::util::{require_file, require_parent};

fn load_pair(a: &MetricsArgs, reference: &Path, estimate: &Path) -> CliResult<(Waveform, Waveform)> {
    let r = read_wav(reference)?.select_channel(a.ref_channel)?;
    let mut e = read_wav(estimate)?.select_channel(a.est_channel)?;
    if r.sample_rate() != e.sample_rate() {
        if !a.resample {
            return Err(CliError::validation(format!(
                "sample rates differ ({} Hz reference, {} Hz estimate); pass --resample",
                r.sample_rate(),
                e.sample_rate()
            )));
        }
        e = resample(&e, r.sample_rate())?;
        // Rounding in the rate conversion can leave the lengths a sample apart.
        let mut x = e.samples().row(0).to_vec();
        x.resize(r.num_frames(), 0.0);
        e = Waveform::mono(x, r.sample_rate())?;
    }
    Ok((r, e))
}

fn score(a: &MetricsArgs, id: String, reference: &Path, estimate: &Path) -> CliResult<MetricReport> {
    let (r, e) = load_pair(a, reference, estimate)?;
    Ok(MetricReport {
        id,
        method: a.method.clone(),
        track: a.track.clone(),
        sdr_db: sdr(&r, &e, a.max_delay)?,
        stoi: stoi(&r, &e)?,
        estoi: estoi(&r, &e)?,
        pesq: None,
    })
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn wav_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

pub fn run(a: &MetricsArgs) -> CliResult<()> {
    if let Some(out) = &a.out {
        require_parent(out, "--out")?;
    }
    let json = match (a.reference.is_dir(), a.estimate.is_dir()) {
        (true, true) => {
            let refs = wav_files(&a.reference)?;
            if refs.is_empty() {
                return Err(CliError::validation(format!("{}: no WAV files", a.reference.display())));
            }
            let pairs: Vec<(PathBuf, PathBuf)> = refs
                .into_iter()
                .map(|r| {
                    let e = a.estimate.join(r.file_name().expect("file"));
                    require_file(&e, "--estimate").map(|_| (r, e))
                })
                .collect::<CliResult<_>>()?;
            let reports: Vec<MetricReport> = pairs
                .par_iter()
                .map(|(r, e)| score(a, stem(r), r, e))
                .collect::<Vec<CliResult<MetricReport>>>()
                .into_iter()
                .collect::<CliResult<_>>()?;
            serde_json::to_string_pretty(&batch_with_mean(reports)).expect("serializable")
        }
        (false, false) => {
            require_file(&a.reference, "--reference")?;
            require_file(&a.estimate, "--estimate")?;
            let id = a.id.clone().unwrap_or_else(|| stem(&a.estimate));
            let mut report = score(a, id, &a.reference, &a.estimate)?;
            report.pesq = a.pesq;
            serde_json::to_string_pretty(&report).expect("serializable")
        }
        _ => return Err(CliError::validation("--reference and --estimate must both be files or both be directories")),
    };
    let text = json + "\n";
    match &a.out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
