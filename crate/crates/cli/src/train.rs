use std::fs;
use std::path::PathBuf;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use maskbeam::mask::{load_net_expecting, save_net, MaskNet, MaskNetDims, MaskPair};
use maskbeam::simulate::{import_scene, make_scene, synth_speech, training_example, NoiseSource, SIDECAR_FILE};
use maskbeam::stft::StftConfig;

use crate::args::TrainArgs;
use crate::error::{CliError, CliResult};
use crate::util::{require_dir, require_file, require_parent};

const AUTO_RATE: u32 = 16000;

type Example = (Array2<f64>, MaskPair);

#[derive(Serialize)]
struct LossEntry {
    step: usize,
    loss: f64,
}

#[derive(Serialize)]
struct Summary {
    examples: usize,
    steps: usize,
    initial_loss: f64,
    final_loss: f64,
    ratio: f64,
    stft: StftConfig,
}

fn validate(a: &TrainArgs) -> CliResult<()> {
    let cfg = a.stft.config();
    cfg.validate()?;
    if cfg.num_bins() != MaskNetDims::STANDARD.input {
        return Err(CliError::validation(format!(
            "the mask network takes {} bins; --fft-size {} gives {}",
            MaskNetDims::STANDARD.input,
            cfg.fft_size,
            cfg.num_bins()
        )));
    }
    match (&a.scenes, a.auto_generate) {
        (Some(_), Some(_)) => return Err(CliError::validation("give either --scenes or --auto-generate, not both")),
        (None, None) => return Err(CliError::validation("one of --scenes or --auto-generate is required")),
        (Some(dir), None) => require_dir(dir, "--scenes")?,
        (None, Some(0)) => return Err(CliError::new("dataset", "empty dataset: --auto-generate 0")),
        (None, Some(_)) => {
            if !(a.auto_duration > 0.0 && a.auto_duration.is_finite()) {
                return Err(CliError::validation("--auto-duration must be positive"));
            }
        }
    }
    if a.batch_size == 0 || a.log_every == 0 {
        return Err(CliError::validation("--batch-size and --log-every must be at least 1"));
    }
    if !(a.lr >= 0.0 && a.lr.is_finite()) {
        return Err(CliError::validation("--lr must be finite and >= 0"));
    }
    if let Some(w) = &a.init_weights {
        require_file(w, "--init-weights")?;
    }
    require_parent(&a.out, "--out")?;
    if let Some(l) = &a.loss_log {
        require_parent(l, "--loss-log")?;
    }
    Ok(())
}

/// Scene `i` of an auto-generated set seeded with `seed`.
pub fn auto_scene_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

fn dataset(a: &TrainArgs, cfg: &StftConfig) -> CliResult<Vec<Example>> {
    if let Some(n) = a.auto_generate {
        let len = (a.auto_duration * AUTO_RATE as f64).round() as usize;
        return (0..n)
            .map(|i| {
                let s = auto_scene_seed(a.seed, i);
                let clean = synth_speech(len, AUTO_RATE, s);
                let scene = make_scene(&clean, &NoiseSource::White, 1, a.auto_snr_db, &[0.0], s)?;
                Ok(training_example(&scene, cfg, 0)?)
            })
            .collect();
    }
    let dir = a.scenes.as_ref().expect("validated");
    let mut scenes: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(SIDECAR_FILE).is_file())
        .collect();
    scenes.sort();
    if scenes.is_empty() {
        return Err(CliError::new("dataset", format!("empty dataset: no scenes under {}", dir.display())));
    }
    scenes
        .iter()
        .map(|p| {
            let (scene, _) = import_scene(p)?;
            Ok(training_example(&scene, cfg, 0)?)
        })
        .collect()
}

pub fn run(a: &TrainArgs) -> CliResult<()> {
    validate(a)?;
    let cfg = a.stft.config();
    let data = dataset(a, &cfg)?;
    let mut net = match &a.init_weights {
        Some(p) => load_net_expecting(p, MaskNetDims::STANDARD)?,
        None => MaskNet::init(MaskNetDims::STANDARD, a.seed),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    rng.set_stream(2);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();

    let initial = net.evaluate(&data)?;
    let mut log = vec![LossEntry { step: 0, loss: initial }];
    let mut last = initial;
    for step in 0..a.steps {
        let batch: Vec<Example> = (0..a.batch_size)
            .map(|_| {
                if cursor == order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                cursor += 1;
                data[order[cursor - 1]].clone()
            })
            .collect();
        let dropout_seed = rng.next_u64();
        net = net.train_step(&batch, a.lr, dropout_seed)?.0;
        let done = step + 1;
        if done % a.log_every == 0 || done == a.steps {
            last = net.evaluate(&data)?;
            log.push(LossEntry { step: done, loss: last });
        }
    }

    save_net(&a.out, &net)?;
    let log_path = a.loss_log.clone().unwrap_or_else(|| a.out.with_extension("loss.jsonl"));
    let text: String = log.iter().map(|e| serde_json::to_string(e).expect("serializable") + "\n").collect();
    fs::write(&log_path, text).map_err(|e| CliError::io(&log_path, e))?;

    let summary = Summary {
        examples: data.len(),
        steps: a.steps,
        initial_loss: initial,
        final_loss: last,
        ratio: last / initial,
        stft: cfg,
    };
    println!("{}", serde_json::to_string(&summary).expect("serializable"));
    Ok(())
}
