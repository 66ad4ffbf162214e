//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use maskbeam::audio_io::Waveform;
use maskbeam::beamform::{estimate_psd, gev_solve, PsdPair, DEFAULT_DIAG_LOADING};
use maskbeam::mask::{load_net, MaskNet, MaskNetDims, MaskPair};
use maskbeam::metrics::{estoi, sdr, stoi, SDR_CAP_DB};
use maskbeam::simulate::synth_speech;
use maskbeam::stft::{istft, stft, Spectrogram, StftConfig, WindowKind};

type Check = Result<String, String>;

const BIN: &str = env!("CARGO_BIN_EXE_maskbeam");

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

fn cnormal(r: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(normal(r), normal(r))
}

fn random_psd(r: &mut ChaCha8Rng, m: usize) -> Array2<Complex64> {
    let a = Array2::from_shape_simple_fn((m, 2 * m), || cnormal(r));
    let p = a.dot(&a.t().mapv(|v| v.conj()));
    Array2::from_shape_fn((m, m), |(i, j)| (p[(i, j)] + p[(j, i)].conj()) * 0.5)
}

fn to_na(a: &Array2<Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn quad(a: &DMatrix<Complex64>, f: &[Complex64]) -> f64 {
    let v = nalgebra::DVector::from_column_slice(f);
    (v.adjoint() * a * &v)[(0, 0)].re
}

fn maskbeam(args: &[&str]) -> Result<String, String> {
    let out = Command::new(BIN).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("maskbeam {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

fn sdr_of(reference: &Path, estimate: &Path, est_channel: usize) -> Result<f64, String> {
    let ch = est_channel.to_string();
    let json = maskbeam(&["metrics", "--reference", p(reference), "--estimate", p(estimate), "--est-channel", &ch])?;
    let v: serde_json::Value = serde_json::from_str(&json).map_err(|e| e.to_string())?;
    v["sdr_db"].as_f64().ok_or_else(|| "no sdr_db".to_string())
}

fn stft_reconstruction() -> Check {
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let default = StftConfig::default();
    let sqrt_hann = StftConfig { window: WindowKind::SqrtHann, ..default };
    let (mut worst, mut worst_sqrt) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let x: Vec<f64> = (0..16000).map(|_| normal(&mut r)).collect();
        let w = Waveform::mono(x.clone(), 16000).unwrap();
        for (cfg, acc) in [(&default, &mut worst), (&sqrt_hann, &mut worst_sqrt)] {
            let y = istft(&stft(&w, cfg).unwrap(), cfg, x.len()).unwrap();
            let num: f64 = y.samples().row(0).iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum();
            let den: f64 = x.iter().map(|v| v * v).sum();
            *acc = acc.max((num / den).sqrt());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst < 1e-10, || format!("default relative error {worst:e}"))?;
    ensure(worst_sqrt < 1e-6, || format!("sqrt-hann relative error {worst_sqrt:e}"))?;
    ensure(secs < 5.0, || format!("took {secs:.2} s"))?;
    Ok(format!("max rel err {worst:.1e} (hann), {worst_sqrt:.1e} (sqrt-hann), {secs:.2} s"))
}

fn loaded(noise: &Array2<Complex64>) -> DMatrix<Complex64> {
    let m = noise.nrows();
    let tr: f64 = (0..m).map(|i| noise[(i, i)].re).sum();
    let mut n = to_na(noise);
    for i in 0..m {
        n[(i, i)] += DEFAULT_DIAG_LOADING * tr / m as f64;
    }
    n
}

fn gev_correctness() -> Check {
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_resid, mut worst_violation) = (0.0f64, f64::NEG_INFINITY);
    let sizes = [2usize, 4, 6];
    let mut pairs = 0;
    for (k, &m) in sizes.iter().enumerate() {
        let count = 500 / 3 + usize::from(k < 500 % 3);
        let speech: Vec<_> = (0..count).map(|_| random_psd(&mut r, m)).collect();
        let noise: Vec<_> = (0..count).map(|_| random_psd(&mut r, m)).collect();
        let w = gev_solve(&PsdPair { speech: speech.clone(), noise: noise.clone() }, DEFAULT_DIAG_LOADING)
            .map_err(|e| e.to_string())?;
        for b in 0..count {
            let f = w.filter(b);
            let lambda = w.eigenvalues[b];
            let s = to_na(&speech[b]);
            let n = loaded(&noise[b]);
            let inv = n.clone().try_inverse().ok_or("singular noise PSD")?;
            let fv = nalgebra::DVector::from_column_slice(&f);
            let resid = (&inv * &s * &fv - &fv * Complex64::new(lambda, 0.0)).norm();
            worst_resid = worst_resid.max(resid);
            let best = quad(&s, &f) / quad(&n, &f);
            let mut probe = |v: &[Complex64]| {
                let q = quad(&s, v) / quad(&n, v);
                worst_violation = worst_violation.max((q - best) / best);
            };
            for _ in 0..10_000 {
                let mut v: Vec<Complex64> = (0..m).map(|_| cnormal(&mut r)).collect();
                let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                v.iter_mut().for_each(|c| *c /= norm);
                probe(&v);
            }
            for i in 0..m {
                let mut e = vec![Complex64::new(0.0, 0.0); m];
                e[i] = Complex64::new(1.0, 0.0);
                probe(&e);
            }
            pairs += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(pairs == 500, || format!("{pairs} pairs"))?;
    ensure(worst_resid < 1e-8, || format!("eigen-residual {worst_resid:e}"))?;
    // Allow only floating-point rounding above the returned optimum.
    ensure(worst_violation <= 1e-12, || format!("a probe beat the filter by {worst_violation:e} (relative)"))?;
    ensure(secs < 30.0, || format!("took {secs:.2} s"))?;
    Ok(format!("500 pairs, max residual {worst_resid:.1e}, max probe excess {worst_violation:.1e}, {secs:.2} s"))
}

fn scale_invariance() -> Check {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let mut worst_f = 0.0f64;
    let mut worst_l = 0.0f64;
    for m in [2usize, 4, 6] {
        let speech: Vec<_> = (0..50).map(|_| random_psd(&mut r, m)).collect();
        let noise: Vec<_> = (0..50).map(|_| random_psd(&mut r, m)).collect();
        let base = gev_solve(&PsdPair { speech: speech.clone(), noise: noise.clone() }, DEFAULT_DIAG_LOADING)
            .map_err(|e| e.to_string())?;
        for c in [1e-3, 1.0, 1e3] {
            let scaled = noise.iter().map(|n| n.mapv(|v| v * c)).collect();
            let w = gev_solve(&PsdPair { speech: speech.clone(), noise: scaled }, DEFAULT_DIAG_LOADING)
                .map_err(|e| e.to_string())?;
            for b in 0..50 {
                let d: f64 = w.filter(b).iter().zip(base.filter(b)).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
                worst_f = worst_f.max(d);
                let rel = (w.eigenvalues[b] * c - base.eigenvalues[b]).abs() / base.eigenvalues[b];
                worst_l = worst_l.max(rel);
            }
        }
    }
    ensure(worst_f < 1e-8, || format!("filter moved by {worst_f:e}"))?;
    ensure(worst_l < 1e-8, || format!("eigenvalue scaling off by {worst_l:e} (relative)"))?;
    Ok(format!("max filter change {worst_f:.1e}, max eigenvalue error {worst_l:.1e}"))
}

fn end_to_end(work: &Path) -> Check {
    let scene = work.join("e2e_scene");
    maskbeam(&["simulate", "--seed", "7", "--channels", "6", "--snr-db", "0", "--noise", "white", "--out", p(&scene)])?;
    let clean = scene.join("clean.wav");
    let mixture = scene.join("mixture.wav");
    let gev = work.join("e2e_gev.wav");
    let ds = work.join("e2e_ds.wav");
    maskbeam(&["enhance", "--method", "gev-oracle", "--mask-kind", "irm", "--scene", p(&scene), "--out", p(&gev)])?;
    maskbeam(&["enhance", "--method", "ds", "--scene", p(&scene), "--out", p(&ds)])?;
    let mut best = f64::NEG_INFINITY;
    for m in 0..6 {
        best = best.max(sdr_of(&clean, &mixture, m)?);
    }
    let g = sdr_of(&clean, &gev, 0)? - best;
    let d = sdr_of(&clean, &ds, 0)? - best;
    ensure(g >= 5.0 && d >= 3.0, || format!("GEV {g:+.2} dB (need +5), DS {d:+.2} dB (need +3)"))?;
    Ok(format!("best input {best:.2} dB; GEV {g:+.2} dB, DS {d:+.2} dB"))
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn tensor<'a>(net: &'a MaskNet, name: &str) -> &'a [f64] {
    net.tensors().into_iter().find(|(n, _)| *n == name).expect("tensor").1
}

/// Plain-loop evaluation of the network for every frame.
fn scalar_forward(net: &MaskNet, x: &Array2<f64>) -> Vec<Vec<f64>> {
    let d = net.dims();
    let (h, n_in) = (d.hidden, d.input);
    let frames: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let lstm = |dir: &str, seq: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let w_ih = tensor(net, &format!("l1.{dir}.w_ih"));
        let w_hh = tensor(net, &format!("l1.{dir}.w_hh"));
        let bias = tensor(net, &format!("l1.{dir}.b"));
        let (mut hs, mut cs) = (vec![0.0; h], vec![0.0; h]);
        let mut out = Vec::new();
        for xt in seq {
            let pre: Vec<f64> = (0..4 * h)
                .map(|row| {
                    let mut acc = bias[row];
                    for k in 0..n_in {
                        acc += w_ih[row * n_in + k] * xt[k];
                    }
                    for k in 0..h {
                        acc += w_hh[row * h + k] * hs[k];
                    }
                    acc
                })
                .collect();
            for u in 0..h {
                let i = sig(pre[u]);
                let f = sig(pre[h + u]);
                let g = pre[2 * h + u].tanh();
                let o = sig(pre[3 * h + u]);
                cs[u] = f * cs[u] + i * g;
                hs[u] = o * cs[u].tanh();
            }
            out.push(hs.clone());
        }
        out
    };
    let dense = |layer: &str, v: &[f64], act: &dyn Fn(f64) -> f64| -> Vec<f64> {
        let w = tensor(net, &format!("{layer}.w"));
        let b = tensor(net, &format!("{layer}.b"));
        (0..b.len()).map(|r| act(b[r] + (0..v.len()).map(|k| w[r * v.len() + k] * v[k]).sum::<f64>())).collect()
    };
    let fwd = lstm("fwd", &frames);
    let rev: Vec<Vec<f64>> = frames.iter().rev().cloned().collect();
    let mut bwd = lstm("bwd", &rev);
    bwd.reverse();
    (0..frames.len())
        .map(|t| {
            let mut a1 = fwd[t].clone();
            a1.extend_from_slice(&bwd[t]);
            let a2 = dense("l2", &a1, &|v| v.max(0.0));
            let a3 = dense("l3", &a2, &|v| v.clamp(0.0, 1.0));
            dense("l4", &a3, &sig)
        })
        .collect()
}

fn random_net(dims: MaskNetDims, seed: u64) -> MaskNet {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let base = MaskNet::init(dims, seed);
    let tensors: Vec<Vec<f64>> =
        base.tensors().iter().map(|(_, t)| t.iter().map(|v| v + r.random_range(-0.3..0.3)).collect()).collect();
    MaskNet::from_tensors(dims, &tensors).unwrap()
}

fn random_batch(r: &mut ChaCha8Rng, n: usize, frames: usize, bins: usize) -> Vec<(Array2<f64>, MaskPair)> {
    (0..n)
        .map(|_| {
            let f = Array2::from_shape_simple_fn((frames, bins), || r.random_range(-1.5..1.5));
            let y = Array2::from_shape_simple_fn((frames, bins), || if r.random::<f64>() < 0.4 { 1.0 } else { 0.0 });
            (f, MaskPair::complementary(y).unwrap())
        })
        .collect()
}

fn blstm_correctness() -> Check {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let mut worst_fwd = 0.0f64;
    for seed in 0..4 {
        let dims = MaskNetDims { input: 5 + seed as usize, hidden: 3 + seed as usize, ff1: 6, ff2: 4 };
        let net = random_net(dims, seed);
        let x = Array2::from_shape_simple_fn((4, dims.input), || r.random_range(-1.5..1.5));
        let got = net.forward(&x, false, 0).map_err(|e| e.to_string())?;
        for (t, row) in scalar_forward(&net, &x).iter().enumerate() {
            for b in 0..dims.input {
                worst_fwd = worst_fwd.max((got.speech()[(t, b)] - row[b]).abs());
                worst_fwd = worst_fwd.max((got.noise()[(t, b)] - row[dims.input + b]).abs());
            }
        }
    }
    ensure(worst_fwd < 1e-10, || format!("forward differs from scalar oracle by {worst_fwd:e}"))?;

    let dims = MaskNetDims { input: 4, hidden: 3, ff1: 5, ff2: 4 };
    let net = random_net(dims, 11);
    let batch = random_batch(&mut r, 2, 3, dims.input);
    let mut worst_grad = 0.0f64;
    let mut checked = 0;
    for train_mode in [false, true] {
        let (_, grad) = net.loss_and_gradient(&batch, train_mode, 9).map_err(|e| e.to_string())?;
        let base: Vec<Vec<f64>> = net.tensors().iter().map(|(_, t)| t.to_vec()).collect();
        for ti in 0..base.len() {
            for k in 0..base[ti].len() {
                let shifted = |delta: f64| {
                    let mut t = base.clone();
                    t[ti][k] += delta;
                    MaskNet::from_tensors(dims, &t).unwrap()
                };
                let (plus, minus) = (shifted(1e-4), shifted(-1e-4));
                // Parameters are stored at f32 precision, so use the realized step.
                let h = tensor(&plus, net.tensors()[ti].0)[k] - tensor(&minus, net.tensors()[ti].0)[k];
                let lp = plus.loss_and_gradient(&batch, train_mode, 9).unwrap().0;
                let lm = minus.loss_and_gradient(&batch, train_mode, 9).unwrap().0;
                let fd = (lp - lm) / h;
                let an = grad.tensors()[ti].1[k];
                worst_grad = worst_grad.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-8));
                checked += 1;
            }
        }
    }
    ensure(worst_grad < 1e-4, || format!("gradient relative error {worst_grad:e}"))?;

    let zero = MaskNet::zeros(MaskNetDims::STANDARD);
    let x = Array2::from_shape_simple_fn((6, 513), || r.random_range(-3.0..3.0));
    let m = zero.forward(&x, false, 0).map_err(|e| e.to_string())?;
    ensure(m.speech().iter().chain(m.noise()).all(|&v| v == 0.5), || "zero net output is not 0.5".into())?;
    Ok(format!("forward err {worst_fwd:.1e}, {checked} gradients, max rel err {worst_grad:.1e}, zero net = 0.5"))
}

fn read_loss_log(path: &Path) -> Result<Vec<f64>, String> {
    fs::read_to_string(path)
        .map_err(|e| e.to_string())?
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).map_err(|e| e.to_string())?;
            v["loss"].as_f64().ok_or_else(|| "entry without loss".to_string())
        })
        .collect()
}

fn mask_training(work: &Path) -> Check {
    let net = work.join("train_net.json");
    maskbeam(&["train-mask", "--auto-generate", "20", "--seed", "3", "--steps", "200", "--out", p(&net)])?;
    let losses = read_loss_log(&work.join("train_net.loss.jsonl"))?;
    let (first, last) = (losses[0], *losses.last().unwrap());
    let ratio = last / first;
    ensure(ratio <= 0.7, || format!("loss {first:.4} -> {last:.4} (ratio {ratio:.3})"))?;

    let frozen = work.join("train_lr0.json");
    maskbeam(&[
        "train-mask", "--auto-generate", "4", "--seed", "3", "--steps", "6", "--log-every", "2", "--lr", "0",
        "--init-weights", p(&net), "--out", p(&frozen),
    ])?;
    let flat = read_loss_log(&work.join("train_lr0.loss.jsonl"))?;
    ensure(flat.len() == 4 && flat.iter().all(|&l| l.to_bits() == flat[0].to_bits()), || format!("lr 0 log {flat:?}"))?;
    let same_blob = fs::read(work.join("train_net.bin")).ok() == fs::read(work.join("train_lr0.bin")).ok();
    ensure(same_blob, || "lr 0 changed the weights".into())?;

    let fresh = work.join("train_fresh.json");
    maskbeam(&["train-mask", "--auto-generate", "2", "--seed", "8", "--steps", "2", "--lr", "0", "--out", p(&fresh)])?;
    let loaded = load_net(&fresh).map_err(|e| e.to_string())?;
    ensure(loaded == MaskNet::init(MaskNetDims::STANDARD, 8), || "lr 0 from init changed the weights".into())?;
    Ok(format!("loss {first:.4} -> {last:.4} (ratio {ratio:.3}); lr 0 leaves weights and loss unchanged"))
}

fn metric_sanity() -> Check {
    const FS: u32 = 16000;
    const LEN: usize = 24000;
    let x = synth_speech(LEN, FS, 100);
    let (s, e, d) = (stoi(&x, &x).unwrap(), estoi(&x, &x).unwrap(), sdr(&x, &x, 160).unwrap());
    ensure((s - 1.0).abs() <= 1e-6 && (e - 1.0).abs() <= 1e-6, || format!("self stoi {s}, estoi {e}"))?;
    ensure(d == SDR_CAP_DB, || format!("self sdr {d}"))?;
    let mut worst_scale = 0.0f64;
    for seed in 0..10u64 {
        let clean = synth_speech(LEN, FS, seed);
        let c = clean.samples().row(0).to_vec();
        let mut r = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n: Vec<f64> = (0..LEN).map(|_| normal(&mut r)).collect();
        let ec: f64 = c.iter().map(|v| v * v).sum();
        let en: f64 = n.iter().map(|v| v * v).sum();
        let mut prev = [f64::NEG_INFINITY; 3];
        for snr in [-10.0, -5.0, 0.0, 5.0, 10.0] {
            let g = (ec / (en * 10f64.powf(snr / 10.0))).sqrt();
            let y = Waveform::mono(c.iter().zip(&n).map(|(a, b)| a + g * b).collect(), FS).unwrap();
            let cur = [sdr(&clean, &y, 160).unwrap(), stoi(&clean, &y).unwrap(), estoi(&clean, &y).unwrap()];
            for k in 0..3 {
                ensure(cur[k] >= prev[k], || format!("seed {seed}, {snr} dB: metric {k} fell {} -> {}", prev[k], cur[k]))?;
            }
            if snr == 0.0 {
                for scale in [1e-3, 0.5, 1e3] {
                    let z = Waveform::new(y.samples().mapv(|v| v * scale), FS).unwrap();
                    worst_scale = worst_scale.max((stoi(&clean, &z).unwrap() - cur[1]).abs());
                    worst_scale = worst_scale.max((estoi(&clean, &z).unwrap() - cur[2]).abs());
                }
            }
            prev = cur;
        }
    }
    ensure(worst_scale <= 1e-6, || format!("scaling moved stoi/estoi by {worst_scale:e}"))?;
    Ok(format!("self-scores exact, monotone on 10 seeds, scale drift {worst_scale:.1e}"))
}

fn psd_fidelity() -> Check {
    let (m, t, b) = (3, 7, 9);
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let data = Array3::from_shape_simple_fn((m, t, b), || cnormal(&mut r));
    let s = Spectrogram { data, config: StftConfig::default(), sample_rate: 16000 };
    let speech = Array2::from_shape_simple_fn((t, b), || r.random::<f64>());
    let noise = Array2::from_shape_simple_fn((t, b), || r.random::<f64>());
    let masks = MaskPair::new(speech, noise).unwrap();
    let psd = estimate_psd(&s, &masks).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for f in 0..b {
        for (mask, phi) in [(masks.speech(), &psd.speech[f]), (masks.noise(), &psd.noise[f])] {
            for i in 0..m {
                for j in 0..m {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for tt in 0..t {
                        acc += mask[(tt, f)] * s.data[(i, tt, f)] * s.data[(j, tt, f)].conj();
                    }
                    worst = worst.max((acc - phi[(i, j)]).norm());
                }
            }
        }
    }
    ensure(worst < 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:.1e}"))
}

/// Runs every command once and returns the bytes of each primary output.
fn cli_outputs(dir: &Path, workers: &str, net: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let w = ["--workers", workers];
    let scene = dir.join("scene");
    let run = |args: &[&str]| maskbeam(&[&w[..], args].concat());
    run(&["simulate", "--seed", "7", "--channels", "6", "--noise", "pink", "--out", p(&scene)])?;
    let est = dir.join("est");
    let refs = dir.join("ref");
    fs::create_dir_all(&est).map_err(|e| e.to_string())?;
    fs::create_dir_all(&refs).map_err(|e| e.to_string())?;
    for method in ["gev-oracle", "ds", "mask1ch-oracle"] {
        let out = est.join(format!("{method}.wav"));
        run(&["enhance", "--method", method, "--scene", p(&scene), "--out", p(&out)])?;
        fs::copy(scene.join("clean.wav"), refs.join(format!("{method}.wav"))).map_err(|e| e.to_string())?;
    }
    let dump = dir.join("weights.json");
    run(&["enhance", "--method", "gev-net", "--scene", p(&scene), "--weights", p(net), "--ban", "--weights-dump", p(&dump), "--out", p(&dir.join("gev-net.wav"))])?;
    run(&["metrics", "--reference", p(&refs), "--estimate", p(&est), "--out", p(&dir.join("batch.json"))])?;
    let stdout = run(&["metrics", "--reference", p(&scene.join("clean.wav")), "--estimate", p(&scene.join("mixture.wav"))])?;
    fs::write(dir.join("single.json"), stdout).map_err(|e| e.to_string())?;
    run(&["train-mask", "--auto-generate", "3", "--seed", "4", "--steps", "2", "--batch-size", "2", "--out", p(&dir.join("net.json"))])?;

    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, fs::read(&path).map_err(|e| e.to_string())?));
            }
        }
    }
    files.sort();
    Ok(files)
}

fn determinism(work: &Path) -> Check {
    let net = work.join("train_net.json");
    if !net.is_file() {
        return Err("needs the trained net from the mask-training check".into());
    }
    let base = cli_outputs(&work.join("det_w1_a"), "1", &net)?;
    for (tag, workers) in [("det_w1_b", "1"), ("det_w4_a", "4"), ("det_w4_b", "4")] {
        let other = cli_outputs(&work.join(tag), workers, &net)?;
        let names: Vec<&String> = base.iter().map(|f| &f.0).collect();
        let other_names: Vec<&String> = other.iter().map(|f| &f.0).collect();
        ensure(names == other_names, || format!("{tag}: different file sets"))?;
        for ((name, a), (_, b)) in base.iter().zip(&other) {
            ensure(a == b, || format!("{tag}: {name} differs"))?;
        }
    }
    Ok(format!("{} files byte-identical over 2 runs x workers {{1, 4}}", base.len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let work: PathBuf = tmp.path().to_path_buf();
    let checks: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("stft_perfect_reconstruction", Box::new(stft_reconstruction)),
        ("gev_correctness", Box::new(gev_correctness)),
        ("gev_scale_invariance", Box::new(scale_invariance)),
        ("end_to_end_enhancement_floor", Box::new(|| end_to_end(&work))),
        ("blstm_correctness", Box::new(blstm_correctness)),
        ("mask_training", Box::new(|| mask_training(&work))),
        ("metric_sanity", Box::new(metric_sanity)),
        ("psd_estimate_fidelity", Box::new(psd_fidelity)),
        ("cli_determinism", Box::new(|| determinism(&work))),
    ];
    let mut failed = 0;
    for (name, check) in &checks {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
