use ndarray::Array2;
use serde::Serialize;

use maskbeam::audio_io::{read_wav, write_wav, Encoding, Waveform};
use maskbeam::beamform::BeamformerWeights;
use maskbeam::mask::{load_net, normalize_features, MaskNet, MaskPair};
use maskbeam::pipeline::{enhance_delay_and_sum, enhance_mask_1ch, gev_beamform, net_masks, GevOptions};
use maskbeam::simulate::{import_scene, scene_to_oracle_masks, Scene};
use maskbeam::stft::{magnitude, stft, StftConfig};

use crate::args::{EncodingArg, EnhanceArgs, MaskOverride, Method};
use crate::error::{CliError, CliResult};
use crate::util::{require_dir, require_file, require_parent, write_json};

#[derive(Serialize)]
struct EnhanceSidecar<'a> {
    method: &'a str,
    sample_rate: u32,
    channels: usize,
    stft: StftConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask_kind: Option<maskbeam::simulate::MaskKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask_override: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ban: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diag_loading: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    channel: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_lag: Option<usize>,
}

#[derive(Serialize)]
struct WeightsDump {
    bins: usize,
    channels: usize,
    /// `filters[b][m] = [re, im]`
    filters: Vec<Vec<[f64; 2]>>,
    eigenvalues: Vec<f64>,
}

impl From<&BeamformerWeights> for WeightsDump {
    fn from(w: &BeamformerWeights) -> Self {
        WeightsDump {
            bins: w.num_bins(),
            channels: w.num_channels(),
            filters: w.filters.rows().into_iter().map(|r| r.iter().map(|c| [c.re, c.im]).collect()).collect(),
            eigenvalues: w.eigenvalues.clone(),
        }
    }
}

fn validate(a: &EnhanceArgs) -> CliResult<()> {
    a.stft.config().validate()?;
    match (&a.scene, &a.input) {
        (Some(_), Some(_)) => return Err(CliError::validation("give either --scene or --input, not both")),
        (None, None) => return Err(CliError::validation("one of --scene or --input is required")),
        (Some(dir), None) => require_dir(dir, "--scene")?,
        (None, Some(p)) => require_file(p, "--input")?,
    }
    if a.method.uses_oracle() && a.scene.is_none() && a.mask_override.is_none() {
        return Err(CliError::validation(format!("{} needs --scene for the oracle masks", a.method.label())));
    }
    if a.method.uses_net() {
        match &a.weights {
            Some(w) => require_file(w, "--weights")?,
            None => return Err(CliError::validation(format!("{} needs --weights", a.method.label()))),
        }
    }
    if a.method == Method::Ds && a.mask_override.is_some() {
        return Err(CliError::validation("--mask-override does not apply to ds"));
    }
    if !(a.diag_loading >= 0.0 && a.diag_loading.is_finite()) {
        return Err(CliError::validation("--diag-loading must be finite and >= 0"));
    }
    require_parent(&a.out, "--out")?;
    if let Some(d) = &a.weights_dump {
        require_parent(d, "--weights-dump")?;
    }
    Ok(())
}

fn load_checked_net(a: &EnhanceArgs, cfg: &StftConfig) -> CliResult<MaskNet> {
    let net = load_net(a.weights.as_ref().expect("validated"))?;
    if net.dims().input != cfg.num_bins() {
        return Err(CliError::validation(format!(
            "network expects {} bins but the STFT has {}",
            net.dims().input,
            cfg.num_bins()
        )));
    }
    Ok(net)
}

fn masks_for(a: &EnhanceArgs, scene: Option<&Scene>, mixture: &Waveform, cfg: &StftConfig) -> CliResult<MaskPair> {
    let dims = (cfg.num_frames(mixture.num_frames()), cfg.num_bins());
    if let Some(o) = a.mask_override {
        let fill = if o == MaskOverride::Ones { 1.0 } else { 0.0 };
        return Ok(MaskPair::complementary(Array2::from_elem(dims, fill))?);
    }
    match a.method {
        Method::GevOracle | Method::Mask1chOracle => {
            Ok(scene_to_oracle_masks(scene.expect("validated"), cfg, a.mask_kind.into())?)
        }
        Method::GevNet => {
            let net = load_checked_net(a, cfg)?;
            Ok(net_masks(&net, &stft(mixture, cfg)?, a.condense.into())?)
        }
        Method::Mask1chNet => {
            let net = load_checked_net(a, cfg)?;
            let spec = stft(&mixture.select_channel(a.channel)?, cfg)?;
            Ok(net.forward(&normalize_features(&magnitude(&spec, 0)?), false, 0)?)
        }
        Method::Ds => unreachable!("delay-and-sum uses no masks"),
    }
}

pub fn run(a: &EnhanceArgs) -> CliResult<()> {
    validate(a)?;
    let cfg = a.stft.config();
    let scene = match &a.scene {
        Some(dir) => Some(import_scene(dir)?.0),
        None => None,
    };
    let mixture = match (&scene, &a.input) {
        (Some(s), _) => s.mixture.clone(),
        (None, Some(p)) => read_wav(p)?,
        (None, None) => unreachable!("validated"),
    };
    let channels = mixture.num_channels();
    if matches!(a.method, Method::Ds | Method::Mask1chOracle | Method::Mask1chNet) && a.channel >= channels {
        return Err(CliError::validation(format!("--channel {} out of range for {channels} channels", a.channel)));
    }

    let opts = GevOptions { diag_loading: a.diag_loading, ban: a.ban };
    let mut dump = None;
    let enhanced = match a.method {
        Method::Ds => enhance_delay_and_sum(&mixture, a.channel, a.max_lag)?,
        Method::GevOracle | Method::GevNet => {
            let masks = masks_for(a, scene.as_ref(), &mixture, &cfg)?;
            let (out, weights) = gev_beamform(&mixture, &masks, &cfg, opts)?;
            dump = Some(weights);
            out
        }
        Method::Mask1chOracle | Method::Mask1chNet => {
            let masks = masks_for(a, scene.as_ref(), &mixture, &cfg)?;
            enhance_mask_1ch(&mixture, a.channel, masks.speech(), &cfg)?
        }
    };

    let encoding = match a.encoding {
        EncodingArg::Float32 => Encoding::Float32,
        EncodingArg::Pcm16 => Encoding::Pcm16,
    };
    write_wav(&a.out, &enhanced, encoding)?;
    if let Some(path) = &a.weights_dump {
        let w = dump.ok_or_else(|| CliError::validation("--weights-dump needs a GEV method"))?;
        write_json(path, &WeightsDump::from(&w))?;
    }
    let gev = matches!(a.method, Method::GevOracle | Method::GevNet);
    let sidecar = EnhanceSidecar {
        method: a.method.label(),
        sample_rate: enhanced.sample_rate(),
        channels,
        stft: cfg,
        mask_kind: (a.method.uses_oracle() && a.mask_override.is_none()).then(|| a.mask_kind.into()),
        mask_override: a.mask_override.map(|o| if o == MaskOverride::Ones { "ones" } else { "zeros" }),
        ban: gev.then_some(a.ban),
        diag_loading: gev.then_some(a.diag_loading),
        channel: (!gev).then_some(a.channel),
        max_lag: (a.method == Method::Ds).then_some(a.max_lag),
    };
    write_json(&a.out.with_extension("json"), &sidecar)
}
