//! BLSTM mask estimator: one bidirectional LSTM layer followed by three
//! feed-forward layers (ReLU, clipped ReLU, sigmoid). The sigmoid output is
//! split into a speech mask (first half) and a noise mask (second half).
//!
//! Parameters are always f32-representable so that saving to the f32 weight
//! format is lossless; all arithmetic runs in f64.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{bce_loss, MaskError, MaskPair, BCE_CLAMP};

/// Keep probability of the dropout applied to the L1-L3 outputs.
pub const KEEP_PROB: f64 = 0.5;
/// Global gradient norm bound applied before each SGD update.
pub const GRAD_CLIP_NORM: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskNetDims {
    /// Number of frequency bins per input frame.
    pub input: usize,
    /// LSTM units per direction.
    pub hidden: usize,
    pub ff1: usize,
    pub ff2: usize,
}

impl MaskNetDims {
    /// 513 bins in, 256 BLSTM units per direction, two 513-unit
    /// feed-forward layers, 1026 sigmoid outputs.
    pub const STANDARD: MaskNetDims = MaskNetDims { input: 513, hidden: 256, ff1: 513, ff2: 513 };

    pub fn output(&self) -> usize {
        2 * self.input
    }

    /// Expected tensor shapes, in manifest order.
    pub fn tensor_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (i, h) = (self.input, self.hidden);
        vec![
            ("l1.fwd.w_ih", vec![4 * h, i]),
            ("l1.fwd.w_hh", vec![4 * h, h]),
            ("l1.fwd.b", vec![4 * h]),
            ("l1.bwd.w_ih", vec![4 * h, i]),
            ("l1.bwd.w_hh", vec![4 * h, h]),
            ("l1.bwd.b", vec![4 * h]),
            ("l2.w", vec![self.ff1, 2 * h]),
            ("l2.b", vec![self.ff1]),
            ("l3.w", vec![self.ff2, self.ff1]),
            ("l3.b", vec![self.ff2]),
            ("l4.w", vec![self.output(), self.ff2]),
            ("l4.b", vec![self.output()]),
        ]
    }
}

/// LSTM parameters with gates stacked in the order input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Lstm {
    pub(crate) w_ih: Array2<f64>,
    pub(crate) w_hh: Array2<f64>,
    pub(crate) b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    pub(crate) w: Array2<f64>,
    pub(crate) b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskNet {
    dims: MaskNetDims,
    pub(crate) fwd: Lstm,
    pub(crate) bwd: Lstm,
    pub(crate) l2: Dense,
    pub(crate) l3: Dense,
    pub(crate) l4: Dense,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

impl Lstm {
    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Array2::zeros((4 * hidden, input)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }
}

impl Dense {
    fn zeros(input: usize, output: usize) -> Self {
        Self { w: Array2::zeros((output, input)), b: Array1::zeros(output) }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }
}

struct LstmTrace {
    /// Activated gates per frame: i, f, g, o.
    gates: Array2<f64>,
    cell: Array2<f64>,
    tanh_cell: Array2<f64>,
    hidden: Array2<f64>,
}

fn lstm_forward(p: &Lstm, x: ArrayView2<'_, f64>) -> LstmTrace {
    let h = p.hidden();
    let frames = x.nrows();
    let mut gates = x.dot(&p.w_ih.t()) + &p.b;
    let mut cell = Array2::zeros((frames, h));
    let mut tanh_cell = Array2::zeros((frames, h));
    let mut hidden = Array2::zeros((frames, h));
    let mut h_prev = Array1::<f64>::zeros(h);
    let mut c_prev = Array1::<f64>::zeros(h);
    for t in 0..frames {
        let rec = p.w_hh.dot(&h_prev);
        let mut z = gates.row_mut(t);
        z += &rec;
        for j in 0..h {
            z[j] = sigmoid(z[j]);
            z[h + j] = sigmoid(z[h + j]);
            z[2 * h + j] = z[2 * h + j].tanh();
            z[3 * h + j] = sigmoid(z[3 * h + j]);
            let c = z[h + j] * c_prev[j] + z[j] * z[2 * h + j];
            let tc = c.tanh();
            cell[(t, j)] = c;
            tanh_cell[(t, j)] = tc;
            hidden[(t, j)] = z[3 * h + j] * tc;
        }
        h_prev.assign(&hidden.row(t));
        c_prev.assign(&cell.row(t));
    }
    LstmTrace { gates, cell, tanh_cell, hidden }
}

/// Accumulates parameter gradients into `grad` given the loss gradient with
/// respect to each frame's hidden output.
fn lstm_backward(p: &Lstm, x: ArrayView2<'_, f64>, trace: &LstmTrace, d_hidden: &Array2<f64>, grad: &mut Lstm) {
    let h = p.hidden();
    let frames = x.nrows();
    let mut dz = Array2::<f64>::zeros((frames, 4 * h));
    let mut dh_next = Array1::<f64>::zeros(h);
    let mut dc_next = Array1::<f64>::zeros(h);
    for t in (0..frames).rev() {
        let g = trace.gates.row(t);
        let mut dzt = dz.row_mut(t);
        for j in 0..h {
            let (i, f, cand, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let tc = trace.tanh_cell[(t, j)];
            let c_prev = if t > 0 { trace.cell[(t - 1, j)] } else { 0.0 };
            let dh = d_hidden[(t, j)] + dh_next[j];
            let d_o = dh * tc;
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            dzt[j] = dc * cand * i * (1.0 - i);
            dzt[h + j] = dc * c_prev * f * (1.0 - f);
            dzt[2 * h + j] = dc * i * (1.0 - cand * cand);
            dzt[3 * h + j] = d_o * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        dh_next = p.w_hh.t().dot(&dzt);
    }
    // Hidden state entering each frame: zero, then h_0..h_{T-2}.
    let mut h_prev = Array2::<f64>::zeros((frames, h));
    if frames > 1 {
        h_prev.slice_mut(s![1.., ..]).assign(&trace.hidden.slice(s![..frames - 1, ..]));
    }
    grad.w_ih += &dz.t().dot(&x);
    grad.w_hh += &dz.t().dot(&h_prev);
    grad.b += &dz.sum_axis(Axis(0));
}

struct Trace {
    fwd: LstmTrace,
    bwd: LstmTrace,
    reversed: Array2<f64>,
    drop: [Option<Array2<f64>>; 3],
    a1: Array2<f64>,
    z2: Array2<f64>,
    a2: Array2<f64>,
    z3: Array2<f64>,
    a3: Array2<f64>,
    probs: Array2<f64>,
}

fn dropout_mask(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < KEEP_PROB { 1.0 / KEEP_PROB } else { 0.0 })
}

fn reverse_rows(x: ArrayView2<'_, f64>) -> Array2<f64> {
    x.slice(s![..;-1, ..]).to_owned()
}

fn apply_drop(x: &mut Array2<f64>, mask: &Option<Array2<f64>>) {
    if let Some(m) = mask {
        *x *= m;
    }
}

impl MaskNet {
    pub fn zeros(dims: MaskNetDims) -> Self {
        Self {
            dims,
            fwd: Lstm::zeros(dims.input, dims.hidden),
            bwd: Lstm::zeros(dims.input, dims.hidden),
            l2: Dense::zeros(2 * dims.hidden, dims.ff1),
            l3: Dense::zeros(dims.ff1, dims.ff2),
            l4: Dense::zeros(dims.ff2, dims.output()),
        }
    }

    /// Seeded random initialization: LSTM weights uniform in ±1/sqrt(hidden)
    /// with forget-gate bias 1, dense layers Glorot-uniform with zero bias.
    pub fn init(dims: MaskNetDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Self::zeros(dims);
        let k = 1.0 / (dims.hidden as f64).sqrt();
        let h = dims.hidden;
        for lstm in [&mut net.fwd, &mut net.bwd] {
            lstm.w_ih.mapv_inplace(|_| round_f32(rng.random_range(-k..k)));
            lstm.w_hh.mapv_inplace(|_| round_f32(rng.random_range(-k..k)));
            lstm.b.slice_mut(s![h..2 * h]).fill(1.0);
        }
        for dense in [&mut net.l2, &mut net.l3, &mut net.l4] {
            let (out, inp) = dense.w.dim();
            let limit = (6.0 / (inp + out) as f64).sqrt();
            dense.w.mapv_inplace(|_| round_f32(rng.random_range(-limit..limit)));
        }
        net
    }

    pub fn dims(&self) -> MaskNetDims {
        self.dims
    }

    /// Parameter tensors in manifest order.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let parts: [&[f64]; 12] = [
            self.fwd.w_ih.as_slice().expect("standard layout"),
            self.fwd.w_hh.as_slice().expect("standard layout"),
            self.fwd.b.as_slice().expect("standard layout"),
            self.bwd.w_ih.as_slice().expect("standard layout"),
            self.bwd.w_hh.as_slice().expect("standard layout"),
            self.bwd.b.as_slice().expect("standard layout"),
            self.l2.w.as_slice().expect("standard layout"),
            self.l2.b.as_slice().expect("standard layout"),
            self.l3.w.as_slice().expect("standard layout"),
            self.l3.b.as_slice().expect("standard layout"),
            self.l4.w.as_slice().expect("standard layout"),
            self.l4.b.as_slice().expect("standard layout"),
        ];
        self.dims.tensor_shapes().into_iter().map(|(n, _)| n).zip(parts).collect()
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.fwd.w_ih.as_slice_mut().expect("standard layout"),
            self.fwd.w_hh.as_slice_mut().expect("standard layout"),
            self.fwd.b.as_slice_mut().expect("standard layout"),
            self.bwd.w_ih.as_slice_mut().expect("standard layout"),
            self.bwd.w_hh.as_slice_mut().expect("standard layout"),
            self.bwd.b.as_slice_mut().expect("standard layout"),
            self.l2.w.as_slice_mut().expect("standard layout"),
            self.l2.b.as_slice_mut().expect("standard layout"),
            self.l3.w.as_slice_mut().expect("standard layout"),
            self.l3.b.as_slice_mut().expect("standard layout"),
            self.l4.w.as_slice_mut().expect("standard layout"),
            self.l4.b.as_slice_mut().expect("standard layout"),
        ]
    }

    /// Builds a net from tensors given in manifest order; values are rounded
    /// to f32 precision.
    pub fn from_tensors(dims: MaskNetDims, tensors: &[Vec<f64>]) -> Result<Self, MaskError> {
        let shapes = dims.tensor_shapes();
        if tensors.len() != shapes.len() {
            return Err(MaskError::Structure(format!(
                "expected {} tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        let mut net = Self::zeros(dims);
        for ((dst, src), (name, shape)) in net.tensors_mut().into_iter().zip(tensors).zip(&shapes) {
            if dst.len() != src.len() {
                return Err(MaskError::Tensor {
                    tensor: (*name).to_string(),
                    message: format!("expected {} values for shape {shape:?}, got {}", dst.len(), src.len()),
                });
            }
            for (d, s) in dst.iter_mut().zip(src) {
                *d = round_f32(*s);
            }
        }
        Ok(net)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn check_features(&self, features: &Array2<f64>) -> Result<(), MaskError> {
        if features.ncols() != self.dims.input {
            return Err(MaskError::ShapeMismatch(format!(
                "feature width {} does not match network input {}",
                features.ncols(),
                self.dims.input
            )));
        }
        Ok(())
    }

    fn run(&self, features: &Array2<f64>, train_mode: bool, rng: &mut ChaCha8Rng) -> Trace {
        let frames = features.nrows();
        let d = self.dims;
        let fwd = lstm_forward(&self.fwd, features.view());
        let reversed = reverse_rows(features.view());
        let bwd = lstm_forward(&self.bwd, reversed.view());
        let drop = if train_mode {
            [
                Some(dropout_mask(rng, (frames, 2 * d.hidden))),
                Some(dropout_mask(rng, (frames, d.ff1))),
                Some(dropout_mask(rng, (frames, d.ff2))),
            ]
        } else {
            [None, None, None]
        };
        let mut a1 = concatenate![Axis(1), fwd.hidden, reverse_rows(bwd.hidden.view())];
        apply_drop(&mut a1, &drop[0]);
        let z2 = self.l2.apply(&a1);
        let mut a2 = z2.mapv(|v| v.max(0.0));
        apply_drop(&mut a2, &drop[1]);
        let z3 = self.l3.apply(&a2);
        let mut a3 = z3.mapv(|v| v.clamp(0.0, 1.0));
        apply_drop(&mut a3, &drop[2]);
        let probs = self.l4.apply(&a3).mapv(sigmoid);
        Trace { fwd, bwd, reversed, drop, a1, z2, a2, z3, a3, probs }
    }

    fn split(&self, probs: Array2<f64>) -> MaskPair {
        let bins = self.dims.input;
        let speech = probs.slice(s![.., ..bins]).to_owned();
        let noise = probs.slice(s![.., bins..]).to_owned();
        MaskPair::new(speech, noise).expect("sigmoid outputs lie in [0, 1]")
    }

    /// Estimates speech and noise masks for one utterance of `frames × input`
    /// features. Dropout is active only in `train_mode`, driven by `rng_seed`.
    pub fn forward(&self, features: &Array2<f64>, train_mode: bool, rng_seed: u64) -> Result<MaskPair, MaskError> {
        self.check_features(features)?;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        Ok(self.split(self.run(features, train_mode, &mut rng).probs))
    }

    /// Per-utterance BCE and its gradient with respect to every parameter.
    fn utterance_grad(
        &self,
        features: &Array2<f64>,
        target: &MaskPair,
        train_mode: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, MaskNet), MaskError> {
        self.check_features(features)?;
        if target.dim() != (features.nrows(), self.dims.input) {
            return Err(MaskError::ShapeMismatch(format!(
                "target {:?} does not match {} frames × {} bins",
                target.dim(),
                features.nrows(),
                self.dims.input
            )));
        }
        let trace = self.run(features, train_mode, rng);
        let bins = self.dims.input;
        let targets = concatenate![Axis(1), target.speech().view(), target.noise().view()];
        let loss = bce_loss(&self.split(trace.probs.clone()), target)?;

        let count = trace.probs.len() as f64;
        let dz4 = Zip::from(&trace.probs).and(&targets).map_collect(|&p, &y| {
            if p < BCE_CLAMP || p > 1.0 - BCE_CLAMP {
                0.0
            } else {
                (p - y) / count
            }
        });
        debug_assert_eq!(dz4.ncols(), 2 * bins);

        let mut grad = MaskNet::zeros(self.dims);
        grad.l4.w.assign(&dz4.t().dot(&trace.a3));
        grad.l4.b.assign(&dz4.sum_axis(Axis(0)));
        let mut da3 = dz4.dot(&self.l4.w);
        apply_drop(&mut da3, &trace.drop[2]);
        let dz3 = Zip::from(&da3).and(&trace.z3).map_collect(|&d, &z| if z > 0.0 && z < 1.0 { d } else { 0.0 });
        grad.l3.w.assign(&dz3.t().dot(&trace.a2));
        grad.l3.b.assign(&dz3.sum_axis(Axis(0)));
        let mut da2 = dz3.dot(&self.l3.w);
        apply_drop(&mut da2, &trace.drop[1]);
        let dz2 = Zip::from(&da2).and(&trace.z2).map_collect(|&d, &z| if z > 0.0 { d } else { 0.0 });
        grad.l2.w.assign(&dz2.t().dot(&trace.a1));
        grad.l2.b.assign(&dz2.sum_axis(Axis(0)));
        let mut da1 = dz2.dot(&self.l2.w);
        apply_drop(&mut da1, &trace.drop[0]);

        let h = self.dims.hidden;
        let dh_fwd = da1.slice(s![.., ..h]).to_owned();
        let dh_bwd = reverse_rows(da1.slice(s![.., h..]));
        lstm_backward(&self.fwd, features.view(), &trace.fwd, &dh_fwd, &mut grad.fwd);
        lstm_backward(&self.bwd, trace.reversed.view(), &trace.bwd, &dh_bwd, &mut grad.bwd);
        Ok((loss, grad))
    }

    /// Mean per-utterance BCE over `batch` and its gradient. Utterance `u`
    /// draws its dropout masks from stream `u` of a ChaCha8 generator seeded
    /// with `rng_seed`.
    pub fn loss_and_gradient(
        &self,
        batch: &[(Array2<f64>, MaskPair)],
        train_mode: bool,
        rng_seed: u64,
    ) -> Result<(f64, MaskNet), MaskError> {
        if batch.is_empty() {
            return Err(MaskError::Empty("training batch is empty".into()));
        }
        let parts: Vec<Result<(f64, MaskNet), MaskError>> = batch
            .par_iter()
            .enumerate()
            .map(|(u, (features, target))| {
                let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
                rng.set_stream(u as u64);
                self.utterance_grad(features, target, train_mode, &mut rng)
            })
            .collect();
        let scale = 1.0 / batch.len() as f64;
        let mut total = MaskNet::zeros(self.dims);
        let mut loss = 0.0;
        for part in parts {
            let (l, g) = part?;
            loss += l;
            for (acc, v) in total.tensors_mut().into_iter().zip(g.tensors()) {
                for (a, b) in acc.iter_mut().zip(v.1) {
                    *a += b;
                }
            }
        }
        for t in total.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= scale);
        }
        Ok((loss * scale, total))
    }

    /// Mean inference-mode BCE over a set of utterances.
    pub fn evaluate(&self, batch: &[(Array2<f64>, MaskPair)]) -> Result<f64, MaskError> {
        if batch.is_empty() {
            return Err(MaskError::Empty("evaluation set is empty".into()));
        }
        let losses: Vec<Result<f64, MaskError>> = batch
            .par_iter()
            .map(|(f, y)| bce_loss(&self.forward(f, false, 0)?, y))
            .collect();
        let mut total = 0.0;
        for l in losses {
            total += l?;
        }
        Ok(total / batch.len() as f64)
    }

    /// One SGD step with full backpropagation through time on the mean BCE
    /// of `batch`, with the gradient clipped to a global norm of
    /// [`GRAD_CLIP_NORM`]. Returns the updated net and the pre-update loss.
    pub fn train_step(
        &self,
        batch: &[(Array2<f64>, MaskPair)],
        learning_rate: f64,
        rng_seed: u64,
    ) -> Result<(MaskNet, f64), MaskError> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(MaskError::InvalidArgument(format!("learning rate {learning_rate} must be finite and >= 0")));
        }
        let (loss, grad) = self.loss_and_gradient(batch, true, rng_seed)?;
        let norm = grad.tensors().iter().flat_map(|(_, t)| t.iter()).map(|v| v * v).sum::<f64>().sqrt();
        let clip = if norm > GRAD_CLIP_NORM { GRAD_CLIP_NORM / norm } else { 1.0 };
        let step = learning_rate * clip;
        let mut next = self.clone();
        for (param, g) in next.tensors_mut().into_iter().zip(grad.tensors()) {
            for (p, d) in param.iter_mut().zip(g.1) {
                *p = round_f32(*p - step * d);
            }
        }
        Ok((next, loss))
    }
}
