//! Compact dilated causal convolutional forecaster.
//!
//! A stack of causal conv blocks with dilation `2^i` feeds a linear head
//! that reads the last timestep's channel vector. One set of weights serves
//! the frozen, online, and continual training regimes; offline training uses
//! seeded shuffled mini-batches, MAE loss, global L2 gradient clipping at 1,
//! and Adam.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{grad, clip_l2, AdamState, Graph, NodeId, Tensor};
use crate::timebase::WindowBatch;
use crate::{Error, Result};

const SHUFFLE_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Post-block nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Linear,
}

/// Architecture of the convolutional forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Number of conv blocks; block `i` uses dilation `2^i`.
    pub blocks: usize,
    /// Channels per block.
    pub channels: usize,
    /// Convolution kernel width.
    pub kernel: usize,
    /// Input feature width `|F|`.
    pub features: usize,
    /// Observation window length `W` (hours).
    pub window: usize,
    /// Forecast horizon `H` (hours).
    pub horizon: usize,
    pub activation: Activation,
    /// Seeds both weight initialization and mini-batch shuffling.
    pub seed: u64,
}

impl NetConfig {
    pub fn new(features: usize, window: usize, horizon: usize, seed: u64) -> Self {
        Self {
            blocks: 3,
            channels: 32,
            kernel: 3,
            features,
            window,
            horizon,
            activation: Activation::Relu,
            seed,
        }
    }

    /// `1 + (kernel − 1) · Σ 2^i` over the block dilations.
    pub fn receptive_field(&self) -> usize {
        let dilation_sum: usize = (0..self.blocks).map(|i| 1usize << i).sum();
        1 + (self.kernel - 1) * dilation_sum
    }

    fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.channels == 0 || self.kernel == 0 {
            return Err(Error::InvalidConfig("blocks, channels, kernel must be ≥ 1".into()));
        }
        if self.features == 0 || self.window == 0 || self.horizon == 0 {
            return Err(Error::InvalidConfig("features, window, horizon must be ≥ 1".into()));
        }
        let rf = self.receptive_field();
        if rf > self.window {
            return Err(Error::InvalidConfig(alloc::format!(
                "receptive field {rf} exceeds window {}",
                self.window
            )));
        }
        Ok(())
    }
}

/// Weights plus optimizer state. Parameter order is
/// `[conv_w0, conv_b0, …, head_w, head_b]` throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetState {
    pub config: NetConfig,
    conv_w: Vec<Tensor>,
    conv_b: Vec<Tensor>,
    head_w: Tensor,
    head_b: Tensor,
    pub optimizer: AdamState,
}

impl NetState {
    pub fn params(&self) -> Vec<Tensor> {
        let mut out = Vec::with_capacity(2 * self.config.blocks + 2);
        for (w, b) in self.conv_w.iter().zip(&self.conv_b) {
            out.push(w.clone());
            out.push(b.clone());
        }
        out.push(self.head_w.clone());
        out.push(self.head_b.clone());
        out
    }

    pub fn set_params(&mut self, params: Vec<Tensor>) {
        let mut it = params.into_iter();
        for b in 0..self.config.blocks {
            self.conv_w[b] = it.next().expect("conv weight");
            self.conv_b[b] = it.next().expect("conv bias");
        }
        self.head_w = it.next().expect("head weight");
        self.head_b = it.next().expect("head bias");
    }

    pub fn conv_weight(&self, block: usize) -> &Tensor {
        &self.conv_w[block]
    }

    pub fn conv_weight_mut(&mut self, block: usize) -> &mut Tensor {
        &mut self.conv_w[block]
    }

    pub fn conv_bias_mut(&mut self, block: usize) -> &mut Tensor {
        &mut self.conv_b[block]
    }

    pub fn head_bias(&self) -> &Tensor {
        &self.head_b
    }
}

fn uniform_tensor(rng: &mut ChaCha12Rng, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / crate::fmath::sqrt(fan_in as f64);
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(rows, cols, data).expect("sized data")
}

/// Fresh weights drawn uniform in `±1/√fan_in` from the seeded generator.
pub fn net_init(config: NetConfig) -> Result<NetState> {
    config.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut conv_w = Vec::with_capacity(config.blocks);
    let mut conv_b = Vec::with_capacity(config.blocks);
    for block in 0..config.blocks {
        let c_in = if block == 0 { config.features } else { config.channels };
        let fan_in = config.kernel * c_in;
        conv_w.push(uniform_tensor(&mut rng, config.channels, config.kernel * c_in, fan_in));
        conv_b.push(uniform_tensor(&mut rng, 1, config.channels, fan_in));
    }
    let head_w = uniform_tensor(&mut rng, config.channels, config.horizon, config.channels);
    let head_b = uniform_tensor(&mut rng, 1, config.horizon, config.channels);

    let state = NetState {
        optimizer: AdamState::new(
            &{
                let mut p = Vec::new();
                for (w, b) in conv_w.iter().zip(&conv_b) {
                    p.push(w.clone());
                    p.push(b.clone());
                }
                p.push(head_w.clone());
                p.push(head_b.clone());
                p
            },
            0.0,
        ),
        config,
        conv_w,
        conv_b,
        head_w,
        head_b,
    };
    Ok(state)
}

/// Per-block adaptation hooks: a `[1, channels]` scale over the conv
/// weight's output channels and a `[1, channels]` shift on the block output.
pub(crate) struct BlockHooks {
    pub scale: NodeId,
    pub shift: NodeId,
}

/// Builds the forward graph and returns the parameter leaves (in
/// [`NetState::params`] order) and the `[1, horizon]` prediction node.
pub(crate) fn build_forward(
    g: &mut Graph,
    state: &NetState,
    x: NodeId,
    hooks: Option<&[BlockHooks]>,
) -> Result<(Vec<NodeId>, NodeId)> {
    let cfg = &state.config;
    if let Some(h) = hooks {
        if h.len() != cfg.blocks {
            return Err(Error::LengthMismatch(alloc::format!(
                "{} hooks for {} blocks",
                h.len(),
                cfg.blocks
            )));
        }
    }
    let mut params = Vec::with_capacity(2 * cfg.blocks + 2);
    let mut cur = x;
    for block in 0..cfg.blocks {
        let w = g.leaf(state.conv_w[block].clone());
        let b = g.leaf(state.conv_b[block].clone());
        params.push(w);
        params.push(b);
        let w_eff = match hooks {
            Some(h) => g.scale_rows(w, h[block].scale)?,
            None => w,
        };
        let conv = g.conv1d(cur, w_eff, cfg.kernel, 1 << block)?;
        let mut z = g.shift_cols(conv, b)?;
        if let Some(h) = hooks {
            z = g.shift_cols(z, h[block].shift)?;
        }
        cur = match cfg.activation {
            Activation::Relu => g.relu(z),
            Activation::Tanh => g.tanh(z),
            Activation::Linear => z,
        };
    }
    let last = g.slice_rows(cur, cfg.window - 1, cfg.window)?;
    let head_w = g.leaf(state.head_w.clone());
    let head_b = g.leaf(state.head_b.clone());
    params.push(head_w);
    params.push(head_b);
    let projected = g.matmul(last, head_w)?;
    let yhat = g.shift_cols(projected, head_b)?;
    Ok((params, yhat))
}

fn check_input(state: &NetState, x: &Tensor) -> Result<()> {
    if x.shape() != (state.config.window, state.config.features) {
        return Err(Error::ShapeMismatch(alloc::format!(
            "input {:?}, net expects ({}, {})",
            x.shape(),
            state.config.window,
            state.config.features
        )));
    }
    Ok(())
}

/// Forecast one window. Causal: the output depends only on rows inside the
/// receptive field ending at the last timestep.
pub fn net_forward(state: &NetState, x: &Tensor) -> Result<Vec<f64>> {
    check_input(state, x)?;
    let mut g = Graph::new();
    let x_id = g.leaf(x.clone());
    let (_, yhat) = build_forward(&mut g, state, x_id, None)?;
    Ok(g.value(yhat).data().to_vec())
}

/// MAE loss of one sample under the current weights.
pub fn net_loss(state: &NetState, x: &Tensor, y: &[f64]) -> Result<f64> {
    let yhat = net_forward(state, x)?;
    crate::report::mae(y, &yhat)
}

/// Gradients of the single-sample MAE with respect to the parameters, in
/// [`NetState::params`] order. Not clipped.
pub(crate) fn sample_gradients(state: &NetState, x: &Tensor, y: &[f64]) -> Result<Vec<Tensor>> {
    check_input(state, x)?;
    let mut g = Graph::new();
    let x_id = g.leaf(x.clone());
    let (params, yhat) = build_forward(&mut g, state, x_id, None)?;
    let target = g.leaf(Tensor::row(y.to_vec()));
    let diff = g.sub(yhat, target)?;
    let absdiff = g.abs(diff);
    let loss = g.mean(absdiff);
    grad(&g, loss, &params)
}

fn batch_input_tensor(batch: &WindowBatch, i: usize) -> Tensor {
    Tensor::new(batch.window, batch.width, batch.input(i).to_vec()).expect("batch layout")
}

/// Offline training: seeded shuffled mini-batches of `batch_size`, mean MAE
/// loss, clip at L2 norm 1, Adam. The final partial mini-batch is dropped,
/// giving exactly `⌊N/batch_size⌋` optimizer steps per epoch.
pub fn train_offline(
    state: &mut NetState,
    batch: &WindowBatch,
    epochs: usize,
    batch_size: usize,
    lr: f64,
) -> Result<()> {
    if batch.n == 0 || batch_size == 0 {
        return Err(Error::EmptyInput("training batch".into()));
    }
    if batch.width != state.config.features || batch.window != state.config.window {
        return Err(Error::ShapeMismatch(alloc::format!(
            "batch ({}, {}) vs net ({}, {})",
            batch.window,
            batch.width,
            state.config.window,
            state.config.features
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(state.config.seed ^ SHUFFLE_SALT);
    let mut order: Vec<usize> = (0..batch.n).collect();

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks_exact(batch_size.min(batch.n)) {
            let mut acc: Option<Vec<Tensor>> = None;
            for &i in chunk {
                let x = batch_input_tensor(batch, i);
                let grads = sample_gradients(state, &x, batch.target(i))?;
                match &mut acc {
                    None => acc = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            for (av, gv) in a.data_mut().iter_mut().zip(g.data()) {
                                *av += gv;
                            }
                        }
                    }
                }
            }
            let mut grads = acc.expect("non-empty chunk");
            let scale = 1.0 / chunk.len() as f64;
            for g in &mut grads {
                for v in g.data_mut() {
                    *v *= scale;
                }
            }
            clip_l2(&mut grads, 1.0);
            state.optimizer.lr = lr;
            let mut params = state.params();
            state.optimizer.step(&mut params, &grads)?;
            state.set_params(params);
        }
    }
    Ok(())
}

/// One prequential update: forward, MAE loss, backward, clip at 1, Adam.
pub fn net_online_step(state: &mut NetState, x: &Tensor, y: &[f64], lr: f64) -> Result<()> {
    let mut grads = sample_gradients(state, x, y)?;
    clip_l2(&mut grads, 1.0);
    state.optimizer.lr = lr;
    let mut params = state.params();
    state.optimizer.step(&mut params, &grads)?;
    state.set_params(params);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fmath;
    use crate::numerics::finite_diff;

    fn tiny_config(seed: u64) -> NetConfig {
        NetConfig {
            blocks: 1,
            channels: 3,
            kernel: 3,
            features: 2,
            window: 8,
            horizon: 1,
            activation: Activation::Relu,
            seed,
        }
    }

    fn window(seed: u64, rows: usize, cols: usize) -> Tensor {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect();
        Tensor::new(rows, cols, data).unwrap()
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = net_init(tiny_config(5)).unwrap();
        let b = net_init(tiny_config(5)).unwrap();
        assert_eq!(a, b);
        let c = net_init(tiny_config(6)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn receptive_field_guard() {
        // kernel 3, 5 blocks: dilations 1..16 give RF 63, too wide for W=24.
        let cfg = NetConfig { blocks: 5, window: 24, ..tiny_config(0) };
        assert_eq!(cfg.receptive_field(), 63);
        assert!(net_init(cfg).is_err());
    }

    #[test]
    fn zero_weights_forward_is_head_bias() {
        let mut state = net_init(tiny_config(1)).unwrap();
        let zeroed: Vec<Tensor> =
            state.params().iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        let mut with_bias = zeroed;
        let last = with_bias.len() - 1;
        with_bias[last] = Tensor::row(alloc::vec![2.5]);
        state.set_params(with_bias);
        let y = net_forward(&state, &window(2, 8, 2)).unwrap();
        assert_eq!(y, alloc::vec![2.5]);
    }

    #[test]
    fn perturbation_respects_receptive_field() {
        // One block, kernel 3, dilation 1: head sees rows W-1, W-2, W-3 only.
        let state = net_init(tiny_config(3)).unwrap();
        let x = window(7, 8, 2);
        let base = net_forward(&state, &x).unwrap();
        for row in 0..8 {
            let mut bumped = x.clone();
            bumped.set(row, 0, bumped.at(row, 0) + 0.75);
            let y = net_forward(&state, &bumped).unwrap();
            let changed = (y[0] - base[0]).abs() > 0.0;
            if row >= 5 {
                assert!(changed, "row {row} inside the receptive field had no effect");
            } else {
                assert_eq!(y[0], base[0], "row {row} outside the receptive field leaked");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let state = net_init(tiny_config(11)).unwrap();
        let x = window(13, 8, 2);
        let y = alloc::vec![0.4];
        let analytic = sample_gradients(&state, &x, &y).unwrap();
        let fd = finite_diff(
            |params: &[Tensor]| {
                let mut s = state.clone();
                s.set_params(params.to_vec());
                net_loss(&s, &x, &y)
            },
            &state.params(),
            1e-5,
        )
        .unwrap();
        for (a, f) in analytic.iter().zip(&fd) {
            for (av, fv) in a.data().iter().zip(f.data()) {
                let denom = av.abs().max(fv.abs()).max(1.0);
                assert!((av - fv).abs() / denom < 1e-6, "{av} vs {fv}");
            }
        }
    }

    #[test]
    fn offline_zero_epochs_is_identity() {
        let mut state = net_init(tiny_config(2)).unwrap();
        let before = state.clone();
        let batch = crate::timebase::WindowBatch::from_parts(
            8,
            2,
            1,
            window(1, 80, 2).data().to_vec(),
            alloc::vec![0.0; 10],
        )
        .unwrap();
        train_offline(&mut state, &batch, 0, 4, 1e-3).unwrap();
        assert_eq!(state, before);
    }

    #[test]
    fn updates_per_epoch_drop_partial_batches() {
        let mut state = net_init(tiny_config(4)).unwrap();
        let n = 2160;
        let x: Vec<f64> = window(9, n * 8, 2).data().to_vec();
        let batch =
            crate::timebase::WindowBatch::from_parts(8, 2, 1, x, alloc::vec![0.1; n]).unwrap();
        train_offline(&mut state, &batch, 1, 64, 1e-4).unwrap();
        assert_eq!(state.optimizer.step_count(0), 33); // ⌊2160/64⌋
    }

    #[test]
    fn overfits_a_single_sample() {
        let mut state = net_init(tiny_config(21)).unwrap();
        let x = window(22, 8, 2);
        let y = alloc::vec![1.3];
        let start = net_loss(&state, &x, &y).unwrap();
        for _ in 0..500 {
            net_online_step(&mut state, &x, &y, 1e-2).unwrap();
        }
        let end = net_loss(&state, &x, &y).unwrap();
        assert!(end < 0.1 * start, "loss {start} -> {end}");
    }

    #[test]
    fn online_lr_zero_is_identity_on_weights() {
        let mut state = net_init(tiny_config(8)).unwrap();
        let params_before = state.params();
        net_online_step(&mut state, &window(3, 8, 2), &[0.7], 0.0).unwrap();
        assert_eq!(state.params(), params_before);
    }

    #[test]
    fn seeded_training_is_deterministic() {
        let x: Vec<f64> = window(5, 40 * 8, 2).data().to_vec();
        let batch = crate::timebase::WindowBatch::from_parts(
            8,
            2,
            1,
            x,
            (0..40).map(|i| (i as f64 * 0.3).sin()).collect(),
        )
        .unwrap();
        let mut a = net_init(tiny_config(17)).unwrap();
        let mut b = net_init(tiny_config(17)).unwrap();
        train_offline(&mut a, &batch, 3, 8, 1e-3).unwrap();
        train_offline(&mut b, &batch, 3, 8, 1e-3).unwrap();
        assert_eq!(a, b);
    }
}
