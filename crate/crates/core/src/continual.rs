//! Fast-and-slow continual learning over the convolutional backbone.
//!
//! Each conv block gets an adapter driven by two EMAs of its compressed
//! gradient: a learned calibrator maps both EMAs to a per-channel weight
//! scale and feature shift, starting at exact identity so the learner begins
//! as plain online learning. Feeding both EMAs keeps the mechanism agnostic
//! to which of γ and γ′ is the faster coefficient: the calibrator itself
//! learns which channel carries the adaptation signal. When the two EMAs
//! point in opposing directions (cosine below −τ) the block consults an
//! associative memory of past adapter states: an attention read is blended
//! into the current adaptation and the result is written back.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::fmath;
use crate::neural::{build_forward, BlockHooks, NetState};
use crate::numerics::{clip_l2, cosine, grad, Graph, Tensor};
use crate::{Error, Result};

const PROJECTION_SALT: u64 = 0xC0FF_EE00_5EED_1234;

/// Continual-learner hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinualConfig {
    /// Fast gradient-EMA coefficient, in (0, 1).
    pub gamma: f64,
    /// Slow gradient-EMA coefficient, in (0, 1).
    pub gamma_prime: f64,
    /// Interference trigger threshold, in (0, 1): the memory fires when
    /// cosine(fast, slow) < −τ.
    pub tau: f64,
    /// Associative memory capacity per block.
    pub memory_slots: usize,
    /// Compressed gradient dimension.
    pub compress_dim: usize,
    /// Blend weight for memory reads and write-backs.
    pub blend: f64,
}

impl Default for ContinualConfig {
    fn default() -> Self {
        Self {
            gamma: 0.8,
            gamma_prime: 0.99,
            tau: 0.75,
            memory_slots: 32,
            compress_dim: 32,
            blend: 0.9,
        }
    }
}

impl ContinualConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("gamma_prime", self.gamma_prime),
            ("tau", self.tau),
            ("blend", self.blend),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidConfig(alloc::format!("{name} {v} outside (0, 1)")));
            }
        }
        if self.memory_slots == 0 || self.compress_dim == 0 {
            return Err(Error::InvalidConfig(
                "memory_slots and compress_dim must be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

/// One block's adaptation: a per-out-channel weight scale and a per-channel
/// output shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterValue {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl AdapterValue {
    pub fn identity(channels: usize) -> Self {
        Self { scale: alloc::vec![1.0; channels], shift: alloc::vec![0.0; channels] }
    }

    fn blended(&self, other: &Self, blend: f64) -> Self {
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| blend * x + (1.0 - blend) * y).collect()
        };
        Self { scale: mix(&self.scale, &other.scale), shift: mix(&self.shift, &other.shift) }
    }
}

/// Per-block adapter state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAdapter {
    /// Fixed seeded random projection, `compress_dim × raw_grad_dim`.
    projection: Tensor,
    /// Linear calibrator `2·compress_dim × 2·channels` over the
    /// concatenated (fast, slow) EMAs, zero-initialized so the adaptation
    /// starts at exact identity.
    calibrator: Tensor,
    pub g_fast: Vec<f64>,
    pub g_slow: Vec<f64>,
    /// Slow EMA of the compressed gradient norm; standardizes the
    /// calibrator input scale. Zero until the first step.
    grad_scale: f64,
    /// Persistent contribution from memory interactions.
    mem_scale: Vec<f64>,
    mem_shift: Vec<f64>,
}

impl BlockAdapter {
    fn new(channels: usize, compress_dim: usize, raw_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / fmath::sqrt(compress_dim as f64)).expect("fixed std");
        let data = (0..compress_dim * raw_dim).map(|_| normal.sample(&mut rng)).collect();
        Self {
            projection: Tensor::new(compress_dim, raw_dim, data).expect("sized"),
            calibrator: Tensor::zeros(2 * compress_dim, 2 * channels),
            g_fast: alloc::vec![0.0; compress_dim],
            g_slow: alloc::vec![0.0; compress_dim],
            grad_scale: 0.0,
            mem_scale: alloc::vec![0.0; channels],
            mem_shift: alloc::vec![0.0; channels],
        }
    }

    pub fn calibrator(&self) -> &Tensor {
        &self.calibrator
    }

    fn compress(&self, raw: &[f64]) -> Vec<f64> {
        let (d, r) = self.projection.shape();
        debug_assert_eq!(r, raw.len());
        let mut out = alloc::vec![0.0; d];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &x) in raw.iter().enumerate() {
                acc += self.projection.at(i, j) * x;
            }
            *o = acc;
        }
        out
    }

    /// Calibrator input: both EMAs divided by a slow running scale of the
    /// compressed gradient norm. In distribution the features sit at O(1)
    /// whatever the EMA coefficients, so learned gains transfer across
    /// configurations; at a shift the gradient norm outruns the lagging
    /// scale and the features spike, which is the adaptation signal.
    fn ema_features(&self) -> Vec<f64> {
        let denom = self.grad_scale + 1e-12;
        let mut out = Vec::with_capacity(self.g_fast.len() + self.g_slow.len());
        out.extend(self.g_fast.iter().map(|v| v / denom));
        out.extend(self.g_slow.iter().map(|v| v / denom));
        out
    }

    fn calibrator_output(&self) -> Vec<f64> {
        let (d, m) = self.calibrator.shape();
        let input = self.ema_features();
        debug_assert_eq!(input.len(), d);
        let mut out = alloc::vec![0.0; m];
        for i in 0..d {
            let gi = input[i];
            if gi == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += gi * self.calibrator.at(i, j);
            }
        }
        out
    }

    /// Current adaptation: identity + calibrator(EMAs) + memory part.
    pub fn value(&self) -> AdapterValue {
        let channels = self.mem_scale.len();
        let cal = self.calibrator_output();
        let scale = (0..channels).map(|c| 1.0 + cal[c] + self.mem_scale[c]).collect();
        let shift = (0..channels).map(|c| cal[channels + c] + self.mem_shift[c]).collect();
        AdapterValue { scale, shift }
    }
}

/// One associative-memory slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorySlot {
    /// Unit-norm slow-EMA snapshot (or all zeros for a degenerate key).
    pub key: Vec<f64>,
    pub value: AdapterValue,
    pub hits: u64,
}

/// Bounded attention memory of past adapter states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssocMemory {
    capacity: usize,
    slots: Vec<MemorySlot>,
}

impl AssocMemory {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, slots: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.slots.len() >= self.capacity
    }

    pub fn slots(&self) -> &[MemorySlot] {
        &self.slots
    }

    /// Attention weights of `query` over the keys: softmax of key·query with
    /// temperature `1/√compress_dim`.
    fn attention(&self, query: &[f64]) -> Vec<f64> {
        let sharpen = fmath::sqrt(query.len() as f64);
        let scores: Vec<f64> = self
            .slots
            .iter()
            .map(|s| s.key.iter().zip(query).map(|(k, q)| k * q).sum::<f64>() * sharpen)
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| fmath::exp(s - max)).collect();
        let total: f64 = exps.iter().sum();
        exps.iter().map(|e| e / total).collect()
    }
}

fn normalize_key(v: &[f64]) -> Vec<f64> {
    let norm = fmath::sqrt(v.iter().map(|x| x * x).sum());
    if norm < 1e-12 {
        return alloc::vec![0.0; v.len()];
    }
    v.iter().map(|x| x / norm).collect()
}

/// Softmax-attention read of the memory; an empty memory reads as the
/// identity adaptation.
pub fn memory_read(memory: &AssocMemory, query: &[f64], channels: usize) -> AdapterValue {
    match attended_read(memory, query, channels) {
        Some((value, _)) => value,
        None => AdapterValue::identity(channels),
    }
}

fn attended_read(
    memory: &AssocMemory,
    query: &[f64],
    channels: usize,
) -> Option<(AdapterValue, usize)> {
    if memory.is_empty() {
        return None;
    }
    let weights = memory.attention(query);
    let mut scale = alloc::vec![0.0; channels];
    let mut shift = alloc::vec![0.0; channels];
    for (w, slot) in weights.iter().zip(&memory.slots) {
        for c in 0..channels {
            scale[c] += w * slot.value.scale[c];
            shift[c] += w * slot.value.shift[c];
        }
    }
    let top = weights
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite weights"))
        .map(|(i, _)| i)
        .expect("non-empty");
    Some((AdapterValue { scale, shift }, top))
}

/// Outcome of one continual step, for inspection and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    /// cosine(g_fast, g_slow) per block, after the EMA update.
    pub interference: Vec<f64>,
    /// Whether the memory interaction fired per block.
    pub triggered: Vec<bool>,
    /// L2 norm of each block's compressed raw gradient.
    pub compressed_norms: Vec<f64>,
}

/// The neural backbone plus per-block adapters and memories. One Adam state
/// (carried inside the net, extended with the calibrators) drives all
/// trainable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinualLearner {
    pub net: NetState,
    pub cfg: ContinualConfig,
    adapters: Vec<BlockAdapter>,
    memories: Vec<AssocMemory>,
}

impl ContinualLearner {
    /// Wrap a (possibly warm-trained) backbone. The base optimizer moments
    /// are kept so the first step matches plain online learning exactly;
    /// fresh zero moments are appended for the calibrators.
    pub fn new(mut net: NetState, cfg: ContinualConfig) -> Result<Self> {
        cfg.validate()?;
        let blocks = net.config.blocks;
        let channels = net.config.channels;
        let mut adapters = Vec::with_capacity(blocks);
        let mut memories = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let raw_dim = net.conv_weight(b).len() + channels;
            let seed = net
                .config
                .seed
                .wrapping_add((b as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
                ^ PROJECTION_SALT;
            adapters.push(BlockAdapter::new(channels, cfg.compress_dim, raw_dim, seed));
            memories.push(AssocMemory::new(cfg.memory_slots));
        }
        let calibrators: Vec<Tensor> = adapters.iter().map(|a| a.calibrator.clone()).collect();
        net.optimizer.extend(&calibrators);
        Ok(Self { net, cfg, adapters, memories })
    }

    pub fn adapters(&self) -> &[BlockAdapter] {
        &self.adapters
    }

    pub fn memories(&self) -> &[AssocMemory] {
        &self.memories
    }

    pub fn adapter_value(&self, block: usize) -> AdapterValue {
        self.adapters[block].value()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Vec<f64>> {
        adapted_forward(self, x)
    }

    pub fn step(&mut self, x: &Tensor, y: &[f64], lr: f64) -> Result<StepTrace> {
        continual_step(self, x, y, lr)
    }

    /// Graph with adapter hooks; returns (net param leaves, calibrator
    /// leaves, prediction node).
    fn build_adapted(
        &self,
        g: &mut Graph,
        x: &Tensor,
    ) -> Result<(Vec<crate::numerics::NodeId>, Vec<crate::numerics::NodeId>, crate::numerics::NodeId)>
    {
        let channels = self.net.config.channels;
        let mut hooks = Vec::with_capacity(self.adapters.len());
        let mut calibrator_leaves = Vec::with_capacity(self.adapters.len());
        for adapter in &self.adapters {
            let cal = g.leaf(adapter.calibrator.clone());
            calibrator_leaves.push(cal);
            let emas = g.leaf(Tensor::row(adapter.ema_features()));
            let cal_out = g.matmul(emas, cal)?;
            let scale_delta = g.slice_cols(cal_out, 0, channels)?;
            let shift_delta = g.slice_cols(cal_out, channels, 2 * channels)?;
            let scale_base = g.leaf(Tensor::row(
                adapter.mem_scale.iter().map(|m| 1.0 + m).collect(),
            ));
            let shift_base = g.leaf(Tensor::row(adapter.mem_shift.clone()));
            let scale = g.add(scale_base, scale_delta)?;
            let shift = g.add(shift_base, shift_delta)?;
            hooks.push(BlockHooks { scale, shift });
        }
        let x_id = g.leaf(x.clone());
        let (net_params, yhat) = build_forward(g, &self.net, x_id, Some(&hooks))?;
        Ok((net_params, calibrator_leaves, yhat))
    }
}

/// Forward pass with the current adaptations applied: block `b` convolves
/// with `W_b` scaled per out-channel, then shifts its output channels.
pub fn adapted_forward(learner: &ContinualLearner, x: &Tensor) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let (_, _, yhat) = learner.build_adapted(&mut g, x)?;
    Ok(g.value(yhat).data().to_vec())
}

/// One prequential continual update: adapted forward, MAE backward through
/// base weights and calibrators (clipped at L2 norm 1, Adam), gradient-EMA
/// bookkeeping, and the interference-triggered memory interaction.
pub fn continual_step(
    learner: &mut ContinualLearner,
    x: &Tensor,
    y: &[f64],
    lr: f64,
) -> Result<StepTrace> {
    let blocks = learner.net.config.blocks;
    let channels = learner.net.config.channels;
    let cfg = learner.cfg.clone();

    let mut g = Graph::new();
    let (net_params, calibrator_leaves, yhat) = learner.build_adapted(&mut g, x)?;
    let target = g.leaf(Tensor::row(y.to_vec()));
    let diff = g.sub(yhat, target)?;
    let absdiff = g.abs(diff);
    let loss = g.mean(absdiff);

    let mut wanted = net_params.clone();
    wanted.extend_from_slice(&calibrator_leaves);
    let mut grads = grad(&g, loss, &wanted)?;

    // Raw (pre-clip) per-block conv gradients feed the EMAs.
    let mut compressed: Vec<Vec<f64>> = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let mut raw: Vec<f64> = grads[2 * b].data().to_vec();
        raw.extend_from_slice(grads[2 * b + 1].data());
        compressed.push(learner.adapters[b].compress(&raw));
    }

    clip_l2(&mut grads, 1.0);
    learner.net.optimizer.lr = lr;
    let mut params = learner.net.params();
    for adapter in &learner.adapters {
        params.push(adapter.calibrator.clone());
    }
    learner.net.optimizer.step(&mut params, &grads)?;
    let calibrators = params.split_off(2 * blocks + 2);
    learner.net.set_params(params);
    for (adapter, cal) in learner.adapters.iter_mut().zip(calibrators) {
        adapter.calibrator = cal;
    }

    let mut trace = StepTrace {
        interference: Vec::with_capacity(blocks),
        triggered: Vec::with_capacity(blocks),
        compressed_norms: Vec::with_capacity(blocks),
    };

    for b in 0..blocks {
        let adapter = &mut learner.adapters[b];
        let ghat = &compressed[b];
        let norm = fmath::sqrt(ghat.iter().map(|v| v * v).sum());
        trace.compressed_norms.push(norm);
        adapter.grad_scale = if adapter.grad_scale == 0.0 {
            norm
        } else {
            0.99 * adapter.grad_scale + 0.01 * norm
        };
        for i in 0..cfg.compress_dim {
            adapter.g_fast[i] = cfg.gamma * adapter.g_fast[i] + (1.0 - cfg.gamma) * ghat[i];
            adapter.g_slow[i] =
                cfg.gamma_prime * adapter.g_slow[i] + (1.0 - cfg.gamma_prime) * ghat[i];
        }
        let interference = cosine(&adapter.g_fast, &adapter.g_slow);
        trace.interference.push(interference);

        let fire = interference < -cfg.tau;
        trace.triggered.push(fire);
        if !fire {
            continue;
        }

        let memory = &mut learner.memories[b];
        let current = adapter.value();
        let (read, top) = match attended_read(memory, &adapter.g_slow, channels) {
            Some((value, top)) => (value, Some(top)),
            None => (AdapterValue::identity(channels), None),
        };
        let blended = current.blended(&read, cfg.blend);
        for c in 0..channels {
            adapter.mem_scale[c] += blended.scale[c] - current.scale[c];
            adapter.mem_shift[c] += blended.shift[c] - current.shift[c];
        }

        if !memory.is_full() {
            memory.slots.push(MemorySlot {
                key: normalize_key(&adapter.g_slow),
                value: blended,
                hits: 1,
            });
        } else {
            let top = top.expect("full memory is non-empty");
            let slot = &mut memory.slots[top];
            slot.value = slot.value.blended(&blended, cfg.blend);
            let mean: Vec<f64> = slot
                .key
                .iter()
                .zip(&adapter.g_slow)
                .map(|(k, s)| (k + s) / 2.0)
                .collect();
            slot.key = normalize_key(&mean);
            slot.hits += 1;
        }
    }

    Ok(trace)
}
