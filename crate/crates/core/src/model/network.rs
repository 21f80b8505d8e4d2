use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ops;
use super::spec::{check_resolution, Head, NetworkSpec, DECODER_BLOCKS, ENCODER_BLOCKS};
use super::tensor::Tensor;
use crate::error::{Error, Result};

const BN_EPS: f32 = 1e-5;
const BN_MOMENTUM: f32 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Batch statistics in batch norm; running statistics are updated.
    Train,
    /// Running statistics in batch norm.
    Eval,
}

/// A named trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
}

impl Param {
    fn new(name: String, shape: Vec<usize>, value: Vec<f32>) -> Self {
        let grad = vec![0.0; value.len()];
        Param {
            name,
            shape,
            value,
            grad,
        }
    }

    fn filled(name: String, len: usize, v: f32) -> Self {
        Param::new(name, vec![len], vec![v; len])
    }
}

#[derive(Debug, Clone, PartialEq)]
struct BatchNorm {
    gamma: Param,
    beta: Param,
    running_mean: Vec<f32>,
    running_var: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ConvKind {
    Same3x3,
    Up4x4,
}

/// Convolution, optional batch norm, optional leaky ReLU.
#[derive(Debug, Clone, PartialEq)]
struct ConvUnit {
    name: String,
    kind: ConvKind,
    cin: usize,
    cout: usize,
    weight: Param,
    bias: Param,
    bn: Option<BatchNorm>,
    activate: bool,
}

impl ConvUnit {
    fn new(
        name: String,
        kind: ConvKind,
        cin: usize,
        cout: usize,
        normalized: bool,
        gain: f32,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let (shape, fan_in) = match kind {
            ConvKind::Same3x3 => (vec![cout, cin, 3, 3], cin * 9),
            // each output pixel of a stride-2 4x4 transposed conv sees 2x2 taps per input channel
            ConvKind::Up4x4 => (vec![cin, cout, 4, 4], cin * 4),
        };
        let std = gain / (fan_in as f32).sqrt();
        let normal = Normal::new(0.0f32, std).expect("finite std");
        let len = shape.iter().product();
        let weight = (0..len).map(|_| normal.sample(rng)).collect();
        let bn = normalized.then(|| BatchNorm {
            gamma: Param::filled(format!("{name}.bn.gamma"), cout, 1.0),
            beta: Param::filled(format!("{name}.bn.beta"), cout, 0.0),
            running_mean: vec![0.0; cout],
            running_var: vec![1.0; cout],
        });
        ConvUnit {
            weight: Param::new(format!("{name}.weight"), shape, weight),
            bias: Param::filled(format!("{name}.bias"), cout, 0.0),
            name,
            kind,
            cin,
            cout,
            bn,
            activate: normalized,
        }
    }

    fn params(&self) -> impl Iterator<Item = &Param> {
        let bn = self.bn.iter().flat_map(|b| [&b.gamma, &b.beta]);
        [&self.weight, &self.bias].into_iter().chain(bn)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        let bn = self.bn.iter_mut().flat_map(|b| [&mut b.gamma, &mut b.beta]);
        [&mut self.weight, &mut self.bias].into_iter().chain(bn)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    name: String,
    units: Vec<ConvUnit>,
}

impl Block {
    fn cin(&self) -> usize {
        self.units[0].cin
    }
    fn cout(&self) -> usize {
        self.units.last().map_or(0, |u| u.cout)
    }
}

#[derive(Debug)]
struct UnitCache {
    input: Tensor,
    /// Normalized pre-affine values and per-channel 1/std.
    bn: Option<(Tensor, Vec<f32>)>,
    /// Post-activation output, kept for the leaky ReLU derivative.
    output: Option<Tensor>,
}

#[derive(Debug, Default)]
struct ForwardCache {
    blocks: Vec<Vec<UnitCache>>,
    pool_argmax: Vec<Vec<u32>>,
    pool_input_shape: Vec<[usize; 4]>,
    upsampled_channels: Vec<usize>,
}

/// Per-unit batch statistics gathered in train mode (mean, biased var, count).
type BatchStats = Vec<(Vec<f32>, Vec<f32>, usize)>;

/// Recorded activation shape after a named stage of the forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationShape {
    pub stage: String,
    pub shape: [usize; 4],
}

/// Per-block channel bookkeeping of a built network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockChannels {
    pub name: String,
    pub input: usize,
    /// Width of the 3x3 convs inside the block.
    pub inner: usize,
    /// Channels leaving the block (after the transposed conv, or the head).
    pub output: usize,
}

/// Hourglass encoder-decoder with side channels.
#[derive(Debug)]
pub struct Network {
    spec: NetworkSpec,
    mode: Mode,
    /// Conv1..Conv5, Bottleneck, Dec5..Dec1.
    blocks: Vec<Block>,
    cache: Option<ForwardCache>,
}

impl Clone for Network {
    /// Cached activations are not cloned.
    fn clone(&self) -> Self {
        Network {
            spec: self.spec.clone(),
            mode: self.mode,
            blocks: self.blocks.clone(),
            cache: None,
        }
    }
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.mode == other.mode && self.blocks == other.blocks
    }
}

const BOTTLENECK: usize = ENCODER_BLOCKS;

fn leaky_gain(slope: f32) -> f32 {
    (2.0 / (1.0 + slope * slope)).sqrt()
}

impl Network {
    /// Build and initialize (He fan-in normal) from `spec`, deterministically in `seed`.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = leaky_gain(spec.leaky_relu_slope);
        let mut blocks = Vec::with_capacity(ENCODER_BLOCKS + 1 + DECODER_BLOCKS);
        let enc_in = spec.encoder_input_channels();
        for (e, &cin) in enc_in.iter().enumerate() {
            let name = NetworkSpec::encoder_name(e);
            let width = spec.conv_block_channels[e];
            let units = (0..3)
                .map(|i| {
                    let cin = if i == 0 { cin } else { width };
                    ConvUnit::new(format!("{name}.{i}"), ConvKind::Same3x3, cin, width, true, gain, &mut rng)
                })
                .collect();
            blocks.push(Block { name, units });
        }
        let bw = spec.bottleneck_channels;
        let last_enc = spec.conv_block_channels[ENCODER_BLOCKS - 1];
        blocks.push(Block {
            name: "bottleneck".into(),
            units: vec![
                ConvUnit::new("bottleneck.0".into(), ConvKind::Same3x3, last_enc, bw, true, gain, &mut rng),
                ConvUnit::new("bottleneck.1".into(), ConvKind::Same3x3, bw, bw, true, gain, &mut rng),
                ConvUnit::new(
                    "bottleneck.up".into(),
                    ConvKind::Up4x4,
                    bw,
                    spec.upsample_channels[0],
                    true,
                    gain,
                    &mut rng,
                ),
            ],
        });
        for d in 0..DECODER_BLOCKS {
            let name = NetworkSpec::decoder_name(d);
            let cin = spec.decoder_input_channels[d];
            let width = spec.decoder_conv_channels[d];
            let mut units = vec![ConvUnit::new(
                format!("{name}.0"),
                ConvKind::Same3x3,
                cin,
                width,
                true,
                gain,
                &mut rng,
            )];
            if d + 1 < DECODER_BLOCKS {
                units.push(ConvUnit::new(format!("{name}.1"), ConvKind::Same3x3, width, width, true, gain, &mut rng));
                units.push(ConvUnit::new(
                    format!("{name}.up"),
                    ConvKind::Up4x4,
                    width,
                    spec.upsample_channels[d + 1],
                    true,
                    gain,
                    &mut rng,
                ));
            } else {
                units.push(head_unit(&name, width, spec.head, &mut rng));
            }
            blocks.push(Block { name, units });
        }
        Ok(Network {
            spec,
            mode: Mode::Train,
            blocks,
            cache: None,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }
    pub fn head(&self) -> Head {
        self.spec.head
    }
    pub fn mode(&self) -> Mode {
        self.mode
    }
    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Replace the final Dec1 conv by a freshly initialized 2-channel conv.
    /// Every other parameter and buffer is carried over unchanged.
    pub fn swap_head(mut self, seed: u64) -> Result<Network> {
        if self.spec.head != Head::Interpolation {
            return Err(Error::State("head swap needs an interpolation-head network".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dec1 = self.blocks.last_mut().expect("decoder blocks");
        let width = dec1.units[0].cout;
        let name = dec1.name.clone();
        *dec1.units.last_mut().expect("head unit") = head_unit(&name, width, Head::Flow, &mut rng);
        self.spec.head = Head::Flow;
        self.cache = None;
        Ok(self)
    }

    pub fn params(&self) -> impl Iterator<Item = &Param> {
        self.blocks.iter().flat_map(|b| b.units.iter()).flat_map(|u| u.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.blocks
            .iter_mut()
            .flat_map(|b| b.units.iter_mut())
            .flat_map(|u| u.params_mut())
    }

    pub fn parameter_count(&self) -> usize {
        self.params().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.state().iter().all(|(_, _, v)| v.iter().all(|x| x.is_finite()))
    }

    /// All named tensors (parameters and batch-norm running statistics) in canonical order.
    pub fn state(&self) -> Vec<(String, Vec<usize>, &[f32])> {
        let mut out = Vec::new();
        for u in self.blocks.iter().flat_map(|b| &b.units) {
            out.push((u.weight.name.clone(), u.weight.shape.clone(), &u.weight.value[..]));
            out.push((u.bias.name.clone(), u.bias.shape.clone(), &u.bias.value[..]));
            if let Some(bn) = &u.bn {
                out.push((bn.gamma.name.clone(), bn.gamma.shape.clone(), &bn.gamma.value[..]));
                out.push((bn.beta.name.clone(), bn.beta.shape.clone(), &bn.beta.value[..]));
                out.push((format!("{}.bn.running_mean", u.name), vec![u.cout], &bn.running_mean[..]));
                out.push((format!("{}.bn.running_var", u.name), vec![u.cout], &bn.running_var[..]));
            }
        }
        out
    }

    /// Overwrite every named tensor from `lookup`; fails on any missing or misshapen entry.
    pub fn load_state<'a>(&mut self, mut lookup: impl FnMut(&str) -> Option<&'a [f32]>) -> Result<()> {
        let mut fetch = |name: String, dst: &mut [f32]| -> Result<()> {
            let src = lookup(&name).ok_or_else(|| Error::Data(format!("missing tensor {name}")))?;
            if src.len() != dst.len() {
                return Err(Error::Shape(format!(
                    "tensor {name} has {} values, expected {}",
                    src.len(),
                    dst.len()
                )));
            }
            dst.copy_from_slice(src);
            Ok(())
        };
        for u in self.blocks.iter_mut().flat_map(|b| b.units.iter_mut()) {
            fetch(u.weight.name.clone(), &mut u.weight.value)?;
            fetch(u.bias.name.clone(), &mut u.bias.value)?;
            if let Some(bn) = &mut u.bn {
                fetch(bn.gamma.name.clone(), &mut bn.gamma.value)?;
                fetch(bn.beta.name.clone(), &mut bn.beta.value)?;
                fetch(format!("{}.bn.running_mean", u.name), &mut bn.running_mean)?;
                fetch(format!("{}.bn.running_var", u.name), &mut bn.running_var)?;
            }
        }
        self.cache = None;
        Ok(())
    }

    pub fn channel_trace(&self) -> Vec<BlockChannels> {
        self.blocks
            .iter()
            .map(|b| BlockChannels {
                name: b.name.clone(),
                input: b.cin(),
                inner: b.units[0].cout,
                output: b.cout(),
            })
            .collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.c() != self.spec.n_input_frames {
            return Err(Error::Shape(format!(
                "network expects {} input frames, got {}",
                self.spec.n_input_frames,
                x.c()
            )));
        }
        if x.n() == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        check_resolution(x.w(), x.h()).map_err(|e| Error::Shape(e.to_string()))
    }

    /// Forward pass honoring the current mode; keeps activations for [`Network::backward`].
    /// In train mode batch-norm running statistics are updated.
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut cache = ForwardCache::default();
        let train = self.mode == Mode::Train;
        let (out, stats) = self.run(x, train, Some(&mut cache), None);
        if train {
            self.update_running_stats(&stats);
        }
        self.cache = Some(cache);
        Ok(out)
    }

    /// Eval-mode forward that never mutates the network.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        Ok(self.run(x, false, None, None).0)
    }

    /// Eval-mode forward recording the activation shape after every stage.
    pub fn trace_shapes(&self, x: &Tensor) -> Result<(Tensor, Vec<ActivationShape>)> {
        self.check_input(x)?;
        let mut trace = Vec::new();
        let out = self.run(x, false, None, Some(&mut trace)).0;
        Ok((out, trace))
    }

    fn update_running_stats(&mut self, stats: &BatchStats) {
        let units = self.blocks.iter_mut().flat_map(|b| b.units.iter_mut());
        let mut it = stats.iter();
        for u in units {
            if let Some(bn) = &mut u.bn {
                let (mean, var, count) = it.next().expect("one stats entry per batch-norm unit");
                let unbias = if *count > 1 {
                    *count as f32 / (*count - 1) as f32
                } else {
                    1.0
                };
                for c in 0..u.cout {
                    bn.running_mean[c] = (1.0 - BN_MOMENTUM) * bn.running_mean[c] + BN_MOMENTUM * mean[c];
                    bn.running_var[c] = (1.0 - BN_MOMENTUM) * bn.running_var[c] + BN_MOMENTUM * var[c] * unbias;
                }
            }
        }
    }

    fn run(
        &self,
        x: &Tensor,
        batch_stats: bool,
        mut cache: Option<&mut ForwardCache>,
        mut trace: Option<&mut Vec<ActivationShape>>,
    ) -> (Tensor, BatchStats) {
        let slope = self.spec.leaky_relu_slope;
        let mut stats = BatchStats::new();
        let mut record = |stage: &str, t: &Tensor| {
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(ActivationShape {
                    stage: stage.to_string(),
                    shape: t.shape(),
                });
            }
        };
        let mut skips: Vec<Tensor> = Vec::with_capacity(ENCODER_BLOCKS);
        let mut h = x.clone();
        for e in 0..ENCODER_BLOCKS {
            let block = &self.blocks[e];
            h = run_block(block, h, slope, batch_stats, cache.as_deref_mut(), &mut stats);
            record(&block.name, &h);
            let (pooled, argmax) = max_pool2(&h);
            if let Some(c) = cache.as_deref_mut() {
                c.pool_argmax.push(argmax);
                c.pool_input_shape.push(h.shape());
            }
            skips.push(h);
            h = pooled;
            record(&format!("{}.pool", block.name), &h);
        }
        let bottleneck = &self.blocks[BOTTLENECK];
        h = run_block(bottleneck, h, slope, batch_stats, cache.as_deref_mut(), &mut stats);
        record(&bottleneck.name, &h);
        for d in 0..DECODER_BLOCKS {
            if let Some(c) = cache.as_deref_mut() {
                c.upsampled_channels.push(h.c());
            }
            if let Some(skip) = self.spec.skip_into(d) {
                h = Tensor::concat_channels(&h, &skips[skip.encoder]).expect("matching resolutions");
            }
            let block = &self.blocks[BOTTLENECK + 1 + d];
            h = run_block(block, h, slope, batch_stats, cache.as_deref_mut(), &mut stats);
            record(&block.name, &h);
        }
        (h, stats)
    }

    /// Backpropagate `grad_out` (same shape as the last forward output),
    /// accumulating into every parameter's `grad`.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<()> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called without a cached forward pass".into()))?;
        let out_shape = cache
            .blocks
            .last()
            .and_then(|b| b.last())
            .map(|u| u.input.shape())
            .ok_or_else(|| Error::State("empty forward cache".into()))?;
        let expected = [out_shape[0], self.spec.head.channels(), out_shape[2], out_shape[3]];
        if grad_out.shape() != expected {
            return Err(Error::Shape(format!(
                "gradient shape {:?} does not match output {:?}",
                grad_out.shape(),
                expected
            )));
        }
        let slope = self.spec.leaky_relu_slope;
        let ForwardCache {
            blocks: mut block_caches,
            pool_argmax,
            pool_input_shape,
            upsampled_channels,
        } = cache;
        let mut skip_grads: Vec<Option<Tensor>> = vec![None; ENCODER_BLOCKS];
        let mut g = grad_out.clone();
        for d in (0..DECODER_BLOCKS).rev() {
            let idx = BOTTLENECK + 1 + d;
            let caches = block_caches.pop().expect("decoder cache");
            g = backward_block(&mut self.blocks[idx], caches, g, slope, true);
            if let Some(skip) = self.spec.skip_into(d) {
                let (up, side) = g.split_channels(upsampled_channels[d]);
                skip_grads[skip.encoder] = Some(side);
                g = up;
            }
        }
        let caches = block_caches.pop().expect("bottleneck cache");
        g = backward_block(&mut self.blocks[BOTTLENECK], caches, g, slope, true);
        for e in (0..ENCODER_BLOCKS).rev() {
            let mut gi = max_pool2_backward(&g, &pool_argmax[e], pool_input_shape[e]);
            if let Some(side) = &skip_grads[e] {
                for (a, b) in gi.data_mut().iter_mut().zip(side.data()) {
                    *a += b;
                }
            }
            let caches = block_caches.pop().expect("encoder cache");
            g = backward_block(&mut self.blocks[e], caches, gi, slope, e > 0);
        }
        Ok(())
    }
}

fn head_unit(block: &str, cin: usize, head: Head, rng: &mut ChaCha8Rng) -> ConvUnit {
    ConvUnit::new(format!("{block}.head"), ConvKind::Same3x3, cin, head.channels(), false, 1.0, rng)
}

fn conv_forward(u: &ConvUnit, x: &Tensor) -> Tensor {
    let (h, w) = (x.h(), x.w());
    match u.kind {
        ConvKind::Same3x3 => {
            let mut out = Tensor::zeros(x.n(), u.cout, h, w);
            for i in 0..x.n() {
                ops::conv3x3_forward(x.sample(i), u.cin, h, w, &u.weight.value, &u.bias.value, u.cout, out.sample_mut(i));
            }
            out
        }
        ConvKind::Up4x4 => {
            let mut out = Tensor::zeros(x.n(), u.cout, 2 * h, 2 * w);
            for i in 0..x.n() {
                ops::up4x4_forward(x.sample(i), u.cin, h, w, &u.weight.value, &u.bias.value, u.cout, out.sample_mut(i));
            }
            out
        }
    }
}

fn conv_backward(u: &mut ConvUnit, x: &Tensor, dout: &Tensor, need_dx: bool) -> Option<Tensor> {
    let (h, w) = (x.h(), x.w());
    let mut dx = need_dx.then(|| Tensor::zeros(x.n(), x.c(), h, w));
    for i in 0..x.n() {
        let dxi = dx.as_mut().map(|t| t.sample_mut(i));
        let f = match u.kind {
            ConvKind::Same3x3 => ops::conv3x3_backward,
            ConvKind::Up4x4 => ops::up4x4_backward,
        };
        f(
            x.sample(i),
            u.cin,
            h,
            w,
            &u.weight.value,
            u.cout,
            dout.sample(i),
            &mut u.weight.grad,
            &mut u.bias.grad,
            dxi,
        );
    }
    dx
}

fn channel_stats(x: &Tensor) -> (Vec<f32>, Vec<f32>) {
    let (n, c) = (x.n(), x.c());
    let count = (n * x.plane_len()) as f64;
    let mut mean = vec![0.0f32; c];
    let mut var = vec![0.0f32; c];
    for ch in 0..c {
        let m = (0..n).flat_map(|i| x.plane(i, ch)).map(|&v| v as f64).sum::<f64>() / count;
        let v = (0..n)
            .flat_map(|i| x.plane(i, ch))
            .map(|&v| (v as f64 - m).powi(2))
            .sum::<f64>()
            / count;
        mean[ch] = m as f32;
        var[ch] = v as f32;
    }
    (mean, var)
}

fn run_block(
    block: &Block,
    mut h: Tensor,
    slope: f32,
    batch_stats: bool,
    mut cache: Option<&mut ForwardCache>,
    stats: &mut BatchStats,
) -> Tensor {
    let mut unit_caches = Vec::with_capacity(block.units.len());
    for u in &block.units {
        let mut y = conv_forward(u, &h);
        let mut bn_cache = None;
        if let Some(bn) = &u.bn {
            let (mean, var) = if batch_stats {
                let (m, v) = channel_stats(&y);
                stats.push((m.clone(), v.clone(), y.n() * y.plane_len()));
                (m, v)
            } else {
                (bn.running_mean.clone(), bn.running_var.clone())
            };
            let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            let mut xhat = cache.is_some().then(|| y.clone());
            for i in 0..y.n() {
                for ch in 0..u.cout {
                    let (m, s, g, b) = (mean[ch], inv_std[ch], bn.gamma.value[ch], bn.beta.value[ch]);
                    let plane = y.plane_mut(i, ch);
                    match xhat.as_mut() {
                        Some(xh) => {
                            for (v, xv) in plane.iter_mut().zip(xh.plane_mut(i, ch)) {
                                *xv = (*v - m) * s;
                                *v = g * *xv + b;
                            }
                        }
                        None => plane.iter_mut().for_each(|v| *v = g * ((*v - m) * s) + b),
                    }
                }
            }
            bn_cache = xhat.map(|xh| (xh, inv_std));
        }
        if u.activate {
            y.data_mut().iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v *= slope
                }
            });
        }
        if cache.is_some() {
            unit_caches.push(UnitCache {
                input: h,
                bn: bn_cache,
                output: u.activate.then(|| y.clone()),
            });
        }
        h = y;
    }
    if let Some(c) = cache.as_deref_mut() {
        c.blocks.push(unit_caches);
    }
    h
}

fn backward_block(block: &mut Block, caches: Vec<UnitCache>, mut g: Tensor, slope: f32, need_dx: bool) -> Tensor {
    for (k, (u, c)) in block.units.iter_mut().zip(caches).enumerate().rev() {
        if let Some(out) = &c.output {
            for (gv, &ov) in g.data_mut().iter_mut().zip(out.data()) {
                if ov <= 0.0 {
                    *gv *= slope;
                }
            }
        }
        if let (Some(bn), Some((xhat, inv_std))) = (u.bn.as_mut(), c.bn.as_ref()) {
            let n = g.n();
            let count = (n * g.plane_len()) as f64;
            for ch in 0..u.cout {
                let gamma = bn.gamma.value[ch];
                let mut sum_g = 0.0f64;
                let mut sum_gx = 0.0f64;
                for i in 0..n {
                    for (&gv, &xv) in g.plane(i, ch).iter().zip(xhat.plane(i, ch)) {
                        sum_g += gv as f64;
                        sum_gx += (gv * xv) as f64;
                    }
                }
                bn.beta.grad[ch] += sum_g as f32;
                bn.gamma.grad[ch] += sum_gx as f32;
                // dx = gamma * inv_std / M * (M*g - sum(g) - xhat * sum(g*xhat))
                let mean_g = (sum_g / count) as f32;
                let mean_gx = (sum_gx / count) as f32;
                let scale = gamma * inv_std[ch];
                for i in 0..n {
                    let xh = xhat.plane(i, ch);
                    for (gv, &xv) in g.plane_mut(i, ch).iter_mut().zip(xh) {
                        *gv = scale * (*gv - mean_g - xv * mean_gx);
                    }
                }
            }
        }
        if let Some(dx) = conv_backward(u, &c.input, &g, need_dx || k > 0) {
            g = dx;
        }
    }
    g
}

fn max_pool2(x: &Tensor) -> (Tensor, Vec<u32>) {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(n, c, oh, ow);
    let mut argmax = vec![0u32; n * c * oh * ow];
    let mut k = 0;
    for i in 0..n {
        for ch in 0..c {
            let src = x.plane(i, ch);
            let dst = out.plane_mut(i, ch);
            for y in 0..oh {
                for xx in 0..ow {
                    let base = 2 * y * w + 2 * xx;
                    let mut best = base;
                    for cand in [base + 1, base + w, base + w + 1] {
                        if src[cand] > src[best] {
                            best = cand;
                        }
                    }
                    dst[y * ow + xx] = src[best];
                    argmax[k] = best as u32;
                    k += 1;
                }
            }
        }
    }
    (out, argmax)
}

fn max_pool2_backward(g: &Tensor, argmax: &[u32], input_shape: [usize; 4]) -> Tensor {
    let [n, c, h, w] = input_shape;
    let mut dx = Tensor::zeros(n, c, h, w);
    let mut k = 0;
    for i in 0..n {
        for ch in 0..c {
            let gp = g.plane(i, ch);
            let dp = dx.plane_mut(i, ch);
            for &gv in gp {
                dp[argmax[k] as usize] += gv;
                k += 1;
            }
        }
    }
    dx
}
