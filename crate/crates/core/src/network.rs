//! Fixed-vocabulary feed-forward network with activation caching.
//!
//! A [`Network`] is a validated stack of layers. [`Network::forward`] keeps
//! every intermediate activation in a [`ForwardTrace`] so that the backward
//! passes can differentiate either to the parameters (training) or to any
//! cached activation (class activation maps). The backward passes take an
//! explicit seed vector, the gradient of whatever scalar objective is being
//! differentiated with respect to the logits.
//!
//! Layouts are row-major: feature maps are `[C,H,W]`, conv kernels
//! `[out,in,k,k]`, linear weights `[out,in]`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{softmax_f64, Tensor};

/// Architecture of one layer, without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// Stride 1, zero "same" padding, square odd kernel.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    Relu,
    MaxPool2x2,
    GlobalAvgPool,
    Linear {
        in_features: usize,
        out_features: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    Relu,
    MaxPool2x2,
    GlobalAvgPool,
    Linear(Linear),
}

impl Conv2d {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let (out_channels, in_channels, kernel) = match weight.shape()[..] {
            [o, i, kh, kw] if kh == kw => (o, i, kh),
            _ => {
                return Err(Error::shape(format!(
                    "conv weight must be [out,in,k,k], got {:?}",
                    weight.shape()
                )))
            }
        };
        if kernel % 2 == 0 {
            return Err(Error::invalid(format!(
                "conv kernel must be odd, got {kernel}"
            )));
        }
        if bias.shape() != [out_channels] {
            return Err(Error::shape(format!(
                "conv bias must be [{out_channels}], got {:?}",
                bias.shape()
            )));
        }
        Ok(Conv2d {
            in_channels,
            out_channels,
            kernel,
            weight,
            bias,
        })
    }
}

impl Linear {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let (out_features, in_features) = match weight.shape()[..] {
            [o, i] => (o, i),
            _ => {
                return Err(Error::shape(format!(
                    "linear weight must be [out,in], got {:?}",
                    weight.shape()
                )))
            }
        };
        if bias.shape() != [out_features] {
            return Err(Error::shape(format!(
                "linear bias must be [{out_features}], got {:?}",
                bias.shape()
            )));
        }
        Ok(Linear {
            in_features,
            out_features,
            weight,
            bias,
        })
    }
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d(c) => LayerSpec::Conv2d {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel: c.kernel,
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::MaxPool2x2 => LayerSpec::MaxPool2x2,
            Layer::GlobalAvgPool => LayerSpec::GlobalAvgPool,
            Layer::Linear(l) => LayerSpec::Linear {
                in_features: l.in_features,
                out_features: l.out_features,
            },
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |what: &str| Error::shape(format!("{what} cannot take input of shape {input:?}"));
        match (self, input) {
            (Layer::Conv2d(c), &[ch, h, w]) if ch == c.in_channels => {
                Ok(vec![c.out_channels, h, w])
            }
            (Layer::Conv2d(_), _) => Err(bad("conv2d")),
            (Layer::Relu, s) => Ok(s.to_vec()),
            (Layer::MaxPool2x2, &[c, h, w]) if h >= 2 && w >= 2 => Ok(vec![c, h / 2, w / 2]),
            (Layer::MaxPool2x2, _) => Err(bad("maxpool2x2")),
            (Layer::GlobalAvgPool, &[c, h, w]) if h * w > 0 => Ok(vec![c]),
            (Layer::GlobalAvgPool, _) => Err(bad("global_average_pool")),
            (Layer::Linear(l), &[n]) if n == l.in_features => Ok(vec![l.out_features]),
            (Layer::Linear(_), _) => Err(bad("linear")),
        }
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        match self {
            Layer::Conv2d(c) => conv_forward(c, x),
            Layer::Relu => x.map(|v| if v > 0.0 { v } else { 0.0 }),
            Layer::MaxPool2x2 => maxpool_forward(x),
            Layer::GlobalAvgPool => gap_forward(x),
            Layer::Linear(l) => linear_forward(l, x),
        }
    }
}

/// Provenance recorded alongside trained weights.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NetworkMeta {
    /// Seed of the weight initialization.
    pub init_seed: u64,
    /// Seed of the training shuffle.
    pub train_seed: u64,
    pub learning_rate: f32,
    pub epochs: u32,
    pub history_digest: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
    /// Output shape of every layer, in order.
    shapes: Vec<Vec<usize>>,
    pub meta: NetworkMeta,
}

/// Cached activations of one forward pass. `activations[l]` is the output of
/// layer `l`; the last entry is the logit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Tensor,
    pub activations: Vec<Tensor>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Tensor {
        self.activations
            .last()
            .expect("validated networks have at least one layer")
    }

    pub fn activation(&self, layer: usize) -> Result<&Tensor> {
        self.activations.get(layer).ok_or_else(|| {
            Error::invalid(format!(
                "layer {layer} out of range ({} cached activations)",
                self.activations.len()
            ))
        })
    }
}

/// Per-parameter gradients, in the same order as [`Network::params`].
pub type Gradients = Vec<Tensor>;

impl Network {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        if !matches!(input_shape.len(), 1 | 3) {
            return Err(Error::shape(format!(
                "input must be [N] or [C,H,W], got {input_shape:?}"
            )));
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut current = input_shape.clone();
        for layer in &layers {
            current = layer.output_shape(&current)?;
            shapes.push(current.clone());
        }
        match current[..] {
            [n] if n >= 2 => {}
            _ => {
                return Err(Error::shape(format!(
                    "network must end in a logit vector with at least 2 classes, got {current:?}"
                )))
            }
        }
        Ok(Network {
            layers,
            input_shape,
            shapes,
            meta: NetworkMeta::default(),
        })
    }

    /// Builds a network from architecture specs with seeded Glorot-uniform
    /// weights and zero biases.
    pub fn init(input_shape: Vec<usize>, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let layer = match *spec {
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                } => {
                    let kk = kernel * kernel;
                    let w = glorot(
                        &[out_channels, in_channels, kernel, kernel],
                        in_channels * kk,
                        out_channels * kk,
                        &mut rng,
                    );
                    Layer::Conv2d(Conv2d::new(w, Tensor::zeros(&[out_channels]))?)
                }
                LayerSpec::Linear {
                    in_features,
                    out_features,
                } => {
                    let w = glorot(
                        &[out_features, in_features],
                        in_features,
                        out_features,
                        &mut rng,
                    );
                    Layer::Linear(Linear::new(w, Tensor::zeros(&[out_features]))?)
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::MaxPool2x2 => Layer::MaxPool2x2,
                LayerSpec::GlobalAvgPool => Layer::GlobalAvgPool,
            };
            layers.push(layer);
        }
        let mut net = Network::new(input_shape, layers)?;
        net.meta.init_seed = seed;
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().map(|s| s[0]).unwrap_or(0)
    }

    /// Output shape of layer `l`.
    pub fn activation_shape(&self, layer: usize) -> Option<&[usize]> {
        self.shapes.get(layer).map(Vec::as_slice)
    }

    /// Index of the last layer whose output is a `[C,H,W]` feature map.
    pub fn last_spatial_layer(&self) -> Option<usize> {
        self.shapes.iter().rposition(|s| s.len() == 3)
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn forward(&self, x: &Tensor) -> Result<ForwardTrace> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::shape(format!(
                "input shape {:?} does not match network input {:?}",
                x.shape(),
                self.input_shape
            )));
        }
        x.ensure_finite("forward input")?;
        let mut activations: Vec<Tensor> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let next = layer.forward(activations.last().unwrap_or(x));
            activations.push(next);
        }
        let trace = ForwardTrace {
            input: x.clone(),
            activations,
        };
        trace.logits().ensure_finite("forward logits")?;
        Ok(trace)
    }

    /// Logits only.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let trace = self.forward(x)?;
        Ok(trace.activations.into_iter().last().expect("non-empty"))
    }

    /// Runs layers `layer+1..` on a replacement for activation `layer` and
    /// returns the logits.
    pub fn forward_from(&self, layer: usize, activation: &Tensor) -> Result<Tensor> {
        let shape = self.activation_shape(layer).ok_or_else(|| {
            Error::invalid(format!(
                "layer {layer} out of range for {} layers",
                self.layers.len()
            ))
        })?;
        if activation.shape() != shape {
            return Err(Error::shape(format!(
                "activation shape {:?} does not match layer {layer} output {shape:?}",
                activation.shape()
            )));
        }
        activation.ensure_finite("forward_from")?;
        let mut current = activation.clone();
        for l in &self.layers[layer + 1..] {
            current = l.forward(&current);
        }
        Ok(current)
    }

    fn check_trace(&self, trace: &ForwardTrace) -> Result<()> {
        let ok = trace.input.shape() == self.input_shape.as_slice()
            && trace.activations.len() == self.layers.len()
            && trace
                .activations
                .iter()
                .zip(&self.shapes)
                .all(|(a, s)| a.shape() == s.as_slice());
        if ok {
            Ok(())
        } else {
            Err(Error::shape(
                "forward trace was not produced by this network",
            ))
        }
    }

    fn check_seed(&self, seed: &Tensor) -> Result<()> {
        if seed.shape() != [self.num_classes()] {
            return Err(Error::shape(format!(
                "seed must be [{}], got {:?}",
                self.num_classes(),
                seed.shape()
            )));
        }
        seed.ensure_finite("backward seed")
    }

    /// Gradient of cross-entropy toward `target` with respect to every
    /// parameter tensor.
    pub fn backward_params(&self, trace: &ForwardTrace, target: usize) -> Result<Gradients> {
        self.check_trace(trace)?;
        let seed = loss_gradient(trace.logits(), target)?;
        self.backward_params_seeded(trace, &seed)
    }

    /// Parameter gradients of the scalar objective whose logit gradient is `seed`.
    pub fn backward_params_seeded(&self, trace: &ForwardTrace, seed: &Tensor) -> Result<Gradients> {
        self.check_trace(trace)?;
        self.check_seed(seed)?;
        let mut grads: Gradients = self
            .params()
            .iter()
            .map(|p| Tensor::zeros(p.shape()))
            .collect();
        self.backprop(trace, seed.clone(), 0, Some(&mut grads));
        for g in &grads {
            g.ensure_finite("parameter gradient")?;
        }
        Ok(grads)
    }

    /// Gradient of the objective with logit gradient `seed` with respect to
    /// the cached activation `layer`.
    pub fn backward_to_activation(
        &self,
        trace: &ForwardTrace,
        seed: &Tensor,
        layer: usize,
    ) -> Result<Tensor> {
        self.check_trace(trace)?;
        self.check_seed(seed)?;
        if layer >= self.layers.len() {
            return Err(Error::invalid(format!(
                "layer {layer} out of range for {} layers",
                self.layers.len()
            )));
        }
        let grad = self
            .backprop(trace, seed.clone(), layer + 1, None)
            .expect("gradient requested above the input");
        grad.ensure_finite("activation gradient")?;
        Ok(grad)
    }

    /// Propagates `grad` (w.r.t. the logits) down through layers
    /// `lowest..L`. Returns the gradient w.r.t. the input of layer `lowest`,
    /// or `None` when `lowest == 0` (the input gradient is never needed).
    fn backprop(
        &self,
        trace: &ForwardTrace,
        mut grad: Tensor,
        lowest: usize,
        mut param_grads: Option<&mut Gradients>,
    ) -> Option<Tensor> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut offset = 0;
        for layer in &self.layers {
            offsets.push(offset);
            offset += layer.params().len();
        }

        for idx in (lowest..self.layers.len()).rev() {
            let input = if idx == 0 {
                &trace.input
            } else {
                &trace.activations[idx - 1]
            };
            let need_input = idx > 0;
            let layer = &self.layers[idx];
            let next = match layer {
                Layer::Conv2d(c) => {
                    if let Some(pg) = param_grads.as_deref_mut() {
                        let (gw, gb) = conv_param_grads(c, input, &grad);
                        pg[offsets[idx]] = gw;
                        pg[offsets[idx] + 1] = gb;
                    }
                    need_input.then(|| conv_input_grad(c, input, &grad))
                }
                Layer::Linear(l) => {
                    if let Some(pg) = param_grads.as_deref_mut() {
                        let (gw, gb) = linear_param_grads(l, input, &grad);
                        pg[offsets[idx]] = gw;
                        pg[offsets[idx] + 1] = gb;
                    }
                    need_input.then(|| linear_input_grad(l, &grad))
                }
                Layer::Relu => need_input.then(|| {
                    input
                        .zip_with(&grad, |x, g| if x > 0.0 { g } else { 0.0 })
                        .expect("relu preserves shape")
                }),
                Layer::MaxPool2x2 => need_input.then(|| maxpool_backward(input, &grad)),
                Layer::GlobalAvgPool => need_input.then(|| gap_backward(input, &grad)),
            };
            grad = next?;
        }
        Some(grad)
    }
}

fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    Tensor::from_fn(shape, |_| rng.gen_range(-limit..=limit))
}

/// Index of the largest logit; ties go to the lowest index.
pub fn predict(logits: &Tensor) -> Result<usize> {
    if logits.is_empty() {
        return Err(Error::invalid("predict on empty logits"));
    }
    logits.ensure_finite("predict")?;
    Ok(logits.argmax().expect("non-empty"))
}

/// Softmax cross-entropy, `-log softmax(logits)[target]`, evaluated at 64 bits.
pub fn cross_entropy_loss(logits: &Tensor, target: usize) -> Result<f32> {
    check_target(logits, target)?;
    logits.ensure_finite("cross_entropy_loss")?;
    let data = logits.data();
    let max = data.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let lse = max
        + data
            .iter()
            .map(|&v| (v as f64 - max).exp())
            .sum::<f64>()
            .ln();
    Ok((lse - data[target] as f64).max(0.0) as f32)
}

/// `softmax(logits) - onehot(target)`: gradient of the cross-entropy loss
/// with respect to the logits.
pub fn loss_gradient(logits: &Tensor, target: usize) -> Result<Tensor> {
    check_target(logits, target)?;
    logits.ensure_finite("loss_gradient")?;
    let probs = softmax_f64(logits.data());
    Ok(Tensor::vector(
        probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (if i == target { p - 1.0 } else { p }) as f32)
            .collect(),
    ))
}

fn check_target(logits: &Tensor, target: usize) -> Result<()> {
    if logits.rank() != 1 || target >= logits.len() {
        return Err(Error::invalid(format!(
            "target class {target} out of range for logits {:?}",
            logits.shape()
        )));
    }
    Ok(())
}

/// Valid output range `[lo, hi)` along one axis of extent `n` for kernel
/// offset `d`, i.e. positions whose source `pos + d - pad` lies in `[0, n)`.
fn tap_range(n: usize, d: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(d);
    let hi = n.min((n + pad).saturating_sub(d));
    (lo, hi.max(lo))
}

fn conv_forward(c: &Conv2d, x: &Tensor) -> Tensor {
    let (cin, h, w) = x.chw().expect("validated");
    let k = c.kernel;
    let pad = k / 2;
    let plane = h * w;
    let xd = x.data();
    let wd = c.weight.data();
    let mut out = Vec::with_capacity(c.out_channels * plane);
    let mut acc = vec![0.0f64; plane];
    for o in 0..c.out_channels {
        acc.fill(c.bias.data()[o] as f64);
        for i in 0..cin {
            let src = &xd[i * plane..(i + 1) * plane];
            for dy in 0..k {
                let (y_lo, y_hi) = tap_range(h, dy, pad);
                for dx in 0..k {
                    let (x_lo, x_hi) = tap_range(w, dx, pad);
                    let wv = wd[((o * cin + i) * k + dy) * k + dx] as f64;
                    for y in y_lo..y_hi {
                        let sy = y + dy - pad;
                        let dst = &mut acc[y * w + x_lo..y * w + x_hi];
                        let s = &src[sy * w + x_lo + dx - pad..sy * w + x_hi + dx - pad];
                        for (a, &v) in dst.iter_mut().zip(s) {
                            *a += wv * v as f64;
                        }
                    }
                }
            }
        }
        out.extend(acc.iter().map(|&v| v as f32));
    }
    Tensor::new(vec![c.out_channels, h, w], out).expect("sized")
}

/// Dot product at 64 bits with four interleaved partial sums.
fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            lanes[l] += x[l] as f64 * y[l] as f64;
        }
    }
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum();
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

fn conv_param_grads(c: &Conv2d, x: &Tensor, g: &Tensor) -> (Tensor, Tensor) {
    let (cin, h, w) = x.chw().expect("validated");
    let k = c.kernel;
    let pad = k / 2;
    let plane = h * w;
    let xd = x.data();
    let gd = g.data();
    let mut gw = vec![0.0f32; c.out_channels * cin * k * k];
    let mut gb = vec![0.0f32; c.out_channels];
    for o in 0..c.out_channels {
        let gplane = &gd[o * plane..(o + 1) * plane];
        gb[o] = gplane.iter().map(|&v| v as f64).sum::<f64>() as f32;
        for i in 0..cin {
            let xplane = &xd[i * plane..(i + 1) * plane];
            for dy in 0..k {
                let (y_lo, y_hi) = tap_range(h, dy, pad);
                for dx in 0..k {
                    let (x_lo, x_hi) = tap_range(w, dx, pad);
                    let mut acc = 0.0f64;
                    for y in y_lo..y_hi {
                        let sy = y + dy - pad;
                        acc += dot_f64(
                            &gplane[y * w + x_lo..y * w + x_hi],
                            &xplane[sy * w + x_lo + dx - pad..sy * w + x_hi + dx - pad],
                        );
                    }
                    gw[((o * cin + i) * k + dy) * k + dx] = acc as f32;
                }
            }
        }
    }
    (
        Tensor::new(c.weight.shape().to_vec(), gw).expect("sized"),
        Tensor::vector(gb),
    )
}

fn conv_input_grad(c: &Conv2d, x: &Tensor, g: &Tensor) -> Tensor {
    let (cin, h, w) = x.chw().expect("validated");
    let k = c.kernel;
    let pad = k / 2;
    let plane = h * w;
    let gd = g.data();
    let wd = c.weight.data();
    let mut acc = vec![0.0f64; cin * plane];
    for i in 0..cin {
        let dst_plane = &mut acc[i * plane..(i + 1) * plane];
        for o in 0..c.out_channels {
            let gplane = &gd[o * plane..(o + 1) * plane];
            for dy in 0..k {
                let (y_lo, y_hi) = tap_range(h, dy, pad);
                for dx in 0..k {
                    let (x_lo, x_hi) = tap_range(w, dx, pad);
                    let wv = wd[((o * cin + i) * k + dy) * k + dx] as f64;
                    for y in y_lo..y_hi {
                        let sy = y + dy - pad;
                        let dst =
                            &mut dst_plane[sy * w + x_lo + dx - pad..sy * w + x_hi + dx - pad];
                        for (a, &v) in dst.iter_mut().zip(&gplane[y * w + x_lo..y * w + x_hi]) {
                            *a += wv * v as f64;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![cin, h, w], acc.into_iter().map(|v| v as f32).collect()).expect("sized")
}

fn maxpool_forward(x: &Tensor) -> Tensor {
    let (c, h, w) = x.chw().expect("validated");
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let (_, v) = pool_window_max(xd, ch, h, w, y, xx);
                out.push(v);
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out).expect("sized")
}

/// First maximal element of a 2x2 window in raster order: (flat index, value).
fn pool_window_max(xd: &[f32], ch: usize, h: usize, w: usize, y: usize, x: usize) -> (usize, f32) {
    let base = ch * h * w;
    let mut best = (base + 2 * y * w + 2 * x, f32::NEG_INFINITY);
    for dy in 0..2 {
        for dx in 0..2 {
            let idx = base + (2 * y + dy) * w + 2 * x + dx;
            if xd[idx] > best.1 {
                best = (idx, xd[idx]);
            }
        }
    }
    best
}

fn maxpool_backward(x: &Tensor, g: &Tensor) -> Tensor {
    let (c, h, w) = x.chw().expect("validated");
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let gd = g.data();
    let mut out = vec![0.0f32; c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let (idx, _) = pool_window_max(xd, ch, h, w, y, xx);
                out[idx] += gd[(ch * oh + y) * ow + xx];
            }
        }
    }
    Tensor::new(vec![c, h, w], out).expect("sized")
}

fn gap_forward(x: &Tensor) -> Tensor {
    crate::tensor::global_average_pool(x).expect("validated")
}

fn gap_backward(x: &Tensor, g: &Tensor) -> Tensor {
    let (c, h, w) = x.chw().expect("validated");
    let plane = (h * w) as f64;
    let gd = g.data();
    Tensor::from_fn(&[c, h, w], |idx| (gd[idx / (h * w)] as f64 / plane) as f32)
}

fn linear_forward(l: &Linear, x: &Tensor) -> Tensor {
    let xd = x.data();
    let wd = l.weight.data();
    let out = (0..l.out_features)
        .map(|o| {
            let row = &wd[o * l.in_features..(o + 1) * l.in_features];
            let dot: f64 = row.iter().zip(xd).map(|(&a, &b)| a as f64 * b as f64).sum();
            (dot + l.bias.data()[o] as f64) as f32
        })
        .collect();
    Tensor::vector(out)
}

fn linear_param_grads(l: &Linear, x: &Tensor, g: &Tensor) -> (Tensor, Tensor) {
    let xd = x.data();
    let gd = g.data();
    let gw = Tensor::from_fn(&[l.out_features, l.in_features], |idx| {
        (gd[idx / l.in_features] as f64 * xd[idx % l.in_features] as f64) as f32
    });
    (gw, g.clone())
}

fn linear_input_grad(l: &Linear, g: &Tensor) -> Tensor {
    let gd = g.data();
    let wd = l.weight.data();
    Tensor::from_fn(&[l.in_features], |i| {
        (0..l.out_features)
            .map(|o| gd[o] as f64 * wd[o * l.in_features + i] as f64)
            .sum::<f64>() as f32
    })
}
