//! Test-only oracles, kept independent of the library's forward/backward code.
#![allow(dead_code)]

pub mod fixtures;
pub mod gradcheck;

use camlab::network::{Layer, LayerSpec, Network};
use camlab::Tensor;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Straight-line 64-bit forward pass. `acts[l]` is the output of layer `l`.
pub struct RefTrace {
    pub input: Vec<f64>,
    pub acts: Vec<Vec<f64>>,
    pub shapes: Vec<Vec<usize>>,
}

/// Parameters of `net` copied into f64 vectors, one per tensor.
pub fn params_f64(net: &Network) -> Vec<Vec<f64>> {
    net.params()
        .iter()
        .map(|t| t.data().iter().map(|&v| v as f64).collect())
        .collect()
}

fn layer_param_offsets(net: &Network) -> Vec<usize> {
    let mut out = Vec::new();
    let mut off = 0;
    for l in net.layers() {
        out.push(off);
        off += l.params().len();
    }
    out
}

fn apply_layer(
    spec: LayerSpec,
    params: &[Vec<f64>],
    x: &[f64],
    shape: &[usize],
) -> (Vec<f64>, Vec<usize>) {
    match spec {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
        } => {
            let (h, w) = (shape[1] as i64, shape[2] as i64);
            let (wt, b) = (&params[0], &params[1]);
            let p = (kernel / 2) as i64;
            let k = kernel as i64;
            let mut out = vec![0.0; out_channels * (h * w) as usize];
            for o in 0..out_channels {
                for y in 0..h {
                    for xx in 0..w {
                        let mut s = b[o];
                        for i in 0..in_channels {
                            for dy in 0..k {
                                for dx in 0..k {
                                    let (sy, sx) = (y + dy - p, xx + dx - p);
                                    if sy < 0 || sx < 0 || sy >= h || sx >= w {
                                        continue;
                                    }
                                    let wi = ((o * in_channels + i) as i64 * k + dy) * k + dx;
                                    let xi = (i as i64 * h + sy) * w + sx;
                                    s += wt[wi as usize] * x[xi as usize];
                                }
                            }
                        }
                        out[((o as i64 * h + y) * w + xx) as usize] = s;
                    }
                }
            }
            (out, vec![out_channels, shape[1], shape[2]])
        }
        LayerSpec::Relu => (x.iter().map(|&v| v.max(0.0)).collect(), shape.to_vec()),
        LayerSpec::MaxPool2x2 => {
            let (c, h, w) = (shape[0], shape[1], shape[2]);
            let (oh, ow) = (h / 2, w / 2);
            let mut out = Vec::new();
            for ch in 0..c {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut m = f64::NEG_INFINITY;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                m = m.max(x[(ch * h + 2 * y + dy) * w + 2 * xx + dx]);
                            }
                        }
                        out.push(m);
                    }
                }
            }
            (out, vec![c, oh, ow])
        }
        LayerSpec::GlobalAvgPool => {
            let (c, hw) = (shape[0], shape[1] * shape[2]);
            let out = (0..c)
                .map(|ch| x[ch * hw..(ch + 1) * hw].iter().sum::<f64>() / hw as f64)
                .collect();
            (out, vec![c])
        }
        LayerSpec::Linear {
            in_features,
            out_features,
        } => {
            let (wt, b) = (&params[0], &params[1]);
            let out = (0..out_features)
                .map(|o| {
                    b[o] + (0..in_features)
                        .map(|i| wt[o * in_features + i] * x[i])
                        .sum::<f64>()
                })
                .collect();
            (out, vec![out_features])
        }
    }
}

/// Reference forward using `params` (as from [`params_f64`], possibly perturbed).
pub fn ref_forward(net: &Network, params: &[Vec<f64>], x: &[f64]) -> RefTrace {
    ref_forward_from(net, params, None, x)
}

/// Runs layers after `start` (or all layers when `None`) on `x`.
pub fn ref_forward_from(
    net: &Network,
    params: &[Vec<f64>],
    start: Option<usize>,
    x: &[f64],
) -> RefTrace {
    let offsets = layer_param_offsets(net);
    let first = start.map_or(0, |s| s + 1);
    let mut shape = match start {
        None => net.input_shape().to_vec(),
        Some(s) => net.activation_shape(s).unwrap().to_vec(),
    };
    let mut cur = x.to_vec();
    let mut acts = Vec::new();
    let mut shapes = Vec::new();
    for (idx, layer) in net.layers().iter().enumerate().skip(first) {
        let np = layer.params().len();
        let (next, s) = apply_layer(
            layer.spec(),
            &params[offsets[idx]..offsets[idx] + np],
            &cur,
            &shape,
        );
        acts.push(next.clone());
        shapes.push(s.clone());
        cur = next;
        shape = s;
    }
    RefTrace {
        input: x.to_vec(),
        acts,
        shapes,
    }
}

impl RefTrace {
    pub fn logits(&self) -> &[f64] {
        self.acts.last().unwrap()
    }

    /// Signature of every ReLU sign and max-pool winner, used to detect
    /// finite-difference steps that straddle a kink.
    pub fn kink_signature(&self, net: &Network, first_layer: usize) -> Vec<u32> {
        let mut sig = Vec::new();
        for (j, layer) in net.layers().iter().enumerate().skip(first_layer) {
            let a = j - first_layer;
            let input: &[f64] = if a == 0 {
                &self.input
            } else {
                &self.acts[a - 1]
            };
            match layer {
                Layer::Relu => sig.extend(input.iter().map(|&v| (v > 0.0) as u32)),
                Layer::MaxPool2x2 => {
                    let prev_shape = if a == 0 {
                        if first_layer == 0 {
                            net.input_shape().to_vec()
                        } else {
                            net.activation_shape(first_layer - 1).unwrap().to_vec()
                        }
                    } else {
                        self.shapes[a - 1].clone()
                    };
                    let (c, h, w) = (prev_shape[0], prev_shape[1], prev_shape[2]);
                    for ch in 0..c {
                        for y in 0..h / 2 {
                            for x in 0..w / 2 {
                                let mut best = (0u32, f64::NEG_INFINITY);
                                for (n, (dy, dx)) in
                                    [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate()
                                {
                                    let v = input[(ch * h + 2 * y + dy) * w + 2 * x + dx];
                                    if v > best.1 {
                                        best = (n as u32, v);
                                    }
                                }
                                sig.push(best.0);
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        sig
    }
}

pub fn cross_entropy_f64(logits: &[f64], target: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
    lse - logits[target]
}

pub fn softmax_f64(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn to_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

/// `|a - b| <= max(rel * max(|a|,|b|), abs_floor)`.
pub fn close(a: f64, b: f64, rel: f64, abs_floor: f64) -> bool {
    (a - b).abs() <= (rel * a.abs().max(b.abs())).max(abs_floor)
}

/// Random network with at most five layers: either
/// conv → relu → maxpool → gap → linear or conv → relu → conv → gap → linear,
/// with biases drawn at random so no unit is trivially dead.
pub fn random_small_cnn(seed: u64) -> (Network, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cin = rng.gen_range(1..=2);
    let c1 = rng.gen_range(2..=4);
    let c2 = rng.gen_range(2..=4);
    let k1 = [1, 3, 5][rng.gen_range(0..3)];
    let size = [4, 6, 8][rng.gen_range(0..3)];
    let classes = rng.gen_range(2..=4);
    let mut specs = vec![
        LayerSpec::Conv2d {
            in_channels: cin,
            out_channels: c1,
            kernel: k1,
        },
        LayerSpec::Relu,
    ];
    let feat = if rng.gen_bool(0.5) {
        specs.push(LayerSpec::MaxPool2x2);
        c1
    } else {
        specs.push(LayerSpec::Conv2d {
            in_channels: c1,
            out_channels: c2,
            kernel: 3,
        });
        c2
    };
    specs.extend([
        LayerSpec::GlobalAvgPool,
        LayerSpec::Linear {
            in_features: feat,
            out_features: classes,
        },
    ]);
    let mut net = Network::init(vec![cin, size, size], &specs, seed).unwrap();
    for p in net.params_mut() {
        if p.rank() == 1 {
            for v in p.data_mut() {
                *v = rng.gen_range(-0.2..0.3);
            }
        }
    }
    let x = Tensor::from_fn(&[cin, size, size], |_| rng.gen_range(-1.0..1.0));
    (net, x)
}
