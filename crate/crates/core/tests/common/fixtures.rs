//! Small hand-checkable networks and brute-force curve construction.

use camlab::eval::ScoreMode;
use camlab::network::{predict, LayerSpec, Network};
use camlab::tensor::softmax;
use camlab::Tensor;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// conv(k=3) -> relu -> gap -> linear, every weight random.
pub fn gap_head_net(seed: u64) -> (Network, Tensor, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cin = rng.gen_range(1..=3);
    let k = rng.gen_range(1..=6);
    let (h, w) = (rng.gen_range(2..=7), rng.gen_range(2..=7));
    let n = rng.gen_range(2..=5);
    let specs = [
        LayerSpec::Conv2d {
            in_channels: cin,
            out_channels: k,
            kernel: 3,
        },
        LayerSpec::Relu,
        LayerSpec::GlobalAvgPool,
        LayerSpec::Linear {
            in_features: k,
            out_features: n,
        },
    ];
    let mut net = Network::init(vec![cin, h, w], &specs, seed).unwrap();
    for p in net.params_mut() {
        for v in p.data_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
    }
    let x = Tensor::from_fn(&[cin, h, w], |_| rng.gen_range(-1.0..1.0));
    let class = rng.gen_range(0..n);
    (net, x, class)
}

pub fn toy_net(seed: u64, size: usize) -> Network {
    let specs = [
        LayerSpec::Conv2d {
            in_channels: 1,
            out_channels: 3,
            kernel: 3,
        },
        LayerSpec::Relu,
        LayerSpec::GlobalAvgPool,
        LayerSpec::Linear {
            in_features: 3,
            out_features: 2,
        },
    ];
    let mut net = Network::init(vec![1, size, size], &specs, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for p in net.params_mut() {
        for v in p.data_mut() {
            *v = rng.gen_range(-1.5..1.5);
        }
    }
    net
}

pub fn random_image(rng: &mut ChaCha8Rng, size: usize) -> Tensor {
    Tensor::from_fn(&[1, size, size], |_| rng.gen_range(0.0..1.0))
}

/// Builds every curve point from scratch: sort, copy, forward.
pub fn brute_force_curve(
    net: &Network,
    from: &Tensor,
    to: &Tensor,
    map: &Tensor,
    class: usize,
    steps: usize,
    mode: ScoreMode,
) -> (Vec<f64>, Vec<f64>) {
    let n = map.len();
    let mut keyed: Vec<(f32, usize)> = map.data().iter().copied().zip(0..n).collect();
    // larger value first, then lower index
    keyed.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut fractions = Vec::new();
    let mut scores = Vec::new();
    for s in 0..=steps {
        let count = s * n / steps;
        let mut img = from.data().to_vec();
        for &(_, p) in &keyed[..count] {
            img[p] = to.data()[p];
        }
        let logits = net
            .logits(&Tensor::new(from.shape().to_vec(), img).unwrap())
            .unwrap();
        let score = match mode {
            ScoreMode::Probabilistic => softmax(&logits).unwrap().data()[class] as f64,
            ScoreMode::Accuracy => (predict(&logits).unwrap() == class) as u8 as f64,
        };
        fractions.push(count as f64 / n as f64);
        scores.push(score);
    }
    (fractions, scores)
}
