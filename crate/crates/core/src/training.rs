//! Mini-batch SGD and the synthetic shapes dataset.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{cross_entropy_loss, predict, LayerSpec, Network};
use crate::tensor::Tensor;

pub const DEFAULT_LEARNING_RATE: f32 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub image: Tensor,
    pub label: usize,
    /// Binary `[H,W]` ground-truth object mask.
    pub mask: Option<Tensor>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: 10,
            batch_size: 16,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Mean cross-entropy over the epoch, measured before each batch update.
    pub loss: f32,
    pub accuracy: f32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    /// FNV-1a over the little-endian bytes of every recorded value.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for e in &self.epochs {
            for b in e
                .loss
                .to_le_bytes()
                .into_iter()
                .chain(e.accuracy.to_le_bytes())
            {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// `θ' = θ − η·g` for every parameter tensor.
pub fn sgd_step(params: &[Tensor], grads: &[Tensor], learning_rate: f32) -> Result<Vec<Tensor>> {
    let mut out = params.to_vec();
    {
        let mut refs: Vec<&mut Tensor> = out.iter_mut().collect();
        sgd_step_in_place(&mut refs, grads, learning_rate)?;
    }
    Ok(out)
}

pub fn sgd_step_in_place(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    learning_rate: f32,
) -> Result<()> {
    if !(learning_rate.is_finite() && learning_rate > 0.0) {
        return Err(Error::invalid(format!(
            "learning rate must be positive, got {learning_rate}"
        )));
    }
    if params.len() != grads.len() {
        return Err(Error::shape(format!(
            "{} parameter tensors but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::shape(format!(
                "gradient shape {:?} does not mirror parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
        g.ensure_finite("sgd gradient")?;
    }
    for (p, g) in params.iter_mut().zip(grads) {
        for (v, &d) in p.data_mut().iter_mut().zip(g.data()) {
            *v -= learning_rate * d;
        }
    }
    Ok(())
}

/// Trains with mini-batch SGD, gradients averaged over each batch.
///
/// Runs single-threaded; the result depends only on the starting network,
/// the dataset order and `config`.
pub fn train(
    net: &Network,
    dataset: &[LabeledSample],
    config: &TrainConfig,
) -> Result<(Network, TrainHistory)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("training dataset is empty"));
    }
    for (i, s) in dataset.iter().enumerate() {
        if s.label >= net.num_classes() {
            return Err(Error::invalid(format!(
                "sample {i} has label {} but the network has {} classes",
                s.label,
                net.num_classes()
            )));
        }
        if s.image.shape() != net.input_shape() {
            return Err(Error::shape(format!(
                "sample {i} has shape {:?}, network expects {:?}",
                s.image.shape(),
                net.input_shape()
            )));
        }
    }
    let mut history = TrainHistory::default();
    if config.epochs == 0 {
        return Ok((net.clone(), history));
    }

    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let shapes: Vec<Vec<usize>> = net.params().iter().map(|p| p.shape().to_vec()).collect();

    for epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let mut acc: Vec<Vec<f64>> = shapes
                .iter()
                .map(|s| vec![0.0; s.iter().product()])
                .collect();
            for &i in batch {
                let sample = &dataset[i];
                let diverged = |loss: f32| Error::Diverged {
                    epoch,
                    batch: batch_idx,
                    loss,
                };
                let trace = match net.forward(&sample.image) {
                    Ok(t) => t,
                    Err(Error::NonFinite(_)) => return Err(diverged(f32::NAN)),
                    Err(e) => return Err(e),
                };
                let loss = cross_entropy_loss(trace.logits(), sample.label)?;
                if !loss.is_finite() {
                    return Err(diverged(loss));
                }
                loss_sum += loss as f64;
                if predict(trace.logits())? == sample.label {
                    correct += 1;
                }
                let grads = match net.backward_params(&trace, sample.label) {
                    Ok(g) => g,
                    Err(Error::NonFinite(_)) => return Err(diverged(loss)),
                    Err(e) => return Err(e),
                };
                for (a, g) in acc.iter_mut().zip(&grads) {
                    for (x, &y) in a.iter_mut().zip(g.data()) {
                        *x += y as f64;
                    }
                }
            }
            let n = batch.len() as f64;
            let mean: Vec<Tensor> = acc
                .into_iter()
                .zip(&shapes)
                .map(|(a, s)| {
                    Tensor::new(s.clone(), a.into_iter().map(|v| (v / n) as f32).collect())
                        .expect("sized")
                })
                .collect();
            sgd_step_in_place(&mut net.params_mut(), &mean, config.learning_rate)?;
        }
        history.epochs.push(EpochStats {
            loss: (loss_sum / dataset.len() as f64) as f32,
            accuracy: correct as f32 / dataset.len() as f32,
        });
    }

    net.meta.train_seed = config.seed;
    net.meta.learning_rate = config.learning_rate;
    net.meta.epochs = config.epochs as u32;
    net.meta.history_digest = history.digest();
    Ok((net, history))
}

/// Fraction of samples whose prediction equals the label.
pub fn accuracy(net: &Network, samples: &[LabeledSample]) -> Result<f32> {
    if samples.is_empty() {
        return Err(Error::invalid("accuracy over an empty sample set"));
    }
    let mut correct = 0;
    for s in samples {
        if predict(&net.logits(&s.image)?)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f32 / samples.len() as f32)
}

/// Classes of the synthetic shapes dataset, in label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeClass {
    Square,
    Disk,
    Cross,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 3] = [ShapeClass::Square, ShapeClass::Disk, ShapeClass::Cross];

    pub fn from_label(label: usize) -> Option<Self> {
        Self::ALL.get(label).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Square => "square",
            ShapeClass::Disk => "disk",
            ShapeClass::Cross => "cross",
        }
    }
}

pub const SHAPE_CLASS_COUNT: usize = 3;
pub const MIN_IMAGE_SIZE: usize = 16;

/// Generates `3 * n_per_class` grayscale `[1,S,S]` samples, labels cycling
/// square, disk, cross. Pixel values are multiples of 1/255 so that the
/// dataset survives an 8-bit PGM round trip unchanged.
///
/// Sample `i` draws from its own ChaCha stream, so any sample can be
/// regenerated independently of the others.
pub fn generate_shapes_dataset(
    seed: u64,
    n_per_class: usize,
    image_size: usize,
) -> Result<Vec<LabeledSample>> {
    if image_size < MIN_IMAGE_SIZE {
        return Err(Error::invalid(format!(
            "shapes cannot fit in {image_size}x{image_size}; need at least {MIN_IMAGE_SIZE}"
        )));
    }
    if n_per_class == 0 {
        return Err(Error::invalid("n_per_class must be at least 1"));
    }
    (0..n_per_class * SHAPE_CLASS_COUNT)
        .map(|i| generate_sample(seed, i, image_size))
        .collect()
}

fn generate_sample(seed: u64, index: usize, size: usize) -> Result<LabeledSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let label = index % SHAPE_CLASS_COUNT;
    let class = ShapeClass::from_label(label).expect("label < 3");
    let scale = size as f64 / 32.0;
    let n = size as i64;

    let mut mask = vec![0.0f32; size * size];
    let mut set = |y: i64, x: i64| {
        if (0..n).contains(&y) && (0..n).contains(&x) {
            mask[(y * n + x) as usize] = 1.0;
        }
    };
    match class {
        ShapeClass::Square => {
            let lo = (7.0 * scale).round() as i64;
            let hi = (16.0 * scale).round() as i64;
            let side = rng.gen_range(lo..=hi);
            let y0 = rng.gen_range(0..=n - side);
            let x0 = rng.gen_range(0..=n - side);
            for y in y0..y0 + side {
                for x in x0..x0 + side {
                    set(y, x);
                }
            }
        }
        ShapeClass::Disk => {
            let r = rng.gen_range(4.0 * scale..=9.0 * scale);
            let reach = r.ceil() as i64;
            let cy = rng.gen_range(reach..=n - 1 - reach);
            let cx = rng.gen_range(reach..=n - 1 - reach);
            for y in cy - reach..=cy + reach {
                for x in cx - reach..=cx + reach {
                    let (dy, dx) = ((y - cy) as f64, (x - cx) as f64);
                    if dy * dy + dx * dx <= r * r {
                        set(y, x);
                    }
                }
            }
        }
        ShapeClass::Cross => {
            let t_lo = ((3.0 * scale).round() as i64).max(2);
            let t_hi = ((5.0 * scale).round() as i64).max(t_lo);
            let thick = rng.gen_range(t_lo..=t_hi);
            let l_lo = ((9.0 * scale).round() as i64).max(thick + 2);
            let l_hi = ((19.0 * scale).round() as i64).max(l_lo);
            let len = rng.gen_range(l_lo..=l_hi);
            let y0 = rng.gen_range(0..=n - len);
            let x0 = rng.gen_range(0..=n - len);
            let off = (len - thick) / 2;
            for a in 0..len {
                for b in 0..thick {
                    set(y0 + off + b, x0 + a);
                    set(y0 + a, x0 + off + b);
                }
            }
        }
    }

    let intensity: f32 = rng.gen_range(0.6..=1.0);
    let image: Vec<f32> = mask
        .iter()
        .map(|&m| {
            let v = if m > 0.0 {
                intensity + rng.gen_range(-0.1f32..=0.1)
            } else {
                rng.gen_range(0.0f32..=0.35)
            };
            quantize(v)
        })
        .collect();

    Ok(LabeledSample {
        image: Tensor::new(vec![1, size, size], image)?,
        label,
        mask: Some(Tensor::new(vec![size, size], mask)?),
    })
}

/// Rounds to the nearest multiple of 1/255 in [0,1].
pub fn quantize(v: f32) -> f32 {
    byte_to_unit(unit_to_byte(v))
}

pub fn unit_to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn byte_to_unit(b: u8) -> f32 {
    b as f32 / 255.0
}

/// Two conv blocks, one max pool, global average pooling and a linear head.
pub fn reference_architecture(in_channels: usize, num_classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2d {
            in_channels,
            out_channels: 8,
            kernel: 3,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool2x2,
        LayerSpec::Conv2d {
            in_channels: 8,
            out_channels: 16,
            kernel: 5,
        },
        LayerSpec::Relu,
        LayerSpec::GlobalAvgPool,
        LayerSpec::Linear {
            in_features: 16,
            out_features: num_classes,
        },
    ]
}

pub fn reference_cnn(image_size: usize, seed: u64) -> Result<Network> {
    Network::init(
        vec![1, image_size, image_size],
        &reference_architecture(1, SHAPE_CLASS_COUNT),
        seed,
    )
}
