//! Evaluation metrics for explanation maps: probabilistic and accuracy
//! deletion/insertion curves, masked-image accuracy, the pointing game and
//! completeness coverage, plus the aggregate [`EvalReport`].

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::explain::{complete_explanation_traced, CompleteExplanation, Paradigm};
use crate::network::{predict, Network};
use crate::tensor::{softmax, Tensor};
use crate::training::LabeledSample;

pub const DEFAULT_STEPS: usize = 20;
pub const DEFAULT_COVERAGE_THRESHOLD: f32 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    /// Softmax probability of the originally predicted class.
    Probabilistic,
    /// 1 when the perturbed image is still assigned the originally predicted
    /// class, else 0.
    Accuracy,
}

/// What removed pixels are replaced with.
#[derive(Debug, Clone, PartialEq)]
pub enum Baseline {
    Zeros,
    /// One value per channel, usually the dataset mean.
    Constant(Vec<f32>),
    /// A full replacement image of the same shape as the input.
    Image(Tensor),
}

impl Baseline {
    /// Per-channel mean over every pixel of every sample.
    pub fn dataset_mean(samples: &[LabeledSample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::invalid("dataset mean of an empty dataset"))?;
        let (c, h, w) = first.image.chw()?;
        let plane = h * w;
        let mut sums = vec![0.0f64; c];
        for s in samples {
            if s.image.shape() != first.image.shape() {
                return Err(Error::shape("dataset images differ in shape"));
            }
            for (ch, sum) in sums.iter_mut().enumerate() {
                *sum += s.image.data()[ch * plane..(ch + 1) * plane]
                    .iter()
                    .map(|&v| v as f64)
                    .sum::<f64>();
            }
        }
        let n = (samples.len() * plane) as f64;
        Ok(Baseline::Constant(
            sums.into_iter().map(|s| (s / n) as f32).collect(),
        ))
    }

    pub fn image(&self, shape: &[usize]) -> Result<Tensor> {
        match self {
            Baseline::Zeros => Ok(Tensor::zeros(shape)),
            Baseline::Constant(values) => {
                let (c, h, w) = match shape {
                    &[c, h, w] => (c, h, w),
                    _ => {
                        return Err(Error::shape(format!(
                            "baseline for non-image shape {shape:?}"
                        )))
                    }
                };
                if values.len() != c {
                    return Err(Error::shape(format!(
                        "{} baseline values for {c} channels",
                        values.len()
                    )));
                }
                Ok(Tensor::from_fn(shape, |i| values[i / (h * w)]))
            }
            Baseline::Image(t) => {
                if t.shape() != shape {
                    return Err(Error::shape(format!(
                        "baseline image {:?} does not match input {shape:?}",
                        t.shape()
                    )));
                }
                Ok(t.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveConfig {
    pub mode: ScoreMode,
    pub steps: usize,
    pub baseline: Baseline,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig {
            mode: ScoreMode::Probabilistic,
            steps: DEFAULT_STEPS,
            baseline: Baseline::Zeros,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalCurve {
    /// Fraction of pixels changed at each point, from 0 to 1.
    pub fractions: Vec<f64>,
    pub scores: Vec<f64>,
    pub auc: f64,
}

/// Trapezoidal area under `scores` over `fractions`.
pub fn trapezoid_auc(fractions: &[f64], scores: &[f64]) -> f64 {
    fractions
        .windows(2)
        .zip(scores.windows(2))
        .map(|(f, s)| (f[1] - f[0]) * (s[0] + s[1]) * 0.5)
        .sum()
}

/// Pixel indices by descending map value; equal values keep raster order.
pub fn pixel_ranking(map: &Tensor) -> Vec<usize> {
    let mut order: Vec<usize> = (0..map.len()).collect();
    let d = map.data();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    order
}

fn check_curve_inputs(x: &Tensor, map: &Tensor, steps: usize) -> Result<(usize, usize, usize)> {
    let (c, h, w) = x.chw()?;
    if map.shape() != [h, w] {
        return Err(Error::shape(format!(
            "map {:?} does not match image {:?}",
            map.shape(),
            x.shape()
        )));
    }
    map.ensure_finite("explanation map")?;
    if steps < 2 || steps > h * w {
        return Err(Error::invalid(format!(
            "steps must be in [2, {}], got {steps}",
            h * w
        )));
    }
    Ok((c, h, w))
}

fn score(net: &Network, image: &Tensor, class: usize, mode: ScoreMode) -> Result<f64> {
    let logits = net.logits(image)?;
    Ok(match mode {
        ScoreMode::Probabilistic => softmax(&logits)?.data()[class] as f64,
        ScoreMode::Accuracy => (predict(&logits)? == class) as u8 as f64,
    })
}

/// Moves pixels from `start` to `end` in `order`, `steps` equal-count
/// increments, scoring `class` with a fresh forward pass at every point.
fn transfer_curve(
    net: &Network,
    start: &Tensor,
    end: &Tensor,
    order: &[usize],
    class: usize,
    mode: ScoreMode,
    steps: usize,
) -> Result<EvalCurve> {
    let (c, h, w) = start.chw()?;
    let plane = h * w;
    let mut image = start.clone();
    let mut fractions = Vec::with_capacity(steps + 1);
    let mut scores = Vec::with_capacity(steps + 1);
    fractions.push(0.0);
    scores.push(score(net, &image, class, mode)?);
    let mut done = 0;
    for s in 1..=steps {
        let upto = s * plane / steps;
        for &p in &order[done..upto] {
            for ch in 0..c {
                image.data_mut()[ch * plane + p] = end.data()[ch * plane + p];
            }
        }
        done = upto;
        fractions.push(upto as f64 / plane as f64);
        scores.push(score(net, &image, class, mode)?);
    }
    let auc = trapezoid_auc(&fractions, &scores);
    Ok(EvalCurve {
        fractions,
        scores,
        auc,
    })
}

/// Replaces pixels of `x` with the baseline, most important first.
pub fn deletion_curve(
    net: &Network,
    x: &Tensor,
    map: &Tensor,
    cfg: &CurveConfig,
) -> Result<EvalCurve> {
    check_curve_inputs(x, map, cfg.steps)?;
    let class = predict(&net.logits(x)?)?;
    let base = cfg.baseline.image(x.shape())?;
    transfer_curve(
        net,
        x,
        &base,
        &pixel_ranking(map),
        class,
        cfg.mode,
        cfg.steps,
    )
}

/// Starts from the baseline and restores pixels of `x`, most important first.
/// Scores track the class predicted on the unmodified `x`.
pub fn insertion_curve(
    net: &Network,
    x: &Tensor,
    map: &Tensor,
    cfg: &CurveConfig,
) -> Result<EvalCurve> {
    check_curve_inputs(x, map, cfg.steps)?;
    let class = predict(&net.logits(x)?)?;
    let base = cfg.baseline.image(x.shape())?;
    transfer_curve(
        net,
        &base,
        x,
        &pixel_ranking(map),
        class,
        cfg.mode,
        cfg.steps,
    )
}

fn apply_mask(image: &Tensor, map: &Tensor, threshold: Option<f32>) -> Result<Tensor> {
    let (_, h, w) = image.chw()?;
    if map.shape() != [h, w] {
        return Err(Error::shape(format!(
            "map {:?} does not match image {:?}",
            map.shape(),
            image.shape()
        )));
    }
    map.ensure_finite("mask map")?;
    let plane = h * w;
    let m = map.data();
    Ok(Tensor::from_fn(image.shape(), |i| {
        let v = m[i % plane];
        let weight = match threshold {
            Some(t) => (v > t) as u8 as f32,
            None => v,
        };
        image.data()[i] * weight
    }))
}

/// Accuracy after multiplying every image by its map (`x' = x * M`), or by
/// the map binarized at `threshold`.
pub fn masked_accuracy(
    net: &Network,
    samples: &[LabeledSample],
    maps: &[Tensor],
    threshold: Option<f32>,
) -> Result<f64> {
    if samples.len() != maps.len() {
        return Err(Error::invalid(format!(
            "{} samples but {} maps",
            samples.len(),
            maps.len()
        )));
    }
    if samples.is_empty() {
        return Err(Error::invalid("masked accuracy over zero samples"));
    }
    let mut correct = 0usize;
    for (s, m) in samples.iter().zip(maps) {
        let masked = apply_mask(&s.image, m, threshold)?;
        if predict(&net.logits(&masked)?)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Whether the first maximum of `map` lies inside `mask`. All-zero maps miss.
pub fn pointing_hit(map: &Tensor, mask: &Tensor) -> Result<bool> {
    if map.shape() != mask.shape() {
        return Err(Error::shape(format!(
            "map {:?} does not match mask {:?}",
            map.shape(),
            mask.shape()
        )));
    }
    map.ensure_finite("pointing game map")?;
    match (map.argmax(), map.max()) {
        (Some(i), Some(m)) if m > 0.0 => Ok(mask.data()[i] > 0.5),
        _ => Ok(false),
    }
}

pub fn pointing_game(maps: &[Tensor], samples: &[LabeledSample]) -> Result<f64> {
    if samples.len() != maps.len() {
        return Err(Error::invalid(format!(
            "{} samples but {} maps",
            samples.len(),
            maps.len()
        )));
    }
    if samples.is_empty() {
        return Err(Error::invalid("pointing game over zero samples"));
    }
    let mut hits = 0usize;
    for (i, (m, s)) in maps.iter().zip(samples).enumerate() {
        let mask = s
            .mask
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("sample {i} has no ground-truth mask")))?;
        if pointing_hit(m, mask)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Fraction of mask pixels where `map > threshold`.
pub fn coverage(map: &Tensor, mask: &Tensor, threshold: f32) -> Result<f64> {
    if map.shape() != mask.shape() {
        return Err(Error::shape(format!(
            "map {:?} does not match mask {:?}",
            map.shape(),
            mask.shape()
        )));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!(
            "coverage threshold must be in (0,1), got {threshold}"
        )));
    }
    let inside = mask.data().iter().filter(|&&m| m > 0.5).count();
    if inside == 0 {
        return Err(Error::invalid("coverage against an empty mask"));
    }
    let covered = map
        .data()
        .iter()
        .zip(mask.data())
        .filter(|&(&v, &m)| m > 0.5 && v > threshold)
        .count();
    Ok(covered as f64 / inside as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletenessCoverage {
    pub correlation: f64,
    pub counterfactual: f64,
    pub contrastive: f64,
    pub complete: f64,
}

impl CompletenessCoverage {
    pub fn get(&self, paradigm: Paradigm) -> f64 {
        match paradigm {
            Paradigm::Correlation => self.correlation,
            Paradigm::Counterfactual => self.counterfactual,
            Paradigm::Contrastive => self.contrastive,
        }
    }
}

/// Coverage of each normalized paradigm map and of the normalized complete map.
pub fn completeness_coverage(
    complete: &CompleteExplanation,
    mask: &Tensor,
    threshold: f32,
) -> Result<CompletenessCoverage> {
    Ok(CompletenessCoverage {
        correlation: coverage(&complete.correlation.upsampled, mask, threshold)?,
        counterfactual: coverage(&complete.counterfactual.upsampled, mask, threshold)?,
        contrastive: coverage(&complete.contrastive.upsampled, mask, threshold)?,
        complete: coverage(&complete.complete_upsampled()?, mask, threshold)?,
    })
}

/// Aggregated metrics over a sample set. Metric values are all in `[0,1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub sample_count: usize,
    pub seed: Option<u64>,
    pub config: BTreeMap<String, String>,
    /// Plain accuracy of the network on the unmodified samples.
    pub accuracy: Option<f64>,
    /// Method name → metric name → value.
    pub methods: BTreeMap<String, BTreeMap<String, f64>>,
}

impl EvalReport {
    pub fn metric(&self, method: &str, metric: &str) -> Option<f64> {
        self.methods.get(method)?.get(metric).copied()
    }

    /// Rejects NaN, infinities and values outside `[0,1]`.
    pub fn validate(&self) -> Result<()> {
        if self.sample_count == 0 {
            return Err(Error::invalid("report has zero samples"));
        }
        let values = self
            .accuracy
            .iter()
            .map(|&v| ("accuracy".to_string(), v))
            .chain(self.methods.iter().flat_map(|(m, metrics)| {
                metrics.iter().map(move |(k, &v)| (format!("{m}.{k}"), v))
            }));
        for (name, v) in values {
            if !v.is_finite() {
                return Err(Error::NonFinite("evaluation report"));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} = {v} is outside [0,1]")));
            }
        }
        Ok(())
    }
}

pub mod metric {
    pub const DELETION_AUC: &str = "deletion_auc";
    pub const INSERTION_AUC: &str = "insertion_auc";
    pub const MASKED_ACCURACY: &str = "masked_accuracy";
    pub const POINTING_GAME: &str = "pointing_game";
    pub const COVERAGE: &str = "coverage";
}

/// Name of the map source evaluated alongside the paradigms.
pub const COMPLETE_METHOD: &str = "complete";
pub const UNIFORM_CONTROL: &str = "control-uniform";
pub const RANDOM_CONTROL: &str = "control-random";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub curve: CurveConfig,
    /// Binarization threshold for masked accuracy; `None` multiplies by the
    /// continuous map.
    pub mask_threshold: Option<f32>,
    pub coverage_threshold: f32,
    /// Worker threads; 0 runs sequentially.
    pub threads: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            curve: CurveConfig::default(),
            mask_threshold: None,
            coverage_threshold: DEFAULT_COVERAGE_THRESHOLD,
            threads: 0,
        }
    }
}

/// Maps `f` over `items`, on a pool of `threads` workers or sequentially when
/// `threads == 0`. Output order always matches input order.
pub fn par_map<T, R, F>(threads: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    if threads == 0 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(f).collect())
}

/// Deletion AUC, insertion AUC, masked accuracy and (when every sample has a
/// mask) pointing-game rate for one map per sample.
pub fn evaluate_maps(
    net: &Network,
    samples: &[LabeledSample],
    maps: &[Tensor],
    cfg: &EvalConfig,
) -> Result<BTreeMap<String, f64>> {
    if samples.len() != maps.len() || samples.is_empty() {
        return Err(Error::invalid(format!(
            "{} samples but {} maps",
            samples.len(),
            maps.len()
        )));
    }
    let pairs: Vec<(&LabeledSample, &Tensor)> = samples.iter().zip(maps).collect();
    let aucs = par_map(cfg.threads, &pairs, |(s, m)| {
        let del = deletion_curve(net, &s.image, m, &cfg.curve)?;
        let ins = insertion_curve(net, &s.image, m, &cfg.curve)?;
        Ok((del.auc, ins.auc))
    })?;
    let n = samples.len() as f64;
    let mut out = BTreeMap::new();
    out.insert(
        metric::DELETION_AUC.to_string(),
        aucs.iter().map(|a| a.0).sum::<f64>() / n,
    );
    out.insert(
        metric::INSERTION_AUC.to_string(),
        aucs.iter().map(|a| a.1).sum::<f64>() / n,
    );
    out.insert(
        metric::MASKED_ACCURACY.to_string(),
        masked_accuracy(net, samples, maps, cfg.mask_threshold)?,
    );
    if samples.iter().all(|s| s.mask.is_some()) {
        out.insert(
            metric::POINTING_GAME.to_string(),
            pointing_game(maps, samples)?,
        );
    }
    Ok(out)
}

/// Which map sources [`evaluate_dataset`] scores.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSelection {
    pub paradigms: Vec<Paradigm>,
    pub complete: bool,
    /// Adds the uniform-map and random-map controls, the random maps drawn
    /// from this seed.
    pub controls: Option<u64>,
}

impl MethodSelection {
    pub fn all(control_seed: u64) -> Self {
        MethodSelection {
            paradigms: Paradigm::ALL.to_vec(),
            complete: true,
            controls: Some(control_seed),
        }
    }
}

/// Explains every sample at `layer` (contrast class defaulting to the
/// runner-up) and evaluates the selected map sources side by side.
pub fn evaluate_dataset(
    net: &Network,
    samples: &[LabeledSample],
    layer: usize,
    contrast: Option<usize>,
    selection: &MethodSelection,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::invalid("evaluation over an empty dataset"));
    }
    let explanations = par_map(cfg.threads, samples, |s| {
        let trace = net.forward(&s.image)?;
        complete_explanation_traced(net, &trace, layer, contrast)
    })?;

    let mut report = EvalReport {
        sample_count: samples.len(),
        ..EvalReport::default()
    };
    report.accuracy = Some(crate::training::accuracy(net, samples)? as f64);

    let with_masks = samples.iter().all(|s| s.mask.is_some());
    let coverages = if with_masks {
        Some(
            explanations
                .iter()
                .zip(samples)
                .map(|(e, s)| {
                    completeness_coverage(
                        e,
                        s.mask.as_ref().expect("checked"),
                        cfg.coverage_threshold,
                    )
                })
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let mean = |f: &dyn Fn(&CompletenessCoverage) -> f64| {
        coverages
            .as_ref()
            .map(|cs| cs.iter().map(f).sum::<f64>() / cs.len() as f64)
    };

    for &p in &selection.paradigms {
        let maps: Vec<Tensor> = explanations
            .iter()
            .map(|e| e.map(p).upsampled.clone())
            .collect();
        let mut metrics = evaluate_maps(net, samples, &maps, cfg)?;
        if let Some(c) = mean(&|c| c.get(p)) {
            metrics.insert(metric::COVERAGE.to_string(), c);
        }
        report.methods.insert(p.method_name().to_string(), metrics);
    }
    if selection.complete {
        let maps = explanations
            .iter()
            .map(CompleteExplanation::complete_upsampled)
            .collect::<Result<Vec<_>>>()?;
        let mut metrics = evaluate_maps(net, samples, &maps, cfg)?;
        if let Some(c) = mean(&|c| c.complete) {
            metrics.insert(metric::COVERAGE.to_string(), c);
        }
        report.methods.insert(COMPLETE_METHOD.to_string(), metrics);
    }
    if let Some(seed) = selection.controls {
        let (_, h, w) = samples[0].image.chw()?;
        let uniform = vec![Tensor::full(&[h, w], 1.0); samples.len()];
        report.methods.insert(
            UNIFORM_CONTROL.to_string(),
            evaluate_maps(net, samples, &uniform, cfg)?,
        );
        let random = random_maps(seed, samples.len(), h, w);
        report.methods.insert(
            RANDOM_CONTROL.to_string(),
            evaluate_maps(net, samples, &random, cfg)?,
        );
    }
    Ok(report)
}

/// Seeded maps with independent uniform `[0,1)` pixels.
pub fn random_maps(seed: u64, count: usize, h: usize, w: usize) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| Tensor::from_fn(&[h, w], |_| rng.gen::<f32>()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_of_constant_curve() {
        for c in [0.0, 0.37, 1.0] {
            let f: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
            let s = vec![c; 21];
            assert!((trapezoid_auc(&f, &s) - c).abs() < 1e-9);
        }
        // linear ramp 0 -> 1 has area 1/2
        let f = [0.0, 0.25, 0.5, 1.0];
        assert!((trapezoid_auc(&f, &f) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ranking_breaks_ties_by_raster_order() {
        let m = Tensor::new(vec![2, 3], vec![0.5, 1.0, 0.5, 1.0, 0.0, 0.5]).unwrap();
        assert_eq!(pixel_ranking(&m), vec![1, 3, 0, 2, 5, 4]);
    }

    fn masked_sample(mask: Vec<f32>) -> LabeledSample {
        LabeledSample {
            image: Tensor::zeros(&[1, 2, 2]),
            label: 0,
            mask: Some(Tensor::new(vec![2, 2], mask).unwrap()),
        }
    }

    #[test]
    fn pointing_examples() {
        let s = masked_sample(vec![0.0, 1.0, 0.0, 0.0]);
        let hit = Tensor::new(vec![2, 2], vec![0.0, 0.3, 0.0, 0.0]).unwrap();
        let miss = Tensor::new(vec![2, 2], vec![0.3, 0.0, 0.0, 0.0]).unwrap();
        let zero = Tensor::zeros(&[2, 2]);
        assert!(pointing_hit(&hit, s.mask.as_ref().unwrap()).unwrap());
        assert!(!pointing_hit(&miss, s.mask.as_ref().unwrap()).unwrap());
        assert!(!pointing_hit(&zero, s.mask.as_ref().unwrap()).unwrap());
        // ties go to the first maximum in raster order
        let tie = Tensor::new(vec![2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(pointing_hit(&tie, s.mask.as_ref().unwrap()).unwrap());
        let rate = pointing_game(&[hit, miss, zero], &[s.clone(), s.clone(), s]).unwrap();
        assert!((rate - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn pointing_requires_masks() {
        let s = LabeledSample {
            image: Tensor::zeros(&[1, 2, 2]),
            label: 0,
            mask: None,
        };
        assert!(pointing_game(&[Tensor::zeros(&[2, 2])], &[s]).is_err());
    }

    #[test]
    fn coverage_examples() {
        let mask = Tensor::new(vec![2, 2], vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let ones = Tensor::full(&[2, 2], 1.0);
        assert_eq!(coverage(&ones, &mask, 0.2).unwrap(), 1.0);
        assert_eq!(coverage(&Tensor::zeros(&[2, 2]), &mask, 0.2).unwrap(), 0.0);
        let half = Tensor::new(vec![2, 2], vec![0.5, 0.1, 1.0, 1.0]).unwrap();
        assert_eq!(coverage(&half, &mask, 0.2).unwrap(), 0.5);
        assert!(coverage(&ones, &Tensor::zeros(&[2, 2]), 0.2).is_err());
        assert!(coverage(&ones, &mask, 1.0).is_err());
        assert!(coverage(&ones, &mask, 0.0).is_err());
    }

    #[test]
    fn baselines() {
        let samples = vec![
            LabeledSample {
                image: Tensor::full(&[2, 1, 2], 1.0),
                label: 0,
                mask: None,
            },
            LabeledSample {
                image: Tensor::new(vec![2, 1, 2], vec![0.0, 0.0, 3.0, 5.0]).unwrap(),
                label: 0,
                mask: None,
            },
        ];
        let b = Baseline::dataset_mean(&samples).unwrap();
        assert_eq!(b, Baseline::Constant(vec![0.5, 2.5]));
        assert_eq!(b.image(&[2, 1, 2]).unwrap().data(), &[0.5, 0.5, 2.5, 2.5]);
        assert!(b.image(&[1, 1, 2]).is_err());
        assert!(Baseline::dataset_mean(&[]).is_err());
    }

    #[test]
    fn report_validation() {
        let mut r = EvalReport {
            sample_count: 3,
            ..EvalReport::default()
        };
        assert!(r.validate().is_ok());
        r.methods
            .entry("grad-cam".into())
            .or_default()
            .insert(metric::DELETION_AUC.into(), f64::NAN);
        assert!(matches!(r.validate(), Err(Error::NonFinite(_))));
        r.methods
            .get_mut("grad-cam")
            .unwrap()
            .insert(metric::DELETION_AUC.into(), 1.5);
        assert!(r.validate().is_err());
        r.sample_count = 0;
        r.methods.clear();
        assert!(r.validate().is_err());
    }

    #[test]
    fn par_map_preserves_order() {
        let items: Vec<u32> = (0..50).collect();
        let seq = par_map(0, &items, |&i| Ok(i * 3)).unwrap();
        let par = par_map(3, &items, |&i| Ok(i * 3)).unwrap();
        assert_eq!(seq, par);
    }
}
