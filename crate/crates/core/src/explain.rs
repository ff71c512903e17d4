//! Correlation, counterfactual and contrastive class activation maps, and
//! their sum, the complete explanation.
//!
//! All three paradigms share one recipe: pick a scalar objective, take its
//! gradient with respect to the logits as the backward seed, pull that back
//! to a spatial activation `A` of shape `[K,h,w]`, global-average-pool the
//! result into per-channel importance scores `alpha`, and form the map
//! `relu(sum_k alpha_k * A_k)`. Only the seed differs:
//!
//! | paradigm       | question                | seed                         |
//! |----------------|-------------------------|------------------------------|
//! | correlation    | Why P?                  | `onehot(P)`                  |
//! | counterfactual | What if not P?          | correlation scores, negated  |
//! | contrastive    | Why P, rather than Q?   | `softmax(y) - onehot(Q)`     |
//!
//! The contrastive objective is the cross-entropy of the logits toward the
//! contrast class `Q`.

use std::fmt;

use crate::error::{Error, Result};
use crate::network::{loss_gradient, predict, ForwardTrace, Network};
use crate::tensor::{global_average_pool, relu, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Paradigm {
    Correlation,
    Counterfactual,
    Contrastive,
}

impl Paradigm {
    pub const ALL: [Paradigm; 3] = [
        Paradigm::Correlation,
        Paradigm::Counterfactual,
        Paradigm::Contrastive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Paradigm::Correlation => "correlation",
            Paradigm::Counterfactual => "counterfactual",
            Paradigm::Contrastive => "contrastive",
        }
    }

    pub fn method_name(self) -> &'static str {
        match self {
            Paradigm::Correlation => "grad-cam",
            Paradigm::Counterfactual => "counterfactual-cam",
            Paradigm::Contrastive => "contrast-cam",
        }
    }

    /// The question this paradigm answers, with class names filled in.
    pub fn question(self, predicted: &str, contrast: Option<&str>) -> String {
        match self {
            Paradigm::Correlation => format!("Why {predicted}?"),
            Paradigm::Counterfactual => format!("What if not {predicted}?"),
            Paradigm::Contrastive => {
                format!("Why {predicted}, rather than {}?", contrast.unwrap_or("?"))
            }
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// "Why P, rather than Q?"
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContrastQuery {
    pub predicted: usize,
    pub contrast: usize,
}

/// Classes an explanation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExplainedClasses {
    pub predicted: usize,
    pub contrast: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceScores {
    /// One score per channel of the explained layer.
    pub alphas: Tensor,
    pub paradigm: Paradigm,
    pub layer: usize,
    pub classes: ExplainedClasses,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationMap {
    /// `[h,w]` at layer resolution, after the ReLU, before normalization.
    pub raw: Tensor,
    /// `[H,W]` at input resolution, normalized into `[0,1]`.
    pub upsampled: Tensor,
    pub paradigm: Paradigm,
    pub layer: usize,
    pub classes: ExplainedClasses,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompleteExplanation {
    pub correlation: ExplanationMap,
    pub counterfactual: ExplanationMap,
    pub contrastive: ExplanationMap,
    /// `correlation.raw + contrastive.raw + counterfactual.raw`.
    pub complete_raw: Tensor,
}

impl CompleteExplanation {
    pub fn map(&self, paradigm: Paradigm) -> &ExplanationMap {
        match paradigm {
            Paradigm::Correlation => &self.correlation,
            Paradigm::Counterfactual => &self.counterfactual,
            Paradigm::Contrastive => &self.contrastive,
        }
    }

    /// The complete map at input resolution, normalized into `[0,1]`.
    pub fn complete_upsampled(&self) -> Result<Tensor> {
        let (h, w) = self.correlation.upsampled.hw()?;
        postprocess_map(&self.complete_raw, h, w)
    }
}

/// Last layer with a `[C,H,W]` output; the default layer to explain.
pub fn default_layer(net: &Network) -> Result<usize> {
    net.last_spatial_layer()
        .ok_or_else(|| Error::invalid("network has no spatial layer to explain"))
}

/// Class with the second-highest logit; ties go to the lowest index.
pub fn default_contrast(logits: &Tensor) -> Result<usize> {
    let p = predict(logits)?;
    let mut best: Option<(usize, f32)> = None;
    for (i, &v) in logits.data().iter().enumerate() {
        if i == p {
            continue;
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::invalid("need at least two classes for a contrast"))
}

fn check_class(net: &Network, class: usize) -> Result<()> {
    if class >= net.num_classes() {
        return Err(Error::invalid(format!(
            "class {class} out of range for {} classes",
            net.num_classes()
        )));
    }
    Ok(())
}

fn spatial_activation<'a>(
    net: &Network,
    trace: &'a ForwardTrace,
    layer: usize,
) -> Result<&'a Tensor> {
    match net.activation_shape(layer) {
        Some(s) if s.len() == 3 => trace.activation(layer),
        Some(s) => Err(Error::invalid(format!(
            "layer {layer} has non-spatial output {s:?}"
        ))),
        None => Err(Error::invalid(format!(
            "layer {layer} out of range for {} layers",
            net.layers().len()
        ))),
    }
}

/// Global-average-pooled gradient of the objective with logit gradient
/// `seed`, taken with respect to spatial activation `layer`.
pub fn importance_scores_for_seed(
    net: &Network,
    trace: &ForwardTrace,
    seed: &Tensor,
    layer: usize,
) -> Result<Tensor> {
    spatial_activation(net, trace, layer)?;
    let grad = net.backward_to_activation(trace, seed, layer)?;
    global_average_pool(&grad)
}

/// `relu(sum_k alphas[k] * activation[k])`, accumulated at 64 bits.
pub fn weighted_activation_map(activation: &Tensor, alphas: &Tensor) -> Result<Tensor> {
    let (k, h, w) = activation.chw()?;
    if alphas.shape() != [k] {
        return Err(Error::shape(format!(
            "{} importance scores for {k} channels",
            alphas.len()
        )));
    }
    alphas.ensure_finite("importance scores")?;
    let plane = h * w;
    let mut acc = vec![0.0f64; plane];
    for (ch, &a) in alphas.data().iter().enumerate() {
        let a = a as f64;
        for (dst, &v) in acc
            .iter_mut()
            .zip(&activation.data()[ch * plane..(ch + 1) * plane])
        {
            *dst += a * v as f64;
        }
    }
    let sum = Tensor::new(vec![h, w], acc.into_iter().map(|v| v as f32).collect())?;
    relu(&sum)
}

fn build_map(
    net: &Network,
    trace: &ForwardTrace,
    scores: &ImportanceScores,
) -> Result<ExplanationMap> {
    let activation = spatial_activation(net, trace, scores.layer)?;
    let raw = weighted_activation_map(activation, &scores.alphas)?;
    let (_, in_h, in_w) = trace.input.chw()?;
    let upsampled = postprocess_map(&raw, in_h, in_w)?;
    Ok(ExplanationMap {
        raw,
        upsampled,
        paradigm: scores.paradigm,
        layer: scores.layer,
        classes: scores.classes,
    })
}

/// Grad-CAM on an existing forward trace.
pub fn grad_cam_traced(
    net: &Network,
    trace: &ForwardTrace,
    class: usize,
    layer: usize,
) -> Result<(ImportanceScores, ExplanationMap)> {
    check_class(net, class)?;
    let seed = Tensor::one_hot(net.num_classes(), class)?;
    let scores = ImportanceScores {
        alphas: importance_scores_for_seed(net, trace, &seed, layer)?,
        paradigm: Paradigm::Correlation,
        layer,
        classes: ExplainedClasses {
            predicted: class,
            contrast: None,
        },
    };
    let map = build_map(net, trace, &scores)?;
    Ok((scores, map))
}

/// Observed correlation: "Why `class`?"
pub fn grad_cam(
    net: &Network,
    x: &Tensor,
    class: usize,
    layer: usize,
) -> Result<(ImportanceScores, ExplanationMap)> {
    grad_cam_traced(net, &net.forward(x)?, class, layer)
}

/// Counterfactual scores are exactly the negated correlation scores.
fn negate_scores(correlation: &ImportanceScores) -> ImportanceScores {
    ImportanceScores {
        alphas: correlation.alphas.map(|v| -v),
        paradigm: Paradigm::Counterfactual,
        ..correlation.clone()
    }
}

pub fn counterfactual_cam_traced(
    net: &Network,
    trace: &ForwardTrace,
    class: usize,
    layer: usize,
) -> Result<(ImportanceScores, ExplanationMap)> {
    let (cu, _) = grad_cam_traced(net, trace, class, layer)?;
    let scores = negate_scores(&cu);
    let map = build_map(net, trace, &scores)?;
    Ok((scores, map))
}

/// Observed counterfactual: "What if not `class`?"
pub fn counterfactual_cam(
    net: &Network,
    x: &Tensor,
    class: usize,
    layer: usize,
) -> Result<(ImportanceScores, ExplanationMap)> {
    counterfactual_cam_traced(net, &net.forward(x)?, class, layer)
}

pub fn contrast_cam_traced(
    net: &Network,
    trace: &ForwardTrace,
    query: ContrastQuery,
    layer: usize,
) -> Result<(ImportanceScores, ExplanationMap)> {
    check_class(net, query.predicted)?;
    check_class(net, query.contrast)?;
    let seed = loss_gradient(trace.logits(), query.contrast)?;
    let scores = ImportanceScores {
        alphas: importance_scores_for_seed(net, trace, &seed, layer)?,
        paradigm: Paradigm::Contrastive,
        layer,
        classes: ExplainedClasses {
            predicted: query.predicted,
            contrast: Some(query.contrast),
        },
    };
    let map = build_map(net, trace, &scores)?;
    Ok((scores, map))
}

/// Observed contrastive: "Why P, rather than Q?"
pub fn contrast_cam(
    net: &Network,
    x: &Tensor,
    query: ContrastQuery,
    layer: usize,
) -> Result<(ImportanceScores, ExplanationMap)> {
    contrast_cam_traced(net, &net.forward(x)?, query, layer)
}

/// All three paradigms for the predicted class on one shared forward trace,
/// plus their sum. `contrast` defaults to the runner-up class.
pub fn complete_explanation(
    net: &Network,
    x: &Tensor,
    layer: usize,
    contrast: Option<usize>,
) -> Result<CompleteExplanation> {
    let trace = net.forward(x)?;
    complete_explanation_traced(net, &trace, layer, contrast)
}

pub fn complete_explanation_traced(
    net: &Network,
    trace: &ForwardTrace,
    layer: usize,
    contrast: Option<usize>,
) -> Result<CompleteExplanation> {
    let predicted = predict(trace.logits())?;
    let contrast = match contrast {
        Some(q) => q,
        None => default_contrast(trace.logits())?,
    };
    let (cu_scores, correlation) = grad_cam_traced(net, trace, predicted, layer)?;
    let cf_scores = negate_scores(&cu_scores);
    let counterfactual = build_map(net, trace, &cf_scores)?;
    let (_, contrastive) = contrast_cam_traced(
        net,
        trace,
        ContrastQuery {
            predicted,
            contrast,
        },
        layer,
    )?;
    let complete_raw = correlation
        .raw
        .add(&contrastive.raw)?
        .add(&counterfactual.raw)?;
    Ok(CompleteExplanation {
        correlation,
        counterfactual,
        contrastive,
        complete_raw,
    })
}

/// Bilinear upsampling (half-pixel centers, edge clamped) to
/// `[target_h, target_w]` followed by division by the global maximum. An
/// all-zero map stays all-zero.
pub fn postprocess_map(raw: &Tensor, target_h: usize, target_w: usize) -> Result<Tensor> {
    let (h, w) = raw.hw()?;
    if h == 0 || w == 0 {
        return Err(Error::shape("cannot upsample an empty map"));
    }
    if target_h < h || target_w < w {
        return Err(Error::invalid(format!(
            "target {target_h}x{target_w} is smaller than map {h}x{w}"
        )));
    }
    raw.ensure_finite("postprocess_map")?;
    if raw.data().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("raw explanation map has negative values"));
    }
    let up = bilinear_resize(raw.data(), h, w, target_h, target_w);
    let max = up.iter().copied().fold(0.0f32, f32::max);
    let data = if max > 0.0 {
        up.into_iter().map(|v| (v / max).min(1.0)).collect()
    } else {
        vec![0.0; target_h * target_w]
    };
    Tensor::new(vec![target_h, target_w], data)
}

fn source_coord(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let s = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5)
        .clamp(0.0, (src_len - 1) as f64);
    let lo = s.floor() as usize;
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, s - lo as f64)
}

fn bilinear_resize(src: &[f32], h: usize, w: usize, th: usize, tw: usize) -> Vec<f32> {
    let cols: Vec<_> = (0..tw).map(|x| source_coord(x, w, tw)).collect();
    let mut out = Vec::with_capacity(th * tw);
    for y in 0..th {
        let (y0, y1, fy) = source_coord(y, h, th);
        for &(x0, x1, fx) in &cols {
            let at = |yy: usize, xx: usize| src[yy * w + xx] as f64;
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
            let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
            out.push((top * (1.0 - fy) + bottom * fy) as f32);
        }
    }
    out
}
