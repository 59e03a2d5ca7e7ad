//! Training objective: content, style, and two identity terms over a
//! pluggable multi-stage feature extractor. Distances are L2 norms (not
//! squared); style statistics are per-channel spatial means and standard
//! deviations (variance switchable).
//!
//! The extractor here is a fixed random-weight conv stack standing in for
//! a large pretrained network: frozen random features preserve every
//! mathematical property the losses are tested for, and externally loaded
//! stage weights can be plugged in through `from_stage_weights`.

use crate::error::{Error, Result};
use crate::init::{rng_from_seed, Rng64};
use crate::net::SaMamModel;
use crate::scalar::Scalar;
use crate::tensor::{Padding, Tensor};
use rand::Rng;

/// Interpretation of the sigma term in the style distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatKind {
    StdDev,
    Variance,
}

/// Guard added under the variance sqrt so constant channels stay
/// differentiable.
const VAR_EPS: f64 = 1e-12;

/// Frozen multi-stage conv feature pyramid. Stage 0 is the raw image;
/// stage i is a stride-2 same-padded 3x3 convolution of stage i-1 followed
/// by ReLU. Stage weights never require gradients.
#[derive(Debug, Clone)]
pub struct FeatureExtractor<S: Scalar> {
    pub stages: Vec<Tensor<S>>,
    pub l_c: Vec<usize>,
    pub l_s: Vec<usize>,
    pub l_id: Vec<usize>,
    pub stat: StatKind,
}

fn frozen_kaiming<S: Scalar>(rng: &mut Rng64, shape: &[usize], fan_in: usize) -> Tensor<S> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<S> = (0..n)
        .map(|_| S::lit(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::from_vec(data, shape).expect("generated data matches shape")
}

impl<S: Scalar> FeatureExtractor<S> {
    /// Default desk-scale extractor: widths 8/16/32/64, content from stage
    /// 3, style and identity from stages 1..4.
    pub fn new_random(seed: u64) -> Self {
        Self::with_widths(seed, &[8, 16, 32, 64])
    }

    pub fn with_widths(seed: u64, widths: &[usize]) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut stages = Vec::with_capacity(widths.len());
        let mut prev = 3;
        for &w in widths {
            stages.push(frozen_kaiming(&mut rng, &[w, prev, 3, 3], prev * 9));
            prev = w;
        }
        let deep: Vec<usize> = (1..=widths.len()).collect();
        FeatureExtractor {
            stages,
            l_c: vec![widths.len().min(3)],
            l_s: deep.clone(),
            l_id: deep,
            stat: StatKind::StdDev,
        }
    }

    /// Degenerate extractor exposing only the raw image (stage 0); useful
    /// for statistics-only properties.
    pub fn raw_only() -> Self {
        FeatureExtractor {
            stages: Vec::new(),
            l_c: vec![0],
            l_s: vec![0],
            l_id: vec![0],
            stat: StatKind::StdDev,
        }
    }

    /// Builds an extractor from externally supplied stage kernels (e.g. a
    /// real pretrained network). Kernels are detached so they stay frozen.
    pub fn from_stage_weights(
        weights: Vec<Tensor<S>>,
        l_c: Vec<usize>,
        l_s: Vec<usize>,
        l_id: Vec<usize>,
        stat: StatKind,
    ) -> Result<Self> {
        let mut prev = 3;
        for (i, w) in weights.iter().enumerate() {
            let s = w.shape();
            if s.len() != 4 || s[1] != prev || s[2] != 3 || s[3] != 3 {
                return Err(Error::InvalidShape {
                    op: "feature_extractor",
                    expected: format!("stage {i} kernel [*,{prev},3,3]"),
                    got: s.to_vec(),
                });
            }
            prev = s[0];
        }
        let n_stages = weights.len();
        for set in [&l_c, &l_s, &l_id] {
            if let Some(&bad) = set.iter().find(|&&l| l > n_stages) {
                return Err(Error::Config {
                    detail: format!("loss layer index {bad} exceeds stage count {n_stages}"),
                });
            }
        }
        Ok(FeatureExtractor {
            stages: weights.into_iter().map(|w| w.detach()).collect(),
            l_c,
            l_s,
            l_id,
            stat,
        })
    }

    /// Feature pyramid for an image: index 0 is the image itself, then one
    /// entry per stage.
    pub fn features(&self, img: &Tensor<S>) -> Result<Vec<Tensor<S>>> {
        let mut out = Vec::with_capacity(self.stages.len() + 1);
        out.push(img.clone());
        let mut cur = img.clone();
        for w in &self.stages {
            cur = cur.conv2d(w, 1, 2, Padding::Same)?.relu();
            out.push(cur.clone());
        }
        Ok(out)
    }
}

/// L2 norm of (a - b), with the exact-zero case short-circuited to a
/// constant so the norm's root never sees a zero argument.
fn l2_distance<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    let d = a.sub(b)?;
    let s = d.mul(&d)?.sum_all();
    if s.item()? == S::zero() {
        return Ok(Tensor::scalar(S::zero()));
    }
    Ok(s.sqrt())
}

/// Per-channel spatial mean and deviation statistics of a feature map.
fn channel_stats<S: Scalar>(f: &Tensor<S>, stat: StatKind) -> Result<(Tensor<S>, Tensor<S>)> {
    let mu = f.mean_trailing()?;
    let centered = f.sub(&mu)?;
    let var = centered.mul(&centered)?.mean_trailing()?;
    let sigma = match stat {
        StatKind::Variance => var,
        StatKind::StdDev => var.add_scalar(S::lit(VAR_EPS)).sqrt(),
    };
    Ok((mu, sigma))
}

/// Content term: sum over the content layer set of feature-difference
/// norms. Requires matching image shapes.
pub fn content_loss<S: Scalar>(
    i_cs: &Tensor<S>,
    i_c: &Tensor<S>,
    fx: &FeatureExtractor<S>,
) -> Result<Tensor<S>> {
    if i_cs.shape() != i_c.shape() {
        return Err(Error::ShapeMismatch {
            op: "content_loss",
            lhs: i_cs.shape().to_vec(),
            rhs: i_c.shape().to_vec(),
        });
    }
    let fa = fx.features(i_cs)?;
    let fb = fx.features(i_c)?;
    let mut total = Tensor::scalar(S::zero());
    for &l in &fx.l_c {
        total = total.add(&l2_distance(&fa[l], &fb[l])?)?;
    }
    Ok(total)
}

/// Style term: per-layer distance between channel statistics. The images
/// may differ in size since the statistics are spatial reductions.
pub fn style_loss<S: Scalar>(
    i_cs: &Tensor<S>,
    i_s: &Tensor<S>,
    fx: &FeatureExtractor<S>,
) -> Result<Tensor<S>> {
    let fa = fx.features(i_cs)?;
    let fb = fx.features(i_s)?;
    let mut total = Tensor::scalar(S::zero());
    for &l in &fx.l_s {
        let (mu_a, sg_a) = channel_stats(&fa[l], fx.stat)?;
        let (mu_b, sg_b) = channel_stats(&fb[l], fx.stat)?;
        total = total
            .add(&l2_distance(&mu_a, &mu_b)?)?
            .add(&l2_distance(&sg_a, &sg_b)?)?;
    }
    Ok(total)
}

/// Identity terms: re-stylize each image with itself; the first term is
/// the pixel-space reconstruction distance, the second the feature-space
/// one over the identity layer set.
pub fn identity_losses<S: Scalar>(
    model: &SaMamModel<S>,
    i_c: &Tensor<S>,
    i_s: &Tensor<S>,
    fx: &FeatureExtractor<S>,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let i_cc = model.stylize(i_c, i_c)?;
    let i_ss = model.stylize(i_s, i_s)?;
    let id1 = l2_distance(&i_cc, i_c)?.add(&l2_distance(&i_ss, i_s)?)?;
    let f_cc = fx.features(&i_cc)?;
    let f_c = fx.features(i_c)?;
    let f_ss = fx.features(&i_ss)?;
    let f_s = fx.features(i_s)?;
    let mut id2 = Tensor::scalar(S::zero());
    for &l in &fx.l_id {
        id2 = id2
            .add(&l2_distance(&f_cc[l], &f_c[l])?)?
            .add(&l2_distance(&f_ss[l], &f_s[l])?)?;
    }
    Ok((id1, id2))
}

/// Scalar weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_s: f64,
    pub lambda_id1: f64,
    pub lambda_id2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_s: 10.0,
            lambda_id1: 1.0,
            lambda_id2: 50.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("lambda_s", self.lambda_s),
            ("lambda_id1", self.lambda_id1),
            ("lambda_id2", self.lambda_id2),
        ] {
            if v < 0.0 {
                return Err(Error::NonPositive { what, value: v });
            }
        }
        Ok(())
    }
}

/// The four scalar loss parts of one training step.
#[derive(Debug, Clone)]
pub struct LossParts<S: Scalar> {
    pub content: Tensor<S>,
    pub style: Tensor<S>,
    pub id1: Tensor<S>,
    pub id2: Tensor<S>,
}

/// Weighted sum: content + lambda_s*style + lambda_id1*id1 + lambda_id2*id2.
pub fn total_loss<S: Scalar>(parts: &LossParts<S>, w: &LossWeights) -> Result<Tensor<S>> {
    parts
        .content
        .add(&parts.style.mul_scalar(S::lit(w.lambda_s)))?
        .add(&parts.id1.mul_scalar(S::lit(w.lambda_id1)))?
        .add(&parts.id2.mul_scalar(S::lit(w.lambda_id2)))
}

/// Convenience: all four parts for a content/style image pair.
pub fn loss_parts<S: Scalar>(
    model: &SaMamModel<S>,
    i_c: &Tensor<S>,
    i_s: &Tensor<S>,
    fx: &FeatureExtractor<S>,
) -> Result<LossParts<S>> {
    let i_cs = model.stylize(i_c, i_s)?;
    let content = content_loss(&i_cs, i_c, fx)?;
    let style = style_loss(&i_cs, i_s, fx)?;
    let (id1, id2) = identity_losses(model, i_c, i_s, fx)?;
    Ok(LossParts {
        content,
        style,
        id1,
        id2,
    })
}
