//! Style-aware building blocks: SAIN, SConv, SCM, the S7 scan block and
//! the full style-aware state-space module, plus the style-free VSSM and
//! local-enhancement blocks the encoders use.

use crate::error::{Error, Result};
use crate::init::{kaiming_uniform, softplus_inverse_uniform, zeros_param, Rng64};
use crate::scalar::Scalar;
use crate::scan::{cached_path, gather, merge, ScanMode};
use crate::ssm::{selective_scan, Discretization, ScanProjection};
use crate::tensor::{Padding, Tensor};

/// Epsilon inside every normalization's sqrt.
pub const NORM_EPS: f64 = 1e-5;

/// Number of directional scan paths every scan block runs.
pub const NUM_PATHS: usize = 4;

/// Style feature map with its spatially pooled summary, computed once at
/// construction. All style conditioning reads the pooled vector, so the
/// blocks are independent of the style image's spatial size.
#[derive(Debug, Clone)]
pub struct StyleEmbedding<S: Scalar> {
    pub map: Tensor<S>,
    pub pooled: Tensor<S>,
}

impl<S: Scalar> StyleEmbedding<S> {
    pub fn new(map: Tensor<S>) -> Result<Self> {
        if map.shape().len() != 3 {
            return Err(Error::InvalidShape {
                op: "style_embedding",
                expected: "a [C,Hs,Ws] feature map".into(),
                got: map.shape().to_vec(),
            });
        }
        let pooled = map.mean_trailing()?;
        Ok(StyleEmbedding { map, pooled })
    }

    pub fn channels(&self) -> usize {
        self.map.shape()[0]
    }
}

/// Single affine map from the pooled style vector to a parameter block.
/// Flagged embedders start at exactly zero so the enclosing module begins
/// as a pure (scaled) residual.
#[derive(Debug, Clone)]
pub struct Embedder<S: Scalar> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
    pub zero_init: bool,
}

impl<S: Scalar> Embedder<S> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Embedder {
            weight: zeros_param(&[out_dim, in_dim]),
            bias: zeros_param(&[out_dim]),
            zero_init: true,
        }
    }

    pub fn random(rng: &mut Rng64, in_dim: usize, out_dim: usize) -> Self {
        Embedder {
            weight: kaiming_uniform(rng, &[out_dim, in_dim], in_dim),
            bias: zeros_param(&[out_dim]),
            zero_init: false,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Applies the affine map to a pooled style vector `[C] -> [out]`.
    pub fn forward(&self, pooled: &Tensor<S>) -> Result<Tensor<S>> {
        let c = self.in_dim();
        if pooled.shape() != [c] {
            return Err(Error::InvalidShape {
                op: "embedder",
                expected: format!("pooled style vector [{c}]"),
                got: pooled.shape().to_vec(),
            });
        }
        let out = self.out_dim();
        let y = pooled
            .reshape(&[1, c])?
            .matmul(&self.weight.transpose2()?)?
            .add(&self.bias.reshape(&[1, out])?)?;
        y.reshape(&[out])
    }
}

/// Bias-free channel mixing at every spatial site: `[Cin,H,W] -> [Cout,H,W]`
/// with weight `[Cout,Cin]`.
pub fn channel_linear<S: Scalar>(x: &Tensor<S>, weight: &Tensor<S>) -> Result<Tensor<S>> {
    let xs = x.shape().to_vec();
    let ws = weight.shape().to_vec();
    if xs.len() != 3 || ws.len() != 2 || ws[1] != xs[0] {
        return Err(Error::ShapeMismatch {
            op: "channel_linear",
            lhs: xs,
            rhs: ws,
        });
    }
    let (c, h, w) = (xs[0], xs[1], xs[2]);
    let l = h * w;
    let seq = x.reshape(&[c, l])?.transpose2()?; // [L,Cin]
    let y = seq.matmul(&weight.transpose2()?)?; // [L,Cout]
    y.transpose2()?.reshape(&[ws[0], h, w])
}

/// Style-aware instance normalization: per-channel scale and shift are
/// predicted from the pooled style. `emb` must output 2D values for a
/// D-channel input (scales first, shifts second).
pub fn sain<S: Scalar>(
    x: &Tensor<S>,
    style: &StyleEmbedding<S>,
    emb: &Embedder<S>,
) -> Result<Tensor<S>> {
    let d = x.shape()[0];
    if emb.out_dim() != 2 * d {
        return Err(Error::InvalidShape {
            op: "sain",
            expected: format!("embedder output [{}]", 2 * d),
            got: vec![emb.out_dim()],
        });
    }
    let gb = emb.forward(&style.pooled)?;
    let gamma = gb.narrow0(0, d)?;
    let beta = gb.narrow0(d, d)?;
    gamma.mul(&x.instance_norm(NORM_EPS)?)?.add(&beta)
}

/// Style-predicted depthwise convolution; `emb` outputs one k x k kernel
/// per channel, applied same-padded.
pub fn sconv<S: Scalar>(
    x: &Tensor<S>,
    style: &StyleEmbedding<S>,
    emb: &Embedder<S>,
    k: usize,
) -> Result<Tensor<S>> {
    let e = x.shape()[0];
    if emb.out_dim() != e * k * k {
        return Err(Error::InvalidShape {
            op: "sconv",
            expected: format!("embedder output [{}]", e * k * k),
            got: vec![emb.out_dim()],
        });
    }
    let kernels = emb.forward(&style.pooled)?.reshape(&[e, 1, k, k])?;
    x.conv2d(&kernels, e, 1, Padding::Same)
}

/// Style-aware channel modulation: x scaled per channel by
/// sigmoid(emb(pooled)), so a zero embedder gives exactly 0.5 x.
pub fn scm<S: Scalar>(
    x: &Tensor<S>,
    style: &StyleEmbedding<S>,
    emb: &Embedder<S>,
) -> Result<Tensor<S>> {
    let c = x.shape()[0];
    if emb.out_dim() != c {
        return Err(Error::InvalidShape {
            op: "scm",
            expected: format!("embedder output [{c}]"),
            got: vec![emb.out_dim()],
        });
    }
    emb.forward(&style.pooled)?.sigmoid().mul(x)
}

/// One scan head whose state matrix and skip gain come from the style:
/// A = -softplus(Embedder_A(pooled)) reshaped [N,E], D = Embedder_D(pooled).
#[derive(Debug, Clone)]
pub struct S7Weights<S: Scalar> {
    pub proj: ScanProjection<S>,
    pub emb_a: Embedder<S>,
    pub emb_d: Embedder<S>,
    pub n: usize,
    pub e: usize,
}

impl<S: Scalar> S7Weights<S> {
    pub fn init(rng: &mut Rng64, c: usize, e: usize, n: usize) -> Self {
        S7Weights {
            proj: ScanProjection {
                w_b: kaiming_uniform(rng, &[n, e], e),
                w_c: kaiming_uniform(rng, &[n, e], e),
                w_delta: kaiming_uniform(rng, &[e, e], e),
                delta_bias: softplus_inverse_uniform(rng, &[e], 0.001, 0.1),
            },
            emb_a: Embedder::random(rng, c, n * e),
            emb_d: Embedder::random(rng, c, e),
            n,
            e,
        }
    }
}

pub fn s7_block<S: Scalar>(
    x_seq: &Tensor<S>,
    style: &StyleEmbedding<S>,
    w: &S7Weights<S>,
    disc: Discretization,
) -> Result<Tensor<S>> {
    let (n, e) = (w.n, w.e);
    let a = w
        .emb_a
        .forward(&style.pooled)?
        .softplus()
        .neg()
        .reshape(&[n, e])?;
    let d = w.emb_d.forward(&style.pooled)?;
    selective_scan(x_seq, &w.proj, &a, &d, disc)
}

/// All learned state of one style-aware state-space module.
#[derive(Debug, Clone)]
pub struct SAVSSMWeights<S: Scalar> {
    pub sain_pre: Embedder<S>,
    pub in_proj: Tensor<S>,
    pub sconv_emb: Embedder<S>,
    pub paths: Vec<S7Weights<S>>,
    pub sain_post: Embedder<S>,
    pub out_proj: Tensor<S>,
    pub scm_emb: Embedder<S>,
    pub c: usize,
    pub e: usize,
    pub kernel: usize,
}

impl<S: Scalar> SAVSSMWeights<S> {
    pub fn init(rng: &mut Rng64, c: usize, e: usize, n: usize, kernel: usize) -> Self {
        SAVSSMWeights {
            sain_pre: Embedder::zeros(c, 2 * c),
            in_proj: kaiming_uniform(rng, &[e, c], c),
            sconv_emb: Embedder::random(rng, c, e * kernel * kernel),
            paths: (0..NUM_PATHS)
                .map(|_| S7Weights::init(rng, c, e, n))
                .collect(),
            sain_post: Embedder::zeros(c, 2 * e),
            out_proj: kaiming_uniform(rng, &[c, e], e),
            scm_emb: Embedder::zeros(c, c),
            c,
            e,
            kernel,
        }
    }
}

/// The full style-aware module: SAIN, channel expansion, style-predicted
/// depthwise conv with SiLU, four directional scan heads summed, SAIN at
/// the expanded width, channel contraction, plus the channel-modulated
/// residual of the ORIGINAL input. With zero-initialized SAIN/SCM
/// embedders the whole map is exactly x / 2.
///
/// `conv_only` replaces the scan branch with zeros (ablation support).
pub fn savssm_forward<S: Scalar>(
    x: &Tensor<S>,
    style: &StyleEmbedding<S>,
    w: &SAVSSMWeights<S>,
    mode: ScanMode,
    disc: Discretization,
    conv_only: bool,
) -> Result<Tensor<S>> {
    let xs = x.shape().to_vec();
    if xs.len() != 3 || xs[0] != w.c {
        return Err(Error::InvalidShape {
            op: "savssm",
            expected: format!("[{},H,W] input", w.c),
            got: xs,
        });
    }
    let residual = scm(x, style, &w.scm_emb)?;
    if conv_only {
        return Ok(residual);
    }
    let (h, wd) = (xs[1], xs[2]);
    let normed = sain(x, style, &w.sain_pre)?;
    let expanded = channel_linear(&normed, &w.in_proj)?;
    let local = sconv(&expanded, style, &w.sconv_emb, w.kernel)?.silu()?;
    let mut summed: Option<Tensor<S>> = None;
    for (p, head) in w.paths.iter().enumerate() {
        let path = cached_path(mode, h, wd, p)?;
        let seq = gather(&local, &path)?;
        let y = s7_block(&seq, style, head, disc)?;
        let back = merge(&y, &path)?;
        summed = Some(match summed {
            None => back,
            Some(acc) => acc.add(&back)?,
        });
    }
    let summed = summed.expect("at least one scan path");
    let renormed = sain(&summed, style, &w.sain_post)?;
    let contracted = channel_linear(&renormed, &w.out_proj)?;
    contracted.add(&residual)
}

/// Learned state of one style-free encoder scan block.
#[derive(Debug, Clone)]
pub struct VSSMWeights<S: Scalar> {
    pub in_proj: Tensor<S>,
    pub dwconv: Tensor<S>,
    pub paths: Vec<ScanProjection<S>>,
    pub a_raw: Tensor<S>,
    pub d: Tensor<S>,
    pub out_proj: Tensor<S>,
    pub c: usize,
    pub e: usize,
    pub n: usize,
}

impl<S: Scalar> VSSMWeights<S> {
    pub fn init(rng: &mut Rng64, c: usize, e: usize, n: usize) -> Self {
        let paths = (0..NUM_PATHS)
            .map(|_| ScanProjection {
                w_b: kaiming_uniform(rng, &[n, e], e),
                w_c: kaiming_uniform(rng, &[n, e], e),
                w_delta: kaiming_uniform(rng, &[e, e], e),
                delta_bias: softplus_inverse_uniform(rng, &[e], 0.001, 0.1),
            })
            .collect();
        VSSMWeights {
            in_proj: kaiming_uniform(rng, &[e, c], c),
            dwconv: kaiming_uniform(rng, &[e, 1, 3, 3], 9),
            paths,
            a_raw: softplus_inverse_uniform(rng, &[n, e], 0.2, 2.5),
            d: Tensor::param(vec![S::one(); e], &[e]).expect("d shape"),
            out_proj: kaiming_uniform(rng, &[c, e], e),
            c,
            e,
            n,
        }
    }
}

/// Style-free scan block: channel expansion, learned depthwise conv with
/// SiLU, four directional scans with a learned constant state matrix,
/// instance normalization, channel contraction, plus the plain residual.
pub fn vssm_forward<S: Scalar>(
    x: &Tensor<S>,
    w: &VSSMWeights<S>,
    mode: ScanMode,
    disc: Discretization,
    conv_only: bool,
) -> Result<Tensor<S>> {
    let xs = x.shape().to_vec();
    if xs.len() != 3 || xs[0] != w.c {
        return Err(Error::InvalidShape {
            op: "vssm",
            expected: format!("[{},H,W] input", w.c),
            got: xs,
        });
    }
    if conv_only {
        return Ok(x.clone());
    }
    let (h, wd) = (xs[1], xs[2]);
    let expanded = channel_linear(x, &w.in_proj)?;
    let local = expanded.conv2d(&w.dwconv, w.e, 1, Padding::Same)?.silu()?;
    let a = w.a_raw.softplus().neg();
    let mut summed: Option<Tensor<S>> = None;
    for (p, proj) in w.paths.iter().enumerate() {
        let path = cached_path(mode, h, wd, p)?;
        let seq = gather(&local, &path)?;
        let y = selective_scan(&seq, proj, &a, &w.d, disc)?;
        let back = merge(&y, &path)?;
        summed = Some(match summed {
            None => back,
            Some(acc) => acc.add(&back)?,
        });
    }
    let normed = summed
        .expect("at least one scan path")
        .instance_norm(NORM_EPS)?;
    channel_linear(&normed, &w.out_proj)?.add(x)
}

/// Learned state of a local-enhancement block.
#[derive(Debug, Clone)]
pub struct LoEWeights<S: Scalar> {
    pub conv: Tensor<S>,
    pub w_reduce: Tensor<S>,
    pub w_expand: Tensor<S>,
    pub c: usize,
}

impl<S: Scalar> LoEWeights<S> {
    /// Channel-attention reduction ratio.
    pub const REDUCTION: usize = 4;

    pub fn init(rng: &mut Rng64, c: usize) -> Self {
        let r = (c / Self::REDUCTION).max(1);
        LoEWeights {
            conv: kaiming_uniform(rng, &[c, c, 3, 3], c * 9),
            w_reduce: kaiming_uniform(rng, &[r, c], c),
            w_expand: kaiming_uniform(rng, &[c, r], r),
            c,
        }
    }
}

/// Local enhancement: y = x + attn(conv3x3(x)) where attn rescales each
/// channel by a squeeze-excitation gate. `bypass_gate` drops the gate and
/// adds the raw convolution (ablation support, keeps the block strictly
/// local).
pub fn local_enhance<S: Scalar>(
    x: &Tensor<S>,
    w: &LoEWeights<S>,
    bypass_gate: bool,
) -> Result<Tensor<S>> {
    let z = x.conv2d(&w.conv, 1, 1, Padding::Same)?;
    if bypass_gate {
        return x.add(&z);
    }
    let gate = z
        .mean_trailing()?
        .reshape(&[1, w.c])?
        .matmul(&w.w_reduce.transpose2()?)?
        .relu()
        .matmul(&w.w_expand.transpose2()?)?
        .sigmoid()
        .reshape(&[w.c])?;
    x.add(&gate.mul(&z)?)
}
