//! The assembled model: content and style encoders, the style-aware
//! decoder, patch embedding, the synthesis head, and the receptive-field
//! probe. Every learned tensor is reachable through `named_params`, which
//! fixes the checkpoint layout.

use crate::blocks::{
    local_enhance, savssm_forward, vssm_forward, Embedder, LoEWeights, SAVSSMWeights,
    StyleEmbedding, VSSMWeights,
};
use crate::error::{Error, Result};
use crate::init::{kaiming_uniform, rng_from_seed, Rng64};
use crate::scalar::Scalar;
use crate::scan::ScanMode;
use crate::ssm::Discretization;
use crate::tensor::{Padding, Tensor};

/// Patch-embedding kernel size and stride (images downscale by 4x).
pub const PATCH: usize = 4;

/// Architecture hyperparameters. `desk` is the size every test runs at,
/// `tiny` the gradient-audit size, `paper` the published scale (reported
/// analytically, far too large to train here).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub c: usize,
    pub e: usize,
    pub n: usize,
    pub encoder_depth: usize,
    pub groups: usize,
    pub blocks_per_group: usize,
    pub kernel: usize,
    pub scan_mode: ScanMode,
    pub discretization: Discretization,
    pub use_loe: bool,
    pub conv_only: bool,
    pub seed: u64,
}

impl ModelConfig {
    pub fn desk() -> Self {
        ModelConfig {
            c: 16,
            e: 32,
            n: 4,
            encoder_depth: 2,
            groups: 2,
            blocks_per_group: 2,
            kernel: 3,
            scan_mode: ScanMode::Zigzag,
            discretization: Discretization::Simplified,
            use_loe: true,
            conv_only: false,
            seed: 0,
        }
    }

    pub fn tiny() -> Self {
        ModelConfig {
            c: 4,
            e: 8,
            n: 2,
            encoder_depth: 1,
            groups: 1,
            blocks_per_group: 1,
            ..Self::desk()
        }
    }

    pub fn paper() -> Self {
        ModelConfig {
            c: 256,
            e: 512,
            n: 16,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("c", self.c),
            ("e", self.e),
            ("n", self.n),
            ("encoder_depth", self.encoder_depth),
            ("groups", self.groups),
            ("blocks_per_group", self.blocks_per_group),
            ("kernel", self.kernel),
        ] {
            if v == 0 {
                return Err(Error::NonPositive { what, value: 0.0 });
            }
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::EvenKernel {
                kh: self.kernel,
                kw: self.kernel,
            });
        }
        Ok(())
    }

    /// Stable key=value serialization (one pair per line).
    pub fn to_kv_text(&self) -> String {
        format!(
            "c={}\ne={}\nn={}\nencoder_depth={}\ngroups={}\nblocks_per_group={}\n\
             kernel={}\nscan_mode={}\ndiscretization={}\nuse_loe={}\nconv_only={}\nseed={}\n",
            self.c,
            self.e,
            self.n,
            self.encoder_depth,
            self.groups,
            self.blocks_per_group,
            self.kernel,
            self.scan_mode.name(),
            self.discretization.name(),
            self.use_loe,
            self.conv_only,
            self.seed
        )
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = Self::desk();
        let mut seen = 0usize;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                detail: format!("malformed config line '{line}'"),
            })?;
            let parse_usize = |v: &str| {
                v.parse::<usize>().map_err(|_| Error::Config {
                    detail: format!("bad integer '{v}' for key '{key}'"),
                })
            };
            let parse_bool = |v: &str| {
                v.parse::<bool>().map_err(|_| Error::Config {
                    detail: format!("bad boolean '{v}' for key '{key}'"),
                })
            };
            match key {
                "c" => cfg.c = parse_usize(value)?,
                "e" => cfg.e = parse_usize(value)?,
                "n" => cfg.n = parse_usize(value)?,
                "encoder_depth" => cfg.encoder_depth = parse_usize(value)?,
                "groups" => cfg.groups = parse_usize(value)?,
                "blocks_per_group" => cfg.blocks_per_group = parse_usize(value)?,
                "kernel" => cfg.kernel = parse_usize(value)?,
                "scan_mode" => cfg.scan_mode = ScanMode::parse(value)?,
                "discretization" => cfg.discretization = Discretization::parse(value)?,
                "use_loe" => cfg.use_loe = parse_bool(value)?,
                "conv_only" => cfg.conv_only = parse_bool(value)?,
                "seed" => {
                    cfg.seed = value.parse::<u64>().map_err(|_| Error::Config {
                        detail: format!("bad seed '{value}'"),
                    })?
                }
                other => {
                    return Err(Error::Config {
                        detail: format!("unknown config key '{other}'"),
                    })
                }
            }
            seen += 1;
        }
        if seen == 0 {
            return Err(Error::Config {
                detail: "empty config block".into(),
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Content,
    Style,
}

/// One encoder: patch embedding, a VSSM stack, local enhancement.
#[derive(Debug, Clone)]
pub struct EncoderWeights<S: Scalar> {
    pub patch: Tensor<S>,
    pub blocks: Vec<VSSMWeights<S>>,
    pub loe: LoEWeights<S>,
}

impl<S: Scalar> EncoderWeights<S> {
    fn init(rng: &mut Rng64, cfg: &ModelConfig) -> Self {
        EncoderWeights {
            patch: kaiming_uniform(rng, &[cfg.c, 3, PATCH, PATCH], 3 * PATCH * PATCH),
            blocks: (0..cfg.encoder_depth)
                .map(|_| VSSMWeights::init(rng, cfg.c, cfg.e, cfg.n))
                .collect(),
            loe: LoEWeights::init(rng, cfg.c),
        }
    }
}

/// One decoder group: a SAVSSM stack followed by local enhancement.
#[derive(Debug, Clone)]
pub struct DecoderGroup<S: Scalar> {
    pub blocks: Vec<SAVSSMWeights<S>>,
    pub loe: LoEWeights<S>,
}

/// The decoder: grouped style-aware blocks and the synthesis head.
#[derive(Debug, Clone)]
pub struct DecoderWeights<S: Scalar> {
    pub groups: Vec<DecoderGroup<S>>,
    pub head_conv1: Tensor<S>,
    pub head_conv2: Tensor<S>,
    pub head_out: Tensor<S>,
}

impl<S: Scalar> DecoderWeights<S> {
    fn init(rng: &mut Rng64, cfg: &ModelConfig) -> Self {
        let groups = (0..cfg.groups)
            .map(|_| DecoderGroup {
                blocks: (0..cfg.blocks_per_group)
                    .map(|_| SAVSSMWeights::init(rng, cfg.c, cfg.e, cfg.n, cfg.kernel))
                    .collect(),
                loe: LoEWeights::init(rng, cfg.c),
            })
            .collect();
        let c = cfg.c;
        DecoderWeights {
            groups,
            head_conv1: kaiming_uniform(rng, &[c, c, 3, 3], c * 9),
            head_conv2: kaiming_uniform(rng, &[c, c, 3, 3], c * 9),
            head_out: kaiming_uniform(rng, &[3, c, 3, 3], c * 9),
        }
    }
}

/// The full style-transfer model.
#[derive(Debug, Clone)]
pub struct SaMamModel<S: Scalar> {
    pub config: ModelConfig,
    pub content_encoder: EncoderWeights<S>,
    pub style_encoder: EncoderWeights<S>,
    pub decoder: DecoderWeights<S>,
}

/// Strided patch embedding: `[3,4H,4W] -> [C,H,W]` via a 4x4 stride-4
/// convolution. Dimensions must be divisible by 4; callers pad first.
pub fn patch_embed<S: Scalar>(img: &Tensor<S>, kernel: &Tensor<S>) -> Result<Tensor<S>> {
    let s = img.shape().to_vec();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::InvalidShape {
            op: "patch_embed",
            expected: "an RGB image tensor [3,H,W]".into(),
            got: s,
        });
    }
    if !s[1].is_multiple_of(PATCH) || !s[2].is_multiple_of(PATCH) || s[1] == 0 || s[2] == 0 {
        return Err(Error::Config {
            detail: format!(
                "image dims {}x{} not divisible by {PATCH}; pad the image first",
                s[1], s[2]
            ),
        });
    }
    img.conv2d(kernel, 1, PATCH, Padding::Valid)
}

impl<S: Scalar> SaMamModel<S> {
    /// Builds a fresh model; all randomness derives from `config.seed`, so
    /// equal configs give bit-identical weights.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from_seed(config.seed);
        let content_encoder = EncoderWeights::init(&mut rng, &config);
        let style_encoder = EncoderWeights::init(&mut rng, &config);
        let decoder = DecoderWeights::init(&mut rng, &config);
        Ok(SaMamModel {
            config,
            content_encoder,
            style_encoder,
            decoder,
        })
    }

    pub fn encode(&self, img: &Tensor<S>, which: EncoderKind) -> Result<Tensor<S>> {
        let enc = match which {
            EncoderKind::Content => &self.content_encoder,
            EncoderKind::Style => &self.style_encoder,
        };
        let mut f = patch_embed(img, &enc.patch)?;
        for block in &enc.blocks {
            f = vssm_forward(
                &f,
                block,
                self.config.scan_mode,
                self.config.discretization,
                self.config.conv_only,
            )?;
        }
        if self.config.use_loe {
            f = local_enhance(&f, &enc.loe, self.config.conv_only)?;
        }
        Ok(f)
    }

    pub fn style_embedding(&self, style_img: &Tensor<S>) -> Result<StyleEmbedding<S>> {
        StyleEmbedding::new(self.encode(style_img, EncoderKind::Style)?)
    }

    /// Decoder: grouped style-aware blocks, then the synthesis head
    /// (conv+SiLU+upsample twice, final conv to RGB). Output is raw,
    /// unclamped; clamp to [0,1] only when writing image files.
    pub fn decode(&self, e_c: &Tensor<S>, style: &StyleEmbedding<S>) -> Result<Tensor<S>> {
        let mut f = e_c.clone();
        for group in &self.decoder.groups {
            for block in &group.blocks {
                f = savssm_forward(
                    &f,
                    style,
                    block,
                    self.config.scan_mode,
                    self.config.discretization,
                    self.config.conv_only,
                )?;
            }
            if self.config.use_loe {
                f = local_enhance(&f, &group.loe, self.config.conv_only)?;
            }
        }
        let f = f
            .conv2d(&self.decoder.head_conv1, 1, 1, Padding::Same)?
            .silu()?
            .upsample_nearest2x()?;
        let f = f
            .conv2d(&self.decoder.head_conv2, 1, 1, Padding::Same)?
            .silu()?
            .upsample_nearest2x()?;
        f.conv2d(&self.decoder.head_out, 1, 1, Padding::Same)
    }

    /// Full pipeline: encode both images, condition the decoder on the
    /// pooled style embedding. Output spatial dims equal the content's.
    pub fn stylize(&self, content: &Tensor<S>, style_img: &Tensor<S>) -> Result<Tensor<S>> {
        let e_c = self.encode(content, EncoderKind::Content)?;
        let style = self.style_embedding(style_img)?;
        self.decode(&e_c, &style)
    }

    /// Receptive-field probe: gradient magnitude of the center output
    /// pixel (summed over RGB) with respect to every input pixel of a
    /// mid-gray content image, channel-summed and normalized so the
    /// largest entry is 1. The style input is a fixed mid-gray image, so
    /// the map reflects the content pathway only. Parameter gradients are
    /// cleared before returning.
    pub fn erf_map(&self, input_size: usize) -> Result<Vec<S>> {
        if !input_size.is_multiple_of(PATCH) || input_size == 0 {
            return Err(Error::Config {
                detail: format!(
                    "erf input size {input_size} must be a positive multiple of {PATCH}"
                ),
            });
        }
        let hw = input_size;
        let half = S::lit(0.5);
        let content = Tensor::param(vec![half; 3 * hw * hw], &[3, hw, hw])?;
        let style = Tensor::full(&[3, hw, hw], half);
        let out = self.stylize(&content, &style)?;
        let (cy, cx) = (hw / 2, hw / 2);
        let mut mask = vec![S::zero(); 3 * hw * hw];
        for ch in 0..3 {
            mask[ch * hw * hw + cy * hw + cx] = S::one();
        }
        let mask = Tensor::from_vec(mask, &[3, hw, hw])?;
        out.mul(&mask)?.sum_all().backward()?;
        let grad = content.grad().ok_or(Error::Config {
            detail: "erf probe produced no input gradient".into(),
        })?;
        let mut heat = vec![S::zero(); hw * hw];
        for ch in 0..3 {
            for i in 0..hw * hw {
                heat[i] = heat[i] + grad[ch * hw * hw + i].abs();
            }
        }
        self.zero_grad();
        let max = heat.iter().cloned().fold(S::zero(), S::max);
        if max > S::zero() {
            for v in heat.iter_mut() {
                *v = *v / max;
            }
        }
        Ok(heat)
    }

    /// Every learned tensor with its stable checkpoint name, in a fixed
    /// traversal order.
    pub fn named_params(&self) -> Vec<(String, Tensor<S>)> {
        let mut out: Vec<(String, Tensor<S>)> = Vec::new();
        let push = |out: &mut Vec<(String, Tensor<S>)>, name: String, t: &Tensor<S>| {
            out.push((name, t.clone()));
        };
        let push_emb = |out: &mut Vec<(String, Tensor<S>)>, prefix: &str, emb: &Embedder<S>| {
            out.push((format!("{prefix}.weight"), emb.weight.clone()));
            out.push((format!("{prefix}.bias"), emb.bias.clone()));
        };
        let push_loe = |out: &mut Vec<(String, Tensor<S>)>, prefix: &str, loe: &LoEWeights<S>| {
            out.push((format!("{prefix}.conv"), loe.conv.clone()));
            out.push((format!("{prefix}.reduce"), loe.w_reduce.clone()));
            out.push((format!("{prefix}.expand"), loe.w_expand.clone()));
        };
        for (enc_name, enc) in [
            ("content_encoder", &self.content_encoder),
            ("style_encoder", &self.style_encoder),
        ] {
            push(&mut out, format!("{enc_name}.patch"), &enc.patch);
            for (i, b) in enc.blocks.iter().enumerate() {
                let p = format!("{enc_name}.block{i}");
                push(&mut out, format!("{p}.in_proj"), &b.in_proj);
                push(&mut out, format!("{p}.dwconv"), &b.dwconv);
                for (j, proj) in b.paths.iter().enumerate() {
                    push(&mut out, format!("{p}.path{j}.w_b"), &proj.w_b);
                    push(&mut out, format!("{p}.path{j}.w_c"), &proj.w_c);
                    push(&mut out, format!("{p}.path{j}.w_delta"), &proj.w_delta);
                    push(
                        &mut out,
                        format!("{p}.path{j}.delta_bias"),
                        &proj.delta_bias,
                    );
                }
                push(&mut out, format!("{p}.a_raw"), &b.a_raw);
                push(&mut out, format!("{p}.d"), &b.d);
                push(&mut out, format!("{p}.out_proj"), &b.out_proj);
            }
            push_loe(&mut out, &format!("{enc_name}.loe"), &enc.loe);
        }
        for (gi, group) in self.decoder.groups.iter().enumerate() {
            for (bi, b) in group.blocks.iter().enumerate() {
                let p = format!("decoder.group{gi}.block{bi}");
                push_emb(&mut out, &format!("{p}.sain_pre"), &b.sain_pre);
                push(&mut out, format!("{p}.in_proj"), &b.in_proj);
                push_emb(&mut out, &format!("{p}.sconv"), &b.sconv_emb);
                for (j, head) in b.paths.iter().enumerate() {
                    let q = format!("{p}.path{j}");
                    push(&mut out, format!("{q}.w_b"), &head.proj.w_b);
                    push(&mut out, format!("{q}.w_c"), &head.proj.w_c);
                    push(&mut out, format!("{q}.w_delta"), &head.proj.w_delta);
                    push(&mut out, format!("{q}.delta_bias"), &head.proj.delta_bias);
                    push_emb(&mut out, &format!("{q}.emb_a"), &head.emb_a);
                    push_emb(&mut out, &format!("{q}.emb_d"), &head.emb_d);
                }
                push_emb(&mut out, &format!("{p}.sain_post"), &b.sain_post);
                push(&mut out, format!("{p}.out_proj"), &b.out_proj);
                push_emb(&mut out, &format!("{p}.scm"), &b.scm_emb);
            }
            push_loe(&mut out, &format!("decoder.group{gi}.loe"), &group.loe);
        }
        push(
            &mut out,
            "decoder.head.conv1".into(),
            &self.decoder.head_conv1,
        );
        push(
            &mut out,
            "decoder.head.conv2".into(),
            &self.decoder.head_conv2,
        );
        push(&mut out, "decoder.head.out".into(), &self.decoder.head_out);
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grad(&self) {
        for (_, t) in self.named_params() {
            t.zero_grad();
        }
    }
}

/// Parameter count computed from the config alone, without building any
/// tensors; cross-checks `param_count` and reports the published scale.
pub fn analytic_param_count(cfg: &ModelConfig) -> usize {
    let (c, e, n, k) = (cfg.c, cfg.e, cfg.n, cfg.kernel);
    let r = (c / LoEWeights::<f64>::REDUCTION).max(1);
    let proj = 2 * n * e + e * e + e; // w_b, w_c, w_delta, delta_bias
    let loe = c * c * 9 + 2 * r * c;
    let vssm = e * c + e * 9 + 4 * proj + n * e + e + c * e;
    let encoder = c * 3 * PATCH * PATCH + cfg.encoder_depth * vssm + loe;
    let emb = |out: usize| c * out + out;
    let s7 = proj + emb(n * e) + emb(e);
    let savssm = emb(2 * c) + e * c + emb(e * k * k) + 4 * s7 + emb(2 * e) + c * e + emb(c);
    let decoder = cfg.groups * (cfg.blocks_per_group * savssm + loe) + 2 * c * c * 9 + 3 * c * 9;
    2 * encoder + decoder
}
