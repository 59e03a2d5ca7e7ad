//! 2-D grouped cross-correlation with zero padding and full adjoints.
//! Serves every conv in the network: depthwise 3x3, style-predicted
//! kernels, local-enhance and synthesis convs, and the strided patch embed.

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Padding policy for [`Tensor::conv2d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding sized so the output has ceil(H/stride) rows
    /// (equivalently floor((H-1)/stride)+1). Requires odd kernels.
    Same,
    /// No padding; output has (H-kh)/stride+1 rows.
    Valid,
}

#[derive(Clone, Copy)]
struct ConvDims {
    h: usize,
    w: usize,
    cout: usize,
    cpg: usize,
    kh: usize,
    kw: usize,
    groups: usize,
    stride: usize,
    pad_top: usize,
    pad_left: usize,
    oh: usize,
    ow: usize,
}

fn same_extent(input: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = (input - 1) / stride + 1;
    let needed = ((out - 1) * stride + k).max(input) - input;
    (out, needed / 2)
}

impl<S: Scalar> Tensor<S> {
    /// Grouped 2-D cross-correlation of `[Cin,H,W]` by `[Cout,Cin/groups,kh,kw]`.
    /// `groups == Cin == Cout` gives depthwise behavior. Bias, when a layer
    /// wants one, is a broadcast add of a `[Cout]` vector after this op.
    pub fn conv2d(
        &self,
        kernel: &Tensor<S>,
        groups: usize,
        stride: usize,
        padding: Padding,
    ) -> Result<Tensor<S>> {
        let xs = self.shape().to_vec();
        let ks = kernel.shape().to_vec();
        if xs.len() != 3 {
            return Err(Error::InvalidShape {
                op: "conv2d",
                expected: "input [Cin,H,W]".into(),
                got: xs,
            });
        }
        if ks.len() != 4 {
            return Err(Error::InvalidShape {
                op: "conv2d",
                expected: "kernel [Cout,Cin/groups,kh,kw]".into(),
                got: ks,
            });
        }
        let (cin, h, w) = (xs[0], xs[1], xs[2]);
        let (cout, cpg, kh, kw) = (ks[0], ks[1], ks[2], ks[3]);
        if groups == 0 || cin % groups != 0 || cout % groups != 0 || cpg != cin / groups {
            return Err(Error::BadGroups {
                in_channels: cin,
                out_channels: cout,
                groups,
            });
        }
        if stride == 0 {
            return Err(Error::NonPositive {
                what: "conv2d stride",
                value: 0.0,
            });
        }
        let (oh, ow, pad_top, pad_left) = match padding {
            Padding::Same => {
                if kh % 2 == 0 || kw % 2 == 0 {
                    return Err(Error::EvenKernel { kh, kw });
                }
                let (oh, pt) = same_extent(h, kh, stride);
                let (ow, pl) = same_extent(w, kw, stride);
                (oh, ow, pt, pl)
            }
            Padding::Valid => {
                if h < kh || w < kw {
                    return Err(Error::InvalidShape {
                        op: "conv2d",
                        expected: format!("input at least {kh}x{kw} for valid padding"),
                        got: vec![cin, h, w],
                    });
                }
                ((h - kh) / stride + 1, (w - kw) / stride + 1, 0, 0)
            }
        };
        let dims = ConvDims {
            h,
            w,
            cout,
            cpg,
            kh,
            kw,
            groups,
            stride,
            pad_top,
            pad_left,
            oh,
            ow,
        };
        let data = {
            let xv = self.data();
            let kv = kernel.data();
            forward(&xv, &kv, dims)
        };
        let x = self.clone();
        let k = kernel.clone();
        let backward = move |g: &[S]| {
            let d = dims;
            if x.requires_grad() {
                let kv = k.data();
                x.with_grad_mut(|gx| scatter_input_grad(g, &kv, gx, d));
            }
            if k.requires_grad() {
                let xv = x.data();
                k.with_grad_mut(|gk| scatter_kernel_grad(g, &xv, gk, d));
            }
        };
        Ok(Tensor::from_op(
            vec![cout, oh, ow],
            data,
            vec![self.clone(), kernel.clone()],
            Box::new(backward),
        ))
    }
}

fn forward<S: Scalar>(xv: &[S], kv: &[S], d: ConvDims) -> Vec<S> {
    let mut out = vec![S::zero(); d.cout * d.oh * d.ow];
    let opg = d.cout / d.groups;
    for g in 0..d.groups {
        for ocg in 0..opg {
            let oc = g * opg + ocg;
            for oy in 0..d.oh {
                for ox in 0..d.ow {
                    let mut acc = S::zero();
                    let iy0 = (oy * d.stride) as isize - d.pad_top as isize;
                    let ix0 = (ox * d.stride) as isize - d.pad_left as isize;
                    for icg in 0..d.cpg {
                        let ic = g * d.cpg + icg;
                        for ky in 0..d.kh {
                            let iy = iy0 + ky as isize;
                            if iy < 0 || iy >= d.h as isize {
                                continue;
                            }
                            for kx in 0..d.kw {
                                let ix = ix0 + kx as isize;
                                if ix < 0 || ix >= d.w as isize {
                                    continue;
                                }
                                let xi = (ic * d.h + iy as usize) * d.w + ix as usize;
                                let ki = ((oc * d.cpg + icg) * d.kh + ky) * d.kw + kx;
                                acc = acc + xv[xi] * kv[ki];
                            }
                        }
                    }
                    out[(oc * d.oh + oy) * d.ow + ox] = acc;
                }
            }
        }
    }
    out
}

fn scatter_input_grad<S: Scalar>(g: &[S], kv: &[S], gx: &mut [S], d: ConvDims) {
    let opg = d.cout / d.groups;
    for grp in 0..d.groups {
        for ocg in 0..opg {
            let oc = grp * opg + ocg;
            for oy in 0..d.oh {
                for ox in 0..d.ow {
                    let go = g[(oc * d.oh + oy) * d.ow + ox];
                    let iy0 = (oy * d.stride) as isize - d.pad_top as isize;
                    let ix0 = (ox * d.stride) as isize - d.pad_left as isize;
                    for icg in 0..d.cpg {
                        let ic = grp * d.cpg + icg;
                        for ky in 0..d.kh {
                            let iy = iy0 + ky as isize;
                            if iy < 0 || iy >= d.h as isize {
                                continue;
                            }
                            for kx in 0..d.kw {
                                let ix = ix0 + kx as isize;
                                if ix < 0 || ix >= d.w as isize {
                                    continue;
                                }
                                let xi = (ic * d.h + iy as usize) * d.w + ix as usize;
                                let ki = ((oc * d.cpg + icg) * d.kh + ky) * d.kw + kx;
                                gx[xi] = gx[xi] + go * kv[ki];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn scatter_kernel_grad<S: Scalar>(g: &[S], xv: &[S], gk: &mut [S], d: ConvDims) {
    let opg = d.cout / d.groups;
    for grp in 0..d.groups {
        for ocg in 0..opg {
            let oc = grp * opg + ocg;
            for oy in 0..d.oh {
                for ox in 0..d.ow {
                    let go = g[(oc * d.oh + oy) * d.ow + ox];
                    let iy0 = (oy * d.stride) as isize - d.pad_top as isize;
                    let ix0 = (ox * d.stride) as isize - d.pad_left as isize;
                    for icg in 0..d.cpg {
                        let ic = grp * d.cpg + icg;
                        for ky in 0..d.kh {
                            let iy = iy0 + ky as isize;
                            if iy < 0 || iy >= d.h as isize {
                                continue;
                            }
                            for kx in 0..d.kw {
                                let ix = ix0 + kx as isize;
                                if ix < 0 || ix >= d.w as isize {
                                    continue;
                                }
                                let xi = (ic * d.h + iy as usize) * d.w + ix as usize;
                                let ki = ((oc * d.cpg + icg) * d.kh + ky) * d.kw + kx;
                                gk[ki] = gk[ki] + go * xv[xi];
                            }
                        }
                    }
                }
            }
        }
    }
}
