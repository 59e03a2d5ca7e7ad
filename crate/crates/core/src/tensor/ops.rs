//! Differentiable tensor operations: broadcast elementwise arithmetic,
//! activations, reductions, shape surgery, matrix product, nearest
//! upsampling, and instance normalization (composed from primitives so
//! its adjoint needs no bespoke formula).

use super::broadcast::{broadcast_shape, for_each_pair};
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

impl<S: Scalar> Tensor<S> {
    fn binary(
        &self,
        other: &Tensor<S>,
        op: &'static str,
        fwd: impl Fn(S, S) -> S,
        // (grad_out, a, b) -> contribution to da
        da: impl Fn(S, S, S) -> S + 'static,
        // (grad_out, a, b) -> contribution to db
        db: impl Fn(S, S, S) -> S + 'static,
    ) -> Result<Tensor<S>> {
        let out_shape = broadcast_shape(op, self.shape(), other.shape())?;
        let n: usize = out_shape.iter().product();
        let mut data = vec![S::zero(); n];
        {
            let av = self.data();
            let bv = other.data();
            for_each_pair(&out_shape, self.shape(), other.shape(), |oi, ai, bi| {
                data[oi] = fwd(av[ai], bv[bi]);
            });
        }
        let a = self.clone();
        let b = other.clone();
        let a_shape = self.shape().to_vec();
        let b_shape = other.shape().to_vec();
        let os = out_shape.clone();
        let backward = move |g: &[S]| {
            // One pass per operand: the two passes keep the grad borrows
            // disjoint even when both operands are the same tensor.
            if a.requires_grad() {
                let av = a.data();
                let bv = b.data();
                a.with_grad_mut(|ga| {
                    for_each_pair(&os, &a_shape, &b_shape, |oi, ai, bi| {
                        ga[ai] = ga[ai] + da(g[oi], av[ai], bv[bi]);
                    });
                });
            }
            if b.requires_grad() {
                let av = a.data();
                let bv = b.data();
                b.with_grad_mut(|gb| {
                    for_each_pair(&os, &a_shape, &b_shape, |oi, ai, bi| {
                        gb[bi] = gb[bi] + db(g[oi], av[ai], bv[bi]);
                    });
                });
            }
        };
        Ok(Tensor::from_op(
            out_shape,
            data,
            vec![self.clone(), other.clone()],
            Box::new(backward),
        ))
    }

    pub fn add(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(other, "add", |a, b| a + b, |g, _, _| g, |g, _, _| g)
    }

    pub fn sub(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(other, "sub", |a, b| a - b, |g, _, _| g, |g, _, _| -g)
    }

    pub fn mul(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(other, "mul", |a, b| a * b, |g, _, b| g * b, |g, a, _| g * a)
    }

    pub fn div(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        if other.data().iter().any(|v| *v == S::zero()) {
            return Err(Error::DivisionByZero { op: "div" });
        }
        self.binary(
            other,
            "div",
            |a, b| a / b,
            |g, _, b| g / b,
            |g, a, b| -g * a / (b * b),
        )
    }

    fn unary(
        &self,
        fwd: impl Fn(S) -> S,
        // (grad_out, x, y) -> contribution to dx
        back: impl Fn(S, S, S) -> S + 'static,
    ) -> Tensor<S> {
        let data: Vec<S> = self.data().iter().map(|&v| fwd(v)).collect();
        let x = self.clone();
        let y_saved = data.clone();
        let backward = move |g: &[S]| {
            if x.requires_grad() {
                let xv = x.data();
                x.with_grad_mut(|gx| {
                    for i in 0..g.len() {
                        gx[i] = gx[i] + back(g[i], xv[i], y_saved[i]);
                    }
                });
            }
        };
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(backward),
        )
    }

    pub fn neg(&self) -> Tensor<S> {
        self.unary(|v| -v, |g, _, _| -g)
    }

    pub fn exp(&self) -> Tensor<S> {
        self.unary(|v| v.exp(), |g, _, y| g * y)
    }

    pub fn log(&self) -> Tensor<S> {
        self.unary(|v| v.ln(), |g, x, _| g / x)
    }

    pub fn sqrt(&self) -> Tensor<S> {
        self.unary(|v| v.sqrt(), |g, _, y| g / (S::lit(2.0) * y))
    }

    pub fn sigmoid(&self) -> Tensor<S> {
        self.unary(stable_sigmoid, |g, _, y| g * y * (S::one() - y))
    }

    pub fn tanh(&self) -> Tensor<S> {
        self.unary(|v| v.tanh(), |g, _, y| g * (S::one() - y * y))
    }

    pub fn relu(&self) -> Tensor<S> {
        self.unary(
            |v| if v > S::zero() { v } else { S::zero() },
            |g, x, _| if x > S::zero() { g } else { S::zero() },
        )
    }

    /// log(1+exp(x)) with the large-x branch returning x itself to dodge
    /// exp overflow; the derivative is sigmoid(x) on both branches.
    pub fn softplus(&self) -> Tensor<S> {
        self.unary(softplus_val, |g, x, _| g * stable_sigmoid(x))
    }

    /// x · sigmoid(x), composed so the adjoint falls out of the graph.
    pub fn silu(&self) -> Result<Tensor<S>> {
        self.mul(&self.sigmoid())
    }

    pub fn add_scalar(&self, c: S) -> Tensor<S> {
        self.unary(move |v| v + c, |g, _, _| g)
    }

    pub fn mul_scalar(&self, c: S) -> Tensor<S> {
        self.unary(move |v| v * c, move |g, _, _| g * c)
    }

    /// Matrix product of `[M,K]` by `[K,P]`.
    pub fn matmul(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        let (a_shape, b_shape) = (self.shape().to_vec(), other.shape().to_vec());
        if a_shape.len() != 2 || b_shape.len() != 2 || a_shape[1] != b_shape[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: a_shape,
                rhs: b_shape,
            });
        }
        let (m, k, p) = (a_shape[0], a_shape[1], b_shape[1]);
        let mut data = vec![S::zero(); m * p];
        {
            let av = self.data();
            let bv = other.data();
            for i in 0..m {
                for kk in 0..k {
                    let aik = av[i * k + kk];
                    let brow = &bv[kk * p..(kk + 1) * p];
                    let out = &mut data[i * p..(i + 1) * p];
                    for j in 0..p {
                        out[j] = out[j] + aik * brow[j];
                    }
                }
            }
        }
        let a = self.clone();
        let b = other.clone();
        let backward = move |g: &[S]| {
            if a.requires_grad() {
                let bv = b.data();
                a.with_grad_mut(|ga| {
                    for i in 0..m {
                        for kk in 0..k {
                            let mut acc = S::zero();
                            for j in 0..p {
                                acc = acc + g[i * p + j] * bv[kk * p + j];
                            }
                            ga[i * k + kk] = ga[i * k + kk] + acc;
                        }
                    }
                });
            }
            if b.requires_grad() {
                let av = a.data();
                b.with_grad_mut(|gb| {
                    for kk in 0..k {
                        for i in 0..m {
                            let aik = av[i * k + kk];
                            for j in 0..p {
                                gb[kk * p + j] = gb[kk * p + j] + aik * g[i * p + j];
                            }
                        }
                    }
                });
            }
        };
        Ok(Tensor::from_op(
            vec![m, p],
            data,
            vec![self.clone(), other.clone()],
            Box::new(backward),
        ))
    }

    /// Transpose of a 2-D tensor.
    pub fn transpose2(&self) -> Result<Tensor<S>> {
        let shape = self.shape().to_vec();
        if shape.len() != 2 {
            return Err(Error::InvalidShape {
                op: "transpose2",
                expected: "a rank-2 tensor".into(),
                got: shape,
            });
        }
        let (m, n) = (shape[0], shape[1]);
        let src = self.data();
        let mut data = vec![S::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        drop(src);
        let x = self.clone();
        let backward = move |g: &[S]| {
            if x.requires_grad() {
                x.with_grad_mut(|gx| {
                    for i in 0..m {
                        for j in 0..n {
                            gx[i * n + j] = gx[i * n + j] + g[j * m + i];
                        }
                    }
                });
            }
        };
        Ok(Tensor::from_op(
            vec![n, m],
            data,
            vec![self.clone()],
            Box::new(backward),
        ))
    }

    /// Same data, new shape; volumes must agree.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<S>> {
        let expected: usize = shape.iter().product();
        if expected != self.numel() {
            return Err(Error::InvalidShape {
                op: "reshape",
                expected: format!("volume {}", self.numel()),
                got: shape.to_vec(),
            });
        }
        let x = self.clone();
        let backward = move |g: &[S]| {
            if x.requires_grad() {
                x.with_grad_mut(|gx| {
                    for i in 0..g.len() {
                        gx[i] = gx[i] + g[i];
                    }
                });
            }
        };
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Box::new(backward),
        ))
    }

    /// Contiguous slice `[start, start+len)` along the first axis.
    pub fn narrow0(&self, start: usize, len: usize) -> Result<Tensor<S>> {
        let shape = self.shape().to_vec();
        if shape.is_empty() || start + len > shape[0] {
            return Err(Error::InvalidShape {
                op: "narrow0",
                expected: format!("first axis covering [{start}, {})", start + len),
                got: shape,
            });
        }
        let row: usize = shape[1..].iter().product();
        let data = self.data()[start * row..(start + len) * row].to_vec();
        let mut out_shape = shape.clone();
        out_shape[0] = len;
        let x = self.clone();
        let backward = move |g: &[S]| {
            if x.requires_grad() {
                x.with_grad_mut(|gx| {
                    let base = start * row;
                    for i in 0..g.len() {
                        gx[base + i] = gx[base + i] + g[i];
                    }
                });
            }
        };
        Ok(Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            Box::new(backward),
        ))
    }

    /// Sum of all elements as a `[1]` tensor.
    pub fn sum_all(&self) -> Tensor<S> {
        let total = self.data().iter().copied().sum();
        let x = self.clone();
        let backward = move |g: &[S]| {
            if x.requires_grad() {
                let g0 = g[0];
                x.with_grad_mut(|gx| {
                    for v in gx.iter_mut() {
                        *v = *v + g0;
                    }
                });
            }
        };
        Tensor::from_op(vec![1], vec![total], vec![self.clone()], Box::new(backward))
    }

    /// Mean of all elements as a `[1]` tensor.
    pub fn mean_all(&self) -> Tensor<S> {
        let n = self.numel().max(1);
        self.sum_all().mul_scalar(S::lit(1.0 / n as f64))
    }

    /// Sums every axis after the first: `[C, ...] -> [C]`.
    pub fn sum_trailing(&self) -> Result<Tensor<S>> {
        let shape = self.shape().to_vec();
        if shape.is_empty() {
            return Err(Error::InvalidShape {
                op: "sum_trailing",
                expected: "rank >= 1".into(),
                got: shape,
            });
        }
        let c = shape[0];
        let m: usize = shape[1..].iter().product();
        let src = self.data();
        let mut data = vec![S::zero(); c];
        for ch in 0..c {
            data[ch] = src[ch * m..(ch + 1) * m].iter().copied().sum();
        }
        drop(src);
        let x = self.clone();
        let backward = move |g: &[S]| {
            if x.requires_grad() {
                x.with_grad_mut(|gx| {
                    for ch in 0..c {
                        let gc = g[ch];
                        for v in gx[ch * m..(ch + 1) * m].iter_mut() {
                            *v = *v + gc;
                        }
                    }
                });
            }
        };
        Ok(Tensor::from_op(
            vec![c],
            data,
            vec![self.clone()],
            Box::new(backward),
        ))
    }

    /// Per-leading-channel mean over all trailing axes: `[C, ...] -> [C]`.
    pub fn mean_trailing(&self) -> Result<Tensor<S>> {
        let shape = self.shape();
        let m: usize = shape[1..].iter().product::<usize>().max(1);
        Ok(self.sum_trailing()?.mul_scalar(S::lit(1.0 / m as f64)))
    }

    /// Per-channel standardization over space: subtract the spatial mean,
    /// divide by sqrt(spatial variance + eps). Composed from primitives,
    /// so the adjoint includes the mean/variance paths automatically.
    pub fn instance_norm(&self, eps: f64) -> Result<Tensor<S>> {
        let shape = self.shape().to_vec();
        if shape.len() != 3 {
            return Err(Error::InvalidShape {
                op: "instance_norm",
                expected: "a [C,H,W] tensor".into(),
                got: shape,
            });
        }
        if shape[1] * shape[2] < 2 {
            return Err(Error::DegenerateSpatial {
                h: shape[1],
                w: shape[2],
            });
        }
        if eps <= 0.0 {
            return Err(Error::NonPositive {
                what: "instance_norm eps",
                value: eps,
            });
        }
        let mu = self.mean_trailing()?; // [C], broadcasts back over space
        let centered = self.sub(&mu)?;
        let var = centered.mul(&centered)?.mean_trailing()?;
        let denom = var.add_scalar(S::lit(eps)).sqrt();
        centered.div(&denom)
    }

    /// Nearest-neighbor spatial upsampling by 2 in each direction.
    pub fn upsample_nearest2x(&self) -> Result<Tensor<S>> {
        let shape = self.shape().to_vec();
        if shape.len() != 3 {
            return Err(Error::InvalidShape {
                op: "upsample_nearest2x",
                expected: "a [C,H,W] tensor".into(),
                got: shape,
            });
        }
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let (oh, ow) = (2 * h, 2 * w);
        let src = self.data();
        let mut data = vec![S::zero(); c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for x in 0..ow {
                    data[(ch * oh + y) * ow + x] = src[(ch * h + y / 2) * w + x / 2];
                }
            }
        }
        drop(src);
        let xin = self.clone();
        let backward = move |g: &[S]| {
            if xin.requires_grad() {
                xin.with_grad_mut(|gx| {
                    for ch in 0..c {
                        for y in 0..oh {
                            for x in 0..ow {
                                let t = (ch * h + y / 2) * w + x / 2;
                                gx[t] = gx[t] + g[(ch * oh + y) * ow + x];
                            }
                        }
                    }
                });
            }
        };
        Ok(Tensor::from_op(
            vec![c, oh, ow],
            data,
            vec![self.clone()],
            Box::new(backward),
        ))
    }
}

fn stable_sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn softplus_val<S: Scalar>(x: S) -> S {
    if x > S::lit(20.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}
