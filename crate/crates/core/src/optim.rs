//! Bias-corrected Adam over a fixed parameter list.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Optimizer state: per-parameter first/second moments plus the step count.
/// The parameter list order is fixed at construction; `step` must be called
/// with the same tensors in the same order.
pub struct Adam<S: Scalar> {
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
    shapes: Vec<Vec<usize>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(params: &[Tensor<S>], lr: f64) -> Self {
        Adam {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.iter().map(|p| vec![S::zero(); p.numel()]).collect(),
            v: params.iter().map(|p| vec![S::zero(); p.numel()]).collect(),
            shapes: params.iter().map(|p| p.shape().to_vec()).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    /// One update. Parameters without an accumulated gradient are treated
    /// as having zero gradient (their moments decay, values stay put).
    pub fn step(&mut self, params: &[Tensor<S>]) -> Result<()> {
        if params.len() != self.shapes.len() {
            return Err(Error::OptimizerMismatch {
                index: params.len().min(self.shapes.len()),
                detail: format!(
                    "expected {} parameters, got {}",
                    self.shapes.len(),
                    params.len()
                ),
            });
        }
        for (i, p) in params.iter().enumerate() {
            if p.shape() != self.shapes[i].as_slice() {
                return Err(Error::OptimizerMismatch {
                    index: i,
                    detail: format!(
                        "shape {:?} does not match recorded {:?}",
                        p.shape(),
                        self.shapes[i]
                    ),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = S::lit(self.beta1);
        let b2 = S::lit(self.beta2);
        let one = S::one();
        let corr1 = S::lit(1.0 - self.beta1.powi(t));
        let corr2 = S::lit(1.0 - self.beta2.powi(t));
        let lr = S::lit(self.lr);
        let eps = S::lit(self.eps);
        for (i, p) in params.iter().enumerate() {
            let grad = p.grad();
            let g = match &grad {
                Some(g) => g.as_slice(),
                None => continue,
            };
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            p.with_data_mut(|theta| {
                for j in 0..theta.len() {
                    m[j] = b1 * m[j] + (one - b1) * g[j];
                    v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                    let mhat = m[j] / corr1;
                    let vhat = v[j] / corr2;
                    theta[j] = theta[j] - lr * mhat / (vhat.sqrt() + eps);
                }
            });
        }
        Ok(())
    }
}
