//! Deterministic weight initialization. All draws happen in f64 and are
//! converted to the scalar type afterwards, so a given seed produces the
//! same weights (up to rounding) in either precision.

use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The crate-wide deterministic RNG.
pub type Rng64 = ChaCha12Rng;

pub fn rng_from_seed(seed: u64) -> Rng64 {
    Rng64::seed_from_u64(seed)
}

/// Kaiming-uniform fan-in draw: U(-b, b) with b = sqrt(6 / fan_in).
pub fn kaiming_uniform<S: Scalar>(rng: &mut Rng64, shape: &[usize], fan_in: usize) -> Tensor<S> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<S> = (0..n)
        .map(|_| S::lit(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::param(data, shape).expect("generated data matches shape")
}

/// Zero-filled trainable parameter.
pub fn zeros_param<S: Scalar>(shape: &[usize]) -> Tensor<S> {
    let n: usize = shape.iter().product();
    Tensor::param(vec![S::zero(); n], shape).expect("zero data matches shape")
}

/// Uniform draw in [lo, hi) as a trainable parameter.
pub fn uniform_param<S: Scalar>(rng: &mut Rng64, shape: &[usize], lo: f64, hi: f64) -> Tensor<S> {
    let n: usize = shape.iter().product();
    let data: Vec<S> = (0..n).map(|_| S::lit(rng.gen_range(lo..hi))).collect();
    Tensor::param(data, shape).expect("generated data matches shape")
}

/// Bias values chosen so softplus(bias) is uniform in [lo, hi] per channel,
/// the usual state-space timescale initialization.
pub fn softplus_inverse_uniform<S: Scalar>(
    rng: &mut Rng64,
    shape: &[usize],
    lo: f64,
    hi: f64,
) -> Tensor<S> {
    let n: usize = shape.iter().product();
    let data: Vec<S> = (0..n)
        .map(|_| {
            let target = rng.gen_range(lo..hi);
            // softplus^-1(y) = ln(exp(y) - 1)
            S::lit((target.exp() - 1.0).ln())
        })
        .collect();
    Tensor::param(data, shape).expect("generated data matches shape")
}
