//! Shared helpers for the integration suites: deterministic random data
//! and a central-difference gradient oracle.

#![allow(dead_code)]

use rand::Rng;
use samam::init::{rng_from_seed, Rng64};
use samam::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> Rng64 {
    rng_from_seed(seed)
}

pub fn rand_vec(rng: &mut Rng64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Constant (non-trainable) tensor with uniform entries.
pub fn rand_tensor(rng: &mut Rng64, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(rand_vec(rng, n, lo, hi), shape).unwrap()
}

/// Trainable tensor with uniform entries.
pub fn rand_param(rng: &mut Rng64, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::param(rand_vec(rng, n, lo, hi), shape).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Up to `max` probe positions spread evenly over `n` elements.
fn probe_indices(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..max).map(|k| k * (n - 1) / (max - 1)).collect();
    idx.dedup();
    idx
}

/// Checks reverse-mode gradients of `loss_fn` against central differences
/// for every listed parameter. `loss_fn` must rebuild the forward pass
/// from the live parameter data on each call. Probes every element when a
/// tensor has at most `max_probes` of them, else an even sample.
pub fn fd_check(
    label: &str,
    params: &[(&str, &Tensor<f64>)],
    max_probes: usize,
    loss_fn: impl Fn() -> Tensor<f64>,
) {
    for (pname, p) in params {
        assert!(p.requires_grad(), "{label}/{pname} is not trainable");
        p.zero_grad();
    }
    let loss = loss_fn();
    loss.backward().unwrap();
    let grads: Vec<Vec<f64>> = params
        .iter()
        .map(|(pname, p)| {
            p.grad()
                .unwrap_or_else(|| panic!("{label}/{pname} received no gradient"))
        })
        .collect();
    for (_, p) in params {
        p.zero_grad();
    }
    for ((pname, p), g) in params.iter().zip(&grads) {
        for i in probe_indices(p.numel(), max_probes) {
            let orig = p.data()[i];
            p.with_data_mut(|d| d[i] = orig + FD_STEP);
            let fp = loss_fn().item().unwrap();
            p.with_data_mut(|d| d[i] = orig - FD_STEP);
            let fm = loss_fn().item().unwrap();
            p.with_data_mut(|d| d[i] = orig);
            let fd = (fp - fm) / (2.0 * FD_STEP);
            let re = rel_err(g[i], fd);
            assert!(
                re <= FD_TOL,
                "{label}/{pname}[{i}]: analytic {} vs finite-difference {} (rel err {re:.3e})",
                g[i],
                fd
            );
        }
    }
}
