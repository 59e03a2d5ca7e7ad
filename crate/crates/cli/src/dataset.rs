//! Training data plumbing: directory loading, reflect padding, and random
//! square crops. All tensor work here is on plain (non-trainable) data.

use crate::image::{read_ppm, Image};
use anyhow::{bail, Context, Result};
use rand::Rng;
use samam::init::Rng64;
use samam::tensor::Tensor;
use std::path::{Path, PathBuf};

/// Reads every `.ppm` in the directory, sorted by file name so runs are
/// reproducible regardless of directory enumeration order.
pub fn load_dir(dir: &Path) -> Result<Vec<(PathBuf, Image)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("ppm"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .ppm images in {}", dir.display());
    }
    paths
        .into_iter()
        .map(|p| read_ppm(&p).map(|img| (p, img)))
        .collect()
}

fn reflect(idx: usize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    // fold into the period of the reflected sequence 0..len-1..1
    let period = 2 * (len - 1);
    let m = idx % period;
    if m < len {
        m
    } else {
        period - m
    }
}

/// Mirror-pads the bottom/right of a [3,H,W] tensor up to the target size.
pub fn reflect_pad(t: &Tensor<f64>, out_h: usize, out_w: usize) -> Result<Tensor<f64>> {
    let shape = t.shape().to_vec();
    if shape.len() != 3 {
        bail!("reflect_pad expects [C,H,W], got {shape:?}");
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    if out_h < h || out_w < w {
        bail!("reflect_pad target {out_h}x{out_w} smaller than input {h}x{w}");
    }
    if out_h == h && out_w == w {
        return Ok(t.clone());
    }
    let src = t.data();
    let mut data = vec![0.0f64; c * out_h * out_w];
    for ch in 0..c {
        for y in 0..out_h {
            let sy = reflect(y, h);
            for x in 0..out_w {
                let sx = reflect(x, w);
                data[ch * out_h * out_w + y * out_w + x] = src[ch * h * w + sy * w + sx];
            }
        }
    }
    drop(src);
    Ok(Tensor::from_vec(data, &[c, out_h, out_w])?)
}

/// Pads a [3,H,W] tensor so both spatial dims are multiples of `unit`.
pub fn pad_to_multiple(t: &Tensor<f64>, unit: usize) -> Result<Tensor<f64>> {
    let shape = t.shape();
    let (h, w) = (shape[1], shape[2]);
    reflect_pad(t, h.div_ceil(unit) * unit, w.div_ceil(unit) * unit)
}

/// Crops a [C,H,W] tensor to `[C,size,size]` at the given offsets.
pub fn crop(t: &Tensor<f64>, top: usize, left: usize, ch: usize, cw: usize) -> Result<Tensor<f64>> {
    let shape = t.shape().to_vec();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    if top + ch > h || left + cw > w {
        bail!("crop {ch}x{cw} at ({top},{left}) exceeds {h}x{w}");
    }
    let src = t.data();
    let mut data = vec![0.0f64; c * ch * cw];
    for chan in 0..c {
        for y in 0..ch {
            for x in 0..cw {
                data[chan * ch * cw + y * cw + x] = src[chan * h * w + (top + y) * w + (left + x)];
            }
        }
    }
    drop(src);
    Ok(Tensor::from_vec(data, &[c, ch, cw])?)
}

/// Reflect-pads undersized images, then takes a random `size` x `size`
/// crop. `size` must keep the patch grid intact downstream, so callers
/// pass a multiple of four.
pub fn random_crop(t: &Tensor<f64>, size: usize, rng: &mut Rng64) -> Result<Tensor<f64>> {
    let shape = t.shape();
    let padded = reflect_pad(t, shape[1].max(size), shape[2].max(size))?;
    let ps = padded.shape().to_vec();
    let top = rng.gen_range(0..=ps[1] - size);
    let left = rng.gen_range(0..=ps[2] - size);
    crop(&padded, top, left, size, size)
}
