//! Two-dimensional scan orders: four serpentine ("zigzag") paths that keep
//! every consecutive pair of tokens spatially adjacent, and the four
//! row/column-major cross-scan paths used as the ablation alternative.
//! Paths are explicit bijections between grid positions and sequence
//! indices, with gather/merge ops moving feature maps in and out of
//! sequence form under full gradient support.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use once_cell::sync::Lazy;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScanMode {
    Zigzag,
    Cross,
}

impl ScanMode {
    pub fn name(&self) -> &'static str {
        match self {
            ScanMode::Zigzag => "zigzag",
            ScanMode::Cross => "cross",
        }
    }

    pub fn parse(s: &str) -> Result<ScanMode> {
        match s {
            "zigzag" => Ok(ScanMode::Zigzag),
            "cross" => Ok(ScanMode::Cross),
            other => Err(Error::Config {
                detail: format!("unknown scan mode '{other}' (expected zigzag or cross)"),
            }),
        }
    }
}

/// One traversal of an H x W grid. `perm[t]` is the flat grid index
/// (row * W + col) visited at sequence position t; `inv` is the inverse.
#[derive(Debug, Clone)]
pub struct ScanPath {
    pub mode: ScanMode,
    pub path_index: usize,
    pub height: usize,
    pub width: usize,
    pub perm: Vec<usize>,
    pub inv: Vec<usize>,
}

fn finish(mode: ScanMode, path_index: usize, h: usize, w: usize, perm: Vec<usize>) -> ScanPath {
    debug_assert_eq!(perm.len(), h * w);
    let mut inv = vec![0usize; perm.len()];
    for (t, &p) in perm.iter().enumerate() {
        inv[p] = t;
    }
    ScanPath {
        mode,
        path_index,
        height: h,
        width: w,
        perm,
        inv,
    }
}

fn check_dims(h: usize, w: usize, path_index: usize) -> Result<()> {
    if h == 0 || w == 0 {
        return Err(Error::NonPositive {
            what: "scan grid extent",
            value: h.min(w) as f64,
        });
    }
    if path_index > 3 {
        return Err(Error::BadScanPath { path: path_index });
    }
    Ok(())
}

/// Serpentine traversal from one of the four vertices. The first scan-line
/// runs in the clockwise direction around the boundary from that vertex:
/// path 0 (top-left) goes along row 0 then snakes down, path 1 (top-right)
/// down column W-1 then snakes left, path 2 (bottom-right) along row H-1
/// then snakes up, path 3 (bottom-left) up column 0 then snakes right.
pub fn zigzag_indices(h: usize, w: usize, path_index: usize) -> Result<ScanPath> {
    check_dims(h, w, path_index)?;
    let mut perm = Vec::with_capacity(h * w);
    match path_index {
        0 => {
            for r in 0..h {
                if r % 2 == 0 {
                    for c in 0..w {
                        perm.push(r * w + c);
                    }
                } else {
                    for c in (0..w).rev() {
                        perm.push(r * w + c);
                    }
                }
            }
        }
        1 => {
            for i in 0..w {
                let c = w - 1 - i;
                if i % 2 == 0 {
                    for r in 0..h {
                        perm.push(r * w + c);
                    }
                } else {
                    for r in (0..h).rev() {
                        perm.push(r * w + c);
                    }
                }
            }
        }
        2 => {
            for i in 0..h {
                let r = h - 1 - i;
                if i % 2 == 0 {
                    for c in (0..w).rev() {
                        perm.push(r * w + c);
                    }
                } else {
                    for c in 0..w {
                        perm.push(r * w + c);
                    }
                }
            }
        }
        3 => {
            for c in 0..w {
                if c % 2 == 0 {
                    for r in (0..h).rev() {
                        perm.push(r * w + c);
                    }
                } else {
                    for r in 0..h {
                        perm.push(r * w + c);
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    Ok(finish(ScanMode::Zigzag, path_index, h, w, perm))
}

/// Raster traversals: path 0 row-major, path 1 column-major, paths 2 and 3
/// their exact reversals.
pub fn cross_scan_indices(h: usize, w: usize, path_index: usize) -> Result<ScanPath> {
    check_dims(h, w, path_index)?;
    let row_major: Vec<usize> = (0..h * w).collect();
    let col_major: Vec<usize> = (0..w)
        .flat_map(|c| (0..h).map(move |r| r * w + c))
        .collect();
    let perm = match path_index {
        0 => row_major,
        1 => col_major,
        2 => row_major.into_iter().rev().collect(),
        3 => col_major.into_iter().rev().collect(),
        _ => unreachable!(),
    };
    Ok(finish(ScanMode::Cross, path_index, h, w, perm))
}

pub fn scan_indices(mode: ScanMode, h: usize, w: usize, path_index: usize) -> Result<ScanPath> {
    match mode {
        ScanMode::Zigzag => zigzag_indices(h, w, path_index),
        ScanMode::Cross => cross_scan_indices(h, w, path_index),
    }
}

type PathKey = (ScanMode, usize, usize, usize);

static PATH_CACHE: Lazy<Mutex<HashMap<PathKey, Arc<ScanPath>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

/// Cached path lookup; permutations are computed once per
/// (mode, path, H, W) and shared from then on.
pub fn cached_path(mode: ScanMode, h: usize, w: usize, path_index: usize) -> Result<Arc<ScanPath>> {
    let key = (mode, path_index, h, w);
    let mut cache = PATH_CACHE.lock().expect("scan path cache lock");
    if let Some(p) = cache.get(&key) {
        return Ok(Arc::clone(p));
    }
    let path = Arc::new(scan_indices(mode, h, w, path_index)?);
    cache.insert(key, Arc::clone(&path));
    Ok(path)
}

/// Flattens `[C,H,W]` into a `[L,C]` token sequence along the path.
pub fn gather<S: Scalar>(x: &Tensor<S>, path: &ScanPath) -> Result<Tensor<S>> {
    let shape = x.shape().to_vec();
    if shape.len() != 3 {
        return Err(Error::InvalidShape {
            op: "gather",
            expected: "a [C,H,W] tensor".into(),
            got: shape,
        });
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    if h != path.height || w != path.width {
        return Err(Error::BadSequenceLength {
            expected: path.height * path.width,
            got: h * w,
        });
    }
    let l = h * w;
    let hw = h * w;
    let src = x.data();
    let mut data = vec![S::zero(); l * c];
    for t in 0..l {
        let p = path.perm[t];
        for ch in 0..c {
            data[t * c + ch] = src[ch * hw + p];
        }
    }
    drop(src);
    let xin = x.clone();
    let perm = path.perm.clone();
    let backward = move |g: &[S]| {
        if xin.requires_grad() {
            xin.with_grad_mut(|gx| {
                for (t, &p) in perm.iter().enumerate() {
                    for ch in 0..c {
                        gx[ch * hw + p] = gx[ch * hw + p] + g[t * c + ch];
                    }
                }
            });
        }
    };
    Ok(Tensor::from_op(
        vec![l, c],
        data,
        vec![x.clone()],
        Box::new(backward),
    ))
}

/// Scatters a `[L,C]` sequence back onto the `[C,H,W]` grid; exact inverse
/// of [`gather`] on the same path, and its gradient adjoint.
pub fn merge<S: Scalar>(y: &Tensor<S>, path: &ScanPath) -> Result<Tensor<S>> {
    let shape = y.shape().to_vec();
    if shape.len() != 2 {
        return Err(Error::InvalidShape {
            op: "merge",
            expected: "a [L,C] sequence".into(),
            got: shape,
        });
    }
    let (l, c) = (shape[0], shape[1]);
    let hw = path.height * path.width;
    if l != hw {
        return Err(Error::BadSequenceLength {
            expected: hw,
            got: l,
        });
    }
    let (h, w) = (path.height, path.width);
    let src = y.data();
    let mut data = vec![S::zero(); c * hw];
    for (t, &p) in path.perm.iter().enumerate() {
        for ch in 0..c {
            data[ch * hw + p] = src[t * c + ch];
        }
    }
    drop(src);
    let yin = y.clone();
    let perm = path.perm.clone();
    let backward = move |g: &[S]| {
        if yin.requires_grad() {
            yin.with_grad_mut(|gy| {
                for (t, &p) in perm.iter().enumerate() {
                    for ch in 0..c {
                        gy[t * c + ch] = gy[t * c + ch] + g[ch * hw + p];
                    }
                }
            });
        }
    };
    Ok(Tensor::from_op(
        vec![c, h, w],
        data,
        vec![y.clone()],
        Box::new(backward),
    ))
}

/// Manhattan distance between the grid positions of two flat indices.
pub fn manhattan(width: usize, a: usize, b: usize) -> usize {
    let (ra, ca) = (a / width, a % width);
    let (rb, cb) = (b / width, b % width);
    ra.abs_diff(rb) + ca.abs_diff(cb)
}
