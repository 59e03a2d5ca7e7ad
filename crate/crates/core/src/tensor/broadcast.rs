//! Broadcasting rules shared by the elementwise operations.
//!
//! Shapes are aligned from the leading dimension; a missing trailing
//! dimension behaves like size 1. A size-1 dimension stretches to the
//! other operand's extent. So `[C] op [C,H,W]` scales per channel and
//! `[L,1,E] op [1,N,E]` forms an outer product over the middle axes.

use crate::error::{Error, Result};

/// Result shape of broadcasting `a` against `b`, or a structured error.
/// Deterministic and symmetric in its arguments.
pub(crate) fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = Vec::with_capacity(rank);
    for d in 0..rank {
        let da = a.get(d).copied().unwrap_or(1);
        let db = b.get(d).copied().unwrap_or(1);
        if da == db || db == 1 {
            out.push(da);
        } else if da == 1 {
            out.push(db);
        } else {
            return Err(Error::ShapeMismatch {
                op,
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        }
    }
    Ok(out)
}

/// Per-output-dimension stride into an operand of shape `shape` when
/// broadcast to `out`: 0 wherever the operand does not advance.
fn operand_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let mut strides = vec![0usize; out.len()];
    let mut acc = 1usize;
    // Row-major strides over the operand's own dims...
    let mut own = vec![0usize; shape.len()];
    for d in (0..shape.len()).rev() {
        own[d] = acc;
        acc *= shape[d];
    }
    // ...then zeroed where the dim is stretched or absent.
    for d in 0..out.len() {
        let size = shape.get(d).copied().unwrap_or(1);
        strides[d] = if size == 1 { 0 } else { own[d] };
    }
    strides
}

/// Visits every output position of the broadcast of `a_shape` and `b_shape`
/// to `out_shape`, yielding `(out_index, a_index, b_index)` flat offsets in
/// row-major order. The same walk serves forward evaluation and gradient
/// scatter (repeated operand indices sum reduction naturally).
pub(crate) fn for_each_pair(
    out_shape: &[usize],
    a_shape: &[usize],
    b_shape: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let n: usize = out_shape.iter().product();
    if n == 0 {
        return;
    }
    let rank = out_shape.len();
    if rank == 0 {
        f(0, 0, 0);
        return;
    }
    let sa = operand_strides(a_shape, out_shape);
    let sb = operand_strides(b_shape, out_shape);
    let mut coords = vec![0usize; rank];
    let mut ai = 0usize;
    let mut bi = 0usize;
    for oi in 0..n {
        f(oi, ai, bi);
        for d in (0..rank).rev() {
            coords[d] += 1;
            ai += sa[d];
            bi += sb[d];
            if coords[d] < out_shape[d] {
                break;
            }
            coords[d] = 0;
            ai -= sa[d] * out_shape[d];
            bi -= sb[d] * out_shape[d];
        }
    }
}
