//! Trailing-dimension broadcasting helpers shared by the elementwise ops.

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Broadcast shape of two shapes under trailing-dimension rules, or an error
/// if some axis pair disagrees and neither is 1.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = dim_from_end(a, rank - 1 - i);
        let db = dim_from_end(b, rank - 1 - i);
        if da == db || db == 1 {
            out[i] = da;
        } else if da == 1 {
            out[i] = db;
        } else {
            return Err(TensorError::ShapeMismatch(format!(
                "cannot broadcast {a:?} with {b:?}"
            )));
        }
    }
    Ok(out)
}

fn dim_from_end(shape: &[usize], from_end: usize) -> usize {
    if from_end < shape.len() {
        shape[shape.len() - 1 - from_end]
    } else {
        1
    }
}

/// Row-major strides, with 0 stride on axes being broadcast (size 1 where the
/// output size is larger). `shape` is right-aligned against `out_shape`.
pub fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let mut strides = vec![0usize; rank];
    let mut stride = 1usize;
    for i in (0..rank).rev() {
        let d = dim_from_end(shape, rank - 1 - i);
        if d == out_shape[i] && d != 1 {
            strides[i] = stride;
        } else if d == 1 {
            strides[i] = 0;
        } else {
            strides[i] = stride; // d == out_shape[i] == 1
        }
        stride *= d;
    }
    strides
}

/// Sums `grad` down to `shape` by reducing every broadcast axis. Inverse of
/// broadcasting for gradient flow.
pub fn reduce_to_shape(grad: &Tensor, shape: &[usize]) -> Tensor {
    if grad.shape() == shape {
        return grad.detached();
    }
    let g_shape = grad.shape();
    let rank = g_shape.len();
    let numel: usize = shape.iter().product();
    let mut out = vec![0.0; numel];

    // Right-aligned target shape padded with leading 1s.
    let mut padded = vec![1usize; rank];
    let off = rank - shape.len();
    padded[off..].copy_from_slice(shape);

    let mut coords = vec![0usize; rank];
    let g = grad.data();
    for (flat, &gv) in g.iter().enumerate() {
        let mut rem = flat;
        for d in (0..rank).rev() {
            coords[d] = rem % g_shape[d];
            rem /= g_shape[d];
        }
        let mut tflat = 0usize;
        for d in 0..rank {
            let c = if padded[d] == 1 { 0 } else { coords[d] };
            tflat = tflat * padded[d] + c;
        }
        out[tflat] += gv;
    }
    Tensor::from_vec(out, shape)
}
