//! Reductions over axes: sum, mean, max, and softmax.

use crate::error::{Result, TensorError};
use crate::tape::record;
use crate::tensor::Tensor;

fn check_axes(axes: &[usize], rank: usize) -> Result<Vec<usize>> {
    if axes.is_empty() {
        return Err(TensorError::ShapeMismatch("empty axis list".into()));
    }
    let mut sorted = axes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != axes.len() {
        return Err(TensorError::ShapeMismatch("duplicate axes".into()));
    }
    for &a in &sorted {
        if a >= rank {
            return Err(TensorError::InvalidAxis { axis: a, rank });
        }
    }
    Ok(sorted)
}

fn reduced_shape(shape: &[usize], axes: &[usize], keepdim: bool) -> Vec<usize> {
    let mut out = Vec::new();
    for (d, &s) in shape.iter().enumerate() {
        if axes.contains(&d) {
            if keepdim {
                out.push(1);
            }
        } else {
            out.push(s);
        }
    }
    out
}

/// Maps each input flat index to its output flat index after reducing `axes`.
fn reduction_targets(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let rank = shape.len();
    let numel: usize = shape.iter().product();
    let keep: Vec<usize> = (0..rank).filter(|d| !axes.contains(d)).collect();
    let mut out_strides = vec![0usize; rank];
    let mut stride = 1usize;
    for &d in keep.iter().rev() {
        out_strides[d] = stride;
        stride *= shape[d];
    }
    let mut targets = vec![0usize; numel];
    let mut coords = vec![0usize; rank];
    let mut t = 0usize;
    for slot in targets.iter_mut() {
        *slot = t;
        for d in (0..rank).rev() {
            coords[d] += 1;
            t += out_strides[d];
            if coords[d] < shape[d] {
                break;
            }
            coords[d] = 0;
            t -= out_strides[d] * shape[d];
        }
    }
    targets
}

impl Tensor {
    pub fn sum(&self, axes: &[usize], keepdim: bool) -> Result<Tensor> {
        let axes = check_axes(axes, self.rank())?;
        let out_shape = reduced_shape(self.shape(), &axes, keepdim);
        let targets = reduction_targets(self.shape(), &axes);
        let mut out = vec![0.0; out_shape.iter().product()];
        for (&t, &v) in targets.iter().zip(self.data().iter()) {
            out[t] += v;
        }
        let out = Tensor::from_vec(out, &out_shape);
        let in_shape = self.shape().to_vec();
        Ok(record(
            out,
            &[self],
            Box::new(move |g| {
                let targets = reduction_targets(&in_shape, &axes);
                let gd = g.data();
                let dx: Vec<f64> = targets.iter().map(|&t| gd[t]).collect();
                Ok(vec![Some(Tensor::from_vec(dx, &in_shape))])
            }),
        ))
    }

    pub fn mean(&self, axes: &[usize], keepdim: bool) -> Result<Tensor> {
        let checked = check_axes(axes, self.rank())?;
        let count: usize = checked.iter().map(|&a| self.shape()[a]).product();
        self.sum(&checked, keepdim)?.mul_scalar(1.0 / count as f64)
    }

    /// Maximum over axes. Ties route the gradient to the first maximal element.
    pub fn max(&self, axes: &[usize], keepdim: bool) -> Result<Tensor> {
        let axes = check_axes(axes, self.rank())?;
        let out_shape = reduced_shape(self.shape(), &axes, keepdim);
        let targets = reduction_targets(self.shape(), &axes);
        let out_len: usize = out_shape.iter().product();
        let mut out = vec![f64::NEG_INFINITY; out_len];
        let mut argmax = vec![0usize; out_len];
        for (i, (&t, &v)) in targets.iter().zip(self.data().iter()).enumerate() {
            if v > out[t] {
                out[t] = v;
                argmax[t] = i;
            }
        }
        let out = Tensor::from_vec(out, &out_shape);
        let in_shape = self.shape().to_vec();
        let in_len = self.len();
        Ok(record(
            out,
            &[self],
            Box::new(move |g| {
                let mut dx = vec![0.0; in_len];
                for (&src, &gv) in argmax.iter().zip(g.data().iter()) {
                    dx[src] += gv;
                }
                Ok(vec![Some(Tensor::from_vec(dx, &in_shape))])
            }),
        ))
    }

    pub fn sum_all(&self) -> Result<Tensor> {
        let axes: Vec<usize> = (0..self.rank()).collect();
        if axes.is_empty() {
            return Ok(self.clone()); // already a scalar
        }
        let s = self.sum(&axes, false)?;
        s.reshape(&[])
    }

    pub fn mean_all(&self) -> Result<Tensor> {
        self.sum_all()?.mul_scalar(1.0 / self.len() as f64)
    }

    /// Numerically stable softmax along one axis. The stabilizing max shift
    /// is detached, so gradients flow only through exp/sum/div.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(TensorError::InvalidAxis {
                axis,
                rank: self.rank(),
            });
        }
        let m = self.max(&[axis], true)?.detached();
        let e = self.sub(&m)?.exp()?;
        let s = e.sum(&[axis], true)?;
        e.div(&s)
    }
}
