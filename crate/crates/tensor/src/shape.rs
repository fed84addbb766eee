//! Shape manipulation ops: reshape, permute, narrow, concat, flip, pad,
//! row gathering.

use crate::error::{Result, TensorError};
use crate::tape::record;
use crate::tensor::Tensor;

fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}

impl Tensor {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != self.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "cannot reshape {:?} to {:?}",
                self.shape(),
                shape
            )));
        }
        let out = self.reshaped_raw(shape);
        let in_shape = self.shape().to_vec();
        Ok(record(
            out,
            &[self],
            Box::new(move |g| Ok(vec![Some(g.reshaped_raw(&in_shape))])),
        ))
    }

    /// Reorders axes; `perm` must be a permutation of 0..rank.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(TensorError::ShapeMismatch(format!(
                "invalid permutation {perm:?} for rank {rank}"
            )));
        }
        let in_shape = self.shape();
        let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
        let in_strides = strides_of(in_shape);
        let mut out = vec![0.0; self.len()];
        let mut coords = vec![0usize; rank];
        let data = self.data();
        let mut src = 0usize;
        for slot in out.iter_mut() {
            *slot = data[src];
            for d in (0..rank).rev() {
                coords[d] += 1;
                src += in_strides[perm[d]];
                if coords[d] < out_shape[d] {
                    break;
                }
                coords[d] = 0;
                src -= in_strides[perm[d]] * out_shape[d];
            }
        }
        let out = Tensor::from_vec(out, &out_shape);
        let perm_owned = perm.to_vec();
        Ok(record(
            out,
            &[self],
            Box::new(move |g| {
                let mut inverse = vec![0usize; perm_owned.len()];
                for (i, &p) in perm_owned.iter().enumerate() {
                    inverse[p] = i;
                }
                Ok(vec![Some(g.permute(&inverse)?)])
            }),
        ))
    }

    /// Contiguous slice `[start, start+len)` along one axis.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(TensorError::InvalidAxis {
                axis,
                rank: self.rank(),
            });
        }
        let shape = self.shape();
        if start + len > shape[axis] {
            return Err(TensorError::ShapeMismatch(format!(
                "narrow [{start}, {}) exceeds axis {axis} of size {}",
                start + len,
                shape[axis]
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let mut out = Vec::with_capacity(outer * len * inner);
        let data = self.data();
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            out.extend_from_slice(&data[base..base + len * inner]);
        }
        let out = Tensor::from_vec(out, &out_shape);
        let in_shape = shape.to_vec();
        Ok(record(
            out,
            &[self],
            Box::new(move |g| {
                let mut dx = vec![0.0; in_shape.iter().product()];
                let gd = g.data();
                for o in 0..outer {
                    let base = (o * in_shape[axis] + start) * inner;
                    dx[base..base + len * inner]
                        .copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
                }
                Ok(vec![Some(Tensor::from_vec(dx, &in_shape))])
            }),
        ))
    }

    /// Concatenation along one axis. All inputs must agree on every other axis.
    pub fn cat(tensors: &[&Tensor], axis: usize) -> Result<Tensor> {
        if tensors.is_empty() {
            return Err(TensorError::ShapeMismatch("cat of zero tensors".into()));
        }
        let rank = tensors[0].rank();
        if axis >= rank {
            return Err(TensorError::InvalidAxis { axis, rank });
        }
        let mut axis_total = 0usize;
        for t in tensors {
            if t.rank() != rank {
                return Err(TensorError::ShapeMismatch("cat rank mismatch".into()));
            }
            for d in 0..rank {
                if d != axis && t.shape()[d] != tensors[0].shape()[d] {
                    return Err(TensorError::ShapeMismatch(format!(
                        "cat shape mismatch on axis {d}: {:?} vs {:?}",
                        t.shape(),
                        tensors[0].shape()
                    )));
                }
            }
            axis_total += t.shape()[axis];
        }
        let mut out_shape = tensors[0].shape().to_vec();
        out_shape[axis] = axis_total;
        let outer: usize = out_shape[..axis].iter().product();
        let inner: usize = out_shape[axis + 1..].iter().product();
        let mut out = vec![0.0; outer * axis_total * inner];
        let mut offset = 0usize;
        let sizes: Vec<usize> = tensors.iter().map(|t| t.shape()[axis]).collect();
        for (t, &sz) in tensors.iter().zip(sizes.iter()) {
            let data = t.data();
            for o in 0..outer {
                let src = &data[o * sz * inner..(o + 1) * sz * inner];
                let dst_base = (o * axis_total + offset) * inner;
                out[dst_base..dst_base + sz * inner].copy_from_slice(src);
            }
            offset += sz;
        }
        let out = Tensor::from_vec(out, &out_shape);
        let parents: Vec<&Tensor> = tensors.to_vec();
        Ok(record(
            out,
            &parents,
            Box::new(move |g| {
                let mut grads = Vec::with_capacity(sizes.len());
                let mut offset = 0usize;
                for &sz in &sizes {
                    grads.push(Some(g.narrow(axis, offset, sz)?));
                    offset += sz;
                }
                Ok(grads)
            }),
        ))
    }

    /// Reverses order along one axis.
    pub fn flip(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(TensorError::InvalidAxis {
                axis,
                rank: self.rank(),
            });
        }
        let shape = self.shape().to_vec();
        let outer: usize = shape[..axis].iter().product();
        let n = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let data = self.data();
        let mut out = vec![0.0; self.len()];
        for o in 0..outer {
            for i in 0..n {
                let src = (o * n + i) * inner;
                let dst = (o * n + (n - 1 - i)) * inner;
                out[dst..dst + inner].copy_from_slice(&data[src..src + inner]);
            }
        }
        let out = Tensor::from_vec(out, &shape);
        Ok(record(
            out,
            &[self],
            Box::new(move |g| Ok(vec![Some(g.flip(axis)?)])),
        ))
    }

    /// Zero padding; `pads[d] = (before, after)` per axis.
    pub fn pad(&self, pads: &[(usize, usize)]) -> Result<Tensor> {
        if pads.len() != self.rank() {
            return Err(TensorError::ShapeMismatch(
                "pad spec length must equal rank".into(),
            ));
        }
        let in_shape = self.shape().to_vec();
        let out_shape: Vec<usize> = in_shape
            .iter()
            .zip(pads.iter())
            .map(|(&s, &(lo, hi))| s + lo + hi)
            .collect();
        let mut out = vec![0.0; out_shape.iter().product()];
        let out_strides = strides_of(&out_shape);
        let rank = in_shape.len();
        let data = self.data();
        let mut coords = vec![0usize; rank];
        let mut dst = {
            let mut d = 0usize;
            for i in 0..rank {
                d += pads[i].0 * out_strides[i];
            }
            d
        };
        for &v in data.iter() {
            out[dst] = v;
            for d in (0..rank).rev() {
                coords[d] += 1;
                dst += out_strides[d];
                if coords[d] < in_shape[d] {
                    break;
                }
                coords[d] = 0;
                dst -= out_strides[d] * in_shape[d];
            }
        }
        let out = Tensor::from_vec(out, &out_shape);
        let pads_owned = pads.to_vec();
        Ok(record(
            out,
            &[self],
            Box::new(move |g| {
                let mut sliced = g.detached();
                for (d, &(lo, _)) in pads_owned.iter().enumerate() {
                    sliced = sliced.narrow(d, lo, in_shape[d])?;
                }
                Ok(vec![Some(sliced)])
            }),
        ))
    }

    /// Gathers rows of a `[R, C]` tensor by index; the backward pass
    /// scatter-adds into the source rows.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(TensorError::ShapeMismatch(format!(
                "gather_rows expects a matrix, got {:?}",
                self.shape()
            )));
        }
        let (r, c) = (self.shape()[0], self.shape()[1]);
        for &i in indices {
            if i >= r {
                return Err(TensorError::ShapeMismatch(format!(
                    "row index {i} out of bounds for {r} rows"
                )));
            }
        }
        let data = self.data();
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            out.extend_from_slice(&data[i * c..(i + 1) * c]);
        }
        let out = Tensor::from_vec(out, &[indices.len(), c]);
        let idx = indices.to_vec();
        let in_shape = self.shape().to_vec();
        Ok(record(
            out,
            &[self],
            Box::new(move |g| {
                let mut dx = vec![0.0; r * c];
                let gd = g.data();
                for (pos, &i) in idx.iter().enumerate() {
                    for j in 0..c {
                        dx[i * c + j] += gd[pos * c + j];
                    }
                }
                Ok(vec![Some(Tensor::from_vec(dx, &in_shape))])
            }),
        ))
    }
}
