//! Batched matrix multiplication. The raw kernels below are the hot path of
//! the whole pipeline (conv lowers onto them), so they are written to keep
//! the inner loops contiguous and FMA-friendly.

use crate::broadcast::broadcast_shape;
use crate::error::{Result, TensorError};
use crate::tape::record;
use crate::tensor::Tensor;

/// Accumulates 4 saxpy rows into `crow` per pass to amortize the load/store
/// traffic on `crow`. The operation order is fixed, so results are
/// bit-deterministic run to run.
#[inline]
fn axpy_rows(crow: &mut [f64], avals: impl Fn(usize) -> f64, b: &[f64], k: usize, n: usize) {
    let mut p = 0;
    while p + 4 <= k {
        let (a0, a1, a2, a3) = (avals(p), avals(p + 1), avals(p + 2), avals(p + 3));
        let b0 = &b[p * n..p * n + n];
        let b1 = &b[(p + 1) * n..(p + 1) * n + n];
        let b2 = &b[(p + 2) * n..(p + 2) * n + n];
        let b3 = &b[(p + 3) * n..(p + 3) * n + n];
        for j in 0..n {
            let mut v = crow[j];
            v = a0.mul_add(b0[j], v);
            v = a1.mul_add(b1[j], v);
            v = a2.mul_add(b2[j], v);
            v = a3.mul_add(b3[j], v);
            crow[j] = v;
        }
        p += 4;
    }
    while p < k {
        let av = avals(p);
        let brow = &b[p * n..p * n + n];
        for j in 0..n {
            crow[j] = av.mul_add(brow[j], crow[j]);
        }
        p += 1;
    }
}

/// C = A·B with A [m,k], B [k,n], C [m,n]. Overwrites C.
pub fn mm_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..i * k + k];
        let crow = &mut c[i * n..i * n + n];
        crow.fill(0.0);
        axpy_rows(crow, |p| arow[p], b, k, n);
    }
}

/// C = Aᵀ·B with A [k,m], B [k,n], C [m,n]. Overwrites C.
pub fn mm_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let crow = &mut c[i * n..i * n + n];
        crow.fill(0.0);
        axpy_rows(crow, |p| a[p * m + i], b, k, n);
    }
}

/// C = A·Bᵀ with A [m,k], B [n,k], C [m,n]. Overwrites C.
pub fn mm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..i * k + k];
        let mut j = 0;
        while j + 4 <= n {
            let b0 = &b[j * k..j * k + k];
            let b1 = &b[(j + 1) * k..(j + 1) * k + k];
            let b2 = &b[(j + 2) * k..(j + 2) * k + k];
            let b3 = &b[(j + 3) * k..(j + 3) * k + k];
            let (mut s0, mut s1, mut s2, mut s3) = (0.0f64, 0.0, 0.0, 0.0);
            for (p, &av) in arow.iter().enumerate() {
                s0 = av.mul_add(b0[p], s0);
                s1 = av.mul_add(b1[p], s1);
                s2 = av.mul_add(b2[p], s2);
                s3 = av.mul_add(b3[p], s3);
            }
            c[i * n + j] = s0;
            c[i * n + j + 1] = s1;
            c[i * n + j + 2] = s2;
            c[i * n + j + 3] = s3;
            j += 4;
        }
        while j < n {
            let brow = &b[j * k..j * k + k];
            let mut s = 0.0f64;
            for (p, &av) in arow.iter().enumerate() {
                s = av.mul_add(brow[p], s);
            }
            c[i * n + j] = s;
            j += 1;
        }
    }
}

impl Tensor {
    /// Batched matrix product. Both operands must have rank >= 2; leading
    /// batch dimensions broadcast.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), rhs.shape());
        if sa.len() < 2 || sb.len() < 2 {
            return Err(TensorError::ShapeMismatch(format!(
                "matmul needs rank >= 2, got {sa:?} x {sb:?}"
            )));
        }
        let (m, ka) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if ka != kb {
            return Err(TensorError::ShapeMismatch(format!(
                "matmul inner dimensions disagree: {sa:?} x {sb:?}"
            )));
        }
        let batch_a = &sa[..sa.len() - 2];
        let batch_b = &sb[..sb.len() - 2];
        let batch = broadcast_shape(batch_a, batch_b)?;
        let nbatch: usize = batch.iter().product();

        let mut out_shape = batch.clone();
        out_shape.push(m);
        out_shape.push(n);
        let mut out = vec![0.0; nbatch * m * n];

        let idx_a = batch_offsets(batch_a, &batch, m * ka);
        let idx_b = batch_offsets(batch_b, &batch, kb * n);
        let (da, db) = (self.data(), rhs.data());
        for bi in 0..nbatch {
            let a = &da[idx_a[bi]..idx_a[bi] + m * ka];
            let b = &db[idx_b[bi]..idx_b[bi] + kb * n];
            mm_nn(a, b, m, ka, n, &mut out[bi * m * n..(bi + 1) * m * n]);
        }
        let out = Tensor::from_vec(out, &out_shape);

        let (lhs, rhs_d) = (self.detached(), rhs.detached());
        let k = ka;
        Ok(record(
            out,
            &[self, rhs],
            Box::new(move |g| {
                // dA[b] = g[b]·B[b]ᵀ, dB[b] = A[b]ᵀ·g[b]; broadcast batch dims
                // are summed back down.
                let sa = lhs.shape().to_vec();
                let sb = rhs_d.shape().to_vec();
                let batch_a = &sa[..sa.len() - 2];
                let batch_b = &sb[..sb.len() - 2];
                let batch = broadcast_shape(batch_a, batch_b)?;
                let nbatch: usize = batch.iter().product();
                let idx_a = batch_offsets(batch_a, &batch, m * k);
                let idx_b = batch_offsets(batch_b, &batch, k * n);
                let mut da = vec![0.0; lhs.len()];
                let mut db = vec![0.0; rhs_d.len()];
                let mut tmp_a = vec![0.0; m * k];
                let mut tmp_b = vec![0.0; k * n];
                let gd = g.data();
                for bi in 0..nbatch {
                    let gb = &gd[bi * m * n..(bi + 1) * m * n];
                    let ab = &lhs.data()[idx_a[bi]..idx_a[bi] + m * k];
                    let bb = &rhs_d.data()[idx_b[bi]..idx_b[bi] + k * n];
                    mm_nt(gb, bb, m, n, k, &mut tmp_a);
                    for (dst, src) in da[idx_a[bi]..idx_a[bi] + m * k]
                        .iter_mut()
                        .zip(tmp_a.iter())
                    {
                        *dst += src;
                    }
                    mm_tn(ab, gb, k, m, n, &mut tmp_b);
                    for (dst, src) in db[idx_b[bi]..idx_b[bi] + k * n]
                        .iter_mut()
                        .zip(tmp_b.iter())
                    {
                        *dst += src;
                    }
                }
                Ok(vec![
                    Some(Tensor::from_vec(da, &sa)),
                    Some(Tensor::from_vec(db, &sb)),
                ])
            }),
        ))
    }
}

/// Flat element offset of each broadcast batch index into a tensor whose own
/// batch shape is `shape` (right-aligned against `batch`), with `inner`
/// elements per batch entry.
fn batch_offsets(shape: &[usize], batch: &[usize], inner: usize) -> Vec<usize> {
    let nbatch: usize = batch.iter().product();
    let rank = batch.len();
    let strides = crate::broadcast::broadcast_strides(shape, batch);
    let mut out = Vec::with_capacity(nbatch);
    let mut coords = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..nbatch {
        out.push(off * inner);
        for d in (0..rank).rev() {
            coords[d] += 1;
            off += strides[d];
            if coords[d] < batch[d] {
                break;
            }
            coords[d] = 0;
            off -= strides[d] * batch[d];
        }
    }
    out
}
