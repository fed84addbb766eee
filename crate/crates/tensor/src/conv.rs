//! N-dimensional convolution (rank 1, 2 or 3 spatial axes) lowered onto the
//! matmul kernels via an im2col buffer, plus nearest-neighbour upsampling.

use crate::error::{Result, TensorError};
use crate::matmul::{mm_nn, mm_nt, mm_tn};
use crate::tape::record;
use crate::tensor::Tensor;

struct ConvGeom {
    batch: usize,
    c_in: usize,
    c_out: usize,
    spatial: Vec<usize>,
    kernel: Vec<usize>,
    stride: Vec<usize>,
    pad: Vec<usize>,
    out_spatial: Vec<usize>,
    /// Cin * prod(kernel)
    ck: usize,
    /// prod(out_spatial)
    p: usize,
}

fn conv_geometry(
    x: &Tensor,
    w: &Tensor,
    stride: &[usize],
    pad: &[usize],
) -> Result<ConvGeom> {
    let rank = x.rank().saturating_sub(2);
    if !(1..=3).contains(&rank) || w.rank() != rank + 2 {
        return Err(TensorError::ShapeMismatch(format!(
            "conv expects input [B,C,spatial...] with 1-3 spatial axes, got {:?} and kernel {:?}",
            x.shape(),
            w.shape()
        )));
    }
    if stride.len() != rank || pad.len() != rank {
        return Err(TensorError::ShapeMismatch(format!(
            "stride/pad length must equal spatial rank {rank}"
        )));
    }
    if stride.iter().any(|&s| s == 0) {
        return Err(TensorError::ShapeMismatch("stride must be >= 1".into()));
    }
    let (batch, c_in) = (x.shape()[0], x.shape()[1]);
    let (c_out, wc_in) = (w.shape()[0], w.shape()[1]);
    if wc_in != c_in {
        return Err(TensorError::ShapeMismatch(format!(
            "kernel expects {wc_in} input channels, input has {c_in}"
        )));
    }
    let spatial = x.shape()[2..].to_vec();
    let kernel = w.shape()[2..].to_vec();
    let mut out_spatial = Vec::with_capacity(rank);
    for i in 0..rank {
        let padded = spatial[i] + 2 * pad[i];
        if kernel[i] > padded {
            return Err(TensorError::ShapeMismatch(format!(
                "kernel size {} exceeds padded input {} on axis {}",
                kernel[i], padded, i
            )));
        }
        out_spatial.push((padded - kernel[i]) / stride[i] + 1);
    }
    let ck = c_in * kernel.iter().product::<usize>();
    let p = out_spatial.iter().product();
    Ok(ConvGeom {
        batch,
        c_in,
        c_out,
        spatial,
        kernel,
        stride: stride.to_vec(),
        pad: pad.to_vec(),
        out_spatial,
        ck,
        p,
    })
}

/// Fills `col` (layout [CK, P]) from one batch element `x` (layout [Cin, spatial]).
fn im2col_t(x: &[f64], g: &ConvGeom, col: &mut [f64]) {
    let rank = g.spatial.len();
    let in_size: usize = g.spatial.iter().product();
    let mut kk = vec![0usize; rank];
    let kcount: usize = g.kernel.iter().product();
    for ci in 0..g.c_in {
        let xc = &x[ci * in_size..(ci + 1) * in_size];
        for dk in 0..kcount {
            // decompose dk into kernel coords
            let mut rem = dk;
            for d in (0..rank).rev() {
                kk[d] = rem % g.kernel[d];
                rem /= g.kernel[d];
            }
            let row = &mut col[(ci * kcount + dk) * g.p..(ci * kcount + dk + 1) * g.p];
            fill_row(xc, g, &kk, row);
        }
    }
}

/// Scatter-add of `col` back into `dx` — the adjoint of [`im2col_t`].
fn col2im_t(col: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let rank = g.spatial.len();
    let in_size: usize = g.spatial.iter().product();
    let mut kk = vec![0usize; rank];
    let kcount: usize = g.kernel.iter().product();
    for ci in 0..g.c_in {
        let dxc = &mut dx[ci * in_size..(ci + 1) * in_size];
        for dk in 0..kcount {
            let mut rem = dk;
            for d in (0..rank).rev() {
                kk[d] = rem % g.kernel[d];
                rem /= g.kernel[d];
            }
            let row = &col[(ci * kcount + dk) * g.p..(ci * kcount + dk + 1) * g.p];
            scatter_row(dxc, g, &kk, row);
        }
    }
}

fn fill_row(xc: &[f64], g: &ConvGeom, kk: &[usize], row: &mut [f64]) {
    if g.spatial.len() == 2 {
        return fill_row_2d(xc, g, kk, row);
    }
    let rank = g.spatial.len();
    let mut po = vec![0usize; rank];
    for (pi, slot) in row.iter_mut().enumerate() {
        let mut rem = pi;
        for d in (0..rank).rev() {
            po[d] = rem % g.out_spatial[d];
            rem /= g.out_spatial[d];
        }
        let mut flat = 0usize;
        let mut ok = true;
        for d in 0..rank {
            let coord = po[d] * g.stride[d] + kk[d];
            if coord < g.pad[d] || coord - g.pad[d] >= g.spatial[d] {
                ok = false;
                break;
            }
            flat = flat * g.spatial[d] + (coord - g.pad[d]);
        }
        *slot = if ok { xc[flat] } else { 0.0 };
    }
}

/// Valid output range [lo, hi) on one axis for a given kernel offset, i.e.
/// the positions whose input coordinate `o*stride + k - pad` lands in bounds.
fn valid_range(out: usize, stride: usize, k: usize, pad: usize, size: usize) -> (usize, usize) {
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    let max_coord = size + pad;
    let hi = if k >= max_coord {
        0
    } else {
        (((max_coord - 1 - k) / stride) + 1).min(out)
    };
    (lo.min(hi), hi)
}

fn fill_row_2d(xc: &[f64], g: &ConvGeom, kk: &[usize], row: &mut [f64]) {
    let (h, w) = (g.spatial[0], g.spatial[1]);
    let (oh, ow) = (g.out_spatial[0], g.out_spatial[1]);
    let (sh, sw) = (g.stride[0], g.stride[1]);
    let (ph, pw) = (g.pad[0], g.pad[1]);
    let (lo_i, hi_i) = valid_range(oh, sh, kk[0], ph, h);
    let (lo_j, hi_j) = valid_range(ow, sw, kk[1], pw, w);
    row[..lo_i * ow].fill(0.0);
    row[hi_i * ow..].fill(0.0);
    for oi in lo_i..hi_i {
        let ii = oi * sh + kk[0] - ph;
        let dst = &mut row[oi * ow..(oi + 1) * ow];
        dst[..lo_j].fill(0.0);
        dst[hi_j..].fill(0.0);
        if sw == 1 {
            let base = ii * w + (lo_j + kk[1] - pw);
            dst[lo_j..hi_j].copy_from_slice(&xc[base..base + (hi_j - lo_j)]);
        } else {
            for (oj, slot) in dst[lo_j..hi_j].iter_mut().enumerate() {
                let jj = (lo_j + oj) * sw + kk[1] - pw;
                *slot = xc[ii * w + jj];
            }
        }
    }
}

fn scatter_row(dxc: &mut [f64], g: &ConvGeom, kk: &[usize], row: &[f64]) {
    if g.spatial.len() == 2 {
        let (h, w) = (g.spatial[0], g.spatial[1]);
        let (oh, ow) = (g.out_spatial[0], g.out_spatial[1]);
        let (sh, sw) = (g.stride[0], g.stride[1]);
        let (ph, pw) = (g.pad[0], g.pad[1]);
        let (lo_i, hi_i) = valid_range(oh, sh, kk[0], ph, h);
        let (lo_j, hi_j) = valid_range(ow, sw, kk[1], pw, w);
        for oi in lo_i..hi_i {
            let ii = oi * sh + kk[0] - ph;
            let src = &row[oi * ow..(oi + 1) * ow];
            if sw == 1 {
                let base = ii * w + (lo_j + kk[1] - pw);
                for (dst, &v) in dxc[base..base + (hi_j - lo_j)]
                    .iter_mut()
                    .zip(src[lo_j..hi_j].iter())
                {
                    *dst += v;
                }
            } else {
                for (oj, &v) in src[lo_j..hi_j].iter().enumerate() {
                    let jj = (lo_j + oj) * sw + kk[1] - pw;
                    dxc[ii * w + jj] += v;
                }
            }
        }
        return;
    }
    let rank = g.spatial.len();
    let mut po = vec![0usize; rank];
    for (pi, &v) in row.iter().enumerate() {
        let mut rem = pi;
        for d in (0..rank).rev() {
            po[d] = rem % g.out_spatial[d];
            rem /= g.out_spatial[d];
        }
        let mut flat = 0usize;
        let mut ok = true;
        for d in 0..rank {
            let coord = po[d] * g.stride[d] + kk[d];
            if coord < g.pad[d] || coord - g.pad[d] >= g.spatial[d] {
                ok = false;
                break;
            }
            flat = flat * g.spatial[d] + (coord - g.pad[d]);
        }
        if ok {
            dxc[flat] += v;
        }
    }
}

impl Tensor {
    /// Convolution of `[B, Cin, spatial...]` with `[Cout, Cin, k...]` kernels
    /// and symmetric zero padding. Output spatial size per axis is
    /// `(in + 2*pad - k) / stride + 1`.
    pub fn conv(&self, kernel: &Tensor, stride: &[usize], pad: &[usize]) -> Result<Tensor> {
        let g = conv_geometry(self, kernel, stride, pad)?;
        let in_size: usize = g.spatial.iter().product::<usize>() * g.c_in;
        let out_size = g.c_out * g.p;
        let mut out = vec![0.0; g.batch * out_size];
        let mut col = vec![0.0; g.ck * g.p];
        let xd = self.data();
        let wd = kernel.data();
        for b in 0..g.batch {
            im2col_t(&xd[b * in_size..(b + 1) * in_size], &g, &mut col);
            mm_nn(
                wd,
                &col,
                g.c_out,
                g.ck,
                g.p,
                &mut out[b * out_size..(b + 1) * out_size],
            );
        }
        let mut out_shape = vec![g.batch, g.c_out];
        out_shape.extend_from_slice(&g.out_spatial);
        let out = Tensor::from_vec(out, &out_shape);

        let x = self.detached();
        let w = kernel.detached();
        let stride = stride.to_vec();
        let pad = pad.to_vec();
        Ok(record(
            out,
            &[self, kernel],
            Box::new(move |grad| {
                let g = conv_geometry(&x, &w, &stride, &pad)?;
                let in_size: usize = g.spatial.iter().product::<usize>() * g.c_in;
                let out_size = g.c_out * g.p;
                let mut dw = vec![0.0; w.len()];
                let mut dx = vec![0.0; x.len()];
                let mut col = vec![0.0; g.ck * g.p];
                let mut dw_tmp = vec![0.0; g.c_out * g.ck];
                let mut dcol = vec![0.0; g.ck * g.p];
                let gd = grad.data();
                let xd = x.data();
                let wd = w.data();
                for b in 0..g.batch {
                    let gb = &gd[b * out_size..(b + 1) * out_size];
                    im2col_t(&xd[b * in_size..(b + 1) * in_size], &g, &mut col);
                    mm_nt(gb, &col, g.c_out, g.p, g.ck, &mut dw_tmp);
                    for (dst, src) in dw.iter_mut().zip(dw_tmp.iter()) {
                        *dst += src;
                    }
                    mm_tn(wd, gb, g.ck, g.c_out, g.p, &mut dcol);
                    col2im_t(&dcol, &g, &mut dx[b * in_size..(b + 1) * in_size]);
                }
                Ok(vec![
                    Some(Tensor::from_vec(dx, x.shape())),
                    Some(Tensor::from_vec(dw, w.shape())),
                ])
            }),
        ))
    }

    /// Nearest-neighbour upsampling of `[B, C, H, W]` by an integer factor.
    pub fn upsample_nearest2d(&self, factor: usize) -> Result<Tensor> {
        if self.rank() != 4 {
            return Err(TensorError::ShapeMismatch(format!(
                "upsample_nearest2d expects [B,C,H,W], got {:?}",
                self.shape()
            )));
        }
        assert!(factor >= 1);
        let (b, c, h, w) = (
            self.shape()[0],
            self.shape()[1],
            self.shape()[2],
            self.shape()[3],
        );
        let (oh, ow) = (h * factor, w * factor);
        let mut out = vec![0.0; b * c * oh * ow];
        let xd = self.data();
        for bc in 0..b * c {
            let src = &xd[bc * h * w..(bc + 1) * h * w];
            let dst = &mut out[bc * oh * ow..(bc + 1) * oh * ow];
            for i in 0..oh {
                let si = i / factor;
                for j in 0..ow {
                    dst[i * ow + j] = src[si * w + j / factor];
                }
            }
        }
        let out = Tensor::from_vec(out, &[b, c, oh, ow]);
        let in_shape = self.shape().to_vec();
        Ok(record(
            out,
            &[self],
            Box::new(move |grad| {
                let (b, c, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
                let (oh, ow) = (h * factor, w * factor);
                let mut dx = vec![0.0; b * c * h * w];
                let gd = grad.data();
                for bc in 0..b * c {
                    let src = &gd[bc * oh * ow..(bc + 1) * oh * ow];
                    let dst = &mut dx[bc * h * w..(bc + 1) * h * w];
                    for i in 0..oh {
                        for j in 0..ow {
                            dst[(i / factor) * w + j / factor] += src[i * ow + j];
                        }
                    }
                }
                Ok(vec![Some(Tensor::from_vec(dx, &in_shape))])
            }),
        ))
    }
}
