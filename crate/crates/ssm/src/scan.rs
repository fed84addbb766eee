//! Linear-recurrence scans: `h_k = a_bar_k * h_{k-1} + b_bar_k * x_k`,
//! `y_k = c_k . h_k + d * x_k`, with one state vector per inner channel.
//!
//! `scan_sequential` is the reference; `scan_parallel` computes the same
//! recurrence through the associative operator
//! `(a1, b1) o (a2, b2) = (a1*a2, a2*b1 + b2)` over a fixed reduction tree,
//! so its output is independent of evaluation order choices at runtime.

use crate::zoh::DiscreteSsm;
use vdq_tensor::{Result, Tensor, TensorError};

fn check_shapes(disc: &DiscreteSsm, c: &Tensor, d: &Tensor, x: &Tensor) -> Result<(usize, usize, usize)> {
    let (l, n) = (disc.a_bar.shape()[0], disc.a_bar.shape()[1]);
    if disc.b_bar.shape() != [l, n] {
        return Err(TensorError::ShapeMismatch("a_bar/b_bar disagree".into()));
    }
    if c.shape() != [l, n] {
        return Err(TensorError::ShapeMismatch(format!(
            "c must be [{l}, {n}], got {:?}",
            c.shape()
        )));
    }
    if x.rank() != 2 || x.shape()[0] != l {
        return Err(TensorError::ShapeMismatch(format!(
            "x must be [{l}, d_inner], got {:?}",
            x.shape()
        )));
    }
    let d_inner = x.shape()[1];
    if d.len() != d_inner {
        return Err(TensorError::ShapeMismatch(format!(
            "d must have length {d_inner}, got {}",
            d.len()
        )));
    }
    Ok((l, n, d_inner))
}

/// Exact recurrence, step by step, starting from h_0 = 0.
pub fn scan_sequential(disc: &DiscreteSsm, c: &Tensor, d: &Tensor, x: &Tensor) -> Result<Tensor> {
    let (l, n, d_inner) = check_shapes(disc, c, d, x)?;
    let (ab, bb, cd, dd, xd) = (
        disc.a_bar.data(),
        disc.b_bar.data(),
        c.data(),
        d.data(),
        x.data(),
    );
    let mut h = vec![0.0; d_inner * n];
    let mut y = vec![0.0; l * d_inner];
    for k in 0..l {
        let arow = &ab[k * n..(k + 1) * n];
        let brow = &bb[k * n..(k + 1) * n];
        let crow = &cd[k * n..(k + 1) * n];
        for ch in 0..d_inner {
            let xv = xd[k * d_inner + ch];
            let hrow = &mut h[ch * n..(ch + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                hrow[j] = arow[j] * hrow[j] + brow[j] * xv;
                acc += crow[j] * hrow[j];
            }
            y[k * d_inner + ch] = acc + dd[ch] * xv;
        }
    }
    Ok(Tensor::from_vec(y, &[l, d_inner]))
}

/// The associative composition of two (decay, contribution) pairs.
#[inline]
pub fn compose(p1: (f64, f64), p2: (f64, f64)) -> (f64, f64) {
    (p1.0 * p2.0, p2.0 * p1.1 + p2.1)
}

/// In-place inclusive scan under [`compose`] with a fixed divide-and-conquer
/// tree; entry k ends up holding the composition of entries 0..=k.
fn inclusive_scan(pairs: &mut [(f64, f64)]) {
    let n = pairs.len();
    if n <= 1 {
        return;
    }
    let mid = n / 2;
    let (left, right) = pairs.split_at_mut(mid);
    inclusive_scan(left);
    inclusive_scan(right);
    let carry = left[mid - 1];
    for p in right.iter_mut() {
        *p = compose(carry, *p);
    }
}

/// Same output as [`scan_sequential`] via parallel-scan algebra.
pub fn scan_parallel(disc: &DiscreteSsm, c: &Tensor, d: &Tensor, x: &Tensor) -> Result<Tensor> {
    let (l, n, d_inner) = check_shapes(disc, c, d, x)?;
    let (ab, bb, cd, dd, xd) = (
        disc.a_bar.data(),
        disc.b_bar.data(),
        c.data(),
        d.data(),
        x.data(),
    );
    let mut y = vec![0.0; l * d_inner];
    for ch in 0..d_inner {
        for j in 0..n {
            let mut pairs: Vec<(f64, f64)> = (0..l)
                .map(|k| (ab[k * n + j], bb[k * n + j] * xd[k * d_inner + ch]))
                .collect();
            inclusive_scan(&mut pairs);
            for k in 0..l {
                y[k * d_inner + ch] += cd[k * n + j] * pairs[k].1;
            }
        }
        for k in 0..l {
            y[k * d_inner + ch] += dd[ch] * xd[k * d_inner + ch];
        }
    }
    Ok(Tensor::from_vec(y, &[l, d_inner]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts(l: usize, n: usize, a: f64, b: f64, c: f64) -> (DiscreteSsm, Tensor) {
        (
            DiscreteSsm {
                a_bar: Tensor::full(&[l, n], a),
                b_bar: Tensor::full(&[l, n], b),
            },
            Tensor::full(&[l, n], c),
        )
    }

    #[test]
    fn degenerate_prefix_sum() {
        // a_bar = 1, b_bar = 1, c = 1, d = 0 -> y is the prefix sum of x
        let (disc, c) = consts(5, 1, 1.0, 1.0, 1.0);
        let d = Tensor::zeros(&[1]);
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0], &[5, 1]);
        let y = scan_sequential(&disc, &c, &d, &x).unwrap();
        assert_eq!(y.to_vec(), vec![1.0, 3.0, 6.0, 10.0, 15.0]);
    }

    #[test]
    fn memoryless_when_decay_is_zero() {
        // a_bar = 0 -> y_k = c_k * (b_bar_k x_k) + d x_k
        let (disc, c) = consts(4, 2, 0.0, 0.7, 1.3);
        let d = Tensor::from_vec(vec![0.2], &[1]);
        let x = Tensor::from_vec(vec![1.0, -2.0, 0.5, 3.0], &[4, 1]);
        let y = scan_sequential(&disc, &c, &d, &x).unwrap();
        for k in 0..4 {
            let xv = x.data()[k];
            let want = 2.0 * 1.3 * 0.7 * xv + 0.2 * xv; // n = 2 identical states
            assert!((y.data()[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let (disc, c) = consts(4, 2, 0.5, 1.0, 1.0);
        let d = Tensor::zeros(&[1]);
        let x = Tensor::zeros(&[5, 1]);
        assert!(scan_sequential(&disc, &c, &d, &x).is_err());
        let d_bad = Tensor::zeros(&[3]);
        let x_ok = Tensor::zeros(&[4, 1]);
        assert!(scan_sequential(&disc, &c, &d_bad, &x_ok).is_err());
    }
}
