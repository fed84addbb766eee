//! Checks every tensor operation against an independent oracle: triple-loop
//! matmul, sliding-window convolution, linear-scan max, two-pass mean/variance
//! normalization.

use vdq_tensor::rng::rng_from;
use vdq_tensor::Tensor;

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b.iter()).enumerate() {
        assert!(
            (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())),
            "mismatch at {i}: {x} vs {y}"
        );
    }
}

#[test]
fn elementwise_examples() {
    let a = Tensor::from_vec(vec![1.0, 2.0], &[2]);
    let b = Tensor::from_vec(vec![3.0, 4.0], &[2]);
    assert_eq!(a.add(&b).unwrap().to_vec(), vec![4.0, 6.0]);

    let c = Tensor::from_vec(vec![2.0, 3.0], &[2]);
    assert_eq!(c.mul_scalar(0.0).unwrap().to_vec(), vec![0.0, 0.0]);

    let z = Tensor::from_vec(vec![0.0], &[1]);
    assert_eq!(z.sigmoid().unwrap().to_vec(), vec![0.5]);
}

#[test]
fn elementwise_errors() {
    let a = Tensor::from_vec(vec![1.0], &[1]);
    let zero = Tensor::from_vec(vec![0.0], &[1]);
    assert!(a.div(&zero).is_err());
    assert!(zero.log().is_err());
    assert!(Tensor::from_vec(vec![-1.0], &[1]).sqrt().is_err());
    let bad = Tensor::from_vec(vec![1.0, 2.0, 3.0], &[3]);
    let other = Tensor::from_vec(vec![1.0, 2.0], &[2]);
    assert!(bad.add(&other).is_err());
}

#[test]
fn matmul_identity_and_dot() {
    let eye = Tensor::from_vec(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]);
    let m = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]);
    assert_eq!(eye.matmul(&m).unwrap().to_vec(), m.to_vec());

    let row = Tensor::from_vec(vec![1.0, 2.0], &[1, 2]);
    let col = Tensor::from_vec(vec![3.0, 4.0], &[2, 1]);
    assert_eq!(row.matmul(&col).unwrap().to_vec(), vec![11.0]);

    let bad = Tensor::from_vec(vec![1.0; 6], &[2, 3]);
    assert!(bad.matmul(&bad).is_err());
}

/// Naive triple-loop matmul oracle.
fn matmul_oracle(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a.data()[i * k + p] * b.data()[p * n + j];
            }
            c[i * n + j] = s;
        }
    }
    c
}

#[test]
fn matmul_matches_triple_loop_oracle() {
    let mut rng = rng_from(7);
    let a = Tensor::randn(&[5, 7], &mut rng);
    let b = Tensor::randn(&[7, 3], &mut rng);
    let got = a.matmul(&b).unwrap();
    assert_close(got.data(), &matmul_oracle(&a, &b), 1e-12);
}

#[test]
fn matmul_batched_broadcast() {
    let mut rng = rng_from(8);
    let a = Tensor::randn(&[4, 3, 5], &mut rng);
    let b = Tensor::randn(&[5, 2], &mut rng);
    let got = a.matmul(&b).unwrap();
    assert_eq!(got.shape(), &[4, 3, 2]);
    for bi in 0..4 {
        let ab = Tensor::from_vec(a.data()[bi * 15..(bi + 1) * 15].to_vec(), &[3, 5]);
        let expect = matmul_oracle(&ab, &b);
        assert_close(&got.data()[bi * 6..(bi + 1) * 6], &expect, 1e-12);
    }
}

#[test]
fn conv_identity_kernel() {
    let mut rng = rng_from(9);
    let x = Tensor::randn(&[1, 3, 5, 5], &mut rng);
    // 1x1 kernels wired as per-channel identity
    let mut w = vec![0.0; 3 * 3];
    for c in 0..3 {
        w[c * 3 + c] = 1.0;
    }
    let w = Tensor::from_vec(w, &[3, 3, 1, 1]);
    let y = x.conv(&w, &[1, 1], &[0, 0]).unwrap();
    assert_eq!(y.to_vec(), x.to_vec());
}

#[test]
fn conv_all_ones_on_constant() {
    let c = 0.7;
    let x = Tensor::full(&[1, 1, 6, 6], c);
    let w = Tensor::ones(&[1, 1, 3, 3]);
    let y = x.conv(&w, &[1, 1], &[0, 0]).unwrap();
    assert_eq!(y.shape(), &[1, 1, 4, 4]);
    for &v in y.data() {
        assert!((v - 9.0 * c).abs() < 1e-12);
    }
}

/// Direct sliding-window convolution oracle (rank 2).
fn conv2d_oracle(
    x: &Tensor,
    w: &Tensor,
    stride: (usize, usize),
    pad: (usize, usize),
) -> Tensor {
    let (b, cin, h, wid) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (cout, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let oh = (h + 2 * pad.0 - kh) / stride.0 + 1;
    let ow = (wid + 2 * pad.1 - kw) / stride.1 + 1;
    let mut out = vec![0.0; b * cout * oh * ow];
    for bi in 0..b {
        for co in 0..cout {
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut s = 0.0;
                    for ci in 0..cin {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let ii = (oi * stride.0 + ki) as isize - pad.0 as isize;
                                let jj = (oj * stride.1 + kj) as isize - pad.1 as isize;
                                if ii < 0 || jj < 0 || ii >= h as isize || jj >= wid as isize {
                                    continue;
                                }
                                let xv = x.data()
                                    [((bi * cin + ci) * h + ii as usize) * wid + jj as usize];
                                let wv = w.data()[((co * cin + ci) * kh + ki) * kw + kj];
                                s += xv * wv;
                            }
                        }
                    }
                    out[((bi * cout + co) * oh + oi) * ow + oj] = s;
                }
            }
        }
    }
    Tensor::from_vec(out, &[b, cout, oh, ow])
}

#[test]
fn conv2d_matches_sliding_window_oracle() {
    let mut rng = rng_from(10);
    for &(stride, pad) in &[(1usize, 0usize), (1, 1), (2, 1), (2, 0)] {
        let x = Tensor::randn(&[2, 3, 9, 8], &mut rng);
        let w = Tensor::randn(&[4, 3, 3, 3], &mut rng);
        let got = x.conv(&w, &[stride, stride], &[pad, pad]).unwrap();
        let want = conv2d_oracle(&x, &w, (stride, stride), (pad, pad));
        assert_eq!(got.shape(), want.shape());
        assert_close(got.data(), want.data(), 1e-10);
    }
}

#[test]
fn conv1d_and_conv3d_match_rank2_reduction() {
    let mut rng = rng_from(11);
    // rank-1 conv equals rank-2 conv with a height-1 image
    let x1 = Tensor::randn(&[1, 2, 12], &mut rng);
    let w1 = Tensor::randn(&[3, 2, 4], &mut rng);
    let y1 = x1.conv(&w1, &[1], &[2]).unwrap();
    let x2 = Tensor::from_vec(x1.to_vec(), &[1, 2, 1, 12]);
    let w2 = Tensor::from_vec(w1.to_vec(), &[3, 2, 1, 4]);
    let y2 = x2.conv(&w2, &[1, 1], &[0, 2]).unwrap();
    assert_close(y1.data(), y2.data(), 1e-12);

    // rank-3 conv with a singleton time axis equals rank-2 conv
    let x3 = Tensor::from_vec(x2.to_vec(), &[1, 2, 1, 1, 12]);
    let w3 = Tensor::from_vec(w2.to_vec(), &[3, 2, 1, 1, 4]);
    let y3 = x3.conv(&w3, &[1, 1, 1], &[0, 0, 2]).unwrap();
    assert_close(y3.data(), y2.data(), 1e-12);
}

#[test]
fn conv_errors() {
    let x = Tensor::ones(&[1, 2, 4, 4]);
    let w = Tensor::ones(&[1, 3, 3, 3]); // channel mismatch
    assert!(x.conv(&w, &[1, 1], &[0, 0]).is_err());
    let w = Tensor::ones(&[1, 2, 5, 5]); // kernel larger than padded input
    assert!(x.conv(&w, &[1, 1], &[0, 0]).is_err());
    let w = Tensor::ones(&[1, 2, 3, 3]);
    assert!(x.conv(&w, &[0, 1], &[0, 0]).is_err()); // invalid stride
}

#[test]
fn reduce_examples() {
    let x = Tensor::from_vec(vec![0.0, 0.0, 0.0], &[3]);
    let s = x.softmax(0).unwrap();
    for &v in s.data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    let m = Tensor::from_vec(vec![1.0, 2.0, 3.0], &[3]);
    assert!((m.mean(&[0], false).unwrap().item() - 2.0).abs() < 1e-15);

    // max over axis vs linear scan oracle
    let mut rng = rng_from(12);
    let t = Tensor::randn(&[4, 6], &mut rng);
    let got = t.max(&[1], false).unwrap();
    for i in 0..4 {
        let want = t.data()[i * 6..(i + 1) * 6]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(got.data()[i], want);
    }

    // softmax sums to one along the reduced axis
    let sm = t.softmax(1).unwrap().sum(&[1], false).unwrap();
    for &v in sm.data() {
        assert!((v - 1.0).abs() < 1e-12);
    }

    assert!(t.sum(&[], false).is_err());
    assert!(t.sum(&[5], false).is_err());
}

#[test]
fn layer_norm_examples() {
    // constant input -> zeros before affine (eps guards zero variance)
    let x = Tensor::full(&[4], 3.5);
    let y = x.layer_norm(0, None, None, 1e-6).unwrap();
    for &v in y.data() {
        assert!(v.abs() < 1e-9);
    }

    // [1,-1] is already normalized; eps -> 0 recovers it
    let x = Tensor::from_vec(vec![1.0, -1.0], &[2]);
    let y = x.layer_norm(0, None, None, 1e-15).unwrap();
    assert_close(y.data(), &[1.0, -1.0], 1e-7);

    // random vector vs explicit two-pass mean/variance oracle
    let mut rng = rng_from(13);
    let x = Tensor::randn(&[9], &mut rng);
    let y = x.layer_norm(0, None, None, 1e-12).unwrap();
    let mean: f64 = x.data().iter().sum::<f64>() / 9.0;
    let var: f64 = x.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0;
    let want: Vec<f64> = x
        .data()
        .iter()
        .map(|v| (v - mean) / (var + 1e-12).sqrt())
        .collect();
    assert_close(y.data(), &want, 1e-10);

    // normalized output has mean ~0 and variance ~1 along the axis
    let x = Tensor::randn(&[3, 17], &mut rng);
    let y = x.layer_norm(1, None, None, 1e-12).unwrap();
    for r in 0..3 {
        let row = &y.data()[r * 17..(r + 1) * 17];
        let m: f64 = row.iter().sum::<f64>() / 17.0;
        let v: f64 = row.iter().map(|u| (u - m) * (u - m)).sum::<f64>() / 17.0;
        assert!(m.abs() < 1e-6 && (v - 1.0).abs() < 1e-6);
    }
}

#[test]
fn broadcast_consistent_with_explicit_expansion() {
    let mut rng = rng_from(14);
    let a = Tensor::randn(&[3, 1], &mut rng);
    let b = Tensor::randn(&[2, 3, 4], &mut rng);
    // explicit expansion via multiplication with ones
    let a_full = a.mul(&Tensor::ones(&[2, 3, 4])).unwrap();
    let implicit = a.add(&b).unwrap();
    let explicit = a_full.add(&b).unwrap();
    assert_eq!(implicit.shape(), explicit.shape());
    assert_close(implicit.data(), explicit.data(), 0.0);
}

#[test]
fn operations_are_deterministic() {
    let mut rng1 = rng_from(99);
    let mut rng2 = rng_from(99);
    let a1 = Tensor::randn(&[4, 16, 9, 9], &mut rng1);
    let a2 = Tensor::randn(&[4, 16, 9, 9], &mut rng2);
    let w1 = Tensor::randn(&[8, 16, 3, 3], &mut rng1);
    let w2 = Tensor::randn(&[8, 16, 3, 3], &mut rng2);
    let y1 = a1.conv(&w1, &[1, 1], &[1, 1]).unwrap();
    let y2 = a2.conv(&w2, &[1, 1], &[1, 1]).unwrap();
    let bits1: Vec<u64> = y1.data().iter().map(|v| v.to_bits()).collect();
    let bits2: Vec<u64> = y2.data().iter().map(|v| v.to_bits()).collect();
    assert_eq!(bits1, bits2);
}

#[test]
fn shape_ops_roundtrip() {
    let mut rng = rng_from(15);
    let x = Tensor::randn(&[2, 3, 4], &mut rng);
    let p = x.permute(&[2, 0, 1]).unwrap();
    assert_eq!(p.shape(), &[4, 2, 3]);
    let back = p.permute(&[1, 2, 0]).unwrap();
    assert_close(back.data(), x.data(), 0.0);

    let f = x.flip(1).unwrap().flip(1).unwrap();
    assert_close(f.data(), x.data(), 0.0);

    let n = x.narrow(2, 1, 2).unwrap();
    assert_eq!(n.shape(), &[2, 3, 2]);
    assert_eq!(n.at(&[1, 2, 0]), x.at(&[1, 2, 1]));

    let c = Tensor::cat(&[&x, &x], 1).unwrap();
    assert_eq!(c.shape(), &[2, 6, 4]);

    let padded = x.pad(&[(0, 0), (1, 2), (0, 0)]).unwrap();
    assert_eq!(padded.shape(), &[2, 6, 4]);
    assert_eq!(padded.at(&[0, 0, 0]), 0.0);
    assert_eq!(padded.at(&[0, 1, 0]), x.at(&[0, 0, 0]));

    let rows = Tensor::from_vec((0..12).map(|v| v as f64).collect(), &[4, 3]);
    let g = rows.gather_rows(&[3, 0, 3]).unwrap();
    assert_eq!(g.to_vec(), vec![9.0, 10.0, 11.0, 0.0, 1.0, 2.0, 9.0, 10.0, 11.0]);
}
