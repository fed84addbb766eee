//! Parametric degradations. Severity 0 is the bit-exact identity for every
//! kind; each kind's severity map is documented on its arm.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::Result;
use vdq_tensor::rng::rng_from;
use vdq_tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationKind {
    GaussianBlur,
    GaussianNoise,
    Blockiness,
    TemporalFlicker,
    MotionBlur,
    ExposureShift,
}

impl DegradationKind {
    pub const ALL: [DegradationKind; 6] = [
        DegradationKind::GaussianBlur,
        DegradationKind::GaussianNoise,
        DegradationKind::Blockiness,
        DegradationKind::TemporalFlicker,
        DegradationKind::MotionBlur,
        DegradationKind::ExposureShift,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DegradationKind::GaussianBlur => "gaussian_blur",
            DegradationKind::GaussianNoise => "gaussian_noise",
            DegradationKind::Blockiness => "blockiness",
            DegradationKind::TemporalFlicker => "temporal_flicker",
            DegradationKind::MotionBlur => "motion_blur",
            DegradationKind::ExposureShift => "exposure_shift",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub kind: DegradationKind,
    /// In [0, 1]; 0 is the identity.
    pub severity: f64,
}

struct Geom {
    frames: usize,
    h: usize,
    w: usize,
}

fn geom(frames: &Tensor) -> Geom {
    assert_eq!(frames.rank(), 4);
    assert_eq!(frames.shape()[0], 3);
    Geom {
        frames: frames.shape()[1],
        h: frames.shape()[2],
        w: frames.shape()[3],
    }
}

/// Applies one degradation deterministically. Severity maps:
/// blur sigma = 3s; noise std = 0.2s; blockiness = 8x8 DCT quantization with
/// step ~ s; flicker = per-frame brightness jitter of amplitude 0.25s;
/// motion blur = directional 1 + round(10s) pixel streak; exposure = gain
/// 1 +- 0.8s.
pub fn apply_degradation(frames: &Tensor, spec: &DegradationSpec, seed: u64) -> Result<Tensor> {
    assert!(
        (0.0..=1.0).contains(&spec.severity),
        "severity must lie in [0, 1]"
    );
    if spec.severity == 0.0 {
        return Ok(frames.detached());
    }
    let g = geom(frames);
    let s = spec.severity;
    let out = match spec.kind {
        DegradationKind::GaussianBlur => gaussian_blur(frames, &g, 3.0 * s),
        DegradationKind::GaussianNoise => gaussian_noise(frames, 0.2 * s, seed),
        DegradationKind::Blockiness => blockiness(frames, &g, s),
        DegradationKind::TemporalFlicker => flicker(frames, &g, 0.25 * s, seed),
        DegradationKind::MotionBlur => motion_blur(frames, &g, 1 + (10.0 * s).round() as usize, seed),
        DegradationKind::ExposureShift => exposure(frames, 0.8 * s, seed),
    };
    Ok(out)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable Gaussian with replicated borders, per frame per channel.
fn gaussian_blur(frames: &Tensor, g: &Geom, sigma: f64) -> Tensor {
    let k = gaussian_kernel(sigma);
    let r = k.len() / 2;
    let plane = g.h * g.w;
    let data = frames.data();
    let mut tmp = vec![0.0; data.len()];
    let mut out = vec![0.0; data.len()];
    for p in 0..3 * g.frames {
        let src = &data[p * plane..(p + 1) * plane];
        let dst = &mut tmp[p * plane..(p + 1) * plane];
        for y in 0..g.h {
            for x in 0..g.w {
                let mut acc = 0.0;
                for (i, &kv) in k.iter().enumerate() {
                    let xi = (x as isize + i as isize - r as isize).clamp(0, g.w as isize - 1);
                    acc += kv * src[y * g.w + xi as usize];
                }
                dst[y * g.w + x] = acc;
            }
        }
    }
    for p in 0..3 * g.frames {
        let src = &tmp[p * plane..(p + 1) * plane];
        let dst = &mut out[p * plane..(p + 1) * plane];
        for y in 0..g.h {
            for x in 0..g.w {
                let mut acc = 0.0;
                for (i, &kv) in k.iter().enumerate() {
                    let yi = (y as isize + i as isize - r as isize).clamp(0, g.h as isize - 1);
                    acc += kv * src[yi as usize * g.w + x];
                }
                dst[y * g.w + x] = acc;
            }
        }
    }
    Tensor::from_vec(out, frames.shape())
}

fn gaussian_noise(frames: &Tensor, std: f64, seed: u64) -> Tensor {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rng_from(seed);
    let out: Vec<f64> = frames
        .data()
        .iter()
        .map(|&v| {
            let n: f64 = StandardNormal.sample(&mut rng);
            (v + std * n).clamp(0.0, 1.0)
        })
        .collect();
    Tensor::from_vec(out, frames.shape())
}

/// Orthonormal 8x8 DCT-II basis.
fn dct8() -> [[f64; 8]; 8] {
    let mut m = [[0.0; 8]; 8];
    for (k, row) in m.iter_mut().enumerate() {
        let c = if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        for (n, v) in row.iter_mut().enumerate() {
            *v = c * (std::f64::consts::PI * (2.0 * n as f64 + 1.0) * k as f64 / 16.0).cos();
        }
    }
    m
}

/// 8x8 transform-domain quantization; the step grows with frequency and
/// severity, reproducing block-compression artifacts.
fn blockiness(frames: &Tensor, g: &Geom, s: f64) -> Tensor {
    let m = dct8();
    let plane = g.h * g.w;
    let mut out = frames.to_vec();
    let bh = g.h / 8;
    let bw = g.w / 8;
    for p in 0..3 * g.frames {
        let base = p * plane;
        for by in 0..bh {
            for bx in 0..bw {
                // load block
                let mut blk = [[0.0f64; 8]; 8];
                for (i, row) in blk.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = out[base + (by * 8 + i) * g.w + bx * 8 + j];
                    }
                }
                // C = M blk M^T
                let mut c = [[0.0f64; 8]; 8];
                for u in 0..8 {
                    for v in 0..8 {
                        let mut acc = 0.0;
                        for i in 0..8 {
                            for j in 0..8 {
                                acc += m[u][i] * blk[i][j] * m[v][j];
                            }
                        }
                        c[u][v] = acc;
                    }
                }
                // quantize with frequency-weighted step
                for (u, row) in c.iter_mut().enumerate() {
                    for (v, cv) in row.iter_mut().enumerate() {
                        let q = s * (0.04 + 0.08 * (u + v) as f64);
                        if q > 0.0 {
                            *cv = (*cv / q).round() * q;
                        }
                    }
                }
                // blk' = M^T C M
                for i in 0..8 {
                    for j in 0..8 {
                        let mut acc = 0.0;
                        for u in 0..8 {
                            for v in 0..8 {
                                acc += m[u][i] * c[u][v] * m[v][j];
                            }
                        }
                        out[base + (by * 8 + i) * g.w + bx * 8 + j] = acc.clamp(0.0, 1.0);
                    }
                }
            }
        }
    }
    Tensor::from_vec(out, frames.shape())
}

/// Per-frame brightness offset, uniform in [-amp, amp].
fn flicker(frames: &Tensor, g: &Geom, amp: f64, seed: u64) -> Tensor {
    let mut rng = rng_from(seed);
    let offsets: Vec<f64> = (0..g.frames).map(|_| rng.random_range(-amp..amp)).collect();
    let plane = g.h * g.w;
    let mut out = frames.to_vec();
    for c in 0..3 {
        for (t, &off) in offsets.iter().enumerate() {
            let base = (c * g.frames + t) * plane;
            for v in &mut out[base..base + plane] {
                *v = (*v + off).clamp(0.0, 1.0);
            }
        }
    }
    Tensor::from_vec(out, frames.shape())
}

/// Directional streak of `len` unit steps along a seeded angle.
fn motion_blur(frames: &Tensor, g: &Geom, len: usize, seed: u64) -> Tensor {
    if len <= 1 {
        return frames.detached();
    }
    let mut rng = rng_from(seed);
    let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (dx, dy) = (theta.cos(), theta.sin());
    let offsets: Vec<(isize, isize)> = (0..len)
        .map(|i| {
            let c = i as f64 - (len - 1) as f64 / 2.0;
            ((c * dx).round() as isize, (c * dy).round() as isize)
        })
        .collect();
    let wgt = 1.0 / offsets.len() as f64;
    let plane = g.h * g.w;
    let data = frames.data();
    let mut out = vec![0.0; data.len()];
    for p in 0..3 * g.frames {
        let src = &data[p * plane..(p + 1) * plane];
        let dst = &mut out[p * plane..(p + 1) * plane];
        for y in 0..g.h {
            for x in 0..g.w {
                let mut acc = 0.0;
                for &(ox, oy) in &offsets {
                    let xi = (x as isize + ox).clamp(0, g.w as isize - 1) as usize;
                    let yi = (y as isize + oy).clamp(0, g.h as isize - 1) as usize;
                    acc += src[yi * g.w + xi];
                }
                dst[y * g.w + x] = acc * wgt;
            }
        }
    }
    Tensor::from_vec(out, frames.shape())
}

/// Over- or under-exposure: gain 1 +- strength, direction seeded.
fn exposure(frames: &Tensor, strength: f64, seed: u64) -> Tensor {
    let mut rng = rng_from(seed);
    let gain = if rng.random_range(0.0..1.0) < 0.5 {
        1.0 + strength
    } else {
        1.0 - strength
    };
    let out: Vec<f64> = frames
        .data()
        .iter()
        .map(|&v| (v * gain).clamp(0.0, 1.0))
        .collect();
    Tensor::from_vec(out, frames.shape())
}
