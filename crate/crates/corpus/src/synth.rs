//! Procedural clean-video synthesis and whole-corpus generation.

use rand::Rng as _;

use crate::degrade::{apply_degradation, DegradationKind, DegradationSpec};
use crate::mos::synth_mos;
use crate::Result;
use vdq_tensor::rng::{derive_seed, rng_from, Rng};
use vdq_tensor::Tensor;

/// Pixel range of clean content; kept inside [0, 1] with headroom so that
/// additive degradations rarely clip.
const LO: f64 = 0.12;
const HI: f64 = 0.88;

#[derive(Debug, Clone)]
pub struct VideoSample {
    /// [3, N, H, W] in [0, 1].
    pub frames: Tensor,
    pub mos: f64,
    pub degradations: Vec<DegradationSpec>,
}

#[derive(Debug, Clone, Copy)]
pub struct CorpusConfig {
    pub videos: usize,
    pub frames: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            videos: 250,
            frames: 8,
            size: 96,
            seed: 42,
        }
    }
}

struct Grating {
    kx: f64,
    ky: f64,
    phase: f64,
    drift: f64,
    amp: [f64; 3],
}

struct Shape {
    cx: f64,
    cy: f64,
    vx: f64,
    vy: f64,
    half: f64,
    round: bool,
    color: [f64; 3],
}

/// Deterministic moving textured pattern: 2-3 drifting sinusoid gratings
/// under 2-3 translating shapes with a per-video palette and motion vector.
/// Consecutive frames always differ (drift and velocities are bounded away
/// from zero).
pub fn generate_base(seed: u64, frames: usize, size: usize) -> Tensor {
    let mut rng = rng_from(seed);
    let n_gratings = rng.random_range(2..=3);
    let gratings: Vec<Grating> = (0..n_gratings)
        .map(|_| {
            let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let freq: f64 = rng.random_range(0.05..0.45);
            let drift_mag: f64 = rng.random_range(0.25..1.2);
            let drift = if rng.random_range(0.0..1.0) < 0.5 {
                -drift_mag
            } else {
                drift_mag
            };
            Grating {
                kx: freq * angle.cos(),
                ky: freq * angle.sin(),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
                drift,
                amp: [
                    rng.random_range(0.05..0.22),
                    rng.random_range(0.05..0.22),
                    rng.random_range(0.05..0.22),
                ],
            }
        })
        .collect();

    let n_shapes = rng.random_range(2..=3);
    let shapes: Vec<Shape> = (0..n_shapes)
        .map(|_| {
            let speed: f64 = rng.random_range(1.0..3.5);
            let dir: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            Shape {
                cx: rng.random_range(0.0..size as f64),
                cy: rng.random_range(0.0..size as f64),
                vx: speed * dir.cos(),
                vy: speed * dir.sin(),
                half: rng.random_range(size as f64 * 0.08..size as f64 * 0.22),
                round: rng.random_range(0.0..1.0) < 0.5,
                color: [
                    rng.random_range(LO..HI),
                    rng.random_range(LO..HI),
                    rng.random_range(LO..HI),
                ],
            }
        })
        .collect();

    let mut data = vec![0.0; 3 * frames * size * size];
    let plane = size * size;
    for t in 0..frames {
        for y in 0..size {
            for x in 0..size {
                let mut px = [0.5f64; 3];
                for g in &gratings {
                    let v = (g.kx * x as f64 + g.ky * y as f64 + g.phase
                        + g.drift * t as f64)
                        .sin();
                    for c in 0..3 {
                        px[c] += g.amp[c] * v;
                    }
                }
                for s in &shapes {
                    // wrap-around translation keeps shapes on screen
                    let sx = (s.cx + s.vx * t as f64).rem_euclid(size as f64);
                    let sy = (s.cy + s.vy * t as f64).rem_euclid(size as f64);
                    let mut dx = (x as f64 - sx).abs();
                    let mut dy = (y as f64 - sy).abs();
                    dx = dx.min(size as f64 - dx);
                    dy = dy.min(size as f64 - dy);
                    let inside = if s.round {
                        dx * dx + dy * dy <= s.half * s.half
                    } else {
                        dx <= s.half && dy <= s.half
                    };
                    if inside {
                        px = s.color;
                    }
                }
                for c in 0..3 {
                    data[c * frames * plane + t * plane + y * size + x] =
                        px[c].clamp(LO, HI);
                }
            }
        }
    }
    Tensor::from_vec(data, &[3, frames, size, size])
}

/// Draws the degradation plan for one video: 0, 1 or 2 distinct kinds with
/// severities in [0.15, 1].
fn sample_degradations(rng: &mut Rng) -> Vec<DegradationSpec> {
    let roll: f64 = rng.random_range(0.0..1.0);
    let count = if roll < 0.2 {
        0
    } else if roll < 0.6 {
        1
    } else {
        2
    };
    let mut kinds = DegradationKind::ALL.to_vec();
    let mut specs = Vec::with_capacity(count);
    for _ in 0..count {
        let idx = rng.random_range(0..kinds.len());
        let kind = kinds.remove(idx);
        specs.push(DegradationSpec {
            kind,
            severity: rng.random_range(0.15..1.0),
        });
    }
    specs
}

/// Generates one video (clean content, degradations, oracle score) from the
/// corpus seed and video id.
pub fn generate_video(cfg: &CorpusConfig, id: usize) -> Result<VideoSample> {
    let vseed = cfg.seed ^ id as u64;
    let clean = generate_base(vseed, cfg.frames, cfg.size);
    let mut rng = rng_from(derive_seed(vseed, 0x5eed));
    let specs = sample_degradations(&mut rng);
    let mut frames = clean;
    for (k, spec) in specs.iter().enumerate() {
        frames = apply_degradation(&frames, spec, derive_seed(vseed, 100 + k as u64))?;
    }
    Ok(VideoSample {
        frames,
        mos: synth_mos(&specs),
        degradations: specs,
    })
}

pub fn generate_corpus(cfg: &CorpusConfig) -> Result<Vec<VideoSample>> {
    (0..cfg.videos).map(|id| generate_video(cfg, id)).collect()
}
