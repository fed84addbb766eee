//! Frame feature extraction with the adapted model.
//!
//! Per frame: encode to z_0, jump to z_T by forward diffusion (noise added
//! once, at T), then run the K spaced reverse steps with the controller
//! conditioning every denoiser call on (z_step, z_0). The outputs are the
//! final step's post-merge decoder features (multi-scale) and the
//! reconstructed latent. Pure given weights and seed; the whole pass runs
//! without gradient recording.

use crate::controller::Controller;
use crate::schedule::{NoiseSchedule, SpacedSchedule};
use crate::unet::UNet;
use crate::vae::Vae;
use vdq_tensor::rng::{derive_seed, rng_from, Rng};
use vdq_tensor::{no_grad, Result, Tensor, TensorError};

/// Per-frame extractor output.
pub struct FrameFeatures {
    /// Post-merge decoder features, [32,12,12], [64,6,6], [128,3,3].
    pub multi_scale: Vec<Tensor>,
    /// Reconstructed latent z0_hat, [4,12,12].
    pub latent: Tensor,
}

pub struct Extractor {
    pub vae: Vae,
    pub unet: UNet,
    pub controller: Controller,
    pub sched: NoiseSchedule,
    pub spaced: SpacedSchedule,
}

impl Extractor {
    /// Extracts features for every frame of a video [N, 3, H, W] in one
    /// batched pass. Per-frame noise streams are seeded with
    /// `derive_seed(seed, frame_index)`, so the result is bit-identical to
    /// extracting each frame on its own.
    pub fn extract_video(&self, frames: &Tensor, seed: u64) -> Result<Vec<FrameFeatures>> {
        let n = frames.shape().first().copied().unwrap_or(0);
        let seeds: Vec<u64> = (0..n as u64).map(|i| derive_seed(seed, i)).collect();
        self.extract_video_with_seeds(frames, &seeds)
    }

    /// Features for a single frame [3, H, W] under an explicit noise seed.
    pub fn extract_frame(&self, frame: &Tensor, seed: u64) -> Result<FrameFeatures> {
        if frame.rank() != 3 {
            return Err(TensorError::ShapeMismatch(format!(
                "expected frame [3, H, W], got {:?}",
                frame.shape()
            )));
        }
        let mut shape = vec![1];
        shape.extend_from_slice(frame.shape());
        let batched = frame.reshape(&shape)?;
        let mut out = self.extract_video_with_seeds(&batched, &[seed])?;
        Ok(out.remove(0))
    }

    /// As [`Extractor::extract_video`], with one explicit noise seed per frame.
    pub fn extract_video_with_seeds(
        &self,
        frames: &Tensor,
        seeds: &[u64],
    ) -> Result<Vec<FrameFeatures>> {
        if frames.rank() != 4 || frames.shape()[1] != 3 {
            return Err(TensorError::ShapeMismatch(format!(
                "expected frames [N, 3, H, W], got {:?}",
                frames.shape()
            )));
        }
        let n = frames.shape()[0];
        if seeds.len() != n {
            return Err(TensorError::ShapeMismatch(
                "one seed per frame required".into(),
            ));
        }
        no_grad(|| {
            let z0 = self.vae.encode(frames)?;
            let mut rngs: Vec<Rng> = seeds.iter().map(|&s| rng_from(s)).collect();

            // z_T from z_0, noise added once at t = T
            let eps = per_frame_randn(z0.shape(), &mut rngs);
            let mut z = self.sched.forward_diffuse(&z0, self.sched.t_max, &eps)?;

            let k = self.spaced.len();
            let mut last = None;
            for i in (1..=k).rev() {
                let steps = vec![self.spaced.original_step(i); n];
                let signals = self.controller.forward(&z, &z0, &steps)?;
                let out = self.unet.forward(&z, &steps, Some(&signals))?;
                let noise = (i > 1).then(|| per_frame_randn(z0.shape(), &mut rngs));
                z = self.spaced.reverse_step(&z, i, &out.eps_pred, noise.as_ref())?;
                last = Some(out);
            }
            let out = last.expect("spaced schedule is non-empty");

            (0..n)
                .map(|f| {
                    let multi_scale = out
                        .multi_scale
                        .iter()
                        .map(|ms| {
                            let s = ms.shape();
                            ms.narrow(0, f, 1)?.reshape(&[s[1], s[2], s[3]])
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let s = z.shape();
                    let latent = z.narrow(0, f, 1)?.reshape(&[s[1], s[2], s[3]])?;
                    Ok(FrameFeatures {
                        multi_scale,
                        latent,
                    })
                })
                .collect()
        })
    }
}

/// Standard-normal tensor whose leading-axis slices come from separate
/// per-frame generators.
fn per_frame_randn(shape: &[usize], rngs: &mut [Rng]) -> Tensor {
    let mut sub_shape = vec![1];
    sub_shape.extend_from_slice(&shape[1..]);
    let mut data = Vec::with_capacity(shape.iter().product());
    for rng in rngs.iter_mut() {
        data.extend_from_slice(Tensor::randn(&sub_shape, rng).data());
    }
    Tensor::from_vec(data, shape)
}
