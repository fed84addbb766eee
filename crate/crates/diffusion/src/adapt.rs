//! Denoising losses and training steps.
//!
//! Pre-training drives the bare U-Net to predict the added noise
//! (`E || eps - eps_hat ||_2`); adaptation freezes the denoiser and trains
//! only the controller on the same residual with (z_t, z_0) conditioning.
//! Both losses are the per-sample L2 norm of the residual, averaged over
//! the batch.

use crate::controller::Controller;
use crate::schedule::NoiseSchedule;
use crate::unet::UNet;
use rand::Rng as _;
use vdq_tensor::adam::Adam;
use vdq_tensor::nn::Module;
use vdq_tensor::rng::Rng;
use vdq_tensor::{backward, Result, Tensor, TensorError};

/// Mean over the batch of per-sample L2 residual norms.
pub fn residual_norm_loss(eps_pred: &Tensor, eps: &Tensor) -> Result<Tensor> {
    let b = eps.shape()[0];
    let diff = eps_pred.sub(eps)?;
    let flat = diff.reshape(&[b, diff.len() / b])?;
    let sq = flat.mul(&flat)?.sum(&[1], false)?;
    sq.sqrt()?.mean_all()
}

fn sample_batch(
    sched: &NoiseSchedule,
    z0: &Tensor,
    rng: &mut Rng,
) -> Result<(Tensor, Vec<usize>, Tensor)> {
    let b = z0.shape()[0];
    let steps: Vec<usize> = (0..b).map(|_| rng.random_range(1..=sched.t_max)).collect();
    let eps = Tensor::randn(z0.shape(), rng);
    // forward-diffuse each sample at its own timestep
    let mut parts = Vec::with_capacity(b);
    for (i, &t) in steps.iter().enumerate() {
        let z0_i = z0.narrow(0, i, 1)?;
        let eps_i = eps.narrow(0, i, 1)?;
        parts.push(sched.forward_diffuse(&z0_i, t, &eps_i)?);
    }
    let refs: Vec<&Tensor> = parts.iter().collect();
    Ok((Tensor::cat(&refs, 0)?, steps, eps))
}

/// One denoiser pre-training step; returns the loss value.
pub fn pretrain_step(
    unet: &mut UNet,
    sched: &NoiseSchedule,
    z0: &Tensor,
    rng: &mut Rng,
    opt: &mut Adam,
) -> Result<f64> {
    let (z_t, steps, eps) = sample_batch(sched, z0, rng)?;
    let out = unet.forward(&z_t, &steps, None)?;
    let loss = residual_norm_loss(&out.eps_pred, &eps)?;
    let value = loss.item();
    if !value.is_finite() {
        return Err(TensorError::NonFinite("denoiser pre-training loss"));
    }
    let grads = backward(&loss)?;
    opt.step(unet, &grads);
    Ok(value)
}

/// One controller adaptation step. The denoiser is immutable here (frozen by
/// construction); only the controller receives updates.
pub fn adapt_step(
    unet: &UNet,
    controller: &mut Controller,
    sched: &NoiseSchedule,
    z0: &Tensor,
    rng: &mut Rng,
    opt: &mut Adam,
) -> Result<f64> {
    let (z_t, steps, eps) = sample_batch(sched, z0, rng)?;
    let signals = controller.forward(&z_t, z0, &steps)?;
    let out = unet.forward(&z_t, &steps, Some(&signals))?;
    let loss = residual_norm_loss(&out.eps_pred, &eps)?;
    let value = loss.item();
    if !value.is_finite() {
        return Err(TensorError::NonFinite("adaptation loss"));
    }
    let grads = backward(&loss)?;
    opt.step(controller, &grads);
    Ok(value)
}

/// Adaptation loss without an update, for evaluation.
pub fn adapt_loss(
    unet: &UNet,
    controller: &Controller,
    sched: &NoiseSchedule,
    z0: &Tensor,
    rng: &mut Rng,
) -> Result<f64> {
    let (z_t, steps, eps) = sample_batch(sched, z0, rng)?;
    let signals = controller.forward(&z_t, z0, &steps)?;
    let out = unet.forward(&z_t, &steps, Some(&signals))?;
    Ok(residual_norm_loss(&out.eps_pred, &eps)?.item())
}

/// Guard helper: asserts a module's parameters are all non-trainable.
pub fn assert_frozen(m: &dyn Module, what: &str) {
    let mut any = false;
    m.visit("", &mut |_, p| any |= p.trainable());
    assert!(!any, "{what} must be frozen");
}
