//! Latent-diffusion feature extraction: DDPM schedule math, a toy frame
//! autoencoder, a denoising U-Net with ControlNet-style conditioning, the
//! controller adaptation loop, and the spaced-sampling feature extractor.

pub mod adapt;
pub mod controller;
pub mod extract;
pub mod schedule;
pub mod unet;
pub mod vae;

pub use adapt::{adapt_loss, adapt_step, pretrain_step, residual_norm_loss};
pub use controller::Controller;
pub use extract::{Extractor, FrameFeatures};
pub use schedule::{cosine_schedule, spaced_timesteps, NoiseSchedule, SpacedSchedule};
pub use unet::{ControlSignals, DenoiserOutput, UNet};
pub use vae::{psnr, Vae};
