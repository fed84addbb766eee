//! Toy convolutional autoencoder mapping 48x48 RGB frames to a 4x12x12
//! latent grid (4x spatial compression) and back. Pre-trained once on the
//! synthetic corpus with reconstruction MSE, then frozen.

use vdq_tensor::nn::{conv2d, ConvNd, GroupNorm, Module, Param};
use vdq_tensor::rng::Rng;
use vdq_tensor::{Result, Tensor, TensorError};

pub const LATENT_CHANNELS: usize = 4;
pub const DOWNSAMPLE: usize = 4;

struct NormedConv {
    conv: ConvNd,
    norm: GroupNorm,
}

impl NormedConv {
    fn new(c_in: usize, c_out: usize, stride: usize, rng: &mut Rng) -> NormedConv {
        NormedConv {
            conv: conv2d(c_in, c_out, 3, stride, 1, rng),
            norm: GroupNorm::new(8.min(c_out), c_out),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.norm.forward(&self.conv.forward(x)?)?.silu()
    }
}

impl Module for NormedConv {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.conv.visit(&format!("{prefix}.conv"), f);
        self.norm.visit(&format!("{prefix}.norm"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.conv.visit_mut(&format!("{prefix}.conv"), f);
        self.norm.visit_mut(&format!("{prefix}.norm"), f);
    }
}

pub struct Vae {
    enc1: NormedConv,
    enc2: NormedConv,
    enc3: NormedConv,
    enc4: NormedConv,
    enc_out: ConvNd,
    dec1: NormedConv,
    dec2: NormedConv,
    dec3: NormedConv,
    dec4: NormedConv,
    dec_out: ConvNd,
}

impl Vae {
    pub fn new(rng: &mut Rng) -> Vae {
        Vae {
            enc1: NormedConv::new(3, 16, 1, rng),
            enc2: NormedConv::new(16, 32, 2, rng),
            enc3: NormedConv::new(32, 32, 1, rng),
            enc4: NormedConv::new(32, 64, 2, rng),
            enc_out: conv2d(64, LATENT_CHANNELS, 3, 1, 1, rng),
            dec1: NormedConv::new(LATENT_CHANNELS, 64, 1, rng),
            dec2: NormedConv::new(64, 32, 1, rng),
            dec3: NormedConv::new(32, 32, 1, rng),
            dec4: NormedConv::new(32, 16, 1, rng),
            dec_out: conv2d(16, 3, 3, 1, 1, rng),
        }
    }

    fn check_frame(&self, frames: &Tensor) -> Result<()> {
        if frames.rank() != 4 || frames.shape()[1] != 3 {
            return Err(TensorError::ShapeMismatch(format!(
                "expected frames [B, 3, H, W], got {:?}",
                frames.shape()
            )));
        }
        let (h, w) = (frames.shape()[2], frames.shape()[3]);
        if h % DOWNSAMPLE != 0 || w % DOWNSAMPLE != 0 {
            return Err(TensorError::ShapeMismatch(format!(
                "frame size {h}x{w} not divisible by {DOWNSAMPLE}"
            )));
        }
        Ok(())
    }

    /// frames [B, 3, H, W] -> latents [B, 4, H/4, W/4].
    pub fn encode(&self, frames: &Tensor) -> Result<Tensor> {
        self.check_frame(frames)?;
        let h = self.enc1.forward(frames)?;
        let h = self.enc2.forward(&h)?;
        let h = self.enc3.forward(&h)?;
        let h = self.enc4.forward(&h)?;
        self.enc_out.forward(&h)
    }

    /// latents [B, 4, h, w] -> frames [B, 3, 4h, 4w] (unclamped).
    pub fn decode(&self, latents: &Tensor) -> Result<Tensor> {
        if latents.rank() != 4 || latents.shape()[1] != LATENT_CHANNELS {
            return Err(TensorError::ShapeMismatch(format!(
                "expected latents [B, {LATENT_CHANNELS}, h, w], got {:?}",
                latents.shape()
            )));
        }
        let h = self.dec1.forward(latents)?;
        let h = h.upsample_nearest2d(2)?;
        let h = self.dec2.forward(&h)?;
        let h = self.dec3.forward(&h)?;
        let h = h.upsample_nearest2d(2)?;
        let h = self.dec4.forward(&h)?;
        self.dec_out.forward(&h)
    }

    /// Mean squared reconstruction error over a batch.
    pub fn reconstruction_loss(&self, frames: &Tensor) -> Result<Tensor> {
        let z = self.encode(frames)?;
        let rec = self.decode(&z)?;
        let diff = rec.sub(frames)?;
        diff.mul(&diff)?.mean_all()
    }
}

impl Module for Vae {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.enc1.visit(&format!("{prefix}.enc1"), f);
        self.enc2.visit(&format!("{prefix}.enc2"), f);
        self.enc3.visit(&format!("{prefix}.enc3"), f);
        self.enc4.visit(&format!("{prefix}.enc4"), f);
        self.enc_out.visit(&format!("{prefix}.enc_out"), f);
        self.dec1.visit(&format!("{prefix}.dec1"), f);
        self.dec2.visit(&format!("{prefix}.dec2"), f);
        self.dec3.visit(&format!("{prefix}.dec3"), f);
        self.dec4.visit(&format!("{prefix}.dec4"), f);
        self.dec_out.visit(&format!("{prefix}.dec_out"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.enc1.visit_mut(&format!("{prefix}.enc1"), f);
        self.enc2.visit_mut(&format!("{prefix}.enc2"), f);
        self.enc3.visit_mut(&format!("{prefix}.enc3"), f);
        self.enc4.visit_mut(&format!("{prefix}.enc4"), f);
        self.enc_out.visit_mut(&format!("{prefix}.enc_out"), f);
        self.dec1.visit_mut(&format!("{prefix}.dec1"), f);
        self.dec2.visit_mut(&format!("{prefix}.dec2"), f);
        self.dec3.visit_mut(&format!("{prefix}.dec3"), f);
        self.dec4.visit_mut(&format!("{prefix}.dec4"), f);
        self.dec_out.visit_mut(&format!("{prefix}.dec_out"), f);
    }
}

/// PSNR in dB between two same-shaped tensors on a [0, 1] value scale; the
/// first argument is clamped into range before comparison.
pub fn psnr(reconstruction: &Tensor, reference: &Tensor) -> f64 {
    assert_eq!(reconstruction.shape(), reference.shape());
    let n = reference.len() as f64;
    let mse: f64 = reconstruction
        .data()
        .iter()
        .zip(reference.data().iter())
        .map(|(&r, &x)| {
            let r = r.clamp(0.0, 1.0);
            (r - x) * (r - x)
        })
        .sum::<f64>()
        / n;
    if mse <= 1e-12 {
        return 120.0;
    }
    -10.0 * mse.log10()
}
