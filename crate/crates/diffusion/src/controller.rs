//! ControlNet-style conditioning module: a trainable copy of the denoiser's
//! encoder and middle block whose first convolution is widened to take the
//! concatenated (z_t, z_0), with zero-initialized 1x1 merge convolutions so
//! a fresh controller perturbs the denoiser by exactly nothing.

use crate::unet::{ControlSignals, ResBlock, TimeEmbed, UNet, LEVEL_WIDTHS};
use vdq_tensor::nn::{self, conv2d, ConvNd, Module, Param};
use vdq_tensor::rng::Rng;
use vdq_tensor::{Result, Tensor, TensorError};

pub struct Controller {
    pub temb: TimeEmbed,
    pub conv_in: ConvNd,
    pub enc1: ResBlock,
    pub down1: ConvNd,
    pub enc2: ResBlock,
    pub down2: ConvNd,
    pub mid: ResBlock,
    pub zero1: ConvNd,
    pub zero2: ConvNd,
    pub zero_mid: ConvNd,
}

impl Controller {
    /// Builds the controller from a denoiser: encoder/middle/time weights are
    /// copied, the widened first convolution reuses the denoiser kernels on
    /// its first C_lat input channels and is zero elsewhere, and all merge
    /// convolutions start at exactly zero.
    pub fn from_denoiser(unet: &UNet, rng: &mut Rng) -> Result<Controller> {
        let c_lat = unet.latent_channels();
        let [w1, w2, w3] = LEVEL_WIDTHS;
        let mut ctrl = Controller {
            temb: TimeEmbed::new(rng),
            conv_in: conv2d(2 * c_lat, w1, 3, 1, 1, rng),
            enc1: ResBlock::new(w1, w1, rng),
            down1: conv2d(w1, w2, 3, 2, 1, rng),
            enc2: ResBlock::new(w2, w2, rng),
            down2: conv2d(w2, w3, 3, 2, 1, rng),
            mid: ResBlock::new(w3, w3, rng),
            zero1: ConvNd::zeros(w1, w1, &[1, 1], &[1, 1], &[0, 0]),
            zero2: ConvNd::zeros(w2, w2, &[1, 1], &[1, 1], &[0, 0]),
            zero_mid: ConvNd::zeros(w3, w3, &[1, 1], &[1, 1], &[0, 0]),
        };
        nn::copy_params(&unet.temb, &mut ctrl.temb)?;
        nn::copy_params(&unet.enc1, &mut ctrl.enc1)?;
        nn::copy_params(&unet.down1, &mut ctrl.down1)?;
        nn::copy_params(&unet.enc2, &mut ctrl.enc2)?;
        nn::copy_params(&unet.down2, &mut ctrl.down2)?;
        nn::copy_params(&unet.mid, &mut ctrl.mid)?;

        // widen conv_in: [w1, 2*c_lat, 3, 3] with the denoiser kernels on the
        // first c_lat input channels and zeros on the added ones
        let src = unet.conv_in.weight.tensor();
        let mut widened = vec![0.0; w1 * 2 * c_lat * 9];
        for o in 0..w1 {
            for i in 0..c_lat {
                for k in 0..9 {
                    widened[(o * 2 * c_lat + i) * 9 + k] = src.data()[(o * c_lat + i) * 9 + k];
                }
            }
        }
        ctrl.conv_in
            .weight
            .set_value(Tensor::from_vec(widened, &[w1, 2 * c_lat, 3, 3]));
        if let (Some(dst), Some(src)) = (&mut ctrl.conv_in.bias, &unet.conv_in.bias) {
            dst.set_value(src.tensor().detached());
        }
        Ok(ctrl)
    }

    /// (z_t, z_0) [B, C_lat, h, w] each -> one additive signal per decoder
    /// merge site. All-zero until the zero convolutions receive updates.
    pub fn forward(&self, z_t: &Tensor, z0: &Tensor, steps: &[usize]) -> Result<ControlSignals> {
        if z_t.shape() != z0.shape() {
            return Err(TensorError::ShapeMismatch(format!(
                "z_t shape {:?} must match z0 shape {:?}",
                z_t.shape(),
                z0.shape()
            )));
        }
        let x = Tensor::cat(&[z_t, z0], 1)?;
        let temb = self.temb.forward(steps)?;
        let (e1, e2, m) = UNet::encode_trunk(
            &self.conv_in,
            &self.enc1,
            &self.down1,
            &self.enc2,
            &self.down2,
            &self.mid,
            &x,
            &temb,
        )?;
        Ok(ControlSignals {
            level1: self.zero1.forward(&e1)?,
            level2: self.zero2.forward(&e2)?,
            mid: self.zero_mid.forward(&m)?,
        })
    }
}

impl Module for Controller {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.temb.visit(&format!("{prefix}.temb"), f);
        self.conv_in.visit(&format!("{prefix}.conv_in"), f);
        self.enc1.visit(&format!("{prefix}.enc1"), f);
        self.down1.visit(&format!("{prefix}.down1"), f);
        self.enc2.visit(&format!("{prefix}.enc2"), f);
        self.down2.visit(&format!("{prefix}.down2"), f);
        self.mid.visit(&format!("{prefix}.mid"), f);
        self.zero1.visit(&format!("{prefix}.zero1"), f);
        self.zero2.visit(&format!("{prefix}.zero2"), f);
        self.zero_mid.visit(&format!("{prefix}.zero_mid"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.temb.visit_mut(&format!("{prefix}.temb"), f);
        self.conv_in.visit_mut(&format!("{prefix}.conv_in"), f);
        self.enc1.visit_mut(&format!("{prefix}.enc1"), f);
        self.down1.visit_mut(&format!("{prefix}.down1"), f);
        self.enc2.visit_mut(&format!("{prefix}.enc2"), f);
        self.down2.visit_mut(&format!("{prefix}.down2"), f);
        self.mid.visit_mut(&format!("{prefix}.mid"), f);
        self.zero1.visit_mut(&format!("{prefix}.zero1"), f);
        self.zero2.visit_mut(&format!("{prefix}.zero2"), f);
        self.zero_mid.visit_mut(&format!("{prefix}.zero_mid"), f);
    }
}
