//! Fusion of multi-scale decoder features with the reconstructed latent:
//! per-level dimension adjustment to a common 12x12 grid, channel
//! concatenation, then squeeze-excitation channel attention followed by a
//! single-map spatial attention.

use vdq_tensor::nn::{conv2d, ConvNd, Linear, Module, Param};
use vdq_tensor::rng::Rng;
use vdq_tensor::{Result, Tensor};

/// Adjusted per-level widths; with the 4 latent channels they sum to the
/// fused width 96.
const ADJ_WIDTHS: [usize; 3] = [32, 32, 28];

pub struct FeatureFusion {
    adj0: ConvNd,
    adj1: ConvNd,
    adj2: ConvNd,
    se_down: Linear,
    se_up: Linear,
    spatial: ConvNd,
    c_fused: usize,
}

impl FeatureFusion {
    pub fn new(ms_widths: [usize; 3], latent_ch: usize, rng: &mut Rng) -> FeatureFusion {
        FeatureFusion {
            adj0: conv2d(ms_widths[0], ADJ_WIDTHS[0], 1, 1, 0, rng),
            adj1: conv2d(ms_widths[1], ADJ_WIDTHS[1], 1, 1, 0, rng),
            adj2: conv2d(ms_widths[2], ADJ_WIDTHS[2], 1, 1, 0, rng),
            se_down: Linear::new(96, 24, true, rng),
            se_up: Linear::new(24, 96, true, rng),
            spatial: conv2d(2, 1, 3, 1, 1, rng),
            c_fused: ADJ_WIDTHS.iter().sum::<usize>() + latent_ch,
        }
    }

    pub fn fused_channels(&self) -> usize {
        self.c_fused
    }

    /// ms: per-level feature maps [N,32,12,12], [N,64,6,6], [N,128,3,3];
    /// latent: [N,4,12,12]. Output [N,96,12,12].
    pub fn forward(&self, ms: &[Tensor], latent: &Tensor) -> Result<Tensor> {
        assert_eq!(ms.len(), 3, "expected 3 multi-scale levels");
        let a0 = self.adj0.forward(&ms[0])?.silu()?;
        let a1 = self.adj1.forward(&ms[1].upsample_nearest2d(2)?)?.silu()?;
        let a2 = self.adj2.forward(&ms[2].upsample_nearest2d(4)?)?.silu()?;
        let fused = Tensor::cat(&[&a0, &a1, &a2, latent], 1)?;

        let gated = self.channel_attention(&fused)?;
        self.spatial_attention(&gated)
    }

    fn channel_attention(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c) = (x.shape()[0], x.shape()[1]);
        let pooled = x.mean(&[2, 3], false)?; // [B, C]
        let h = self.se_down.forward(&pooled)?.silu()?;
        let gate = self.se_up.forward(&h)?.sigmoid()?; // [B, C]
        x.mul(&gate.reshape(&[b, c, 1, 1])?)
    }

    fn spatial_attention(&self, x: &Tensor) -> Result<Tensor> {
        // channel mean and channel RMS descriptors (smooth everywhere)
        let mean_map = x.mean(&[1], true)?; // [B,1,h,w]
        let energy = x.mul(x)?.mean(&[1], true)?.add_scalar(1e-8)?.sqrt()?;
        let stacked = Tensor::cat(&[&mean_map, &energy], 1)?;
        let gate = self.spatial.forward(&stacked)?.sigmoid()?; // [B,1,h,w]
        x.mul(&gate)
    }
}

impl Module for FeatureFusion {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.adj0.visit(&format!("{prefix}.adj0"), f);
        self.adj1.visit(&format!("{prefix}.adj1"), f);
        self.adj2.visit(&format!("{prefix}.adj2"), f);
        self.se_down.visit(&format!("{prefix}.se_down"), f);
        self.se_up.visit(&format!("{prefix}.se_up"), f);
        self.spatial.visit(&format!("{prefix}.spatial"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.adj0.visit_mut(&format!("{prefix}.adj0"), f);
        self.adj1.visit_mut(&format!("{prefix}.adj1"), f);
        self.adj2.visit_mut(&format!("{prefix}.adj2"), f);
        self.se_down.visit_mut(&format!("{prefix}.se_down"), f);
        self.se_up.visit_mut(&format!("{prefix}.se_up"), f);
        self.spatial.visit_mut(&format!("{prefix}.spatial"), f);
    }
}
