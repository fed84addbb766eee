//! Denoising U-Net over the 4x12x12 latent grid: three levels (32, 64, 128
//! channels), sinusoidal timestep conditioning, skip connections, and three
//! decoder-side merge sites where controller signals are added. Multi-scale
//! decoder features are tapped post-merge, one per level.

use vdq_tensor::nn::{conv2d, ConvNd, GroupNorm, Linear, Module, Param};
use vdq_tensor::rng::Rng;
use vdq_tensor::{Result, Tensor, TensorError};

pub const LEVEL_WIDTHS: [usize; 3] = [32, 64, 128];
pub const TIME_DIM: usize = 64;

/// Sinusoidal embedding of integer timesteps, one row per batch element.
pub fn sinusoidal_embedding(steps: &[usize], dim: usize) -> Tensor {
    let half = dim / 2;
    let mut data = Vec::with_capacity(steps.len() * dim);
    for &t in steps {
        for i in 0..half {
            let freq = (10_000f64).powf(-(i as f64) / half as f64);
            data.push((t as f64 * freq).sin());
        }
        for i in 0..half {
            let freq = (10_000f64).powf(-(i as f64) / half as f64);
            data.push((t as f64 * freq).cos());
        }
    }
    Tensor::from_vec(data, &[steps.len(), dim])
}

pub struct TimeEmbed {
    lin1: Linear,
    lin2: Linear,
}

impl TimeEmbed {
    pub(crate) fn new(rng: &mut Rng) -> TimeEmbed {
        TimeEmbed {
            lin1: Linear::new(TIME_DIM, TIME_DIM, true, rng),
            lin2: Linear::new(TIME_DIM, TIME_DIM, true, rng),
        }
    }

    pub(crate) fn forward(&self, steps: &[usize]) -> Result<Tensor> {
        let base = sinusoidal_embedding(steps, TIME_DIM);
        self.lin2.forward(&self.lin1.forward(&base)?.silu()?)
    }
}

impl Module for TimeEmbed {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.lin1.visit(&format!("{prefix}.lin1"), f);
        self.lin2.visit(&format!("{prefix}.lin2"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.lin1.visit_mut(&format!("{prefix}.lin1"), f);
        self.lin2.visit_mut(&format!("{prefix}.lin2"), f);
    }
}

/// Two-conv residual block with additive timestep injection after the first
/// convolution.
pub struct ResBlock {
    norm1: GroupNorm,
    conv1: ConvNd,
    temb_proj: Linear,
    norm2: GroupNorm,
    conv2: ConvNd,
    skip: Option<ConvNd>,
}

impl ResBlock {
    pub(crate) fn new(c_in: usize, c_out: usize, rng: &mut Rng) -> ResBlock {
        ResBlock {
            norm1: GroupNorm::new(8.min(c_in), c_in),
            conv1: conv2d(c_in, c_out, 3, 1, 1, rng),
            temb_proj: Linear::new(TIME_DIM, c_out, true, rng),
            norm2: GroupNorm::new(8.min(c_out), c_out),
            conv2: conv2d(c_out, c_out, 3, 1, 1, rng),
            skip: (c_in != c_out).then(|| conv2d(c_in, c_out, 1, 1, 0, rng)),
        }
    }

    pub(crate) fn forward(&self, x: &Tensor, temb: &Tensor) -> Result<Tensor> {
        let b = x.shape()[0];
        let c_out = self.conv1.weight.tensor().shape()[0];
        let mut h = self.conv1.forward(&self.norm1.forward(x)?.silu()?)?;
        let t = self
            .temb_proj
            .forward(&temb.silu()?)?
            .reshape(&[b, c_out, 1, 1])?;
        h = h.add(&t)?;
        let h = self.conv2.forward(&self.norm2.forward(&h)?.silu()?)?;
        match &self.skip {
            Some(s) => h.add(&s.forward(x)?),
            None => h.add(x),
        }
    }
}

impl Module for ResBlock {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.norm1.visit(&format!("{prefix}.norm1"), f);
        self.conv1.visit(&format!("{prefix}.conv1"), f);
        self.temb_proj.visit(&format!("{prefix}.temb"), f);
        self.norm2.visit(&format!("{prefix}.norm2"), f);
        self.conv2.visit(&format!("{prefix}.conv2"), f);
        if let Some(s) = &self.skip {
            s.visit(&format!("{prefix}.skip"), f);
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.norm1.visit_mut(&format!("{prefix}.norm1"), f);
        self.conv1.visit_mut(&format!("{prefix}.conv1"), f);
        self.temb_proj.visit_mut(&format!("{prefix}.temb"), f);
        self.norm2.visit_mut(&format!("{prefix}.norm2"), f);
        self.conv2.visit_mut(&format!("{prefix}.conv2"), f);
        if let Some(s) = &mut self.skip {
            s.visit_mut(&format!("{prefix}.skip"), f);
        }
    }
}

/// Additive conditioning injected at the three decoder merge sites. Shapes
/// follow the decoder features: [B,128,3,3], [B,64,6,6], [B,32,12,12].
pub struct ControlSignals {
    pub mid: Tensor,
    pub level2: Tensor,
    pub level1: Tensor,
}

/// Epsilon prediction plus the post-merge decoder features, ordered from the
/// full-resolution level down: [B,32,12,12], [B,64,6,6], [B,128,3,3].
pub struct DenoiserOutput {
    pub eps_pred: Tensor,
    pub multi_scale: Vec<Tensor>,
}

pub struct UNet {
    pub temb: TimeEmbed,
    pub conv_in: ConvNd,
    pub enc1: ResBlock,
    pub down1: ConvNd,
    pub enc2: ResBlock,
    pub down2: ConvNd,
    pub mid: ResBlock,
    pub up2: ConvNd,
    pub dec2: ResBlock,
    pub up1: ConvNd,
    pub dec1: ResBlock,
    pub out_norm: GroupNorm,
    pub out_conv: ConvNd,
    latent_channels: usize,
}

impl UNet {
    pub fn new(latent_channels: usize, rng: &mut Rng) -> UNet {
        let [w1, w2, w3] = LEVEL_WIDTHS;
        UNet {
            temb: TimeEmbed::new(rng),
            conv_in: conv2d(latent_channels, w1, 3, 1, 1, rng),
            enc1: ResBlock::new(w1, w1, rng),
            down1: conv2d(w1, w2, 3, 2, 1, rng),
            enc2: ResBlock::new(w2, w2, rng),
            down2: conv2d(w2, w3, 3, 2, 1, rng),
            mid: ResBlock::new(w3, w3, rng),
            up2: conv2d(w3, w2, 3, 1, 1, rng),
            dec2: ResBlock::new(w2 + w2, w2, rng),
            up1: conv2d(w2, w1, 3, 1, 1, rng),
            dec1: ResBlock::new(w1 + w1, w1, rng),
            out_norm: GroupNorm::new(8, w1),
            out_conv: conv2d(w1, latent_channels, 3, 1, 1, rng),
            latent_channels,
        }
    }

    pub fn latent_channels(&self) -> usize {
        self.latent_channels
    }

    /// Encoder + middle trunk; shared verbatim by the controller, which is a
    /// trainable copy of these weights.
    pub(crate) fn encode_trunk(
        conv_in: &ConvNd,
        enc1: &ResBlock,
        down1: &ConvNd,
        enc2: &ResBlock,
        down2: &ConvNd,
        mid: &ResBlock,
        x: &Tensor,
        temb: &Tensor,
    ) -> Result<(Tensor, Tensor, Tensor)> {
        let h = conv_in.forward(x)?;
        let e1 = enc1.forward(&h, temb)?;
        let h = down1.forward(&e1)?;
        let e2 = enc2.forward(&h, temb)?;
        let h = down2.forward(&e2)?;
        let m = mid.forward(&h, temb)?;
        Ok((e1, e2, m))
    }

    /// z_t [B, C_lat, 12, 12] with per-sample timesteps; control signals,
    /// when given, are added at the three merge sites. With a zero-initialized
    /// controller the output is bit-identical to the uncontrolled forward.
    pub fn forward(
        &self,
        z_t: &Tensor,
        steps: &[usize],
        control: Option<&ControlSignals>,
    ) -> Result<DenoiserOutput> {
        if z_t.rank() != 4 || z_t.shape()[1] != self.latent_channels {
            return Err(TensorError::ShapeMismatch(format!(
                "expected z_t [B, {}, h, w], got {:?}",
                self.latent_channels,
                z_t.shape()
            )));
        }
        if steps.len() != z_t.shape()[0] {
            return Err(TensorError::ShapeMismatch(format!(
                "got {} timesteps for batch of {}",
                steps.len(),
                z_t.shape()[0]
            )));
        }
        let temb = self.temb.forward(steps)?;
        let (e1, e2, m) = Self::encode_trunk(
            &self.conv_in,
            &self.enc1,
            &self.down1,
            &self.enc2,
            &self.down2,
            &self.mid,
            z_t,
            &temb,
        )?;

        let m = match control {
            Some(c) => {
                check_signal(&c.mid, &m)?;
                m.add(&c.mid)?
            }
            None => m,
        };

        let h = self.up2.forward(&m.upsample_nearest2d(2)?)?;
        let h = Tensor::cat(&[&h, &e2], 1)?;
        let d2 = self.dec2.forward(&h, &temb)?;
        let d2 = match control {
            Some(c) => {
                check_signal(&c.level2, &d2)?;
                d2.add(&c.level2)?
            }
            None => d2,
        };

        let h = self.up1.forward(&d2.upsample_nearest2d(2)?)?;
        let h = Tensor::cat(&[&h, &e1], 1)?;
        let d1 = self.dec1.forward(&h, &temb)?;
        let d1 = match control {
            Some(c) => {
                check_signal(&c.level1, &d1)?;
                d1.add(&c.level1)?
            }
            None => d1,
        };

        let eps = self
            .out_conv
            .forward(&self.out_norm.forward(&d1)?.silu()?)?;
        Ok(DenoiserOutput {
            eps_pred: eps,
            multi_scale: vec![d1, d2, m],
        })
    }
}

fn check_signal(signal: &Tensor, feature: &Tensor) -> Result<()> {
    if signal.shape() != feature.shape() {
        return Err(TensorError::ShapeMismatch(format!(
            "control signal shape {:?} does not match decoder feature {:?}",
            signal.shape(),
            feature.shape()
        )));
    }
    Ok(())
}

impl Module for UNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.temb.visit(&format!("{prefix}.temb"), f);
        self.conv_in.visit(&format!("{prefix}.conv_in"), f);
        self.enc1.visit(&format!("{prefix}.enc1"), f);
        self.down1.visit(&format!("{prefix}.down1"), f);
        self.enc2.visit(&format!("{prefix}.enc2"), f);
        self.down2.visit(&format!("{prefix}.down2"), f);
        self.mid.visit(&format!("{prefix}.mid"), f);
        self.up2.visit(&format!("{prefix}.up2"), f);
        self.dec2.visit(&format!("{prefix}.dec2"), f);
        self.up1.visit(&format!("{prefix}.up1"), f);
        self.dec1.visit(&format!("{prefix}.dec1"), f);
        self.out_norm.visit(&format!("{prefix}.out_norm"), f);
        self.out_conv.visit(&format!("{prefix}.out_conv"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.temb.visit_mut(&format!("{prefix}.temb"), f);
        self.conv_in.visit_mut(&format!("{prefix}.conv_in"), f);
        self.enc1.visit_mut(&format!("{prefix}.enc1"), f);
        self.down1.visit_mut(&format!("{prefix}.down1"), f);
        self.enc2.visit_mut(&format!("{prefix}.enc2"), f);
        self.down2.visit_mut(&format!("{prefix}.down2"), f);
        self.mid.visit_mut(&format!("{prefix}.mid"), f);
        self.up2.visit_mut(&format!("{prefix}.up2"), f);
        self.dec2.visit_mut(&format!("{prefix}.dec2"), f);
        self.up1.visit_mut(&format!("{prefix}.up1"), f);
        self.dec1.visit_mut(&format!("{prefix}.dec1"), f);
        self.out_norm.visit_mut(&format!("{prefix}.out_norm"), f);
        self.out_conv.visit_mut(&format!("{prefix}.out_conv"), f);
    }
}
