//! Cross-frame aggregation: all frames' refined features are concatenated
//! along channels, mixed down by a 1x1 convolution, then globally averaged
//! so the output width is independent of the spatial grid.

use vdq_tensor::nn::{conv2d, ConvNd, Module, Param};
use vdq_tensor::rng::Rng;
use vdq_tensor::{Result, Tensor, TensorError};

pub struct FrameFusion {
    mix: ConvNd,
    frames: usize,
    channels: usize,
    out: usize,
}

impl FrameFusion {
    pub fn new(frames: usize, channels: usize, out: usize, rng: &mut Rng) -> FrameFusion {
        FrameFusion {
            mix: conv2d(frames * channels, out, 1, 1, 0, rng),
            frames,
            channels,
            out,
        }
    }

    /// refined per-frame features [N,C,h,w] -> flat video feature [out].
    pub fn forward(&self, refined: &Tensor) -> Result<Tensor> {
        if refined.shape()[0] != self.frames || refined.shape()[1] != self.channels {
            return Err(TensorError::ShapeMismatch(format!(
                "frame fusion configured for [{}, {}, h, w], got {:?}",
                self.frames,
                self.channels,
                refined.shape()
            )));
        }
        let (h, w) = (refined.shape()[2], refined.shape()[3]);
        // frame-major layout makes the channel concat a plain reshape
        let stacked = refined.reshape(&[1, self.frames * self.channels, h, w])?;
        let mixed = self.mix.forward(&stacked)?.silu()?;
        mixed.mean(&[2, 3], false)?.reshape(&[self.out])
    }
}

impl Module for FrameFusion {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.mix.visit(&format!("{prefix}.mix"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.mix.visit_mut(&format!("{prefix}.mix"), f);
    }
}
