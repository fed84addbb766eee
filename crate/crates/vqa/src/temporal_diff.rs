//! Previous-frame residual refinement: each frame's fused features are
//! concatenated with (F_t - F_{t-1}) and mixed by a 1x1 convolution. The
//! first frame's residual is the zero tensor.

use vdq_tensor::nn::{conv2d, ConvNd, Module, Param};
use vdq_tensor::rng::Rng;
use vdq_tensor::{Result, Tensor};

pub struct TemporalDiff {
    mix: ConvNd,
}

impl TemporalDiff {
    pub fn new(channels: usize, rng: &mut Rng) -> TemporalDiff {
        TemporalDiff {
            mix: conv2d(2 * channels, channels, 1, 1, 0, rng),
        }
    }

    /// Frame-to-frame residuals with a zero first row: [N,C,h,w] -> same.
    pub fn residuals(fused: &Tensor) -> Result<Tensor> {
        let n = fused.shape()[0];
        if n == 1 {
            return Ok(Tensor::zeros(fused.shape()));
        }
        let tail = fused.narrow(0, 1, n - 1)?;
        let head = fused.narrow(0, 0, n - 1)?;
        let diffs = tail.sub(&head)?;
        let mut zero_shape = fused.shape().to_vec();
        zero_shape[0] = 1;
        Tensor::cat(&[&Tensor::zeros(&zero_shape), &diffs], 0)
    }

    /// fused features per frame [N,C,h,w] -> refined features [N,C,h,w].
    pub fn forward(&self, fused: &Tensor) -> Result<Tensor> {
        let resid = Self::residuals(fused)?;
        let stacked = Tensor::cat(&[fused, &resid], 1)?;
        self.mix.forward(&stacked)?.silu()
    }
}

impl Module for TemporalDiff {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.mix.visit(&format!("{prefix}.mix"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.mix.visit_mut(&format!("{prefix}.mix"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use vdq_tensor::rng::rng_from;

    #[test]
    fn static_video_has_all_zero_residuals() {
        let mut rng = rng_from(1);
        let one = Tensor::randn(&[1, 3, 4, 4], &mut rng);
        let all = Tensor::cat(&[&one, &one, &one, &one], 0).unwrap();
        let r = TemporalDiff::residuals(&all).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_frame_residual_is_exactly_zero() {
        let mut rng = rng_from(2);
        let fused = Tensor::randn(&[5, 3, 4, 4], &mut rng);
        let r = TemporalDiff::residuals(&fused).unwrap();
        assert!(r.narrow(0, 0, 1).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residuals_match_elementwise_subtraction() {
        let mut rng = rng_from(3);
        let fused = Tensor::randn(&[4, 2, 3, 3], &mut rng);
        let r = TemporalDiff::residuals(&fused).unwrap();
        for t in 1..4 {
            for c in 0..2 {
                for y in 0..3 {
                    for x in 0..3 {
                        let want = fused.at(&[t, c, y, x]) - fused.at(&[t - 1, c, y, x]);
                        assert_eq!(r.at(&[t, c, y, x]), want);
                    }
                }
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected_by_conv() {
        let mut rng = rng_from(4);
        let tdm = TemporalDiff::new(3, &mut rng);
        let wrong = Tensor::randn(&[2, 5, 4, 4], &mut rng);
        assert!(tdm.forward(&wrong).is_err());
    }
}
