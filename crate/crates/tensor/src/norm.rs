//! Layer normalization, built compositely from primitive ops so its gradient
//! comes from the tape rather than a hand-derived rule.

use crate::error::Result;
use crate::tensor::Tensor;

impl Tensor {
    /// Normalizes along `axis` to zero mean / unit variance (population
    /// variance, stabilized by `eps`), then applies the optional affine
    /// transform `y * gain + bias`. `gain`/`bias` must broadcast against the
    /// normalized tensor.
    pub fn layer_norm(
        &self,
        axis: usize,
        gain: Option<&Tensor>,
        bias: Option<&Tensor>,
        eps: f64,
    ) -> Result<Tensor> {
        let mu = self.mean(&[axis], true)?;
        let centered = self.sub(&mu)?;
        let var = centered.mul(&centered)?.mean(&[axis], true)?;
        let denom = var.add_scalar(eps)?.sqrt()?;
        let mut y = centered.div(&denom)?;
        if let Some(g) = gain {
            y = y.mul(g)?;
        }
        if let Some(b) = bias {
            y = y.add(b)?;
        }
        Ok(y)
    }
}
