//! Central finite-difference gradient checker. Used by the test suites to
//! validate every differentiable block; independent of the tape internals.

use crate::error::{Result, TensorError};
use crate::tape::backward;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (input index, flat coordinate) of the worst disagreement.
    pub worst: Option<(usize, usize)>,
    pub coords_checked: usize,
    pub tol: f64,
    pub passed: bool,
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "grad_check: {} (max rel err {:.3e} over {} coords, tol {:.1e})",
            if self.passed { "pass" } else { "FAIL" },
            self.max_rel_err,
            self.coords_checked,
            self.tol
        )
    }
}

/// Compares tape gradients of `f` against central finite differences at
/// step `h`, reporting `max |g_ad - g_fd| / (|g_ad| + |g_fd| + 1e-12)`.
///
/// `f` must be a deterministic scalar-valued function of its inputs. With
/// `max_coords_per_input = Some(k)`, an evenly strided subset of at most `k`
/// coordinates per input is checked; `None` checks every coordinate.
pub fn grad_check(
    f: &dyn Fn(&[Tensor]) -> Result<Tensor>,
    inputs: &[Tensor],
    h: f64,
    tol: f64,
    max_coords_per_input: Option<usize>,
) -> Result<GradCheckReport> {
    let traced: Vec<Tensor> = inputs.iter().map(|t| t.detached().traced()).collect();
    let loss = f(&traced)?;
    if loss.len() != 1 {
        return Err(TensorError::NotScalar(loss.shape().to_vec()));
    }
    if !loss.is_all_finite() {
        return Err(TensorError::NonFinite("grad_check objective"));
    }
    let grads = backward(&loss)?;

    let mut max_rel_err = 0.0f64;
    let mut worst = None;
    let mut coords_checked = 0usize;

    for (ti, base) in inputs.iter().enumerate() {
        let g_ad = grads.get(&traced[ti]);
        let n = base.len();
        let step = match max_coords_per_input {
            Some(k) if k < n => n.div_ceil(k),
            _ => 1,
        };
        let mut coord = 0usize;
        while coord < n {
            let fd = {
                let plus = perturbed(inputs, ti, coord, h);
                let minus = perturbed(inputs, ti, coord, -h);
                let fp = f(&plus)?.item();
                let fm = f(&minus)?.item();
                if !fp.is_finite() || !fm.is_finite() {
                    return Err(TensorError::NonFinite("grad_check objective"));
                }
                (fp - fm) / (2.0 * h)
            };
            let ad = g_ad.map(|g| g.data()[coord]).unwrap_or(0.0);
            let rel = (ad - fd).abs() / (ad.abs() + fd.abs() + 1e-12);
            if rel > max_rel_err {
                max_rel_err = rel;
                worst = Some((ti, coord));
            }
            coords_checked += 1;
            coord += step;
        }
    }

    Ok(GradCheckReport {
        max_rel_err,
        worst,
        coords_checked,
        tol,
        passed: max_rel_err <= tol,
    })
}

fn perturbed(inputs: &[Tensor], ti: usize, coord: usize, delta: f64) -> Vec<Tensor> {
    inputs
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if i == ti {
                let mut data = t.to_vec();
                data[coord] += delta;
                Tensor::from_vec(data, t.shape())
            } else {
                t.detached()
            }
        })
        .collect()
}
