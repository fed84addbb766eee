//! Zero-order-hold discretization of a diagonal continuous system.
//!
//! With diagonal A the matrix exponential reduces to scalar closed forms:
//! `a_bar = exp(delta * a)` and `b_bar = ((exp(delta * a) - 1) / a) * b`,
//! with the a -> 0 limit `b_bar -> delta * b` handled by a series branch.

use vdq_tensor::{Result, Tensor, TensorError};

/// Per-step discretized system. Rows follow the sequence; columns the state.
#[derive(Debug, Clone)]
pub struct DiscreteSsm {
    /// [L, N] decay factors; in (0, 1) whenever A < 0 and delta > 0.
    pub a_bar: Tensor,
    /// [L, N] input injection weights.
    pub b_bar: Tensor,
}

/// Discretizes diagonal `a` [N] with per-step inputs `b` [L, N] and
/// timescales `delta` [L].
pub fn zoh_discretize(a: &Tensor, b: &Tensor, delta: &Tensor) -> Result<DiscreteSsm> {
    let n = a.len();
    if b.rank() != 2 || b.shape()[1] != n {
        return Err(TensorError::ShapeMismatch(format!(
            "b must be [L, {n}], got {:?}",
            b.shape()
        )));
    }
    let l = b.shape()[0];
    if delta.len() != l {
        return Err(TensorError::ShapeMismatch(format!(
            "delta must have length {l}, got {}",
            delta.len()
        )));
    }
    if delta.data().iter().any(|&d| d <= 0.0) {
        return Err(TensorError::Domain("delta must be positive".into()));
    }

    let mut a_bar = vec![0.0; l * n];
    let mut b_bar = vec![0.0; l * n];
    let (ad, bd, dd) = (a.data(), b.data(), delta.data());
    for k in 0..l {
        for j in 0..n {
            let (aj, d) = (ad[j], dd[k]);
            let e = (d * aj).exp();
            a_bar[k * n + j] = e;
            let scale = if aj.abs() < 1e-8 {
                // second-order series of (exp(d*a) - 1)/a around a = 0
                d + aj * d * d / 2.0
            } else {
                (e - 1.0) / aj
            };
            b_bar[k * n + j] = scale * bd[k * n + j];
        }
    }
    Ok(DiscreteSsm {
        a_bar: Tensor::from_vec(a_bar, &[l, n]),
        b_bar: Tensor::from_vec(b_bar, &[l, n]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_example() {
        // a = -1, delta = ln 2, b = 1  =>  a_bar = 0.5, b_bar = 0.5
        let a = Tensor::from_vec(vec![-1.0], &[1]);
        let b = Tensor::ones(&[1, 1]);
        let delta = Tensor::from_vec(vec![2.0f64.ln()], &[1]);
        let d = zoh_discretize(&a, &b, &delta).unwrap();
        assert!((d.a_bar.item() - 0.5).abs() < 1e-15);
        assert!((d.b_bar.item() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn small_delta_limit() {
        let a = Tensor::from_vec(vec![-2.0], &[1]);
        let b = Tensor::ones(&[1, 1]);
        let delta = Tensor::from_vec(vec![1e-12], &[1]);
        let d = zoh_discretize(&a, &b, &delta).unwrap();
        assert!((d.a_bar.item() - 1.0).abs() < 1e-9);
        assert!(d.b_bar.item().abs() < 1e-9);
    }

    #[test]
    fn series_branch_matches_taylor() {
        let delta_v = 0.37;
        for &aj in &[1e-9, -1e-9, 5e-10, -3e-12, 0.0] {
            let a = Tensor::from_vec(vec![aj], &[1]);
            let b = Tensor::from_vec(vec![1.3], &[1, 1]);
            let delta = Tensor::from_vec(vec![delta_v], &[1]);
            let d = zoh_discretize(&a, &b, &delta).unwrap();
            let taylor = (delta_v + aj * delta_v * delta_v / 2.0) * 1.3;
            assert!(
                (d.b_bar.item() - taylor).abs() < 1e-10,
                "a={aj}: {} vs {taylor}",
                d.b_bar.item()
            );
        }
    }

    #[test]
    fn rejects_non_positive_delta() {
        let a = Tensor::from_vec(vec![-1.0], &[1]);
        let b = Tensor::ones(&[2, 1]);
        let delta = Tensor::from_vec(vec![0.1, 0.0], &[2]);
        assert!(zoh_discretize(&a, &b, &delta).is_err());
    }
}
