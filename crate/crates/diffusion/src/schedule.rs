//! Noise schedules for the diffusion process.
//!
//! Forward: z_t = sqrt(abar_t) z_0 + sqrt(1 - abar_t) eps.
//! Reverse: z_{t-1} = (z_t - ((1-a_t)/sqrt(1-abar_t)) eps_hat) / sqrt(a_t)
//!          + sqrt(b_t) noise, with noise forced to zero on the final step.
//!
//! The cosine schedule uses abar(t) = f(t)/f(0), f(t) = cos^2(((t/T + s) /
//! (1 + s)) * pi/2) with s = 0.008, betas clipped to [1e-8, 0.999], and
//! abar recomputed as the running product of the clipped alphas so the
//! product identity holds exactly.

use std::f64::consts::PI;

use vdq_tensor::{Result, Tensor, TensorError};

/// Per-step beta/alpha/alpha_bar tables, 1-indexed by timestep t in [1, T].
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    pub t_max: usize,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t < 1 || t > self.t_max {
            return Err(TensorError::Domain(format!(
                "timestep {t} outside [1, {}]",
                self.t_max
            )));
        }
        Ok(())
    }

    /// z_t from z_0 and a noise draw of the same shape.
    pub fn forward_diffuse(&self, z0: &Tensor, t: usize, eps: &Tensor) -> Result<Tensor> {
        self.check_step(t)?;
        if z0.shape() != eps.shape() {
            return Err(TensorError::ShapeMismatch(format!(
                "noise shape {:?} must match z0 shape {:?}",
                eps.shape(),
                z0.shape()
            )));
        }
        let ab = self.alpha_bar(t);
        z0.mul_scalar(ab.sqrt())?
            .add(&eps.mul_scalar((1.0 - ab).sqrt())?)
    }

    /// One reverse update from step t to t-1. `noise` is ignored at t == 1.
    pub fn reverse_step(
        &self,
        z_t: &Tensor,
        t: usize,
        eps_pred: &Tensor,
        noise: Option<&Tensor>,
    ) -> Result<Tensor> {
        self.check_step(t)?;
        reverse_update(
            z_t,
            eps_pred,
            self.alpha(t),
            self.alpha_bar(t),
            self.beta(t),
            if t == 1 { None } else { noise },
        )
    }
}

fn reverse_update(
    z_t: &Tensor,
    eps_pred: &Tensor,
    alpha: f64,
    alpha_bar: f64,
    beta: f64,
    noise: Option<&Tensor>,
) -> Result<Tensor> {
    if eps_pred.shape() != z_t.shape() {
        return Err(TensorError::ShapeMismatch(format!(
            "eps_pred shape {:?} must match z_t shape {:?}",
            eps_pred.shape(),
            z_t.shape()
        )));
    }
    let coeff = (1.0 - alpha) / (1.0 - alpha_bar).sqrt();
    let mut z = z_t
        .sub(&eps_pred.mul_scalar(coeff)?)?
        .mul_scalar(1.0 / alpha.sqrt())?;
    if let Some(n) = noise {
        if n.shape() != z_t.shape() {
            return Err(TensorError::ShapeMismatch(
                "reverse noise shape mismatch".into(),
            ));
        }
        z = z.add(&n.mul_scalar(beta.sqrt())?)?;
    }
    Ok(z)
}

/// Cosine schedule; requires T >= 2.
pub fn cosine_schedule(t_max: usize) -> Result<NoiseSchedule> {
    if t_max < 2 {
        return Err(TensorError::Domain(format!(
            "schedule needs T >= 2, got {t_max}"
        )));
    }
    let s = 0.008;
    let f = |t: f64| ((t / t_max as f64 + s) / (1.0 + s) * PI / 2.0).cos().powi(2);
    let f0 = f(0.0);
    let mut beta = Vec::with_capacity(t_max);
    let mut alpha = Vec::with_capacity(t_max);
    let mut alpha_bar = Vec::with_capacity(t_max);
    let mut prev_ab = 1.0;
    let mut running = 1.0;
    for t in 1..=t_max {
        let ab = f(t as f64) / f0;
        let b = (1.0 - ab / prev_ab).clamp(1e-8, 0.999);
        prev_ab = ab;
        let a = 1.0 - b;
        running *= a;
        beta.push(b);
        alpha.push(a);
        alpha_bar.push(running);
    }
    Ok(NoiseSchedule {
        t_max,
        beta,
        alpha,
        alpha_bar,
    })
}

/// A K-step subsequence of a schedule with respaced betas; running the
/// reverse process over the subsequence visits the original alpha_bar values
/// exactly (the per-step products telescope).
#[derive(Debug, Clone)]
pub struct SpacedSchedule {
    /// Selected original timesteps, strictly increasing, last == T.
    pub steps: Vec<usize>,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl SpacedSchedule {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Original timestep for spaced index i in [1, K].
    pub fn original_step(&self, i: usize) -> usize {
        self.steps[i - 1]
    }

    pub fn beta(&self, i: usize) -> f64 {
        self.beta[i - 1]
    }
    pub fn alpha(&self, i: usize) -> f64 {
        self.alpha[i - 1]
    }
    pub fn alpha_bar(&self, i: usize) -> f64 {
        self.alpha_bar[i - 1]
    }

    /// Reverse update from spaced index i to i-1; noise ignored at i == 1.
    pub fn reverse_step(
        &self,
        z: &Tensor,
        i: usize,
        eps_pred: &Tensor,
        noise: Option<&Tensor>,
    ) -> Result<Tensor> {
        if i < 1 || i > self.len() {
            return Err(TensorError::Domain(format!(
                "spaced index {i} outside [1, {}]",
                self.len()
            )));
        }
        reverse_update(
            z,
            eps_pred,
            self.alpha(i),
            self.alpha_bar(i),
            self.beta(i),
            if i == 1 { None } else { noise },
        )
    }
}

/// Selects K evenly spaced steps (first maps to t = 1, last to t = T) and
/// respaces the betas: beta'_i = 1 - abar(t_i)/abar(t_{i-1}).
pub fn spaced_timesteps(sched: &NoiseSchedule, k: usize) -> Result<SpacedSchedule> {
    let t_max = sched.t_max;
    if k < 1 || k > t_max {
        return Err(TensorError::Domain(format!(
            "spaced step count {k} outside [1, {t_max}]"
        )));
    }
    let steps: Vec<usize> = if k == 1 {
        vec![t_max]
    } else {
        (0..k)
            .map(|i| {
                1 + ((i as f64) * (t_max - 1) as f64 / (k - 1) as f64).round() as usize
            })
            .collect()
    };
    let mut beta = Vec::with_capacity(k);
    let mut alpha = Vec::with_capacity(k);
    let mut alpha_bar = Vec::with_capacity(k);
    let mut prev_ab = 1.0;
    let mut running = 1.0;
    for &t in &steps {
        let ab = sched.alpha_bar(t);
        let b = 1.0 - ab / prev_ab;
        prev_ab = ab;
        let a = 1.0 - b;
        running *= a;
        beta.push(b);
        alpha.push(a);
        alpha_bar.push(running);
    }
    Ok(SpacedSchedule {
        steps,
        beta,
        alpha,
        alpha_bar,
    })
}
