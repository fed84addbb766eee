//! Elementwise operations with trailing-dimension broadcasting.

use crate::broadcast::{broadcast_shape, broadcast_strides, reduce_to_shape};
use crate::error::{Result, TensorError};
use crate::tape::record;
use crate::tensor::Tensor;

fn binary_forward(
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    if a.shape() == b.shape() {
        let out: Vec<f64> = a
            .data()
            .iter()
            .zip(b.data().iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
        return Ok(Tensor::from_vec(out, a.shape()));
    }
    if b.len() == 1 {
        let y = b.data()[0];
        let out: Vec<f64> = a.data().iter().map(|&x| f(x, y)).collect();
        return Ok(Tensor::from_vec(out, a.shape()));
    }
    let shape = broadcast_shape(a.shape(), b.shape())?;
    let sa = broadcast_strides(a.shape(), &shape);
    let sb = broadcast_strides(b.shape(), &shape);
    let numel: usize = shape.iter().product();
    let mut out = vec![0.0; numel];
    let rank = shape.len();
    let mut coords = vec![0usize; rank];
    let (da, db) = (a.data(), b.data());
    let (mut ia, mut ib) = (0usize, 0usize);
    for slot in out.iter_mut() {
        *slot = f(da[ia], db[ib]);
        // odometer increment
        for d in (0..rank).rev() {
            coords[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if coords[d] < shape[d] {
                break;
            }
            coords[d] = 0;
            ia -= sa[d] * shape[d];
            ib -= sb[d] * shape[d];
        }
    }
    Ok(Tensor::from_vec(out, &shape))
}

fn unary_forward(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let out: Vec<f64> = x.data().iter().map(|&v| f(v)).collect();
    Tensor::from_vec(out, x.shape())
}

impl Tensor {
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        let out = binary_forward(self, rhs, |x, y| x + y)?;
        let (sa, sb) = (self.shape().to_vec(), rhs.shape().to_vec());
        Ok(record(
            out,
            &[self, rhs],
            Box::new(move |g| {
                Ok(vec![
                    Some(reduce_to_shape(g, &sa)),
                    Some(reduce_to_shape(g, &sb)),
                ])
            }),
        ))
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        let out = binary_forward(self, rhs, |x, y| x - y)?;
        let (sa, sb) = (self.shape().to_vec(), rhs.shape().to_vec());
        Ok(record(
            out,
            &[self, rhs],
            Box::new(move |g| {
                Ok(vec![
                    Some(reduce_to_shape(g, &sa)),
                    Some(reduce_to_shape(&g.neg()?, &sb)),
                ])
            }),
        ))
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        let out = binary_forward(self, rhs, |x, y| x * y)?;
        let (a, b) = (self.detached(), rhs.detached());
        Ok(record(
            out,
            &[self, rhs],
            Box::new(move |g| {
                Ok(vec![
                    Some(reduce_to_shape(&g.mul(&b)?, a.shape())),
                    Some(reduce_to_shape(&g.mul(&a)?, b.shape())),
                ])
            }),
        ))
    }

    pub fn div(&self, rhs: &Tensor) -> Result<Tensor> {
        if rhs.data().iter().any(|&v| v == 0.0) {
            return Err(TensorError::DivisionByZero);
        }
        let out = binary_forward(self, rhs, |x, y| x / y)?;
        let (a, b) = (self.detached(), rhs.detached());
        Ok(record(
            out,
            &[self, rhs],
            Box::new(move |g| {
                let da = g.div(&b)?;
                let db = g.mul(&a)?.div(&b.mul(&b)?)?.neg()?;
                Ok(vec![
                    Some(reduce_to_shape(&da, a.shape())),
                    Some(reduce_to_shape(&db, b.shape())),
                ])
            }),
        ))
    }

    pub fn neg(&self) -> Result<Tensor> {
        let out = unary_forward(self, |v| -v);
        Ok(record(
            out,
            &[self],
            Box::new(move |g| Ok(vec![Some(g.neg()?)])),
        ))
    }

    pub fn add_scalar(&self, s: f64) -> Result<Tensor> {
        let out = unary_forward(self, |v| v + s);
        Ok(record(
            out,
            &[self],
            Box::new(move |g| Ok(vec![Some(g.detached())])),
        ))
    }

    pub fn mul_scalar(&self, s: f64) -> Result<Tensor> {
        let out = unary_forward(self, |v| v * s);
        Ok(record(
            out,
            &[self],
            Box::new(move |g| Ok(vec![Some(g.mul_scalar(s)?)])),
        ))
    }

    pub fn exp(&self) -> Result<Tensor> {
        let out = unary_forward(self, f64::exp);
        out.check_finite("exp")?;
        let y = out.detached();
        Ok(record(
            out,
            &[self],
            Box::new(move |g| Ok(vec![Some(g.mul(&y)?)])),
        ))
    }

    pub fn log(&self) -> Result<Tensor> {
        if self.data().iter().any(|&v| v <= 0.0) {
            return Err(TensorError::Domain("log of non-positive value".into()));
        }
        let out = unary_forward(self, f64::ln);
        let x = self.detached();
        Ok(record(
            out,
            &[self],
            Box::new(move |g| Ok(vec![Some(g.div(&x)?)])),
        ))
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        if self.data().iter().any(|&v| v < 0.0) {
            return Err(TensorError::Domain("sqrt of negative value".into()));
        }
        let out = unary_forward(self, f64::sqrt);
        let y = out.detached();
        Ok(record(
            out,
            &[self],
            Box::new(move |g| Ok(vec![Some(g.div(&y.mul_scalar(2.0)?)?)])),
        ))
    }

    /// Elementwise power with a fixed scalar exponent.
    pub fn powf(&self, p: f64) -> Result<Tensor> {
        let out = unary_forward(self, |v| v.powf(p));
        out.check_finite("pow")?;
        let x = self.detached();
        Ok(record(
            out,
            &[self],
            Box::new(move |g| {
                let d = x.map_values(|v| p * v.powf(p - 1.0));
                Ok(vec![Some(g.mul(&d)?)])
            }),
        ))
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        let out = unary_forward(self, sigmoid_scalar);
        let y = out.detached();
        Ok(record(
            out,
            &[self],
            Box::new(move |g| {
                let d = y.map_values(|v| v * (1.0 - v));
                Ok(vec![Some(g.mul(&d)?)])
            }),
        ))
    }

    /// x * sigmoid(x).
    pub fn silu(&self) -> Result<Tensor> {
        let out = unary_forward(self, |v| v * sigmoid_scalar(v));
        let x = self.detached();
        Ok(record(
            out,
            &[self],
            Box::new(move |g| {
                let d = x.map_values(|v| {
                    let s = sigmoid_scalar(v);
                    s * (1.0 + v * (1.0 - s))
                });
                Ok(vec![Some(g.mul(&d)?)])
            }),
        ))
    }

    /// Subgradient at 0 is 0.
    pub fn relu(&self) -> Result<Tensor> {
        let out = unary_forward(self, |v| v.max(0.0));
        let x = self.detached();
        Ok(record(
            out,
            &[self],
            Box::new(move |g| {
                let d = x.map_values(|v| if v > 0.0 { 1.0 } else { 0.0 });
                Ok(vec![Some(g.mul(&d)?)])
            }),
        ))
    }

    pub fn tanh(&self) -> Result<Tensor> {
        let out = unary_forward(self, f64::tanh);
        let y = out.detached();
        Ok(record(
            out,
            &[self],
            Box::new(move |g| {
                let d = y.map_values(|v| 1.0 - v * v);
                Ok(vec![Some(g.mul(&d)?)])
            }),
        ))
    }

    /// Subgradient at 0 is 0.
    pub fn abs(&self) -> Result<Tensor> {
        let out = unary_forward(self, f64::abs);
        let x = self.detached();
        Ok(record(
            out,
            &[self],
            Box::new(move |g| {
                let d = x.map_values(|v| {
                    if v > 0.0 {
                        1.0
                    } else if v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                Ok(vec![Some(g.mul(&d)?)])
            }),
        ))
    }

    /// Numerically stable ln(1 + e^x).
    pub fn softplus(&self) -> Result<Tensor> {
        let out = unary_forward(self, |v| v.max(0.0) + (-v.abs()).exp().ln_1p());
        let x = self.detached();
        Ok(record(
            out,
            &[self],
            Box::new(move |g| {
                let d = x.map_values(sigmoid_scalar);
                Ok(vec![Some(g.mul(&d)?)])
            }),
        ))
    }

    /// Untraced elementwise map; for masks and non-differentiable transforms.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Tensor {
        unary_forward(self, f)
    }
}

fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
