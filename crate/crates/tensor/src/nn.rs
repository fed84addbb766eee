//! Trainable parameters, the module naming/visitation trait, and the basic
//! layers shared by all models in the workspace.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::error::{Result, TensorError};
use crate::io::TensorMap;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// A named, optionally trainable tensor. Trainable params carry a traced
/// leaf so [`crate::backward`] reports a gradient for them; frozen params
/// are plain constants and receive no gradient.
pub struct Param {
    value: Tensor,
    trainable: bool,
}

impl Param {
    pub fn new(value: Tensor) -> Param {
        Param {
            value: value.detached().traced(),
            trainable: true,
        }
    }

    pub fn frozen(value: Tensor) -> Param {
        Param {
            value: value.detached(),
            trainable: false,
        }
    }

    pub fn tensor(&self) -> &Tensor {
        &self.value
    }

    pub fn set_value(&mut self, value: Tensor) {
        self.value = if self.trainable {
            value.detached().traced()
        } else {
            value.detached()
        };
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        if self.trainable != trainable {
            self.trainable = trainable;
            let v = self.value.detached();
            self.value = if trainable { v.traced() } else { v };
        }
    }

    pub fn leaf_id(&self) -> Option<u64> {
        self.value.leaf_id()
    }
}

/// Parameter visitation with hierarchical names ("vae.enc1.weight", ...).
pub trait Module {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param));
}

pub fn named_tensors(m: &dyn Module) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    m.visit("", &mut |name, p| out.push((name.to_string(), p.tensor().detached())));
    out
}

pub fn param_count(m: &dyn Module) -> usize {
    let mut n = 0;
    m.visit("", &mut |_, p| n += p.tensor().len());
    n
}

pub fn set_trainable(m: &mut dyn Module, trainable: bool) {
    m.visit_mut("", &mut |_, p| p.set_trainable(trainable));
}

/// Order- and bit-exact fingerprint of all parameter values; used to verify
/// that frozen weights stay untouched.
pub fn state_hash(m: &dyn Module) -> u64 {
    let mut h = DefaultHasher::new();
    m.visit("", &mut |name, p| {
        name.hash(&mut h);
        for v in p.tensor().data() {
            v.to_bits().hash(&mut h);
        }
    });
    h.finish()
}

pub fn save_module(m: &dyn Module, map: &mut TensorMap, prefix: &str) {
    m.visit(prefix, &mut |name, p| {
        map.insert(name, p.tensor().detached());
    });
}

pub fn load_module(m: &mut dyn Module, map: &TensorMap, prefix: &str) -> Result<()> {
    let mut err = None;
    m.visit_mut(prefix, &mut |name, p| {
        if err.is_some() {
            return;
        }
        match map.get(name) {
            Some(t) if t.shape() == p.tensor().shape() => p.set_value(t.detached()),
            Some(t) => {
                err = Some(TensorError::ShapeMismatch(format!(
                    "checkpoint tensor {name} has shape {:?}, model expects {:?}",
                    t.shape(),
                    p.tensor().shape()
                )))
            }
            None => {
                err = Some(TensorError::Corrupt(format!(
                    "checkpoint is missing tensor {name}"
                )))
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Copies every parameter value from `src` into the structurally identical
/// `dst` (matched by visitation name and shape).
pub fn copy_params(src: &dyn Module, dst: &mut dyn Module) -> Result<()> {
    let mut map = TensorMap::new();
    save_module(src, &mut map, "p");
    load_module(dst, &map, "p")
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

// ── Layers ──────────────────────────────────────────────────────────

/// Fully connected layer; weight stored `[in, out]` so the forward pass is a
/// plain matmul.
pub struct Linear {
    pub weight: Param,
    pub bias: Option<Param>,
}

impl Linear {
    pub fn new(d_in: usize, d_out: usize, bias: bool, rng: &mut Rng) -> Linear {
        let bound = (1.0 / d_in as f64).sqrt();
        Linear {
            weight: Param::new(Tensor::rand_uniform(&[d_in, d_out], -bound, bound, rng)),
            bias: bias.then(|| Param::new(Tensor::zeros(&[d_out]))),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = x.matmul(self.weight.tensor())?;
        if let Some(b) = &self.bias {
            y = y.add(b.tensor())?;
        }
        Ok(y)
    }
}

impl Module for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

/// Convolution layer over 1-3 spatial axes.
pub struct ConvNd {
    pub weight: Param,
    pub bias: Option<Param>,
    pub stride: Vec<usize>,
    pub pad: Vec<usize>,
}

impl ConvNd {
    pub fn new(
        c_in: usize,
        c_out: usize,
        kernel: &[usize],
        stride: &[usize],
        pad: &[usize],
        rng: &mut Rng,
    ) -> ConvNd {
        let fan_in = c_in * kernel.iter().product::<usize>();
        let bound = (1.0 / fan_in as f64).sqrt();
        let mut shape = vec![c_out, c_in];
        shape.extend_from_slice(kernel);
        ConvNd {
            weight: Param::new(Tensor::rand_uniform(&shape, -bound, bound, rng)),
            bias: Some(Param::new(Tensor::zeros(&[c_out]))),
            stride: stride.to_vec(),
            pad: pad.to_vec(),
        }
    }

    /// All-zero weights and bias; the ControlNet-style merge convolutions
    /// start from this so a fresh controller contributes exactly nothing.
    pub fn zeros(c_in: usize, c_out: usize, kernel: &[usize], stride: &[usize], pad: &[usize]) -> ConvNd {
        let mut shape = vec![c_out, c_in];
        shape.extend_from_slice(kernel);
        ConvNd {
            weight: Param::new(Tensor::zeros(&shape)),
            bias: Some(Param::new(Tensor::zeros(&[c_out]))),
            stride: stride.to_vec(),
            pad: pad.to_vec(),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = x.conv(self.weight.tensor(), &self.stride, &self.pad)?;
        if let Some(b) = &self.bias {
            // bias [Cout] broadcast over [B, Cout, spatial...]
            let mut bshape = vec![self.weight.tensor().shape()[0]];
            bshape.extend(std::iter::repeat(1).take(self.stride.len()));
            y = y.add(&b.tensor().reshape(&bshape)?)?;
        }
        Ok(y)
    }
}

impl Module for ConvNd {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

pub fn conv1d(c_in: usize, c_out: usize, k: usize, stride: usize, pad: usize, rng: &mut Rng) -> ConvNd {
    ConvNd::new(c_in, c_out, &[k], &[stride], &[pad], rng)
}

pub fn conv2d(c_in: usize, c_out: usize, k: usize, stride: usize, pad: usize, rng: &mut Rng) -> ConvNd {
    ConvNd::new(c_in, c_out, &[k, k], &[stride, stride], &[pad, pad], rng)
}

/// Learnable normalization over the last axis.
pub struct LayerNorm {
    pub gain: Param,
    pub bias: Param,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(dim: usize) -> LayerNorm {
        LayerNorm {
            gain: Param::new(Tensor::ones(&[dim])),
            bias: Param::new(Tensor::zeros(&[dim])),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.layer_norm(
            x.rank() - 1,
            Some(self.gain.tensor()),
            Some(self.bias.tensor()),
            self.eps,
        )
    }
}

impl Module for LayerNorm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "gain"), &self.gain);
        f(&join(prefix, "bias"), &self.bias);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "gain"), &mut self.gain);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

/// Group normalization for `[B, C, spatial...]` feature maps.
pub struct GroupNorm {
    pub gain: Param,
    pub bias: Param,
    pub groups: usize,
    pub eps: f64,
}

impl GroupNorm {
    pub fn new(groups: usize, channels: usize) -> GroupNorm {
        assert_eq!(channels % groups, 0);
        GroupNorm {
            gain: Param::new(Tensor::ones(&[channels])),
            bias: Param::new(Tensor::zeros(&[channels])),
            groups,
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let shape = x.shape().to_vec();
        let (b, c) = (shape[0], shape[1]);
        let spatial: usize = shape[2..].iter().product();
        let grouped = x.reshape(&[b, self.groups, (c / self.groups) * spatial])?;
        let normed = grouped.layer_norm(2, None, None, self.eps)?;
        let y = normed.reshape(&shape)?;
        let mut affine_shape = vec![c];
        affine_shape.extend(std::iter::repeat(1).take(shape.len() - 2));
        let y = y.mul(&self.gain.tensor().reshape(&affine_shape)?)?;
        y.add(&self.bias.tensor().reshape(&affine_shape)?)
    }
}

impl Module for GroupNorm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "gain"), &self.gain);
        f(&join(prefix, "bias"), &self.bias);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "gain"), &mut self.gain);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

/// Inverted dropout; identity at inference so repeated eval passes are
/// bit-identical.
pub struct Dropout {
    pub p: f64,
}

impl Dropout {
    pub fn new(p: f64) -> Dropout {
        assert!((0.0..1.0).contains(&p));
        Dropout { p }
    }

    pub fn forward(&self, x: &Tensor, train: bool, rng: &mut Rng) -> Result<Tensor> {
        if !train || self.p == 0.0 {
            return Ok(x.clone());
        }
        let keep = 1.0 - self.p;
        let mask = Tensor::rand_uniform(x.shape(), 0.0, 1.0, rng)
            .map_values(|v| if v < keep { 1.0 / keep } else { 0.0 });
        x.mul(&mask)
    }
}
