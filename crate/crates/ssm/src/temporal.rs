//! Spatiotemporal token pipeline: 3-D patch embedding, a prepended learnable
//! quality token with spatial/temporal position embeddings, and a stack of
//! bidirectional Mamba blocks scanned in spatial-first order.

use crate::mamba::{BiMambaBlock, MambaConfig};
use vdq_tensor::nn::{ConvNd, LayerNorm, Module, Param};
use vdq_tensor::rng::Rng;
use vdq_tensor::{Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy)]
pub struct TemporalConfig {
    pub mamba: MambaConfig,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub patch: usize,
    pub depth: usize,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        TemporalConfig {
            mamba: MambaConfig::default(),
            frames: 8,
            height: 48,
            width: 48,
            patch: 16,
            depth: 2,
        }
    }
}

impl TemporalConfig {
    pub fn grid(&self) -> (usize, usize, usize) {
        (self.frames, self.height / self.patch, self.width / self.patch)
    }

    /// Token count including the prepended quality token:
    /// 1 + frames * (H/p) * (W/p).
    pub fn token_count(&self) -> usize {
        let (t, h, w) = self.grid();
        1 + t * h * w
    }
}

/// video [3, N, H, W] -> patches [L, C_emb] in spatial-first order
/// (token index = frame * (h*w) + spatial position).
pub fn patch_embed_3d(video: &Tensor, conv: &ConvNd, c_emb: usize) -> Result<Tensor> {
    if video.rank() != 4 || video.shape()[0] != 3 {
        return Err(TensorError::ShapeMismatch(format!(
            "expected video [3, N, H, W], got {:?}",
            video.shape()
        )));
    }
    let (n, h, w) = (video.shape()[1], video.shape()[2], video.shape()[3]);
    let batched = video.reshape(&[1, 3, n, h, w])?;
    let emb = conv.forward(&batched)?; // [1, C, N, h', w']
    let (hp, wp) = (emb.shape()[3], emb.shape()[4]);
    let emb = emb.reshape(&[c_emb, n, hp, wp])?;
    // [C, N, h, w] -> [N, h, w, C] -> [L, C]
    emb.permute(&[1, 2, 3, 0])?.reshape(&[n * hp * wp, c_emb])
}

/// Z = [quality token; P] + spatial embedding + temporal embedding.
/// The quality token takes row 0 of both embedding tables; patch tokens take
/// spatial row (1 + spatial index) and temporal row (frame index).
pub fn build_tokens(
    patches: &Tensor,
    e_s: &Tensor,
    e_t: &Tensor,
    quality_token: &Tensor,
    grid: (usize, usize, usize),
) -> Result<Tensor> {
    let (t, h, w) = grid;
    let l = t * h * w;
    let c = patches.shape()[1];
    if patches.shape()[0] != l {
        return Err(TensorError::ShapeMismatch(format!(
            "expected {l} patches for grid {grid:?}, got {}",
            patches.shape()[0]
        )));
    }
    if e_s.shape() != [h * w + 1, c] {
        return Err(TensorError::ShapeMismatch(format!(
            "spatial embedding must be [{}, {c}], got {:?}",
            h * w + 1,
            e_s.shape()
        )));
    }
    if e_t.shape() != [t, c] {
        return Err(TensorError::ShapeMismatch(format!(
            "temporal embedding must be [{t}, {c}], got {:?}",
            e_t.shape()
        )));
    }
    let qt = quality_token.reshape(&[1, c])?;
    let tokens = Tensor::cat(&[&qt, patches], 0)?;

    let mut s_idx = Vec::with_capacity(1 + l);
    let mut t_idx = Vec::with_capacity(1 + l);
    s_idx.push(0);
    t_idx.push(0);
    for frame in 0..t {
        for spatial in 0..h * w {
            s_idx.push(1 + spatial);
            t_idx.push(frame);
        }
    }
    let tokens = tokens.add(&e_s.gather_rows(&s_idx)?)?;
    tokens.add(&e_t.gather_rows(&t_idx)?)
}

/// Stacked bidirectional Mamba blocks over spatiotemporal tokens; the final
/// quality-token embedding is the block's video-level feature.
pub struct TemporalMamba {
    pub cfg: TemporalConfig,
    pub patch_conv: ConvNd,
    pub quality_token: Param,
    pub e_s: Param,
    pub e_t: Param,
    pub blocks: Vec<BiMambaBlock>,
    pub final_norm: LayerNorm,
}

impl TemporalMamba {
    pub fn new(cfg: TemporalConfig, rng: &mut Rng) -> Result<TemporalMamba> {
        if cfg.height % cfg.patch != 0 || cfg.width % cfg.patch != 0 {
            return Err(TensorError::ShapeMismatch(format!(
                "frame size {}x{} not divisible by patch {}",
                cfg.height, cfg.width, cfg.patch
            )));
        }
        let c = cfg.mamba.c_emb;
        let (t, h, w) = cfg.grid();
        let patch_conv = ConvNd::new(
            3,
            c,
            &[1, cfg.patch, cfg.patch],
            &[1, cfg.patch, cfg.patch],
            &[0, 0, 0],
            rng,
        );
        let blocks = (0..cfg.depth)
            .map(|_| BiMambaBlock::new(cfg.mamba, rng))
            .collect();
        Ok(TemporalMamba {
            patch_conv,
            quality_token: Param::new(Tensor::randn(&[c], rng).mul_scalar(0.02)?),
            e_s: Param::new(Tensor::randn(&[h * w + 1, c], rng).mul_scalar(0.02)?),
            e_t: Param::new(Tensor::randn(&[t, c], rng).mul_scalar(0.02)?),
            blocks,
            final_norm: LayerNorm::new(c),
            cfg,
        })
    }

    /// video [3, N, H, W] -> feature [C_emb].
    pub fn forward(&self, video: &Tensor) -> Result<Tensor> {
        let patches = patch_embed_3d(video, &self.patch_conv, self.cfg.mamba.c_emb)?;
        let mut z = build_tokens(
            &patches,
            self.e_s.tensor(),
            self.e_t.tensor(),
            self.quality_token.tensor(),
            self.cfg.grid(),
        )?;
        for block in &self.blocks {
            z = block.forward(&z)?;
        }
        let z = self.final_norm.forward(&z)?;
        z.narrow(0, 0, 1)?.reshape(&[self.cfg.mamba.c_emb])
    }
}

impl Module for TemporalMamba {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.patch_conv.visit(&format!("{prefix}.patch"), f);
        f(&format!("{prefix}.quality_token"), &self.quality_token);
        f(&format!("{prefix}.e_s"), &self.e_s);
        f(&format!("{prefix}.e_t"), &self.e_t);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&format!("{prefix}.block{i}"), f);
        }
        self.final_norm.visit(&format!("{prefix}.final_norm"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.patch_conv.visit_mut(&format!("{prefix}.patch"), f);
        f(&format!("{prefix}.quality_token"), &mut self.quality_token);
        f(&format!("{prefix}.e_s"), &mut self.e_s);
        f(&format!("{prefix}.e_t"), &mut self.e_t);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&format!("{prefix}.block{i}"), f);
        }
        self.final_norm.visit_mut(&format!("{prefix}.final_norm"), f);
    }
}
