//! Head training over cached extractor features. The extractor never enters
//! this loop: its outputs come from the read-only feature cache, so the
//! frozen-extractor discipline holds by construction. Batch order, crop
//! choice, and dropout masks all derive from the run seed, making loss
//! curves exactly reproducible.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::cache::{FeatureCache, Unit};
use crate::heads::vqa_loss;
use crate::model::{BranchInput, VqaModel};
use crate::preprocess::{bilinear_resize_video, crop_video};
use crate::{Result, VqaError};
use vdq_corpus::CorpusReader;
use vdq_tensor::adam::Adam;
use vdq_tensor::rng::{derive_seed, rng_from};
use vdq_tensor::{backward, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct TrainItem {
    pub video_id: usize,
    pub mos: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub steps: usize,
}

/// Owned per-branch model inputs for one video presentation.
pub struct BranchData {
    pub multi_scale: Vec<Tensor>,
    pub latent: Tensor,
    pub pixels: Tensor,
}

impl BranchData {
    pub fn as_input(&self) -> BranchInput<'_> {
        BranchInput {
            multi_scale: &self.multi_scale,
            latent: &self.latent,
            pixels: &self.pixels,
        }
    }
}

/// Loads the cached features and branch pixels for one video: the resized
/// branch and the crop at candidate index `crop_idx`.
pub fn video_branches(
    cache: &FeatureCache,
    corpus: &CorpusReader,
    video_id: usize,
    crop_idx: usize,
    crop: usize,
) -> Result<(BranchData, BranchData)> {
    let resize_unit = cache.load(video_id, Unit::Resize)?;
    let crop_unit = cache.load(video_id, Unit::Crop(crop_idx))?;
    let native = corpus.load_video(video_id)?;
    let resized_px = bilinear_resize_video(&native, crop, crop)?;
    let pos = cache
        .manifest
        .positions
        .get(video_id)
        .and_then(|p| p.get(crop_idx))
        .copied()
        .ok_or_else(|| VqaError::Cache(format!("no crop {crop_idx} for video {video_id}")))?;
    let cropped_px = crop_video(&native, pos, crop)?;
    Ok((
        BranchData {
            multi_scale: resize_unit.multi_scale,
            latent: resize_unit.latent,
            pixels: resized_px,
        },
        BranchData {
            multi_scale: crop_unit.multi_scale,
            latent: crop_unit.latent,
            pixels: cropped_px,
        },
    ))
}

/// One pass over the training items. Returns the mean L1 loss.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    model: &mut VqaModel,
    opt: &mut Adam,
    items: &[TrainItem],
    cache: &FeatureCache,
    corpus: &CorpusReader,
    epoch: usize,
    seed: u64,
    batch_size: usize,
) -> Result<EpochStats> {
    let mut rng = rng_from(derive_seed(seed, 0x9000 + epoch as u64));
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut rng);

    let n_crops = cache.manifest.n_crops;
    let crop = model.cfg.crop;
    let mut total = 0.0;
    let mut steps = 0;
    for chunk in order.chunks(batch_size.max(1)) {
        let mut batch_loss: Option<Tensor> = None;
        for &idx in chunk {
            let item = items[idx];
            let crop_idx = rng.random_range(0..n_crops);
            let (sem, dist) = video_branches(cache, corpus, item.video_id, crop_idx, crop)?;
            let pred = model.forward(&sem.as_input(), &dist.as_input(), true, &mut rng)?;
            let loss = vqa_loss(&pred, item.mos)?;
            batch_loss = Some(match batch_loss {
                Some(acc) => acc.add(&loss)?,
                None => loss,
            });
        }
        let Some(sum) = batch_loss else { continue };
        let loss = sum.mul_scalar(1.0 / chunk.len() as f64)?;
        let value = loss.item();
        if !value.is_finite() {
            let ids: Vec<usize> = chunk.iter().map(|&i| items[i].video_id).collect();
            return Err(VqaError::NonFiniteLoss(format!(
                "epoch {epoch}, step {steps}, videos {ids:?}"
            )));
        }
        let grads = backward(&loss)?;
        opt.step(model, &grads);
        total += value;
        steps += 1;
    }
    Ok(EpochStats {
        mean_loss: if steps > 0 { total / steps as f64 } else { 0.0 },
        steps,
    })
}
