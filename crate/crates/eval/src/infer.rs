//! Multi-crop video inference: the resized-branch features are computed
//! once, every candidate crop contributes one prediction, and the video
//! score is the arithmetic mean over the crops.

use crate::Result;
use vdq_corpus::CorpusReader;
use vdq_tensor::no_grad;
use vdq_tensor::rng::rng_from;
use vdq_vqa::train::video_branches;
use vdq_vqa::{FeatureCache, VqaModel};

/// Predicts one video's quality score from cached features, averaging over
/// all candidate crops.
pub fn infer_video(
    model: &VqaModel,
    cache: &FeatureCache,
    corpus: &CorpusReader,
    video_id: usize,
) -> Result<f64> {
    let n_crops = cache.manifest.n_crops;
    no_grad(|| {
        // crop 0 also supplies the (crop-independent) semantic branch
        let (sem, dist0) = video_branches(cache, corpus, video_id, 0, model.cfg.crop)?;
        let sem_feat = model.semantic_features(&sem.as_input())?;
        let mut rng = rng_from(0); // inert: dropout is disabled at inference
        let mut scores = Vec::with_capacity(n_crops);
        let first = model.predict(
            &sem_feat,
            &model.distortion_features(&dist0.as_input())?,
            false,
            &mut rng,
        )?;
        scores.push(first.value());
        for k in 1..n_crops {
            let (_, dist) = video_branches(cache, corpus, video_id, k, model.cfg.crop)?;
            let pred = model.predict(
                &sem_feat,
                &model.distortion_features(&dist.as_input())?,
                false,
                &mut rng,
            )?;
            scores.push(pred.value());
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        debug_assert!(mean >= lo - 1e-12 && mean <= hi + 1e-12);
        Ok(mean)
    })
}
