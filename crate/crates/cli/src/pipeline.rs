//! End-to-end pipeline stages shared by the CLI commands and the acceptance
//! suite: branch-frame banks, autoencoder pre-training, denoiser
//! pre-training, controller adaptation, extractor checkpointing, feature
//! caching, head training, and split evaluation.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::Rng as _;

use vdq_corpus::CorpusReader;
use vdq_diffusion::{
    adapt_step, cosine_schedule, pretrain_step, psnr, spaced_timesteps, Controller, Extractor,
    UNet, Vae,
};
use vdq_eval::{evaluate, infer_video, EvalReport};
use vdq_tensor::adam::{Adam, AdamConfig};
use vdq_tensor::io::TensorMap;
use vdq_tensor::nn;
use vdq_tensor::rng::{derive_seed, rng_from, Rng};
use vdq_tensor::{no_grad, Tensor};
use vdq_vqa::cache::{batch_frame_features, CacheManifest};
use vdq_vqa::train::{train_epoch, EpochStats, TrainItem};
use vdq_vqa::{crop_positions, crop_video, bilinear_resize_video, FeatureCache, Unit, VqaConfig, VqaModel};

pub const T_TOTAL: usize = 1000;
pub const SPACED_STEPS: usize = 10;

/// Preprocessed 48x48 frames drawn from every corpus video (the resized
/// branch plus one random crop per video), used as training data for the
/// autoencoder and the denoiser.
pub struct FrameBank {
    /// Each [3, crop, crop].
    pub frames: Vec<Tensor>,
}

pub fn build_frame_bank(corpus: &CorpusReader, crop: usize, seed: u64) -> Result<FrameBank> {
    let mut frames = Vec::new();
    let mut rng = rng_from(derive_seed(seed, 0xba9c));
    for id in 0..corpus.len() {
        let video = corpus.load_video(id)?;
        let n = video.shape()[1];
        let native = video.shape()[2];
        let resized = bilinear_resize_video(&video, crop, crop)?;
        let max_off = native - crop;
        let pos = (
            rng.random_range(0..=max_off),
            rng.random_range(0..=max_off),
        );
        let cropped = crop_video(&video, pos, crop)?;
        for t in 0..n {
            for src in [&resized, &cropped] {
                let f = src
                    .narrow(1, t, 1)?
                    .reshape(&[3, crop, crop])?;
                frames.push(f);
            }
        }
    }
    Ok(FrameBank { frames })
}

impl FrameBank {
    /// Stacks `count` seeded picks into a [count, 3, crop, crop] batch.
    pub fn sample_batch(&self, count: usize, rng: &mut Rng) -> Result<Tensor> {
        let picks: Vec<&Tensor> = (0..count)
            .map(|_| &self.frames[rng.random_range(0..self.frames.len())])
            .collect();
        let batched: Vec<Tensor> = picks
            .iter()
            .map(|f| {
                let mut shape = vec![1];
                shape.extend_from_slice(f.shape());
                f.reshape(&shape)
            })
            .collect::<vdq_tensor::Result<_>>()?;
        let refs: Vec<&Tensor> = batched.iter().collect();
        Ok(Tensor::cat(&refs, 0)?)
    }
}

/// Reconstruction pre-training of the autoencoder. Returns per-iteration
/// losses.
pub fn pretrain_vae(
    vae: &mut Vae,
    bank: &FrameBank,
    iters: usize,
    batch: usize,
    lr: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut opt = Adam::new(AdamConfig::new(lr, 0.0));
    let mut losses = Vec::with_capacity(iters);
    for it in 0..iters {
        let mut rng = rng_from(derive_seed(seed, 0xae00_0000u64 + it as u64));
        let frames = bank.sample_batch(batch, &mut rng)?;
        let loss = vae.reconstruction_loss(&frames)?;
        let value = loss.item();
        if !value.is_finite() {
            bail!("autoencoder loss became non-finite at iteration {it}");
        }
        let grads = vdq_tensor::backward(&loss)?;
        opt.step(vae, &grads);
        losses.push(value);
    }
    Ok(losses)
}

/// Mean reconstruction PSNR of the autoencoder over a seeded sample of bank
/// frames.
pub fn vae_psnr(vae: &Vae, bank: &FrameBank, count: usize, seed: u64) -> Result<f64> {
    let mut rng = rng_from(derive_seed(seed, 0x5150));
    no_grad(|| {
        let mut total = 0.0;
        for _ in 0..count {
            let f = &bank.frames[rng.random_range(0..bank.frames.len())];
            let mut shape = vec![1];
            shape.extend_from_slice(f.shape());
            let batched = f.reshape(&shape)?;
            let rec = vae.decode(&vae.encode(&batched)?)?;
            total += psnr(&rec, &batched);
        }
        Ok(total / count as f64)
    })
}

/// Latents of every bank frame, encoded in batches; the training pool for
/// the denoiser and the controller.
pub struct LatentBank {
    /// [M, 4, 12, 12].
    pub latents: Vec<Tensor>,
}

pub fn build_latent_bank(vae: &Vae, bank: &FrameBank) -> Result<LatentBank> {
    no_grad(|| {
        let mut latents = Vec::with_capacity(bank.frames.len());
        for chunk in bank.frames.chunks(16) {
            let batched: Vec<Tensor> = chunk
                .iter()
                .map(|f| {
                    let mut shape = vec![1];
                    shape.extend_from_slice(f.shape());
                    f.reshape(&shape)
                })
                .collect::<vdq_tensor::Result<_>>()?;
            let refs: Vec<&Tensor> = batched.iter().collect();
            let z = vae.encode(&Tensor::cat(&refs, 0)?)?;
            for i in 0..chunk.len() {
                latents.push(z.narrow(0, i, 1)?);
            }
        }
        Ok(LatentBank { latents })
    })
}

impl LatentBank {
    pub fn sample_batch(&self, count: usize, rng: &mut Rng) -> Result<Tensor> {
        let picks: Vec<&Tensor> = (0..count)
            .map(|_| &self.latents[rng.random_range(0..self.latents.len())])
            .collect();
        Ok(Tensor::cat(&picks, 0)?)
    }
}

/// Epsilon-prediction pre-training of the bare denoiser.
pub fn train_denoiser(
    unet: &mut UNet,
    latents: &LatentBank,
    iters: usize,
    batch: usize,
    lr: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let sched = cosine_schedule(T_TOTAL)?;
    let mut opt = Adam::new(AdamConfig::new(lr, 0.0));
    let mut losses = Vec::with_capacity(iters);
    for it in 0..iters {
        let mut rng = rng_from(derive_seed(seed, 0xd000_0000 + it as u64));
        let z0 = latents.sample_batch(batch, &mut rng)?;
        let loss = pretrain_step(unet, &sched, &z0, &mut rng, &mut opt)?;
        losses.push(loss);
    }
    Ok(losses)
}

/// Controller adaptation against the frozen denoiser. Supports exact resume:
/// per-iteration randomness is derived from (seed, iteration), so a run
/// restarted from a checkpoint continues identically.
pub fn adapt_controller(
    unet: &UNet,
    controller: &mut Controller,
    latents: &LatentBank,
    start_iter: usize,
    iters: usize,
    batch: usize,
    lr: f64,
    seed: u64,
    opt: &mut Adam,
) -> Result<Vec<f64>> {
    let _ = lr; // lr lives in the optimizer config; kept for call-site clarity
    let sched = cosine_schedule(T_TOTAL)?;
    let mut losses = Vec::with_capacity(iters);
    for it in start_iter..start_iter + iters {
        let mut rng = rng_from(derive_seed(seed, 0xc000_0000 + it as u64));
        let z0 = latents.sample_batch(batch, &mut rng)?;
        let loss = adapt_step(unet, controller, &sched, &z0, &mut rng, opt)?;
        losses.push(loss);
    }
    Ok(losses)
}

// ── Extractor checkpointing ─────────────────────────────────────────

pub fn save_extractor(path: &Path, vae: &Vae, unet: &UNet, controller: &Controller) -> Result<()> {
    let mut map = TensorMap::new();
    nn::save_module(vae, &mut map, "vae");
    nn::save_module(unet, &mut map, "unet");
    nn::save_module(controller, &mut map, "controller");
    map.insert("meta.t_total", Tensor::scalar(T_TOTAL as f64));
    map.insert("meta.spaced", Tensor::scalar(SPACED_STEPS as f64));
    map.save(path)?;
    Ok(())
}

/// Loads a frozen extractor from a checkpoint.
pub fn load_extractor(path: &Path) -> Result<Extractor> {
    let map = TensorMap::load(path)
        .with_context(|| format!("loading extractor checkpoint {}", path.display()))?;
    let mut rng = rng_from(0);
    let mut vae = Vae::new(&mut rng);
    let mut unet = UNet::new(4, &mut rng);
    let mut controller = Controller::from_denoiser(&unet, &mut rng)?;
    nn::load_module(&mut vae, &map, "vae").context("extractor checkpoint is missing autoencoder weights")?;
    nn::load_module(&mut unet, &map, "unet").context("extractor checkpoint is missing denoiser weights")?;
    nn::load_module(&mut controller, &map, "controller")
        .context("extractor checkpoint is missing adapted controller weights")?;
    nn::set_trainable(&mut vae, false);
    nn::set_trainable(&mut unet, false);
    nn::set_trainable(&mut controller, false);
    let t_total = map
        .get("meta.t_total")
        .map(|t| t.item() as usize)
        .unwrap_or(T_TOTAL);
    let k = map
        .get("meta.spaced")
        .map(|t| t.item() as usize)
        .unwrap_or(SPACED_STEPS);
    let sched = cosine_schedule(t_total)?;
    let spaced = spaced_timesteps(&sched, k)?;
    Ok(Extractor {
        vae,
        unet,
        controller,
        sched,
        spaced,
    })
}

// ── Feature cache construction ──────────────────────────────────────

/// Extracts and stores features for every (video, unit): the resized branch
/// plus all candidate crops. Units already present on disk are kept.
pub fn build_feature_cache(
    extractor: &Extractor,
    corpus: &CorpusReader,
    dir: &Path,
    cfg: &VqaConfig,
    base_seed: u64,
    mut progress: impl FnMut(usize, usize),
) -> Result<FeatureCache> {
    let n = corpus.len();
    let positions: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|id| {
            crop_positions(
                cfg.native,
                cfg.native,
                cfg.crop,
                cfg.n_crops,
                derive_seed(base_seed, 0x0c0c_0000 + id as u64),
            )
        })
        .collect::<vdq_vqa::Result<_>>()?;
    let manifest = CacheManifest {
        base_seed,
        n_videos: n,
        n_crops: cfg.n_crops,
        crop: cfg.crop,
        positions: positions.clone(),
    };
    let cache = FeatureCache::create(dir, manifest)?;
    let total = n * (1 + cfg.n_crops);
    let mut done = 0;
    for id in 0..n {
        let native = corpus.load_video(id)?;
        let mut units: Vec<(Unit, Tensor)> = Vec::with_capacity(1 + cfg.n_crops);
        units.push((Unit::Resize, bilinear_resize_video(&native, cfg.crop, cfg.crop)?));
        for (k, &pos) in positions[id].iter().enumerate() {
            units.push((Unit::Crop(k), crop_video(&native, pos, cfg.crop)?));
        }
        for (unit, pixels) in units {
            done += 1;
            if cache.contains(id, unit) {
                progress(done, total);
                continue;
            }
            // extractor input is [N, 3, H, W]
            let frames = pixels.permute(&[1, 0, 2, 3])?;
            let feats =
                extractor.extract_video(&frames, cache.extraction_seed(id, unit))?;
            let (ms, latent) = batch_frame_features(&feats)?;
            cache.store(id, unit, &ms, &latent)?;
            progress(done, total);
        }
    }
    Ok(cache)
}

// ── Head training and evaluation ────────────────────────────────────

pub struct HeadTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub use_temporal: bool,
}

pub fn train_heads(
    corpus: &CorpusReader,
    cache: &FeatureCache,
    train_ids: &[usize],
    cfg: &VqaConfig,
    tc: &HeadTrainConfig,
) -> Result<(VqaModel, Vec<EpochStats>)> {
    let mut model_cfg = *cfg;
    model_cfg.use_temporal = tc.use_temporal;
    let mut rng = rng_from(derive_seed(tc.seed, 0x0de1));
    let mut model = VqaModel::new(model_cfg, &mut rng)?;
    let mut opt = Adam::new(AdamConfig::new(tc.lr, tc.weight_decay));
    let items: Vec<TrainItem> = train_ids
        .iter()
        .map(|&id| TrainItem {
            video_id: id,
            mos: corpus.entry(id).mos,
        })
        .collect();
    let mut stats = Vec::with_capacity(tc.epochs);
    for epoch in 0..tc.epochs {
        let s = train_epoch(
            &mut model,
            &mut opt,
            &items,
            cache,
            corpus,
            epoch,
            tc.seed,
            tc.batch_size,
        )?;
        stats.push(s);
    }
    Ok((model, stats))
}

pub fn evaluate_model(
    model: &VqaModel,
    cache: &FeatureCache,
    corpus: &CorpusReader,
    splits: &[(Vec<usize>, Vec<usize>)],
) -> Result<EvalReport> {
    let mos: Vec<f64> = (0..corpus.len()).map(|id| corpus.entry(id).mos).collect();
    Ok(evaluate(
        |id| infer_video(model, cache, corpus, id),
        &mos,
        splits,
    )?)
}

pub fn save_model(path: &Path, model: &VqaModel) -> Result<()> {
    let mut map = TensorMap::new();
    nn::save_module(model, &mut map, "model");
    map.save(path)?;
    Ok(())
}

pub fn load_model(path: &Path, cfg: VqaConfig) -> Result<VqaModel> {
    let map = TensorMap::load(path)
        .with_context(|| format!("loading model checkpoint {}", path.display()))?;
    let mut rng = rng_from(0);
    let mut model = VqaModel::new(cfg, &mut rng)?;
    nn::load_module(&mut model, &map, "model")?;
    Ok(model)
}
