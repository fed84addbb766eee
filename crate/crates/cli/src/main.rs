//! Batch commands for the video-quality pipeline. Every command resolves
//! its configuration from defaults, an optional JSON config file (unknown
//! keys rejected), and explicit flags — in that order — and writes the
//! resolved configuration next to its outputs.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use vdq_cli::pipeline::{self, HeadTrainConfig};
use vdq_cli::selftest::run_selftest;
use vdq_corpus::{generate_corpus, make_splits, read_corpus, write_corpus, CorpusConfig, CorpusReader};
use vdq_diffusion::{Controller, UNet, Vae};
use vdq_tensor::adam::{Adam, AdamConfig};
use vdq_tensor::io::TensorMap;
use vdq_tensor::nn::{self};
use vdq_tensor::rng::{derive_seed, rng_from};
use vdq_tensor::Tensor;
use vdq_vqa::{FeatureCache, VqaConfig};

#[derive(Parser)]
#[command(
    name = "vdq",
    about = "Synthetic-corpus video quality pipeline: generation, extractor adaptation, feature caching, head training, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic degraded-video corpus
    GenCorpus(GenCorpusArgs),
    /// Pre-train the frame autoencoder on the corpus
    PretrainVae(PretrainVaeArgs),
    /// Pre-train the denoiser, then adapt the controller (denoiser frozen)
    Adapt(AdaptArgs),
    /// Extract and cache frozen-extractor features for every video and crop
    CacheFeatures(CacheFeaturesArgs),
    /// Train the quality head on cached features
    Train(TrainArgs),
    /// Evaluate a trained model over seeded splits
    Eval(EvalArgs),
    /// Run the fast invariant suite
    Selftest(SelftestArgs),
}

enum CmdError {
    Validation(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CmdError {
    fn from(e: anyhow::Error) -> Self {
        CmdError::Runtime(e)
    }
}

fn invalid(msg: impl Into<String>) -> CmdError {
    CmdError::Validation(msg.into())
}

type CmdResult = Result<(), CmdError>;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.cmd {
        Cmd::GenCorpus(a) => cmd_gen_corpus(a),
        Cmd::PretrainVae(a) => cmd_pretrain_vae(a),
        Cmd::Adapt(a) => cmd_adapt(a),
        Cmd::CacheFeatures(a) => cmd_cache_features(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Selftest(a) => cmd_selftest(a),
    };
    match result {
        Ok(()) => {}
        Err(CmdError::Validation(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
        Err(CmdError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}

// ── shared helpers ──────────────────────────────────────────────────

fn load_config_file<C: DeserializeOwned>(path: &Path) -> Result<C, CmdError> {
    let text = fs::read_to_string(path)
        .map_err(|e| invalid_msg(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| invalid_msg(format!("invalid config {}: {e}", path.display())))
}

fn invalid_msg(msg: String) -> CmdError {
    CmdError::Validation(msg)
}

fn prepare_run_dir(out: &Path) -> Result<(), CmdError> {
    fs::create_dir_all(out.join("checkpoints"))
        .and_then(|_| fs::create_dir_all(out.join("reports")))
        .map_err(|e| invalid_msg(format!("cannot create run directory {}: {e}", out.display())))
}

fn write_resolved_config<C: Serialize>(out: &Path, cfg: &C) -> CmdResult {
    let json = serde_json::to_string_pretty(cfg).expect("config serialization");
    fs::write(out.join("config.json"), json)
        .map_err(|e| CmdError::Runtime(anyhow::anyhow!("writing resolved config: {e}")))
}

fn write_loss_csv(path: &Path, header: &str, losses: &[f64]) -> CmdResult {
    let mut csv = format!("{header}\n");
    for (i, l) in losses.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    fs::write(path, csv).map_err(|e| CmdError::Runtime(anyhow::anyhow!("writing loss csv: {e}")))
}

fn open_corpus(path: &Path) -> Result<CorpusReader, CmdError> {
    if !path.join("manifest.json").exists() {
        return Err(invalid(format!(
            "no corpus manifest at {}",
            path.display()
        )));
    }
    read_corpus(path).map_err(|e| CmdError::Runtime(anyhow::anyhow!("reading corpus: {e}")))
}

/// Uniform frame geometry of a corpus, validated.
fn corpus_geometry(corpus: &CorpusReader) -> Result<(usize, usize), CmdError> {
    let first = corpus.entry(0);
    let (frames, native) = (first.frames, first.height);
    for id in 0..corpus.len() {
        let e = corpus.entry(id);
        if e.frames != frames || e.height != native || e.width != native {
            return Err(invalid(format!("corpus geometry is not uniform at id {id}")));
        }
    }
    Ok((frames, native))
}

// ── gen-corpus ──────────────────────────────────────────────────────

#[derive(Args)]
struct GenCorpusArgs {
    /// JSON config file; flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output corpus directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    videos: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GenCorpusConfig {
    out: PathBuf,
    videos: usize,
    frames: usize,
    size: usize,
    seed: u64,
}

impl Default for GenCorpusConfig {
    fn default() -> Self {
        GenCorpusConfig {
            out: PathBuf::new(),
            videos: 250,
            frames: 8,
            size: 96,
            seed: 42,
        }
    }
}

fn cmd_gen_corpus(args: GenCorpusArgs) -> CmdResult {
    let mut cfg: GenCorpusConfig = match &args.config {
        Some(p) => load_config_file(p)?,
        None => GenCorpusConfig::default(),
    };
    if let Some(v) = args.out {
        cfg.out = v;
    }
    if let Some(v) = args.videos {
        cfg.videos = v;
    }
    if let Some(v) = args.frames {
        cfg.frames = v;
    }
    if let Some(v) = args.size {
        cfg.size = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if cfg.out.as_os_str().is_empty() {
        return Err(invalid("--out is required"));
    }
    if cfg.videos == 0 {
        return Err(invalid("--videos must be at least 1"));
    }
    if cfg.size % 8 != 0 {
        return Err(invalid("--size must be a multiple of 8"));
    }

    fs::create_dir_all(&cfg.out)
        .map_err(|e| invalid_msg(format!("cannot create {}: {e}", cfg.out.display())))?;
    let corpus_cfg = CorpusConfig {
        videos: cfg.videos,
        frames: cfg.frames,
        size: cfg.size,
        seed: cfg.seed,
    };
    let samples = generate_corpus(&corpus_cfg)
        .map_err(|e| CmdError::Runtime(anyhow::anyhow!("generating corpus: {e}")))?;
    let manifest = write_corpus(&cfg.out, cfg.seed, &samples)
        .map_err(|e| CmdError::Runtime(anyhow::anyhow!("writing corpus: {e}")))?;
    write_resolved_config(&cfg.out, &cfg)?;

    // summary: count and score histogram
    let mut hist = [0usize; 8];
    for e in &manifest.entries {
        let bin = (((e.mos - 1.0) / 4.0) * 8.0).min(7.0) as usize;
        hist[bin] += 1;
    }
    println!("wrote {} videos to {}", manifest.entries.len(), cfg.out.display());
    println!("mos histogram (1..5, 8 bins): {hist:?}");
    Ok(())
}

// ── pretrain-vae ────────────────────────────────────────────────────

#[derive(Args)]
struct PretrainVaeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PretrainVaeConfig {
    corpus: PathBuf,
    out: PathBuf,
    iters: usize,
    batch: usize,
    lr: f64,
    seed: u64,
    crop: usize,
}

impl Default for PretrainVaeConfig {
    fn default() -> Self {
        PretrainVaeConfig {
            corpus: PathBuf::new(),
            out: PathBuf::new(),
            iters: 2500,
            batch: 8,
            lr: 1e-3,
            seed: 7,
            crop: 48,
        }
    }
}

fn cmd_pretrain_vae(args: PretrainVaeArgs) -> CmdResult {
    let mut cfg: PretrainVaeConfig = match &args.config {
        Some(p) => load_config_file(p)?,
        None => PretrainVaeConfig::default(),
    };
    if let Some(v) = args.corpus {
        cfg.corpus = v;
    }
    if let Some(v) = args.out {
        cfg.out = v;
    }
    if let Some(v) = args.iters {
        cfg.iters = v;
    }
    if let Some(v) = args.batch {
        cfg.batch = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if cfg.corpus.as_os_str().is_empty() || cfg.out.as_os_str().is_empty() {
        return Err(invalid("--corpus and --out are required"));
    }
    let corpus = open_corpus(&cfg.corpus)?;
    prepare_run_dir(&cfg.out)?;
    write_resolved_config(&cfg.out, &cfg)?;

    println!("building frame bank from {} videos", corpus.len());
    let bank = pipeline::build_frame_bank(&corpus, cfg.crop, cfg.seed)?;
    let mut vae = Vae::new(&mut rng_from(derive_seed(cfg.seed, 0xae)));
    let losses = pipeline::pretrain_vae(&mut vae, &bank, cfg.iters, cfg.batch, cfg.lr, cfg.seed)?;
    write_loss_csv(&cfg.out.join("reports/vae_loss.csv"), "iter,mse", &losses)?;

    let mut map = TensorMap::new();
    nn::save_module(&vae, &mut map, "vae");
    map.save(&cfg.out.join("checkpoints/vae.dvtm"))
        .map_err(|e| CmdError::Runtime(anyhow::anyhow!("saving checkpoint: {e}")))?;

    let psnr = pipeline::vae_psnr(&vae, &bank, 64, cfg.seed)?;
    println!(
        "final mse {:.6}, held-out sample psnr {:.2} dB",
        losses.last().copied().unwrap_or(f64::NAN),
        psnr
    );
    Ok(())
}

// ── adapt ───────────────────────────────────────────────────────────

#[derive(Args)]
struct AdaptArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Autoencoder checkpoint from pretrain-vae
    #[arg(long)]
    vae: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Denoiser pre-training iterations
    #[arg(long)]
    denoiser_iters: Option<usize>,
    /// Controller adaptation iterations
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Resume controller adaptation from an extractor checkpoint
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct AdaptConfig {
    corpus: PathBuf,
    vae: PathBuf,
    out: PathBuf,
    denoiser_iters: usize,
    iters: usize,
    batch: usize,
    lr: f64,
    seed: u64,
    resume: Option<PathBuf>,
    crop: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            corpus: PathBuf::new(),
            vae: PathBuf::new(),
            out: PathBuf::new(),
            denoiser_iters: 2200,
            iters: 3000,
            batch: 8,
            lr: 1e-3,
            seed: 11,
            resume: None,
            crop: 48,
        }
    }
}

#[derive(Serialize)]
struct AdaptSummary {
    first_decile_mean: f64,
    last_decile_mean: f64,
    improved: bool,
    denoiser_hash_before: String,
    denoiser_hash_after: String,
}

fn cmd_adapt(args: AdaptArgs) -> CmdResult {
    let mut cfg: AdaptConfig = match &args.config {
        Some(p) => load_config_file(p)?,
        None => AdaptConfig::default(),
    };
    if let Some(v) = args.corpus {
        cfg.corpus = v;
    }
    if let Some(v) = args.vae {
        cfg.vae = v;
    }
    if let Some(v) = args.out {
        cfg.out = v;
    }
    if let Some(v) = args.denoiser_iters {
        cfg.denoiser_iters = v;
    }
    if let Some(v) = args.iters {
        cfg.iters = v;
    }
    if let Some(v) = args.batch {
        cfg.batch = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.resume {
        cfg.resume = Some(v);
    }
    if cfg.corpus.as_os_str().is_empty() || cfg.out.as_os_str().is_empty() {
        return Err(invalid("--corpus and --out are required"));
    }
    if cfg.resume.is_none() && cfg.vae.as_os_str().is_empty() {
        return Err(invalid("--vae is required unless resuming"));
    }
    let corpus = open_corpus(&cfg.corpus)?;
    prepare_run_dir(&cfg.out)?;
    write_resolved_config(&cfg.out, &cfg)?;

    println!("building frame and latent banks");
    let bank = pipeline::build_frame_bank(&corpus, cfg.crop, cfg.seed)?;

    let (vae, mut unet, mut controller, mut opt, start_iter) = match &cfg.resume {
        Some(path) => {
            if !path.exists() {
                return Err(invalid(format!("resume checkpoint {} not found", path.display())));
            }
            let ex = pipeline::load_extractor(path)?;
            let map = TensorMap::load(path)
                .map_err(|e| CmdError::Runtime(anyhow::anyhow!("reading checkpoint: {e}")))?;
            let mut opt = Adam::new(AdamConfig::new(cfg.lr, 1e-6));
            opt.load_state(&map, "opt")
                .map_err(|e| CmdError::Runtime(anyhow::anyhow!("reading optimizer state: {e}")))?;
            let start = map
                .get("meta.adapt_iters")
                .map(|t| t.item() as usize)
                .unwrap_or(0);
            let mut controller = ex.controller;
            nn::set_trainable(&mut controller, true);
            (ex.vae, ex.unet, controller, opt, start)
        }
        None => {
            if !cfg.vae.exists() {
                return Err(invalid(format!("vae checkpoint {} not found", cfg.vae.display())));
            }
            let map = TensorMap::load(&cfg.vae)
                .map_err(|e| CmdError::Runtime(anyhow::anyhow!("reading vae checkpoint: {e}")))?;
            let mut vae = Vae::new(&mut rng_from(0));
            nn::load_module(&mut vae, &map, "vae")
                .map_err(|e| CmdError::Runtime(anyhow::anyhow!("loading vae weights: {e}")))?;
            nn::set_trainable(&mut vae, false);

            let mut unet = UNet::new(4, &mut rng_from(derive_seed(cfg.seed, 0x0d)));
            println!("pre-training denoiser for {} iterations", cfg.denoiser_iters);
            let latents = pipeline::build_latent_bank(&vae, &bank)?;
            let d_losses = pipeline::train_denoiser(
                &mut unet,
                &latents,
                cfg.denoiser_iters,
                cfg.batch,
                cfg.lr,
                cfg.seed,
            )?;
            write_loss_csv(
                &cfg.out.join("reports/denoiser_loss.csv"),
                "iter,loss",
                &d_losses,
            )?;
            let controller =
                Controller::from_denoiser(&unet, &mut rng_from(derive_seed(cfg.seed, 0xcc)))
                    .map_err(|e| CmdError::Runtime(anyhow::anyhow!("building controller: {e}")))?;
            let opt = Adam::new(AdamConfig::new(cfg.lr, 1e-6));
            (vae, unet, controller, opt, 0)
        }
    };

    nn::set_trainable(&mut unet, false);
    let latents = pipeline::build_latent_bank(&vae, &bank)?;
    let hash_before = format!("{:016x}", nn::state_hash(&unet));

    println!(
        "adapting controller: iterations {}..{}",
        start_iter,
        start_iter + cfg.iters
    );
    let losses = pipeline::adapt_controller(
        &unet,
        &mut controller,
        &latents,
        start_iter,
        cfg.iters,
        cfg.batch,
        cfg.lr,
        cfg.seed,
        &mut opt,
    )?;
    let hash_after = format!("{:016x}", nn::state_hash(&unet));
    write_loss_csv(&cfg.out.join("reports/adapt_loss.csv"), "iter,loss", &losses)?;

    let decile = (losses.len() / 10).max(1);
    let first: f64 = losses[..decile].iter().sum::<f64>() / decile as f64;
    let last: f64 = losses[losses.len() - decile..].iter().sum::<f64>() / decile as f64;
    let summary = AdaptSummary {
        first_decile_mean: first,
        last_decile_mean: last,
        improved: last < first,
        denoiser_hash_before: hash_before.clone(),
        denoiser_hash_after: hash_after.clone(),
    };
    fs::write(
        cfg.out.join("reports/adapt_summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serialization"),
    )
    .map_err(|e| CmdError::Runtime(anyhow::anyhow!("writing summary: {e}")))?;

    // checkpoint with optimizer state and iteration counter for exact resume
    let ckpt = cfg.out.join("checkpoints/extractor.dvtm");
    let mut map = TensorMap::new();
    nn::save_module(&vae, &mut map, "vae");
    nn::save_module(&unet, &mut map, "unet");
    nn::save_module(&controller, &mut map, "controller");
    map.insert("meta.t_total", Tensor::scalar(pipeline::T_TOTAL as f64));
    map.insert("meta.spaced", Tensor::scalar(pipeline::SPACED_STEPS as f64));
    map.insert(
        "meta.adapt_iters",
        Tensor::scalar((start_iter + cfg.iters) as f64),
    );
    opt.save_state(&mut map, "opt");
    map.save(&ckpt)
        .map_err(|e| CmdError::Runtime(anyhow::anyhow!("saving extractor checkpoint: {e}")))?;

    println!(
        "adaptation loss: first decile {:.4}, last decile {:.4} ({})",
        first,
        last,
        if summary.improved { "improved" } else { "NOT improved" }
    );
    println!("denoiser hash unchanged: {}", hash_before == hash_after);
    Ok(())
}

// ── cache-features ──────────────────────────────────────────────────

#[derive(Args)]
struct CacheFeaturesArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Extractor checkpoint from adapt
    #[arg(long)]
    extractor: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    crops: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct CacheFeaturesConfig {
    corpus: PathBuf,
    extractor: PathBuf,
    out: PathBuf,
    crops: usize,
    seed: u64,
    crop: usize,
}

impl Default for CacheFeaturesConfig {
    fn default() -> Self {
        CacheFeaturesConfig {
            corpus: PathBuf::new(),
            extractor: PathBuf::new(),
            out: PathBuf::new(),
            crops: 20,
            seed: 33,
            crop: 48,
        }
    }
}

fn cmd_cache_features(args: CacheFeaturesArgs) -> CmdResult {
    let mut cfg: CacheFeaturesConfig = match &args.config {
        Some(p) => load_config_file(p)?,
        None => CacheFeaturesConfig::default(),
    };
    if let Some(v) = args.corpus {
        cfg.corpus = v;
    }
    if let Some(v) = args.extractor {
        cfg.extractor = v;
    }
    if let Some(v) = args.out {
        cfg.out = v;
    }
    if let Some(v) = args.crops {
        cfg.crops = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if cfg.corpus.as_os_str().is_empty()
        || cfg.extractor.as_os_str().is_empty()
        || cfg.out.as_os_str().is_empty()
    {
        return Err(invalid("--corpus, --extractor and --out are required"));
    }
    if !cfg.extractor.exists() {
        return Err(invalid(format!(
            "extractor checkpoint {} not found",
            cfg.extractor.display()
        )));
    }
    let corpus = open_corpus(&cfg.corpus)?;
    let (frames, native) = corpus_geometry(&corpus)?;
    fs::create_dir_all(&cfg.out)
        .map_err(|e| invalid_msg(format!("cannot create {}: {e}", cfg.out.display())))?;
    write_resolved_config(&cfg.out, &cfg)?;

    let extractor = pipeline::load_extractor(&cfg.extractor)?;
    let vqa_cfg = VqaConfig {
        frames,
        native,
        crop: cfg.crop,
        n_crops: cfg.crops,
        ..VqaConfig::default()
    };
    let total = corpus.len() * (1 + cfg.crops);
    let mut last_printed = 0usize;
    pipeline::build_feature_cache(
        &extractor,
        &corpus,
        &cfg.out.join("features"),
        &vqa_cfg,
        cfg.seed,
        |done, total_units| {
            if done - last_printed >= 100 || done == total_units {
                println!("cached {done}/{total_units} units");
                last_printed = done;
            }
        },
    )?;
    println!("feature cache complete: {total} units");
    Ok(())
}

// ── train ───────────────────────────────────────────────────────────

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Feature cache directory (the `features/` dir of a cache run)
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    splits: Option<usize>,
    /// Which split index to train on
    #[arg(long)]
    split_index: Option<usize>,
    /// Overfit check: train and evaluate on the first N videos
    #[arg(long)]
    overfit: Option<usize>,
    /// Disable the temporal-coherence blocks (ablation)
    #[arg(long)]
    no_temporal: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainConfig {
    corpus: PathBuf,
    cache: PathBuf,
    out: PathBuf,
    epochs: usize,
    batch: usize,
    lr: f64,
    weight_decay: f64,
    seed: u64,
    split_seed: u64,
    ratio: f64,
    splits: usize,
    split_index: usize,
    overfit: Option<usize>,
    use_temporal: bool,
    /// Resolved model geometry; filled in from the corpus and cache.
    model: Option<VqaConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            corpus: PathBuf::new(),
            cache: PathBuf::new(),
            out: PathBuf::new(),
            epochs: 50,
            batch: 2,
            lr: 1e-3,
            weight_decay: 1e-6,
            seed: 5,
            split_seed: 17,
            ratio: 0.8,
            splits: 10,
            split_index: 0,
            overfit: None,
            use_temporal: true,
            model: None,
        }
    }
}

fn cmd_train(args: TrainArgs) -> CmdResult {
    let mut cfg: TrainConfig = match &args.config {
        Some(p) => load_config_file(p)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = args.corpus {
        cfg.corpus = v;
    }
    if let Some(v) = args.cache {
        cfg.cache = v;
    }
    if let Some(v) = args.out {
        cfg.out = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch {
        cfg.batch = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.weight_decay {
        cfg.weight_decay = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.split_seed {
        cfg.split_seed = v;
    }
    if let Some(v) = args.ratio {
        cfg.ratio = v;
    }
    if let Some(v) = args.splits {
        cfg.splits = v;
    }
    if let Some(v) = args.split_index {
        cfg.split_index = v;
    }
    if let Some(v) = args.overfit {
        cfg.overfit = Some(v);
    }
    if args.no_temporal {
        cfg.use_temporal = false;
    }
    if cfg.corpus.as_os_str().is_empty()
        || cfg.cache.as_os_str().is_empty()
        || cfg.out.as_os_str().is_empty()
    {
        return Err(invalid("--corpus, --cache and --out are required"));
    }
    let corpus = open_corpus(&cfg.corpus)?;
    let cache = FeatureCache::open(&cfg.cache)
        .map_err(|e| invalid_msg(format!("opening feature cache: {e}")))?;
    if cache.manifest.n_videos != corpus.len() {
        return Err(invalid(format!(
            "cache covers {} videos but the corpus has {}",
            cache.manifest.n_videos,
            corpus.len()
        )));
    }
    let (frames, native) = corpus_geometry(&corpus)?;
    let vqa_cfg = VqaConfig {
        frames,
        native,
        crop: cache.manifest.crop,
        n_crops: cache.manifest.n_crops,
        use_temporal: cfg.use_temporal,
        ..VqaConfig::default()
    };
    cfg.model = Some(vqa_cfg);
    prepare_run_dir(&cfg.out)?;
    write_resolved_config(&cfg.out, &cfg)?;

    let train_ids: Vec<usize> = match cfg.overfit {
        Some(n) => {
            if n < 1 || n > corpus.len() {
                return Err(invalid(format!("--overfit must be in [1, {}]", corpus.len())));
            }
            (0..n).collect()
        }
        None => {
            let splits = make_splits(corpus.len(), cfg.ratio, cfg.splits, cfg.split_seed)
                .map_err(|e| invalid_msg(format!("building splits: {e}")))?;
            if cfg.split_index >= splits.len() {
                return Err(invalid(format!(
                    "--split-index {} out of range for {} splits",
                    cfg.split_index,
                    splits.len()
                )));
            }
            splits[cfg.split_index].0.clone()
        }
    };

    println!(
        "training on {} videos for {} epochs (temporal blocks: {})",
        train_ids.len(),
        cfg.epochs,
        cfg.use_temporal
    );
    let tc = HeadTrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch,
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        seed: cfg.seed,
        use_temporal: cfg.use_temporal,
    };
    let (model, stats) = pipeline::train_heads(&corpus, &cache, &train_ids, &vqa_cfg, &tc)?;
    let losses: Vec<f64> = stats.iter().map(|s| s.mean_loss).collect();
    write_loss_csv(&cfg.out.join("reports/train_loss.csv"), "epoch,l1", &losses)?;
    pipeline::save_model(&cfg.out.join("checkpoints/model.dvtm"), &model)?;

    for (i, l) in losses.iter().enumerate() {
        println!("epoch {i}: mean L1 {l:.4}");
    }
    if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
        println!("loss ratio (final/initial): {:.3}", last / first);
    }
    Ok(())
}

// ── eval ────────────────────────────────────────────────────────────

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Train run directory (holding config.json and checkpoints/model.dvtm)
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    splits: Option<usize>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
    /// Score with the ground-truth oracle instead of a model (plumbing test)
    #[arg(long)]
    oracle: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EvalConfig {
    model: Option<PathBuf>,
    corpus: PathBuf,
    cache: PathBuf,
    out: PathBuf,
    splits: usize,
    ratio: f64,
    split_seed: u64,
    oracle: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            model: None,
            corpus: PathBuf::new(),
            cache: PathBuf::new(),
            out: PathBuf::new(),
            splits: 10,
            ratio: 0.8,
            split_seed: 17,
            oracle: false,
        }
    }
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    let mut cfg: EvalConfig = match &args.config {
        Some(p) => load_config_file(p)?,
        None => EvalConfig::default(),
    };
    if let Some(v) = args.model {
        cfg.model = Some(v);
    }
    if let Some(v) = args.corpus {
        cfg.corpus = v;
    }
    if let Some(v) = args.cache {
        cfg.cache = v;
    }
    if let Some(v) = args.out {
        cfg.out = v;
    }
    if let Some(v) = args.splits {
        cfg.splits = v;
    }
    if let Some(v) = args.ratio {
        cfg.ratio = v;
    }
    if let Some(v) = args.split_seed {
        cfg.split_seed = v;
    }
    if args.oracle {
        cfg.oracle = true;
    }
    if cfg.corpus.as_os_str().is_empty() || cfg.out.as_os_str().is_empty() {
        return Err(invalid("--corpus and --out are required"));
    }
    if !cfg.oracle && cfg.model.is_none() {
        return Err(invalid("--model is required unless --oracle is set"));
    }
    let corpus = open_corpus(&cfg.corpus)?;
    prepare_run_dir(&cfg.out)?;
    write_resolved_config(&cfg.out, &cfg)?;

    let splits = make_splits(corpus.len(), cfg.ratio, cfg.splits, cfg.split_seed)
        .map_err(|e| invalid_msg(format!("building splits: {e}")))?;
    let mos: Vec<f64> = (0..corpus.len()).map(|id| corpus.entry(id).mos).collect();

    let report = if cfg.oracle {
        vdq_eval::evaluate(|id| Ok(mos[id]), &mos, &splits)
            .map_err(|e| CmdError::Runtime(anyhow::anyhow!("evaluating oracle: {e}")))?
    } else {
        let run_dir = cfg.model.clone().unwrap();
        if cfg.cache.as_os_str().is_empty() {
            return Err(invalid("--cache is required for model evaluation"));
        }
        let train_cfg: TrainConfig = load_config_file(&run_dir.join("config.json"))?;
        let model_cfg = train_cfg
            .model
            .ok_or_else(|| invalid("train run config carries no model geometry"))?;
        let ckpt = run_dir.join("checkpoints/model.dvtm");
        if !ckpt.exists() {
            return Err(invalid(format!("model checkpoint {} not found", ckpt.display())));
        }
        let model = pipeline::load_model(&ckpt, model_cfg)?;
        let cache = FeatureCache::open(&cfg.cache)
            .map_err(|e| invalid_msg(format!("opening feature cache: {e}")))?;
        pipeline::evaluate_model(&model, &cache, &corpus, &splits)?
    };

    report
        .write(
            &cfg.out.join("reports/eval.json"),
            &cfg.out.join("reports/eval.csv"),
        )
        .map_err(|e| CmdError::Runtime(anyhow::anyhow!("writing report: {e}")))?;
    for s in &report.per_split {
        println!("split {}: srcc {:.4}, plcc {:.4} (n={})", s.split, s.srcc, s.plcc, s.n);
    }
    println!("mean srcc {:.4}, mean plcc {:.4}", report.srcc, report.plcc);
    Ok(())
}

// ── selftest ────────────────────────────────────────────────────────

#[derive(Args)]
struct SelftestArgs {
    /// Force a named check to fail (negative-control fixture)
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

fn cmd_selftest(args: SelftestArgs) -> CmdResult {
    let start = std::time::Instant::now();
    let report = run_selftest(args.inject_fault.as_deref());
    for r in &report.results {
        match &r.error {
            None => println!("[ok]   {}", r.name),
            Some(e) => println!("[FAIL] {}: {e}", r.name),
        }
    }
    println!("selftest finished in {:.1}s", start.elapsed().as_secs_f64());
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .results
            .iter()
            .filter(|r| r.error.is_some())
            .map(|r| r.name)
            .collect();
        Err(CmdError::Runtime(anyhow::anyhow!(
            "selftest failed: {}",
            failed.join(", ")
        )))
    }
}
