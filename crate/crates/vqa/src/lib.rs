//! Video-quality prediction head over frozen diffusion features.
//!
//! Two preprocessing branches (resized and cropped) run through the frozen
//! extractor; per frame, the multi-scale and latent features are fused with
//! channel/spatial attention, refined with previous-frame residuals, and
//! aggregated across frames. A parallel Mamba token mixer per branch adds
//! temporal coherence features from the raw pixels. The resized branch
//! produces per-frame weights, the cropped branch per-frame scores, and the
//! video score is their weighted sum.

pub mod cache;
pub mod config;
pub mod frame_fusion;
pub mod fusion;
pub mod heads;
pub mod model;
pub mod preprocess;
pub mod temporal_diff;
pub mod train;

pub use cache::{FeatureCache, Unit};
pub use config::VqaConfig;
pub use frame_fusion::FrameFusion;
pub use fusion::FeatureFusion;
pub use heads::{vqa_loss, QualityPrediction, ScoreHeads};
pub use model::{BranchInput, VqaModel};
pub use preprocess::{bilinear_resize_video, crop_positions, crop_video, preprocess};
pub use temporal_diff::TemporalDiff;
pub use train::{train_epoch, EpochStats, TrainItem};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VqaError {
    #[error("tensor error: {0}")]
    Tensor(#[from] vdq_tensor::TensorError),
    #[error("corpus error: {0}")]
    Corpus(#[from] vdq_corpus::CorpusError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite loss at {0}")]
    NonFiniteLoss(String),
}

pub type Result<T> = std::result::Result<T, VqaError>;
