//! Synthetic degraded-video corpus.
//!
//! Clean base videos are procedural (drifting gratings plus translating
//! shapes), degradations are parametric with documented severity maps, and
//! the ground-truth quality score is a closed-form monotone function of the
//! applied degradations. Everything is deterministic from a single seed,
//! with per-video streams derived as `seed XOR id`.

pub mod degrade;
pub mod mos;
pub mod splits;
pub mod store;
pub mod synth;

pub use degrade::{apply_degradation, DegradationKind, DegradationSpec};
pub use mos::{mos_from_penalties, penalty, synth_mos};
pub use splits::make_splits;
pub use store::{read_corpus, write_corpus, CorpusEntry, CorpusManifest, CorpusReader};
pub use synth::{generate_base, generate_corpus, CorpusConfig, VideoSample};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("tensor error: {0}")]
    Tensor(#[from] vdq_tensor::TensorError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("unsupported corpus version {found}, expected {expected}")]
    Version { found: String, expected: String },
    #[error("checksum mismatch for {0}")]
    Checksum(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;
