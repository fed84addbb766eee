//! Evaluation harness: SRCC/PLCC metrics, the multi-crop inference protocol,
//! and split-averaged reports.

pub mod infer;
pub mod metrics;
pub mod report;

pub use infer::infer_video;
pub use metrics::{average_ranks, plcc, srcc, srcc_closed_form};
pub use report::{evaluate, EvalReport, SplitResult};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("vqa error: {0}")]
    Vqa(#[from] vdq_vqa::VqaError),
    #[error("tensor error: {0}")]
    Tensor(#[from] vdq_tensor::TensorError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;
