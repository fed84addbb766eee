//! Selective state-space sequence modeling.
//!
//! The math follows the standard selective-SSM construction: a continuous
//! diagonal system (A, B, C, D) with input-dependent timescales is
//! discretized per step by zero-order hold, then run as a linear recurrence
//! in both directions over the token sequence. [`scan`] carries a sequential
//! reference implementation and an associative-operator parallel form that
//! must agree with it.

pub mod mamba;
pub mod scan;
pub mod temporal;
pub mod zoh;

pub use mamba::{BiMambaBlock, MambaConfig, SelectiveProj};
pub use scan::{scan_parallel, scan_sequential};
pub use temporal::{build_tokens, patch_embed_3d, TemporalConfig, TemporalMamba};
pub use zoh::{zoh_discretize, DiscreteSsm};
