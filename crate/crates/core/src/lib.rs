//! Conditional score-based diffusion for multichannel ERP epochs.
//!
//! The crate covers the full experimental loop on CPU:
//!
//! - [`signal`] — deterministic preprocessing from continuous recordings to
//!   retained epochs (Butterworth bandpass, FFT resampling, epoching,
//!   peak-to-peak rejection).
//! - [`data`] — the on-disk dataset container, seeded synthetic ERP
//!   generation, and stratified train/validation splitting.
//! - [`tensor`] — a minimal dense-tensor kernel with reverse-mode autodiff
//!   over exactly the ops the networks need, plus Adam, EMA shadow weights,
//!   and the binary checkpoint format.
//! - [`model`] — the conditional noise-prediction network: a dilated-conv
//!   residual stack with continuous-time and condition embeddings.
//! - [`diffusion`] — the VP SDE schedule, guidance-dropout training loop,
//!   and the predictor-corrector sampler.
//! - [`metrics`] — the evaluation suite (ABA, SWD, FID, PAD, PLD, SD-MD)
//!   with within-session and between-session baselines.
//!
//! Everything is seeded and single-run deterministic; per-condition work is
//! parallelised over independent RNG streams so thread count never changes
//! results.

pub mod data;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod model;
pub mod seeding;
pub mod signal;
pub mod tensor;

pub use error::CoreError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;
