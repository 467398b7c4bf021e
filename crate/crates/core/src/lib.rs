//! Long-tailed classification with class-conditional diffusion synthesis and
//! an RL-driven class adaptive sampler.
//!
//! The crate is organised bottom-up:
//!
//! * [`numeric`]: matrices, seeded streams, a reverse-mode tape, Jacobi
//!   eigendecomposition and Adam.
//! * [`data`]: the long-tailed "shapes" benchmark, Sobel sketches and the
//!   `LTG1` dataset file.
//! * [`synth`]: the pixel-space conditional denoiser with its sketch head,
//!   training objective, ancestral sampler and `LTCK` checkpoints.
//! * [`rlcas`]: per-class softmax agents, the moving baseline and the
//!   episode loop that picks synthetic counts per mini-batch.
//! * [`classify`]: the downstream classifier, Balanced Softmax, sampling
//!   strategies and the metric suite (including the Fréchet distance).

pub mod classify;
pub mod data;
pub mod error;
pub mod numeric;
pub mod rlcas;
pub mod synth;

pub use error::{Error, Result};
