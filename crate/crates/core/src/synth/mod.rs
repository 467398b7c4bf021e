//! Pixel-space class-conditional diffusion with sketch supervision.

pub mod checkpoint;
pub mod losses;
pub mod model;
pub mod sample;
pub mod schedule;
pub mod train;

pub use checkpoint::Checkpoint;
pub use losses::{
    combine_losses, ldm_loss, loss_and_gradients, sketch_loss, total_loss, DiffusionBatch,
    LossBreakdown,
};
pub use model::{DenoiserConfig, DenoiserModel, NoisePredictor};
pub use sample::{sample, sample_with, SynthPool};
pub use schedule::NoiseSchedule;
pub use train::{make_batch, train_synthesizer, SynthConfig, TrainedSynth};
