//! Reinforcement-learned class adaptive sampling.

pub mod batch;
pub mod epoch;
pub mod policy;

pub use batch::{
    assemble_batch, compose_batch, resample_fill, Batch, BatchConfig, RealMode, RealSampler,
};
pub use epoch::{winner_index, EpisodeEnvironment, EpochLog, RlCasConfig, RlCasRunner};
pub use policy::{
    reinforce_gradient, reinforce_update, reward, ActionDraw, AgentOptimizer, AgentOptimizerKind,
    AgentPolicy, BaselineTracker, EpisodeOutcome, SamplerState, ACTIONS, ACTION_COUNT,
};
