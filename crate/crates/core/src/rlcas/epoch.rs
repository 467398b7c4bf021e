//! One RL-CAS epoch: K episodes, winner selection, agent and baseline updates.

use serde::{Deserialize, Serialize};

use super::policy::{
    reinforce_gradient, reward, AgentOptimizer, AgentOptimizerKind, AgentPolicy, BaselineTracker,
    EpisodeOutcome, SamplerState, ACTION_COUNT,
};
use crate::error::{Error, Result};
use crate::numeric::RngStream;

/// Trains a copy of a checkpoint under a batch composition and scores it.
pub trait EpisodeEnvironment {
    type Checkpoint: Clone;

    /// Returns the trained checkpoint and a validation metric in `[0, 1]`.
    fn run_episode(
        &self,
        start: &Self::Checkpoint,
        state: &SamplerState,
        rng: &mut RngStream,
    ) -> Result<(Self::Checkpoint, f64)>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlCasConfig {
    pub episodes: usize,
    pub gamma: f64,
    pub agent_lr: f64,
    pub agent_optimizer: AgentOptimizerKind,
    pub max_count: usize,
    pub init_state: usize,
    pub agent_epochs: usize,
}

impl Default for RlCasConfig {
    fn default() -> Self {
        Self {
            episodes: 3,
            gamma: 0.99,
            agent_lr: 1e-3,
            agent_optimizer: AgentOptimizerKind::Adam,
            max_count: 8,
            init_state: 2,
            agent_epochs: 30,
        }
    }
}

impl RlCasConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("rl-cas episodes K must be ≥ 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "gamma {} must lie in (0, 1)",
                self.gamma
            )));
        }
        if !(self.agent_lr > 0.0 && self.agent_lr.is_finite()) {
            return Err(Error::Config(format!(
                "agent lr {} must be > 0",
                self.agent_lr
            )));
        }
        if self.max_count == 0 || self.max_count % 2 != 0 {
            return Err(Error::Config(format!(
                "s_max {} must be even and > 0",
                self.max_count
            )));
        }
        if self.init_state > self.max_count || self.init_state % 2 != 0 {
            return Err(Error::Config(format!(
                "initial state {} must be even and ≤ s_max",
                self.init_state
            )));
        }
        Ok(())
    }
}

/// One structured record per epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub base_state: Vec<usize>,
    pub probabilities: Vec<[f64; ACTION_COUNT]>,
    pub actions: Vec<Vec<i64>>,
    pub states: Vec<Vec<usize>>,
    pub metrics: Vec<f64>,
    pub rewards: Vec<f64>,
    pub diverged: Vec<bool>,
    /// Baseline used inside the advantage.
    pub advantage_baseline: f64,
    /// Baseline after this epoch's update.
    pub baseline: f64,
    pub winner: usize,
}

/// Agents, optimizer, baseline and carried state across epochs.
#[derive(Clone, Debug)]
pub struct RlCasRunner {
    pub config: RlCasConfig,
    pub policy: AgentPolicy,
    pub optimizer: AgentOptimizer,
    pub baseline: BaselineTracker,
    pub state: SamplerState,
    pub epoch: usize,
}

impl RlCasRunner {
    pub fn new(num_classes: usize, config: RlCasConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            policy: AgentPolicy::uniform(num_classes),
            optimizer: AgentOptimizer::new(config.agent_optimizer, config.agent_lr, num_classes),
            baseline: BaselineTracker::new(config.gamma)?,
            state: SamplerState::uniform(num_classes, config.init_state, config.max_count)?,
            epoch: 0,
            config,
        })
    }

    /// Runs K episodes from `start` and returns the winning checkpoint.
    ///
    /// Episodes only read shared inputs and draw from their own stream, so the
    /// outcome does not depend on the order they run in. A diverged episode
    /// scores zero and keeps `start`.
    pub fn run_epoch<E: EpisodeEnvironment>(
        &mut self,
        env: &E,
        start: &E::Checkpoint,
        rng: &mut RngStream,
    ) -> Result<(E::Checkpoint, EpochLog)> {
        let k = self.config.episodes;
        let probabilities = self.policy.all_probabilities();
        let mut action_rng = rng.derive(0);
        let draws: Vec<_> = (0..k)
            .map(|_| self.policy.propose_actions(&mut action_rng))
            .collect();
        let states = draws
            .iter()
            .map(|d| self.state.apply_actions(&d.actions))
            .collect::<Result<Vec<_>>>()?;

        let mut checkpoints = Vec::with_capacity(k);
        let mut metrics = Vec::with_capacity(k);
        let mut diverged = Vec::with_capacity(k);
        for (j, state) in states.iter().enumerate() {
            let mut ep_rng = rng.derive(1 + j as u64);
            match env.run_episode(start, state, &mut ep_rng) {
                Ok((ckpt, eps)) => {
                    if !(0.0..=1.0).contains(&eps) {
                        return Err(Error::Contract(format!(
                            "episode metric {eps} outside [0, 1]"
                        )));
                    }
                    checkpoints.push(ckpt);
                    metrics.push(eps);
                    diverged.push(false);
                }
                Err(Error::Divergence { .. }) | Err(Error::Numeric(_)) => {
                    checkpoints.push(start.clone());
                    metrics.push(0.0);
                    diverged.push(true);
                }
                Err(e) => return Err(e),
            }
        }

        let rewards = metrics
            .iter()
            .map(|&m| reward(m))
            .collect::<Result<Vec<_>>>()?;
        let previous = self.baseline.previous();
        let baseline = self.baseline.update(&rewards)?;
        let advantage_baseline = previous.unwrap_or(baseline);
        let outcomes: Vec<EpisodeOutcome> = draws
            .iter()
            .zip(&rewards)
            .map(|(d, &r)| EpisodeOutcome {
                draw: d.clone(),
                reward: r,
            })
            .collect();
        let gradient = reinforce_gradient(&self.policy, &outcomes, advantage_baseline)?;
        self.optimizer.apply(&mut self.policy, &gradient);

        let winner = winner_index(&metrics);
        let log = EpochLog {
            epoch: self.epoch + 1,
            base_state: self.state.counts.clone(),
            probabilities,
            actions: draws.iter().map(|d| d.steps()).collect(),
            states: states.iter().map(|s| s.counts.clone()).collect(),
            metrics,
            rewards,
            diverged,
            advantage_baseline,
            baseline,
            winner,
        };
        self.state = states[winner].clone();
        self.epoch += 1;
        let best = checkpoints.swap_remove(winner);
        Ok((best, log))
    }
}

/// Arg-max with ties resolved to the lowest index.
pub fn winner_index(metrics: &[f64]) -> usize {
    let mut best = 0;
    for (j, &m) in metrics.iter().enumerate() {
        if m > metrics[best] {
            best = j;
        }
    }
    best
}
