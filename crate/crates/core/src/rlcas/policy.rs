//! Per-class softmax agents, sampler state, reward and the REINFORCE update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::tape::softmax;
use crate::numeric::{Adam, AdamConfig, Matrix, RngStream};

/// Step sizes an agent may choose, in logit order.
pub const ACTIONS: [i64; 3] = [-2, 0, 2];
pub const ACTION_COUNT: usize = ACTIONS.len();

/// Synthetic samples per class in a mini-batch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerState {
    pub counts: Vec<usize>,
    pub max_count: usize,
}

impl SamplerState {
    pub fn uniform(num_classes: usize, init: usize, max_count: usize) -> Result<Self> {
        if max_count % 2 != 0 {
            return Err(Error::Config(format!(
                "s_max {max_count} must be even so every state stays reachable"
            )));
        }
        if init > max_count {
            return Err(Error::Config(format!(
                "initial state {init} exceeds s_max {max_count}"
            )));
        }
        Ok(Self {
            counts: vec![init; num_classes],
            max_count,
        })
    }

    /// `s_i ← clamp(s_i + a_i, 0, s_max)`; `self` is left untouched.
    pub fn apply_actions(&self, actions: &[usize]) -> Result<SamplerState> {
        if actions.len() != self.counts.len() {
            return Err(Error::Shape(format!(
                "{} actions for {} classes",
                actions.len(),
                self.counts.len()
            )));
        }
        let counts = self
            .counts
            .iter()
            .zip(actions)
            .map(|(&s, &a)| {
                let step = *ACTIONS
                    .get(a)
                    .ok_or_else(|| Error::Contract(format!("action index {a} out of range")))?;
                Ok((s as i64 + step).clamp(0, self.max_count as i64) as usize)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SamplerState {
            counts,
            max_count: self.max_count,
        })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// `R = (ε + 0.04)³` for a validation metric `ε ∈ [0, 1]`.
pub fn reward(metric: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&metric) {
        return Err(Error::Contract(format!("metric {metric} outside [0, 1]")));
    }
    Ok((metric + 0.04).powi(3))
}

/// One agent per class, each a 3-logit softmax over [`ACTIONS`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentPolicy {
    pub logits: Vec<[f64; ACTION_COUNT]>,
}

/// Actions sampled for one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionDraw {
    /// Index into [`ACTIONS`] per class.
    pub actions: Vec<usize>,
    /// `log p(a_i)` per class.
    pub log_probs: Vec<f64>,
}

impl ActionDraw {
    /// `log g(a) = Σ_i log p(a_i)`.
    pub fn joint_log_prob(&self) -> f64 {
        self.log_probs.iter().sum()
    }

    pub fn steps(&self) -> Vec<i64> {
        self.actions.iter().map(|&a| ACTIONS[a]).collect()
    }
}

impl AgentPolicy {
    pub fn uniform(num_classes: usize) -> Self {
        Self {
            logits: vec![[0.0; ACTION_COUNT]; num_classes],
        }
    }

    pub fn num_agents(&self) -> usize {
        self.logits.len()
    }

    pub fn probabilities(&self, class: usize) -> [f64; ACTION_COUNT] {
        let p = softmax(&self.logits[class]);
        [p[0], p[1], p[2]]
    }

    pub fn all_probabilities(&self) -> Vec<[f64; ACTION_COUNT]> {
        (0..self.num_agents())
            .map(|c| self.probabilities(c))
            .collect()
    }

    /// Samples one action per class.
    pub fn propose_actions(&self, rng: &mut RngStream) -> ActionDraw {
        let mut actions = Vec::with_capacity(self.num_agents());
        let mut log_probs = Vec::with_capacity(self.num_agents());
        for c in 0..self.num_agents() {
            let p = self.probabilities(c);
            let a = rng.categorical(&p);
            actions.push(a);
            log_probs.push(p[a].ln());
        }
        ActionDraw { actions, log_probs }
    }
}

/// Episode outcome consumed by the policy update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub draw: ActionDraw,
    pub reward: f64,
}

/// `(1/K) Σ_j (R_j − B) ∇_θ Σ_i log p(a_i^j)` per class, using
/// `∇ log softmax(θ)[a] = onehot(a) − softmax(θ)`.
pub fn reinforce_gradient(
    policy: &AgentPolicy,
    episodes: &[EpisodeOutcome],
    baseline: f64,
) -> Result<Vec<[f64; ACTION_COUNT]>> {
    if episodes.is_empty() {
        return Err(Error::Contract(
            "REINFORCE needs at least one episode".into(),
        ));
    }
    let k = episodes.len() as f64;
    let mut grad = vec![[0.0; ACTION_COUNT]; policy.num_agents()];
    let probs = policy.all_probabilities();
    for ep in episodes {
        if ep.draw.actions.len() != policy.num_agents() {
            return Err(Error::Shape(
                "episode actions disagree with agent count".into(),
            ));
        }
        let adv = ep.reward - baseline;
        if adv == 0.0 {
            continue;
        }
        for (c, &a) in ep.draw.actions.iter().enumerate() {
            for (j, g) in grad[c].iter_mut().enumerate() {
                let onehot = if j == a { 1.0 } else { 0.0 };
                *g += adv * (onehot - probs[c][j]) / k;
            }
        }
    }
    Ok(grad)
}

/// Plain gradient-ascent form: `θ ← θ + η · gradient`.
pub fn reinforce_update(
    policy: &AgentPolicy,
    episodes: &[EpisodeOutcome],
    baseline: f64,
    lr: f64,
) -> Result<AgentPolicy> {
    let grad = reinforce_gradient(policy, episodes, baseline)?;
    let mut next = policy.clone();
    for (theta, g) in next.logits.iter_mut().zip(&grad) {
        for (t, gi) in theta.iter_mut().zip(g) {
            if *gi != 0.0 {
                *t += lr * gi;
            }
        }
    }
    Ok(next)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentOptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// Applies REINFORCE gradients to the agent logits, either directly or
/// through Adam.
#[derive(Clone, Debug)]
pub enum AgentOptimizer {
    Sgd { lr: f64 },
    Adam(Adam),
}

impl AgentOptimizer {
    pub fn new(kind: AgentOptimizerKind, lr: f64, num_agents: usize) -> Self {
        match kind {
            AgentOptimizerKind::Sgd => AgentOptimizer::Sgd { lr },
            AgentOptimizerKind::Adam => AgentOptimizer::Adam(Adam::new(
                AdamConfig::adam(lr),
                &[Matrix::zeros(num_agents, ACTION_COUNT)],
            )),
        }
    }

    /// Ascends `gradient`. All-zero gradients leave the logits bit-identical.
    pub fn apply(&mut self, policy: &mut AgentPolicy, gradient: &[[f64; ACTION_COUNT]]) {
        if gradient.iter().flatten().all(|&g| g == 0.0) {
            return;
        }
        match self {
            AgentOptimizer::Sgd { lr } => {
                for (theta, g) in policy.logits.iter_mut().zip(gradient) {
                    for (t, gi) in theta.iter_mut().zip(g) {
                        *t += *lr * gi;
                    }
                }
            }
            AgentOptimizer::Adam(adam) => {
                let n = policy.num_agents();
                let mut params = vec![Matrix::from_fn(n, ACTION_COUNT, |r, c| policy.logits[r][c])];
                // Adam descends, so feed the negated ascent direction.
                let neg = Matrix::from_fn(n, ACTION_COUNT, |r, c| -gradient[r][c]);
                adam.step(&mut params, &[neg]);
                for (r, theta) in policy.logits.iter_mut().enumerate() {
                    for (c, t) in theta.iter_mut().enumerate() {
                        *t = params[0][(r, c)];
                    }
                }
            }
        }
    }
}

/// Moving baseline `B^t = (1 − γ) B^{t−1} + γ · mean(R)`, with
/// `B^1 = γ · mean(R)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineTracker {
    pub value: f64,
    pub gamma: f64,
    /// Number of updates applied so far.
    pub epoch: usize,
}

impl BaselineTracker {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Config(format!("gamma {gamma} must lie in (0, 1)")));
        }
        Ok(Self {
            value: 0.0,
            gamma,
            epoch: 0,
        })
    }

    /// The baseline before any update, if one exists.
    pub fn previous(&self) -> Option<f64> {
        (self.epoch > 0).then_some(self.value)
    }

    pub fn update(&mut self, rewards: &[f64]) -> Result<f64> {
        if rewards.is_empty() {
            return Err(Error::Contract(
                "baseline update needs at least one reward".into(),
            ));
        }
        let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
        self.value = if self.epoch == 0 {
            self.gamma * mean
        } else {
            (1.0 - self.gamma) * self.value + self.gamma * mean
        };
        self.epoch += 1;
        Ok(self.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_values() {
        assert!((reward(0.0).unwrap() - 6.4e-5).abs() < 1e-18);
        assert!((reward(0.5).unwrap() - 0.157464).abs() < 1e-15);
        assert!((reward(1.0).unwrap() - 1.124864).abs() < 1e-15);
        assert!(matches!(reward(1.01), Err(Error::Contract(_))));
        assert!(matches!(reward(-0.1), Err(Error::Contract(_))));
    }

    #[test]
    fn apply_actions_clamps() {
        let s = SamplerState {
            counts: vec![2, 2, 2],
            max_count: 8,
        };
        assert_eq!(s.apply_actions(&[2, 1, 0]).unwrap().counts, vec![4, 2, 0]);
        assert_eq!(s.counts, vec![2, 2, 2]);
        let low = SamplerState {
            counts: vec![0],
            max_count: 8,
        };
        assert_eq!(low.apply_actions(&[0]).unwrap().counts, vec![0]);
        let high = SamplerState {
            counts: vec![8],
            max_count: 8,
        };
        assert_eq!(high.apply_actions(&[2]).unwrap().counts, vec![8]);
    }

    #[test]
    fn odd_cap_rejected() {
        assert!(SamplerState::uniform(3, 2, 7).is_err());
    }

    #[test]
    fn baseline_first_and_second_epoch() {
        let mut b = BaselineTracker::new(0.99).unwrap();
        assert!((b.update(&[0.6, 0.8, 0.7]).unwrap() - 0.693).abs() < 1e-12);
        let mut b2 = BaselineTracker {
            value: 0.5,
            gamma: 0.99,
            epoch: 1,
        };
        assert!((b2.update(&[0.7]).unwrap() - 0.698).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_update() {
        let p = AgentPolicy::uniform(1);
        let ep = EpisodeOutcome {
            draw: ActionDraw {
                actions: vec![2],
                log_probs: vec![(1.0f64 / 3.0).ln()],
            },
            reward: 0.1,
        };
        let next = reinforce_update(&p, &[ep], 0.0, 1e-3).unwrap();
        let expect = [-1e-4 / 3.0, -1e-4 / 3.0, 2e-4 / 3.0];
        for (a, b) in next.logits[0].iter().zip(expect) {
            assert!((a - b).abs() < 1e-18);
        }
    }

    #[test]
    fn saturated_softmax() {
        let p = AgentPolicy {
            logits: vec![[10.0, 0.0, 0.0]],
        };
        assert!(p.probabilities(0)[0] > 0.9999);
    }
}
