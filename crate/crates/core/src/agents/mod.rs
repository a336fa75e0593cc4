//! Learning agents and the training loop.
//!
//! [`DqnAgent`] covers discrete action spaces (listwise and pairwise).
//! [`ActorCriticAgent`] covers all three formulations, with a Gaussian
//! policy for the pointwise scores. Both sit behind the [`Agent`] trait and
//! serialise completely, replay buffer and random state included, so a
//! checkpointed agent resumes exactly where it stopped.

mod actor_critic;
mod approximator;
mod dqn;
mod nn;
mod replay;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{CiCycle, RankedSequence};
use crate::envs::{Action, EpisodeOutcome, Mode, RankingEnv};
use crate::error::{Error, Result};

pub use actor_critic::{ActorCriticAgent, ActorCriticConfig};
pub use approximator::{sigmoid, softmax, Approximator, ApproximatorConfig, Head, HeadTarget, InputTransform};
pub use dqn::{DqnAgent, DqnConfig};
pub use nn::{Activation, Adam, Dense, Grads, Mlp};
pub use replay::{ReplayBuffer, DEFAULT_CAPACITY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// Network shape and optimiser settings shared by both agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub input_transform: InputTransform,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let base = ApproximatorConfig::new(1, Head::ScalarValue);
        Self {
            hidden_layers: base.hidden_layers,
            activation: base.activation,
            learning_rate: base.learning_rate,
            input_transform: base.input_transform,
        }
    }
}

impl NetworkConfig {
    pub fn approximator(&self, input_dim: usize, head: Head) -> ApproximatorConfig {
        ApproximatorConfig {
            hidden_layers: self.hidden_layers.clone(),
            activation: self.activation,
            learning_rate: self.learning_rate,
            input_transform: self.input_transform,
            ..ApproximatorConfig::new(input_dim, head)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.approximator(1, Head::ScalarValue).validate()
    }
}

/// Linear decay of the exploration rate over the first `fraction` of each
/// training instance's step budget, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            fraction: 0.2,
        }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64, budget: u64) -> f64 {
        let horizon = self.fraction * budget as f64;
        if horizon <= 0.0 || step as f64 >= horizon {
            return self.end;
        }
        self.start + (self.end - self.start) * step as f64 / horizon
    }

    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if unit.contains(&self.start) && unit.contains(&self.end) && unit.contains(&self.fraction) && self.end <= self.start
        {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid exploration schedule {self:?}")))
        }
    }
}

pub trait Agent: Send {
    fn input_dim(&self) -> usize;

    /// Greedy action; a pure function of the weights and `obs`.
    fn act(&self, obs: &[f64]) -> Result<Action>;

    /// With `explore`, applies the agent's exploration rule.
    fn predict(&mut self, obs: &[f64], explore: bool) -> Result<Action>;

    /// Marks the start of a training instance with the given step budget.
    fn begin_training(&mut self, budget: u64);

    /// Records one environment step and learns from it when due.
    fn observe(&mut self, transition: Transition) -> Result<()>;

    /// Flushes any partial update at the end of an episode.
    fn end_episode(&mut self) -> Result<()>;

    /// Environment steps observed so far.
    fn steps(&self) -> u64;

    fn set_learning_rate(&mut self, lr: f64);
}

/// Index of the largest value, the first one on ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// One of the trainable agents; this is what checkpoints hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningAgent {
    Dqn(DqnAgent),
    ActorCritic(ActorCriticAgent),
}

impl LearningAgent {
    fn inner(&self) -> &dyn Agent {
        match self {
            LearningAgent::Dqn(a) => a,
            LearningAgent::ActorCritic(a) => a,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Agent {
        match self {
            LearningAgent::Dqn(a) => a,
            LearningAgent::ActorCritic(a) => a,
        }
    }
}

impl Agent for LearningAgent {
    fn input_dim(&self) -> usize {
        self.inner().input_dim()
    }

    fn act(&self, obs: &[f64]) -> Result<Action> {
        self.inner().act(obs)
    }

    fn predict(&mut self, obs: &[f64], explore: bool) -> Result<Action> {
        self.inner_mut().predict(obs, explore)
    }

    fn begin_training(&mut self, budget: u64) {
        self.inner_mut().begin_training(budget)
    }

    fn observe(&mut self, transition: Transition) -> Result<()> {
        self.inner_mut().observe(transition)
    }

    fn end_episode(&mut self) -> Result<()> {
        self.inner_mut().end_episode()
    }

    fn steps(&self) -> u64 {
        self.inner().steps()
    }

    fn set_learning_rate(&mut self, lr: f64) {
        self.inner_mut().set_learning_rate(lr)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingEpisode {
    pub steps: usize,
    pub episode_reward: f64,
    /// False when the step limit cut the episode short.
    pub completed: bool,
    pub ranking: Option<RankedSequence>,
}

fn check_dims(agent: &dyn Agent, env: &dyn RankingEnv) -> Result<()> {
    if agent.input_dim() != env.obs_dim() {
        return Err(Error::DimensionMismatch {
            expected: env.obs_dim(),
            actual: agent.input_dim(),
        });
    }
    Ok(())
}

/// Trains on one replayed episode of `cycle`, stopping early after
/// `max_steps` steps.
pub fn run_training_episode(
    agent: &mut dyn Agent,
    env: &mut dyn RankingEnv,
    cycle: &CiCycle,
    seed: u64,
    max_steps: Option<u64>,
) -> Result<TrainingEpisode> {
    check_dims(agent, env)?;
    let mut obs = env.reset(cycle, Mode::Train, seed)?;
    let mut steps = 0usize;
    let mut episode_reward = 0.0;
    while !env.is_done() && max_steps.is_none_or(|m| (steps as u64) < m) {
        let action = agent.predict(&obs, true)?;
        let step = env.step(action)?;
        steps += 1;
        episode_reward += step.reward;
        agent.observe(Transition {
            obs: std::mem::replace(&mut obs, step.obs.clone()),
            action,
            reward: step.reward,
            next_obs: step.obs,
            done: step.done,
        })?;
    }
    agent.end_episode()?;
    Ok(TrainingEpisode {
        steps,
        episode_reward,
        completed: env.is_done(),
        ranking: env.ranking(),
    })
}

/// Ranks `cycle` with the greedy policy in predict mode. The agent is only
/// borrowed immutably, so nothing it sees can update it.
pub fn rank_cycle(agent: &dyn Agent, env: &mut dyn RankingEnv, cycle: &CiCycle, seed: u64) -> Result<EpisodeOutcome> {
    check_dims(agent, env)?;
    let mut obs = env.reset(cycle, Mode::Predict, seed)?;
    let mut steps = 0;
    let mut episode_reward = 0.0;
    while !env.is_done() {
        let step = env.step(agent.act(&obs)?)?;
        steps += 1;
        episode_reward += step.reward;
        obs = step.obs;
    }
    Ok(EpisodeOutcome {
        ranking: env.ranking().ok_or(Error::NotReset)?,
        steps,
        episode_reward,
    })
}

pub const CHECKPOINT_FORMAT: &str = "ciprio-agent";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub format: String,
    pub version: u32,
    pub agent: LearningAgent,
}

#[derive(Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
}

pub fn save_checkpoint(agent: &LearningAgent, path: &Path) -> Result<()> {
    let ck = AgentCheckpoint {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        agent: agent.clone(),
    };
    fs::write(path, serde_json::to_vec(&ck)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<LearningAgent> {
    let bytes = fs::read(path)?;
    let corrupt = |e: serde_json::Error| Error::Checkpoint(format!("{}: {e}", path.display()));
    let header: CheckpointHeader = serde_json::from_slice(&bytes).map_err(corrupt)?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!(
            "{}: not an agent checkpoint (format `{}`)",
            path.display(),
            header.format
        )));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
            path.display(),
            header.version
        )));
    }
    let ck: AgentCheckpoint = serde_json::from_slice(&bytes).map_err(corrupt)?;
    Ok(ck.agent)
}

/// Loads a checkpoint and checks that it accepts `input_dim` features.
pub fn load_checkpoint_for(path: &Path, input_dim: usize) -> Result<LearningAgent> {
    let agent = load_checkpoint(path)?;
    if agent.input_dim() != input_dim {
        return Err(Error::DimensionMismatch {
            expected: input_dim,
            actual: agent.input_dim(),
        });
    }
    Ok(agent)
}
