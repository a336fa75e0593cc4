use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::approximator::{Approximator, ApproximatorConfig, Head, HeadTarget};
use super::nn::Mlp;
use super::replay::{ReplayBuffer, DEFAULT_CAPACITY};
use super::{argmax, Agent, EpsilonSchedule, NetworkConfig, Transition};
use crate::envs::{Action, ActionSpace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub network: NetworkConfig,
    pub gamma: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Environment steps between target network synchronisations.
    pub target_sync: u64,
    /// Environment steps between gradient updates.
    pub train_freq: u64,
    pub exploration: EpsilonSchedule,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            gamma: 0.99,
            buffer_capacity: DEFAULT_CAPACITY,
            batch_size: 32,
            target_sync: 500,
            train_freq: 4,
            exploration: EpsilonSchedule::default(),
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.exploration.validate()?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma {} must lie in [0, 1]", self.gamma)));
        }
        if self.batch_size == 0 || self.target_sync == 0 || self.train_freq == 0 {
            return Err(Error::InvalidConfig(
                "batch_size, target_sync and train_freq must be positive".into(),
            ));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(Error::InvalidConfig("buffer_capacity must hold at least one batch".into()));
        }
        Ok(())
    }
}

/// Deep Q-network with experience replay and a periodically synchronised
/// target network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnAgent {
    pub config: DqnConfig,
    n_actions: usize,
    online: Approximator,
    target: Mlp,
    replay: ReplayBuffer,
    rng: ChaCha8Rng,
    steps: u64,
    updates: u64,
    /// Step counter and step budget of the current training instance.
    instance_start: u64,
    instance_budget: u64,
}

impl DqnAgent {
    pub fn new(input_dim: usize, space: ActionSpace, config: DqnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let n_actions = space.n_discrete().ok_or_else(|| {
            Error::Unsupported("DQN needs a discrete action space".into())
        })?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let online = Approximator::new(config.network.approximator(input_dim, Head::QValues(n_actions)), &mut rng)?;
        Ok(Self {
            n_actions,
            target: online.net.clone(),
            replay: ReplayBuffer::new(config.buffer_capacity)?,
            online,
            rng,
            steps: 0,
            updates: 0,
            instance_start: 0,
            instance_budget: 0,
            config,
        })
    }

    pub fn approximator(&self) -> &Approximator {
        &self.online
    }

    pub fn approximator_config(&self) -> &ApproximatorConfig {
        &self.online.config
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn epsilon(&self) -> f64 {
        self.config
            .exploration
            .value(self.steps - self.instance_start, self.instance_budget)
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.online.forward_one(obs)?.to_vec())
    }

    /// Regression targets `r + gamma * max_a' Q_target(s', a')`, with no
    /// bootstrap on terminal transitions.
    pub fn td_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        td_targets(&self.online, &self.target, self.config.gamma, batch)
    }

    /// One gradient step on the mean squared TD error of `batch`.
    pub fn dqn_update(&mut self, batch: &[&Transition]) -> Result<f64> {
        let loss = update(&mut self.online, &self.target, self.config.gamma, self.n_actions, batch)?;
        self.updates += 1;
        Ok(loss)
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.net.clone();
    }
}

impl Agent for DqnAgent {
    fn input_dim(&self) -> usize {
        self.online.config.input_dim
    }

    fn act(&self, obs: &[f64]) -> Result<Action> {
        Ok(Action::Discrete(argmax(&self.q_values(obs)?)))
    }

    fn predict(&mut self, obs: &[f64], explore: bool) -> Result<Action> {
        let greedy = self.act(obs)?;
        if explore && self.rng.random::<f64>() < self.epsilon() {
            return Ok(Action::Discrete(self.rng.random_range(0..self.n_actions)));
        }
        Ok(greedy)
    }

    fn begin_training(&mut self, budget: u64) {
        self.instance_start = self.steps;
        self.instance_budget = budget;
    }

    fn observe(&mut self, t: Transition) -> Result<()> {
        if t.obs.len() != self.input_dim() || t.next_obs.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: t.obs.len(),
            });
        }
        self.replay.push(t);
        self.steps += 1;
        if self.steps.is_multiple_of(self.config.train_freq) && self.replay.len() >= self.config.batch_size {
            let idx = self.replay.sample_indices(self.config.batch_size, &mut self.rng)?;
            let batch: Vec<&Transition> = idx.into_iter().map(|i| self.replay.get(i)).collect();
            update(&mut self.online, &self.target, self.config.gamma, self.n_actions, &batch)?;
            self.updates += 1;
        }
        if self.steps.is_multiple_of(self.config.target_sync) {
            self.sync_target();
        }
        Ok(())
    }

    fn end_episode(&mut self) -> Result<()> {
        Ok(())
    }

    fn steps(&self) -> u64 {
        self.steps
    }

    fn set_learning_rate(&mut self, lr: f64) {
        self.online.set_learning_rate(lr);
    }
}

fn td_targets(online: &Approximator, target: &Mlp, gamma: f64, batch: &[&Transition]) -> Result<Vec<f64>> {
    let next_rows: Vec<&[f64]> = batch.iter().map(|t| t.next_obs.as_slice()).collect();
    let next = online.batch(&next_rows)?;
    let q_next = target.forward(next.view());
    Ok(batch
        .iter()
        .zip(q_next.rows())
        .map(|(t, q)| {
            if t.done || gamma == 0.0 {
                t.reward
            } else {
                t.reward + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect())
}

fn update(
    online: &mut Approximator,
    target: &Mlp,
    gamma: f64,
    n_actions: usize,
    batch: &[&Transition],
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    let targets = td_targets(online, target, gamma, batch)?;
    let actions = batch
        .iter()
        .map(|t| match t.action {
            Action::Discrete(a) if a < n_actions => Ok(a),
            other => Err(Error::Unsupported(format!("DQN cannot learn from action {other:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<&[f64]> = batch.iter().map(|t| t.obs.as_slice()).collect();
    let x: Array2<f64> = online.batch(&rows)?;
    Ok(online.train(x.view(), &HeadTarget::Q { actions, targets }))
}
