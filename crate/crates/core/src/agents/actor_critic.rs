use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::approximator::{sigmoid, softmax, Approximator, Head, HeadTarget};
use super::{argmax, Agent, NetworkConfig, Transition};
use crate::envs::{Action, ActionSpace, MIN_SCORE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActorCriticConfig {
    pub actor: NetworkConfig,
    pub critic: NetworkConfig,
    pub gamma: f64,
    /// Transitions per update segment.
    pub n_steps: usize,
    pub entropy_coef: f64,
    /// Initial log standard deviation of the Gaussian policy.
    pub init_log_std: f64,
}

impl Default for ActorCriticConfig {
    fn default() -> Self {
        Self {
            actor: NetworkConfig::default(),
            critic: NetworkConfig::default(),
            gamma: 0.99,
            n_steps: 5,
            entropy_coef: 0.01,
            init_log_std: (0.2f64).ln(),
        }
    }
}

impl ActorCriticConfig {
    pub fn validate(&self) -> Result<()> {
        self.actor.validate()?;
        self.critic.validate()?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma {} must lie in [0, 1]", self.gamma)));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidConfig("n_steps must be positive".into()));
        }
        if !(self.entropy_coef >= 0.0 && self.init_log_std.is_finite()) {
            return Err(Error::InvalidConfig("entropy_coef must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Synchronous n-step advantage actor-critic with separate policy and value
/// networks. Discrete spaces get a categorical policy, the unit interval a
/// Gaussian whose mean is squashed through a sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCriticAgent {
    pub config: ActorCriticConfig,
    space: ActionSpace,
    actor: Approximator,
    critic: Approximator,
    rng: ChaCha8Rng,
    steps: u64,
    updates: u64,
    segment: Vec<Transition>,
}

impl ActorCriticAgent {
    pub fn new(input_dim: usize, space: ActionSpace, config: ActorCriticConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let head = match space.n_discrete() {
            Some(n) => Head::Categorical(n),
            None => Head::GaussianScalar,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut actor_cfg = config.actor.approximator(input_dim, head);
        actor_cfg.init_log_std = config.init_log_std;
        let actor = Approximator::new(actor_cfg, &mut rng)?;
        let critic = Approximator::new(config.critic.approximator(input_dim, Head::ScalarValue), &mut rng)?;
        Ok(Self {
            config,
            space,
            actor,
            critic,
            rng,
            steps: 0,
            updates: 0,
            segment: Vec::new(),
        })
    }

    pub fn actor(&self) -> &Approximator {
        &self.actor
    }

    pub fn critic(&self) -> &Approximator {
        &self.critic
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Action probabilities of a categorical policy.
    pub fn probabilities(&self, obs: &[f64]) -> Result<Vec<f64>> {
        match self.actor.config.head {
            Head::Categorical(_) => Ok(softmax(&self.actor.forward_one(obs)?.to_vec())),
            _ => Err(Error::Unsupported("probabilities of a continuous policy".into())),
        }
    }

    /// Mean of a Gaussian policy, inside `(0, 1)`.
    pub fn mean(&self, obs: &[f64]) -> Result<f64> {
        match self.actor.config.head {
            Head::GaussianScalar => Ok(sigmoid(self.actor.forward_one(obs)?[0])),
            _ => Err(Error::Unsupported("mean of a categorical policy".into())),
        }
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.critic.forward_one(obs)?[0])
    }

    fn policy_target(&self, actions: &[Action], advantages: Vec<f64>) -> Result<HeadTarget> {
        let entropy_coef = self.config.entropy_coef;
        match self.actor.config.head {
            Head::Categorical(n) => {
                let actions = actions
                    .iter()
                    .map(|a| match *a {
                        Action::Discrete(i) if i < n => Ok(i),
                        other => Err(Error::Unsupported(format!("categorical policy cannot learn from {other:?}"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(HeadTarget::Categorical {
                    actions,
                    advantages,
                    entropy_coef,
                })
            }
            Head::GaussianScalar => {
                let actions = actions
                    .iter()
                    .map(|a| match *a {
                        Action::Continuous(x) => Ok(x),
                        other => Err(Error::Unsupported(format!("Gaussian policy cannot learn from {other:?}"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(HeadTarget::Gaussian {
                    actions,
                    advantages,
                    entropy_coef,
                })
            }
            head => Err(Error::Unsupported(format!("{head:?} is not a policy head"))),
        }
    }

    /// One policy-gradient step with given advantages; returns the loss.
    pub fn policy_update(&mut self, obs: &[&[f64]], actions: &[Action], advantages: Vec<f64>) -> Result<f64> {
        let target = self.policy_target(actions, advantages)?;
        let x = self.actor.batch(obs)?;
        Ok(self.actor.train(x.view(), &target))
    }

    /// Updates both networks on a trajectory segment, bootstrapping from
    /// the critic when the segment does not end the episode.
    pub fn actor_critic_update(&mut self, segment: &[Transition]) -> Result<(f64, f64)> {
        let last = segment.last().ok_or(Error::EmptyInput("segment"))?;
        let rows: Vec<&[f64]> = segment.iter().map(|t| t.obs.as_slice()).collect();
        let x = self.critic.batch(&rows)?;
        let values = self.critic.forward(x.view()).column(0).to_vec();
        let mut ret = if last.done { 0.0 } else { self.value(&last.next_obs)? };
        let mut returns = vec![0.0; segment.len()];
        for (i, t) in segment.iter().enumerate().rev() {
            ret = t.reward + self.config.gamma * ret;
            returns[i] = ret;
        }
        let advantages = returns.iter().zip(&values).map(|(r, v)| r - v).collect();
        let actions: Vec<Action> = segment.iter().map(|t| t.action).collect();
        let policy_loss = self.policy_update(&rows, &actions, advantages)?;
        let value_loss = self.critic.train(x.view(), &HeadTarget::Value { returns });
        self.updates += 1;
        Ok((policy_loss, value_loss))
    }

    fn flush(&mut self) -> Result<()> {
        if self.segment.is_empty() {
            return Ok(());
        }
        let segment = std::mem::take(&mut self.segment);
        self.actor_critic_update(&segment)?;
        Ok(())
    }
}

impl Agent for ActorCriticAgent {
    fn input_dim(&self) -> usize {
        self.actor.config.input_dim
    }

    fn act(&self, obs: &[f64]) -> Result<Action> {
        match self.space {
            ActionSpace::ContinuousUnit => Ok(Action::Continuous(self.mean(obs)?.clamp(MIN_SCORE, 1.0))),
            _ => Ok(Action::Discrete(argmax(&self.probabilities(obs)?))),
        }
    }

    fn predict(&mut self, obs: &[f64], explore: bool) -> Result<Action> {
        if !explore {
            return self.act(obs);
        }
        match self.space {
            ActionSpace::ContinuousUnit => {
                let normal = Normal::new(self.mean(obs)?, self.actor.std())
                    .map_err(|e| Error::InvalidConfig(format!("Gaussian policy: {e}")))?;
                Ok(Action::Continuous(normal.sample(&mut self.rng).clamp(MIN_SCORE, 1.0)))
            }
            _ => {
                let p = self.probabilities(obs)?;
                let dist = WeightedIndex::new(&p)
                    .map_err(|e| Error::InvalidConfig(format!("categorical policy: {e}")))?;
                Ok(Action::Discrete(dist.sample(&mut self.rng)))
            }
        }
    }

    fn begin_training(&mut self, _budget: u64) {}

    fn observe(&mut self, t: Transition) -> Result<()> {
        if t.obs.len() != self.input_dim() || t.next_obs.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: t.obs.len(),
            });
        }
        let done = t.done;
        self.segment.push(t);
        self.steps += 1;
        if done || self.segment.len() >= self.config.n_steps {
            self.flush()?;
        }
        Ok(())
    }

    fn end_episode(&mut self) -> Result<()> {
        self.flush()
    }

    fn steps(&self) -> u64 {
        self.steps
    }

    fn set_learning_rate(&mut self, lr: f64) {
        self.actor.set_learning_rate(lr);
        self.critic.set_learning_rate(lr);
    }
}
