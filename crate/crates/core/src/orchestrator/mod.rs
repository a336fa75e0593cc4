//! The incremental evaluation protocol.
//!
//! Cycles are replayed in order. The first one only trains the agent. Every
//! later cycle is first ranked by the frozen agent, without its outcomes,
//! then scored, and only then used for training.

mod baselines;
mod budget;
mod results;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{
    rank_cycle, run_training_episode, ActorCriticAgent, ActorCriticConfig, Agent, DqnAgent, DqnConfig,
    LearningAgent,
};
use crate::dataset::{optimal_ranking, CiCycle, Dataset, RankedSequence, DEFAULT_MIN_CYCLE_SIZE};
use crate::envs::{make_env, RankingEnv, RankingModel};
use crate::error::{Error, Result};
use crate::exec;
use crate::metrics::metric_for_cycle;

pub use baselines::{random_ranking, recency_score, recent_failure_heuristic};
pub use budget::{
    plateau_reached, training_budget, DEFAULT_BUDGET_CAP, DEFAULT_BUDGET_FACTOR, DEFAULT_PLATEAU_WINDOW,
};
pub use results::{
    load_results, persist_results, write_results, CycleResult, ExperimentSummary, MetricStats, RESULTS_HEADER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dqn,
    ActorCritic,
    /// Ranks by the true optimal order. An upper reference, not a
    /// predictor: it reads the outcomes of the cycle it ranks.
    Oracle,
    Random,
    RecentFailure,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Dqn,
        Algorithm::ActorCritic,
        Algorithm::Oracle,
        Algorithm::Random,
        Algorithm::RecentFailure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::ActorCritic => "actor_critic",
            Algorithm::Oracle => "oracle",
            Algorithm::Random => "random",
            Algorithm::RecentFailure => "recent_failure",
        }
    }

    pub fn is_learning(self) -> bool {
        matches!(self, Algorithm::Dqn | Algorithm::ActorCritic)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}

fn default_budget_cap() -> u64 {
    DEFAULT_BUDGET_CAP
}

fn default_budget_factor() -> f64 {
    DEFAULT_BUDGET_FACTOR
}

fn default_plateau_window() -> usize {
    DEFAULT_PLATEAU_WINDOW
}

fn default_min_cycle_size() -> usize {
    DEFAULT_MIN_CYCLE_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ranking_model: RankingModel,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub seed: u64,
    /// Upper bound on training steps per cycle.
    #[serde(default = "default_budget_cap")]
    pub budget_cap: u64,
    /// The `200` in `200 * n * log2 n`.
    #[serde(default = "default_budget_factor")]
    pub budget_factor: f64,
    /// Episodes without a new best episode reward before training stops.
    #[serde(default = "default_plateau_window")]
    pub plateau_window: usize,
    /// Gain the best episode reward must exceed to count as improvement.
    #[serde(default)]
    pub plateau_min_delta: f64,
    #[serde(default = "default_min_cycle_size")]
    pub min_cycle_size: usize,
    /// Measure training wall-clock time. Off by default so reruns produce
    /// identical result files.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub dqn: DqnConfig,
    #[serde(default)]
    pub actor_critic: ActorCriticConfig,
}

impl ExperimentConfig {
    pub fn new(ranking_model: RankingModel, algorithm: Algorithm, seed: u64) -> Self {
        Self {
            ranking_model,
            algorithm,
            seed,
            budget_cap: DEFAULT_BUDGET_CAP,
            budget_factor: DEFAULT_BUDGET_FACTOR,
            plateau_window: DEFAULT_PLATEAU_WINDOW,
            plateau_min_delta: 0.0,
            min_cycle_size: DEFAULT_MIN_CYCLE_SIZE,
            record_timing: false,
            dqn: DqnConfig::default(),
            actor_critic: ActorCriticConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithm == Algorithm::Dqn && self.ranking_model == RankingModel::Pointwise {
            return Err(Error::InvalidConfig(
                "dqn needs a discrete action space; use actor_critic for the pointwise model".into(),
            ));
        }
        if !(self.budget_factor >= 0.0 && self.budget_factor.is_finite()) {
            return Err(Error::InvalidConfig("budget_factor must be a nonnegative number".into()));
        }
        if self.plateau_window == 0 {
            return Err(Error::InvalidConfig("plateau_window must be at least 1".into()));
        }
        if !(self.plateau_min_delta >= 0.0) {
            return Err(Error::InvalidConfig("plateau_min_delta must be nonnegative".into()));
        }
        if self.min_cycle_size == 0 {
            return Err(Error::InvalidConfig("min_cycle_size must be at least 1".into()));
        }
        match self.algorithm {
            Algorithm::Dqn => self.dqn.validate(),
            Algorithm::ActorCritic => self.actor_critic.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Train,
    Rank,
    Score,
}

/// One read of a cycle's data by the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataAccess {
    pub cycle_id: u64,
    pub purpose: Purpose,
    /// Whether the read included that cycle's verdicts and durations.
    pub outcomes: bool,
}

/// Checks that every ranking of a cycle happened without its outcomes and
/// before any outcome of that cycle or a later one was read.
pub fn check_no_leakage(log: &[DataAccess]) -> Result<()> {
    for (p, access) in log.iter().enumerate() {
        if access.purpose != Purpose::Rank {
            continue;
        }
        if access.outcomes {
            return Err(Error::InvalidConfig(format!(
                "cycle {} was ranked with its outcomes visible",
                access.cycle_id
            )));
        }
        if let Some(early) = log[..p].iter().find(|a| a.outcomes && a.cycle_id >= access.cycle_id) {
            return Err(Error::InvalidConfig(format!(
                "cycle {} was ranked after outcomes of cycle {} were read",
                access.cycle_id, early.cycle_id
            )));
        }
    }
    Ok(())
}

/// The cycle as known before it runs: features only. Verdicts and
/// measured durations are blanked.
pub fn predict_view(cycle: &CiCycle) -> CiCycle {
    let mut view = cycle.clone();
    for r in &mut view.records {
        r.verdict = 0;
        r.duration = 0.0;
    }
    view.failed = false;
    view
}

/// Training effort spent on one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub cycle_id: u64,
    pub budget: u64,
    pub steps: u64,
    pub episodes: usize,
    pub plateau: bool,
    pub first_episode_reward: Option<f64>,
    pub best_episode_reward: Option<f64>,
    pub last_episode_reward: Option<f64>,
    pub time_s: f64,
}

/// Everything a run produced, beyond the per-cycle results.
#[derive(Debug, Clone)]
pub struct ExperimentTrace {
    pub results: Vec<CycleResult>,
    /// Ranking of every evaluated cycle.
    pub rankings: Vec<(u64, RankedSequence)>,
    /// One entry per cycle, including the train-only first cycle.
    pub training: Vec<TrainingLog>,
    pub access_log: Vec<DataAccess>,
    pub agent: Option<LearningAgent>,
}

enum Ranker {
    Learning(LearningAgent),
    Baseline,
}

struct Runner<'a> {
    config: &'a ExperimentConfig,
    env: Box<dyn RankingEnv>,
    ranker: Ranker,
    rng: ChaCha8Rng,
    log: Vec<DataAccess>,
}

impl Runner<'_> {
    fn rank(&mut self, cycle: &CiCycle) -> Result<RankedSequence> {
        let seed = self.rng.random::<u64>();
        if self.config.algorithm == Algorithm::Oracle {
            self.log.push(DataAccess {
                cycle_id: cycle.cycle_id,
                purpose: Purpose::Rank,
                outcomes: true,
            });
            return Ok(optimal_ranking(cycle));
        }
        let view = predict_view(cycle);
        self.log.push(DataAccess {
            cycle_id: cycle.cycle_id,
            purpose: Purpose::Rank,
            outcomes: false,
        });
        match (&self.ranker, self.config.algorithm) {
            (Ranker::Learning(agent), _) => Ok(rank_cycle(agent, self.env.as_mut(), &view, seed)?.ranking),
            (Ranker::Baseline, Algorithm::Random) => Ok(random_ranking(&view, seed)),
            (Ranker::Baseline, _) => Ok(recent_failure_heuristic(&view)),
        }
    }

    fn train(&mut self, cycle: &CiCycle) -> Result<TrainingLog> {
        let budget = training_budget(cycle.len(), self.config.budget_factor, self.config.budget_cap);
        let mut log = TrainingLog {
            cycle_id: cycle.cycle_id,
            budget,
            steps: 0,
            episodes: 0,
            plateau: false,
            first_episode_reward: None,
            best_episode_reward: None,
            last_episode_reward: None,
            time_s: 0.0,
        };
        let Ranker::Learning(agent) = &mut self.ranker else {
            return Ok(log);
        };
        self.log.push(DataAccess {
            cycle_id: cycle.cycle_id,
            purpose: Purpose::Train,
            outcomes: true,
        });
        let start = self.config.record_timing.then(Instant::now);
        agent.begin_training(budget);
        let mut rewards = Vec::new();
        while log.steps < budget {
            let seed = self.rng.random::<u64>();
            let ep = run_training_episode(agent, self.env.as_mut(), cycle, seed, Some(budget - log.steps))?;
            if ep.steps == 0 {
                break;
            }
            log.steps += ep.steps as u64;
            log.episodes += 1;
            if ep.completed {
                rewards.push(ep.episode_reward);
            }
            if plateau_reached(&rewards, self.config.plateau_window, self.config.plateau_min_delta) {
                log.plateau = true;
                break;
            }
        }
        log.first_episode_reward = rewards.first().copied();
        log.last_episode_reward = rewards.last().copied();
        log.best_episode_reward = rewards.iter().copied().reduce(f64::max);
        log.time_s = start.map_or(0.0, |s| s.elapsed().as_secs_f64());
        Ok(log)
    }
}

fn build_agent(config: &ExperimentConfig, env: &dyn RankingEnv, seed: u64) -> Result<Option<LearningAgent>> {
    let (dim, space) = (env.obs_dim(), env.action_space());
    Ok(match config.algorithm {
        Algorithm::Dqn => Some(LearningAgent::Dqn(DqnAgent::new(dim, space, config.dqn.clone(), seed)?)),
        Algorithm::ActorCritic => Some(LearningAgent::ActorCritic(ActorCriticAgent::new(
            dim,
            space,
            config.actor_critic.clone(),
            seed,
        )?)),
        _ => None,
    })
}

/// Runs the protocol and keeps rankings, training logs and the data access
/// log alongside the results.
pub fn run_experiment_traced(dataset: &Dataset, config: &ExperimentConfig) -> Result<ExperimentTrace> {
    config.validate()?;
    let ds = dataset.filter_cycles(config.min_cycle_size)?;
    let env = make_env(config.ranking_model, ds.feature_dim, ds.max_tests);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let agent = build_agent(config, env.as_ref(), rng.random())?;
    let mut runner = Runner {
        config,
        env,
        ranker: agent.map_or(Ranker::Baseline, Ranker::Learning),
        rng,
        log: Vec::new(),
    };
    let mut results = Vec::with_capacity(ds.cycles.len().saturating_sub(1));
    let mut rankings = Vec::with_capacity(results.capacity());
    let mut training = Vec::with_capacity(ds.cycles.len());
    for (i, cycle) in ds.cycles.iter().enumerate() {
        if i > 0 {
            let ranking = runner.rank(cycle)?;
            runner.log.push(DataAccess {
                cycle_id: cycle.cycle_id,
                purpose: Purpose::Score,
                outcomes: true,
            });
            let m = metric_for_cycle(&ranking, cycle)?;
            rankings.push((cycle.cycle_id, ranking));
            let log = runner.train(cycle)?;
            results.push(CycleResult {
                cycle_id: cycle.cycle_id,
                ranking_model: config.ranking_model,
                algorithm: config.algorithm,
                metric_kind: m.metric_kind,
                metric_value: m.value,
                n_tests: m.n_tests,
                n_failures: m.n_failures,
                training_steps: log.steps,
                training_time_s: log.time_s,
                seed: config.seed,
            });
            training.push(log);
        } else {
            training.push(runner.train(cycle)?);
        }
        log::debug!(
            "{}/{} cycle {}: {} training steps",
            config.ranking_model,
            config.algorithm,
            cycle.cycle_id,
            training.last().map_or(0, |l| l.steps)
        );
    }
    Ok(ExperimentTrace {
        results,
        rankings,
        training,
        access_log: runner.log,
        agent: match runner.ranker {
            Ranker::Learning(a) => Some(a),
            Ranker::Baseline => None,
        },
    })
}

/// One result per evaluated cycle: every filtered cycle except the first.
pub fn run_experiment(dataset: &Dataset, config: &ExperimentConfig) -> Result<Vec<CycleResult>> {
    Ok(run_experiment_traced(dataset, config)?.results)
}

/// Runs independent experiments on up to `jobs` threads. Results keep the
/// order of `experiments`.
pub fn run_experiments(experiments: &[(&Dataset, ExperimentConfig)], jobs: usize) -> Vec<Result<Vec<CycleResult>>> {
    exec::map(experiments, jobs, |(ds, cfg)| run_experiment(ds, cfg))
}
