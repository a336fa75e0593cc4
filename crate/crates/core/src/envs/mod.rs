//! Episodic environments that replay one CI cycle per episode.
//!
//! Each environment turns the ranking of a cycle into a sequence of agent
//! decisions. In [`Mode::Train`] the logged verdicts drive the rewards; in
//! [`Mode::Predict`] the environment never reads them and every reward is 0.

mod listwise;
mod pairwise;
mod pointwise;
mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{optimal_order, CiCycle, RankedSequence, TestCaseRecord};
use crate::error::{Error, Result};

pub use listwise::{listwise_reward, ListwiseEnv};
pub use pairwise::{pairwise_reward, MergeSortEnv, SelectionSortEnv};
pub use pointwise::{PointwiseEnv, MIN_SCORE};
pub use trace::StepTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingModel {
    Pointwise,
    PairwiseSelection,
    PairwiseMerge,
    Listwise,
}

impl RankingModel {
    pub const ALL: [RankingModel; 4] = [
        RankingModel::Pointwise,
        RankingModel::PairwiseSelection,
        RankingModel::PairwiseMerge,
        RankingModel::Listwise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RankingModel::Pointwise => "pointwise",
            RankingModel::PairwiseSelection => "pairwise_selection",
            RankingModel::PairwiseMerge => "pairwise_merge",
            RankingModel::Listwise => "listwise",
        }
    }

    pub fn is_pairwise(self) -> bool {
        matches!(self, RankingModel::PairwiseSelection | RankingModel::PairwiseMerge)
    }
}

impl fmt::Display for RankingModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RankingModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown ranking model `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Rewards come from the replayed verdicts.
    Train,
    /// Verdicts are unknown; rewards are 0.
    Predict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete(usize),
    /// `{0, 1}`
    Binary,
    /// A real score in `(0, 1]`.
    ContinuousUnit,
}

impl ActionSpace {
    /// Number of discrete choices, `None` for continuous spaces.
    pub fn n_discrete(self) -> Option<usize> {
        match self {
            ActionSpace::Discrete(n) => Some(n),
            ActionSpace::Binary => Some(2),
            ActionSpace::ContinuousUnit => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(f64),
}

impl Action {
    pub fn as_f64(self) -> f64 {
        match self {
            Action::Discrete(a) => a as f64,
            Action::Continuous(a) => a,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub done: bool,
    pub reward: f64,
    pub obs: Vec<f64>,
    /// The action was outside the action space and was clamped into it.
    pub clamped: bool,
    /// The episode hit its step limit before the ranking was complete.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub ranking: RankedSequence,
    pub steps: usize,
    pub episode_reward: f64,
}

pub trait RankingEnv: Send {
    fn model(&self) -> RankingModel;
    fn action_space(&self) -> ActionSpace;
    fn obs_dim(&self) -> usize;
    /// Starts an episode over `cycle` and returns the first observation.
    fn reset(&mut self, cycle: &CiCycle, mode: Mode, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: Action) -> Result<StepResult>;
    /// True once the ranking is complete (possibly right after `reset`).
    fn is_done(&self) -> bool;
    /// The produced ranking, available once the episode is done.
    fn ranking(&self) -> Option<RankedSequence>;
}

/// Builds the environment for `model`. `max_tests` only matters for the
/// listwise model, which pads every cycle to that size.
pub fn make_env(model: RankingModel, feature_dim: usize, max_tests: usize) -> Box<dyn RankingEnv> {
    match model {
        RankingModel::Pointwise => Box::new(PointwiseEnv::new(feature_dim)),
        RankingModel::PairwiseSelection => Box::new(SelectionSortEnv::new(feature_dim)),
        RankingModel::PairwiseMerge => Box::new(MergeSortEnv::new(feature_dim)),
        RankingModel::Listwise => Box::new(ListwiseEnv::new(feature_dim, max_tests)),
    }
}

/// Replayed ground truth of a cycle, only present in train mode.
#[derive(Debug, Clone)]
pub(crate) struct Truth {
    verdicts: Vec<u8>,
    exec_times: Vec<f64>,
    /// 0-based position of each record in the optimal order.
    optimal_pos: Vec<usize>,
}

impl Truth {
    fn pairwise_reward(&self, selected: usize, other: usize) -> f64 {
        pairwise::reward_from_parts(
            (self.verdicts[selected], self.exec_times[selected]),
            (self.verdicts[other], self.exec_times[other]),
        )
    }
}

/// What an environment keeps of a cycle during one episode.
#[derive(Debug, Clone)]
pub(crate) struct EpisodeCycle {
    ids: Vec<String>,
    features: Vec<Vec<f64>>,
    truth: Option<Truth>,
}

impl EpisodeCycle {
    fn new(cycle: &CiCycle, mode: Mode, feature_dim: usize) -> Result<Self> {
        if cycle.is_empty() {
            return Err(Error::EmptyInput("cycle"));
        }
        let features: Vec<Vec<f64>> = cycle.records.iter().map(TestCaseRecord::observation).collect();
        if let Some(f) = features.iter().find(|f| f.len() != feature_dim) {
            return Err(Error::DimensionMismatch {
                expected: feature_dim,
                actual: f.len(),
            });
        }
        let truth = match mode {
            Mode::Predict => None,
            Mode::Train => {
                let mut optimal_pos = vec![0; cycle.len()];
                for (pos, i) in optimal_order(cycle).into_iter().enumerate() {
                    optimal_pos[i] = pos;
                }
                Some(Truth {
                    verdicts: cycle.records.iter().map(|r| r.verdict).collect(),
                    exec_times: cycle.records.iter().map(|r| r.exec_time).collect(),
                    optimal_pos,
                })
            }
        };
        Ok(Self {
            ids: cycle.records.iter().map(|r| r.test_id.clone()).collect(),
            features,
            truth,
        })
    }

    fn len(&self) -> usize {
        self.ids.len()
    }

    fn ranking(&self, order: &[usize]) -> RankedSequence {
        RankedSequence::new(order.iter().map(|&i| self.ids[i].clone()).collect())
            .expect("environment orders are permutations")
    }
}

/// Maps a 0-based position onto `[0, 1]`.
pub fn norm(x: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        x as f64 / (n - 1) as f64
    }
}

fn expect_discrete(action: Action, n: usize) -> Result<usize> {
    match action {
        Action::Discrete(a) if a < n => Ok(a),
        Action::Discrete(a) => Err(Error::InvalidConfig(format!(
            "action {a} outside the discrete space of size {n}"
        ))),
        Action::Continuous(_) => Err(Error::Unsupported(
            "continuous action for a discrete environment".into(),
        )),
    }
}

/// Runs an episode with a fixed decision rule and no learning.
pub fn run_policy_episode(
    env: &mut dyn RankingEnv,
    cycle: &CiCycle,
    mode: Mode,
    seed: u64,
    mut policy: impl FnMut(&[f64]) -> Action,
) -> Result<EpisodeOutcome> {
    let mut obs = env.reset(cycle, mode, seed)?;
    let mut steps = 0;
    let mut episode_reward = 0.0;
    while !env.is_done() {
        let step = env.step(policy(&obs))?;
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

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::dataset::{optimal_ranking, synthesize_dataset, SynthSpec, TestsPerCycle};

    pub(crate) fn random_cycles(count: usize, sizes: (usize, usize), seed: u64) -> Vec<CiCycle> {
        let spec = SynthSpec {
            cycles: count,
            tests_per_cycle: TestsPerCycle {
                min: sizes.0,
                max: sizes.1,
            },
            feature_dim: 2,
            fail_rule: "f1>0.8".parse().unwrap(),
            noise: 0.0,
            noise_mode: Default::default(),
            seed,
            history_len: 4,
        };
        synthesize_dataset(&spec).unwrap().cycles
    }

    #[test]
    fn every_env_yields_a_permutation() {
        use rand::{Rng, SeedableRng};
        let cycles = random_cycles(20, (1, 12), 5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for model in RankingModel::ALL {
            let mut env = make_env(model, 8, 12);
            for (e, cycle) in cycles.iter().enumerate() {
                let space = env.action_space();
                let out = run_policy_episode(env.as_mut(), cycle, Mode::Train, e as u64, |_| match space {
                    ActionSpace::ContinuousUnit => Action::Continuous(rng.random_range(-0.5..1.5)),
                    other => Action::Discrete(rng.random_range(0..other.n_discrete().unwrap())),
                })
                .unwrap();
                assert!(out.ranking.is_permutation_of(cycle), "{model}");
                if cycle.len() == 1 {
                    assert_eq!(out.ranking.ids(), [cycle.records[0].test_id.clone()]);
                }
            }
        }
    }

    #[test]
    fn rewards_stay_in_unit_interval() {
        use rand::{Rng, SeedableRng};
        let cycles = random_cycles(10, (2, 10), 6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for model in RankingModel::ALL {
            let mut env = make_env(model, 8, 10);
            for cycle in &cycles {
                env.reset(cycle, Mode::Train, 3).unwrap();
                while !env.is_done() {
                    let a = match env.action_space() {
                        ActionSpace::ContinuousUnit => Action::Continuous(rng.random()),
                        s => Action::Discrete(rng.random_range(0..s.n_discrete().unwrap())),
                    };
                    let r = env.step(a).unwrap();
                    assert!((0.0..=1.0).contains(&r.reward));
                    assert_eq!(r.obs.len(), env.obs_dim());
                }
            }
        }
    }

    #[test]
    fn predict_mode_is_blind_to_verdicts() {
        let cycles = random_cycles(5, (6, 10), 7);
        for model in RankingModel::ALL {
            for cycle in &cycles {
                let mut flipped = cycle.clone();
                for r in &mut flipped.records {
                    r.verdict = 1 - r.verdict;
                }
                let run = |c: &CiCycle| {
                    let mut env = make_env(model, 8, 10);
                    let mut trace = Vec::new();
                    let mut t = 0usize;
                    let out = run_policy_episode(env.as_mut(), c, Mode::Predict, 11, |obs| {
                        trace.push(obs.to_vec());
                        t += 1;
                        match model {
                            RankingModel::Pointwise => Action::Continuous((obs[0] / 10.0).clamp(0.01, 1.0)),
                            RankingModel::Listwise => Action::Discrete(t % 10),
                            _ => Action::Discrete(usize::from(obs[2] > 0.5)),
                        }
                    })
                    .unwrap();
                    (trace, out)
                };
                let (a, out_a) = run(cycle);
                let (b, out_b) = run(&flipped);
                assert_eq!(a, b, "{model}");
                assert_eq!(out_a.ranking, out_b.ranking);
                assert_eq!(out_a.episode_reward, 0.0);
            }
        }
    }

    #[test]
    fn oracle_drives_pairwise_envs_to_optimal() {
        for cycle in random_cycles(30, (1, 25), 8) {
            let want = optimal_ranking(&cycle);
            let mut sel = SelectionSortEnv::new(8);
            assert_eq!(sel.sort_with_oracle(&cycle, 1).unwrap().ranking, want);
            let mut merge = MergeSortEnv::new(8);
            assert_eq!(merge.sort_with_oracle(&cycle, 1).unwrap().ranking, want);
        }
    }

    #[test]
    fn model_names_round_trip() {
        for m in RankingModel::ALL {
            assert_eq!(m.as_str().parse::<RankingModel>().unwrap(), m);
        }
        assert!("pairwise".parse::<RankingModel>().is_err());
    }

    #[test]
    fn norm_maps_extremes() {
        assert_eq!(norm(0, 5), 0.0);
        assert_eq!(norm(4, 5), 1.0);
        assert_eq!(norm(0, 1), 0.0);
    }
}
