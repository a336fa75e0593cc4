use super::{expect_discrete, norm, Action, ActionSpace, EpisodeCycle, Mode, RankingEnv, RankingModel, StepResult};
use crate::dataset::{CiCycle, RankedSequence, DUMMY_FEATURE};
use crate::error::{Error, Result};

/// Reward for placing a test whose optimal position is `optimal_rank` at
/// position `position` of `n`. Dummy selections earn nothing.
pub fn listwise_reward(position: Option<usize>, optimal_rank: usize, n: usize) -> f64 {
    match position {
        None => 0.0,
        Some(p) => 1.0 - (norm(optimal_rank, n) - norm(p, n)).powi(2),
    }
}

/// The whole padded cycle is observed; each action picks the row to run
/// next. Picked rows and padding rows read as all `-1`.
#[derive(Debug, Clone)]
pub struct ListwiseEnv {
    feature_dim: usize,
    max_tests: usize,
    step_limit: usize,
    cycle: Option<EpisodeCycle>,
    /// Record index per row, `None` for dummies.
    rows: Vec<Option<usize>>,
    obs: Vec<f64>,
    output: Vec<usize>,
    steps: usize,
    done: bool,
}

impl ListwiseEnv {
    pub fn new(feature_dim: usize, max_tests: usize) -> Self {
        let max_tests = max_tests.max(1);
        Self {
            feature_dim,
            max_tests,
            step_limit: 10 * max_tests,
            cycle: None,
            rows: Vec::new(),
            obs: Vec::new(),
            output: Vec::new(),
            steps: 0,
            done: false,
        }
    }

    /// Caps the number of steps per episode; once reached, the unpicked
    /// rows are appended in row order.
    pub fn with_step_limit(mut self, limit: usize) -> Self {
        self.step_limit = limit.max(1);
        self
    }

    pub fn max_tests(&self) -> usize {
        self.max_tests
    }

    fn clear_row(&mut self, row: usize) {
        self.rows[row] = None;
        let d = self.feature_dim;
        self.obs[row * d..(row + 1) * d].fill(DUMMY_FEATURE);
    }

    fn append_remaining(&mut self) {
        let remaining: Vec<usize> = self.rows.iter().flatten().copied().collect();
        self.output.extend(remaining);
        self.rows.iter_mut().for_each(|r| *r = None);
        self.done = true;
    }
}

impl RankingEnv for ListwiseEnv {
    fn model(&self) -> RankingModel {
        RankingModel::Listwise
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(self.max_tests)
    }

    fn obs_dim(&self) -> usize {
        self.max_tests * self.feature_dim
    }

    fn reset(&mut self, cycle: &CiCycle, mode: Mode, _seed: u64) -> Result<Vec<f64>> {
        if cycle.len() > self.max_tests {
            return Err(Error::CycleTooLarge {
                size: cycle.len(),
                max: self.max_tests,
            });
        }
        let ep = EpisodeCycle::new(cycle, mode, self.feature_dim)?;
        self.rows = (0..self.max_tests).map(|i| (i < ep.len()).then_some(i)).collect();
        self.obs = vec![DUMMY_FEATURE; self.obs_dim()];
        for (i, f) in ep.features.iter().enumerate() {
            self.obs[i * self.feature_dim..(i + 1) * self.feature_dim].copy_from_slice(f);
        }
        self.output.clear();
        self.steps = 0;
        self.done = false;
        if ep.len() == 1 {
            self.append_remaining();
        }
        self.cycle = Some(ep);
        Ok(self.obs.clone())
    }

    fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let ep = self.cycle.as_ref().ok_or(Error::NotReset)?;
        let row = expect_discrete(action, self.max_tests)?;
        let k = ep.len();
        let selected = self.rows[row];
        let reward = match (&ep.truth, selected) {
            (Some(truth), Some(rec)) => {
                listwise_reward(Some(self.output.len()), truth.optimal_pos[rec], k)
            }
            _ => 0.0,
        };
        if let Some(rec) = selected {
            self.output.push(rec);
            self.clear_row(row);
            if self.output.len() == k - 1 {
                self.append_remaining();
            }
        }
        self.steps += 1;
        let mut truncated = false;
        if !self.done && self.steps >= self.step_limit {
            self.append_remaining();
            truncated = true;
        }
        Ok(StepResult {
            done: self.done,
            reward,
            obs: self.obs.clone(),
            clamped: false,
            truncated,
        })
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn ranking(&self) -> Option<RankedSequence> {
        let ep = self.cycle.as_ref()?;
        self.done.then(|| ep.ranking(&self.output))
    }
}
