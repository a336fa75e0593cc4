use std::cmp::Ordering;

use super::{expect_discrete, Action, ActionSpace, EpisodeCycle, EpisodeOutcome, Mode, RankingEnv, RankingModel, StepResult};
use crate::dataset::{seeded_shuffle, CiCycle, RankedSequence, TestCaseRecord};
use crate::error::{Error, Result};

/// Reward for preferring `selected` over `other`.
pub fn pairwise_reward(selected: &TestCaseRecord, other: &TestCaseRecord) -> f64 {
    reward_from_parts(
        (selected.verdict, selected.exec_time),
        (other.verdict, other.exec_time),
    )
}

pub(super) fn reward_from_parts(selected: (u8, f64), other: (u8, f64)) -> f64 {
    match selected.0.cmp(&other.0) {
        Ordering::Greater => 1.0,
        Ordering::Less => 0.0,
        Ordering::Equal if selected.1 <= other.1 => 0.5,
        Ordering::Equal => 0.0,
    }
}

fn pair_obs(ep: &EpisodeCycle, a: usize, b: usize) -> Vec<f64> {
    let mut obs = Vec::with_capacity(ep.features[a].len() * 2);
    obs.extend_from_slice(&ep.features[a]);
    obs.extend_from_slice(&ep.features[b]);
    obs
}

/// Ground-truth total order over record indices (train mode only).
fn oracle_cmp(ep: &EpisodeCycle, a: usize, b: usize) -> Ordering {
    let truth = ep.truth.as_ref().expect("oracle needs replayed verdicts");
    truth.verdicts[b]
        .cmp(&truth.verdicts[a])
        .then_with(|| truth.exec_times[a].total_cmp(&truth.exec_times[b]))
        .then_with(|| ep.ids[a].cmp(&ep.ids[b]))
}

fn binary_action(action: Action) -> Result<usize> {
    expect_discrete(action, 2)
}

/// Pairwise ranking driven by a stepped selection sort. Action 1 means the
/// second test of the observed pair has the higher priority.
#[derive(Debug, Clone)]
pub struct SelectionSortEnv {
    feature_dim: usize,
    cycle: Option<EpisodeCycle>,
    seq: Vec<usize>,
    idx0: usize,
    idx1: usize,
    done: bool,
}

impl SelectionSortEnv {
    pub fn new(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            cycle: None,
            seq: Vec::new(),
            idx0: 0,
            idx1: 1,
            done: false,
        }
    }

    fn obs(&self) -> Vec<f64> {
        let ep = self.cycle.as_ref().expect("reset");
        if self.seq.len() < 2 {
            return vec![0.0; 2 * self.feature_dim];
        }
        pair_obs(ep, self.seq[self.idx0], self.seq[self.idx1])
    }

    /// Runs a full episode answering every comparison with the ground
    /// truth order.
    pub fn sort_with_oracle(&mut self, cycle: &CiCycle, seed: u64) -> Result<EpisodeOutcome> {
        self.reset(cycle, Mode::Train, seed)?;
        let mut steps = 0;
        let mut episode_reward = 0.0;
        while !self.done {
            let ep = self.cycle.as_ref().expect("reset");
            let (a, b) = (self.seq[self.idx0], self.seq[self.idx1]);
            let action = usize::from(oracle_cmp(ep, b, a) == Ordering::Less);
            episode_reward += self.step(Action::Discrete(action))?.reward;
            steps += 1;
        }
        Ok(EpisodeOutcome {
            ranking: self.ranking().expect("done"),
            steps,
            episode_reward,
        })
    }
}

impl RankingEnv for SelectionSortEnv {
    fn model(&self) -> RankingModel {
        RankingModel::PairwiseSelection
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Binary
    }

    fn obs_dim(&self) -> usize {
        2 * self.feature_dim
    }

    fn reset(&mut self, cycle: &CiCycle, mode: Mode, seed: u64) -> Result<Vec<f64>> {
        let ep = EpisodeCycle::new(cycle, mode, self.feature_dim)?;
        self.seq = (0..ep.len()).collect();
        seeded_shuffle(&mut self.seq, seed);
        self.idx0 = 0;
        self.idx1 = 1;
        self.done = ep.len() < 2;
        self.cycle = Some(ep);
        Ok(self.obs())
    }

    fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let ep = self.cycle.as_ref().ok_or(Error::NotReset)?;
        let action = binary_action(action)?;
        let pair = [self.seq[self.idx0], self.seq[self.idx1]];
        let reward = match &ep.truth {
            Some(truth) => truth.pairwise_reward(pair[action], pair[1 - action]),
            None => 0.0,
        };
        if action == 1 {
            self.seq.swap(self.idx0, self.idx1);
        }
        let n = self.seq.len();
        if self.idx1 < n - 1 {
            self.idx1 += 1;
        } else if self.idx0 < n - 2 {
            self.idx0 += 1;
            self.idx1 = self.idx0 + 1;
        } else {
            self.done = true;
        }
        Ok(StepResult {
            done: self.done,
            reward,
            obs: self.obs(),
            clamped: false,
            truncated: false,
        })
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn ranking(&self) -> Option<RankedSequence> {
        let ep = self.cycle.as_ref()?;
        self.done.then(|| ep.ranking(&self.seq))
    }
}

/// Pairwise ranking driven by a stepped bottom-up merge sort. Action 0 means
/// the head of the left run goes first.
#[derive(Debug, Clone)]
pub struct MergeSortEnv {
    feature_dim: usize,
    cycle: Option<EpisodeCycle>,
    arr: Vec<usize>,
    buf: Vec<usize>,
    width: usize,
    lo: usize,
    mid: usize,
    hi: usize,
    i: usize,
    j: usize,
    comparisons: usize,
    done: bool,
}

impl MergeSortEnv {
    pub fn new(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            cycle: None,
            arr: Vec::new(),
            buf: Vec::new(),
            width: 1,
            lo: 0,
            mid: 0,
            hi: 0,
            i: 0,
            j: 0,
            comparisons: 0,
            done: false,
        }
    }

    /// Comparisons answered in the current episode.
    pub fn comparisons(&self) -> usize {
        self.comparisons
    }

    /// Upper bound on comparisons for `n` items: `n * ceil(log2 n)`.
    pub fn max_comparisons(n: usize) -> usize {
        if n < 2 {
            0
        } else {
            n * (usize::BITS - (n - 1).leading_zeros()) as usize
        }
    }

    fn start_merge(&mut self) {
        let n = self.arr.len();
        self.mid = (self.lo + self.width).min(n);
        self.hi = (self.lo + 2 * self.width).min(n);
        self.i = self.lo;
        self.j = self.mid;
    }

    /// Moves forward to the next pending comparison, copying run tails
    /// that need no decision.
    fn advance(&mut self) {
        let n = self.arr.len();
        loop {
            if self.width >= n {
                self.done = true;
                return;
            }
            if self.i < self.mid && self.j < self.hi {
                return;
            }
            self.buf.extend_from_slice(&self.arr[self.i..self.mid]);
            self.buf.extend_from_slice(&self.arr[self.j..self.hi]);
            self.i = self.mid;
            self.j = self.hi;
            self.lo = self.hi;
            if self.lo >= n {
                std::mem::swap(&mut self.arr, &mut self.buf);
                self.buf.clear();
                self.width *= 2;
                self.lo = 0;
            }
            self.start_merge();
        }
    }

    fn obs(&self) -> Vec<f64> {
        let ep = self.cycle.as_ref().expect("reset");
        if self.done {
            return vec![0.0; 2 * self.feature_dim];
        }
        pair_obs(ep, self.arr[self.i], self.arr[self.j])
    }

    pub fn sort_with_oracle(&mut self, cycle: &CiCycle, seed: u64) -> Result<EpisodeOutcome> {
        self.reset(cycle, Mode::Train, seed)?;
        let mut steps = 0;
        let mut episode_reward = 0.0;
        while !self.done {
            let ep = self.cycle.as_ref().expect("reset");
            let (left, right) = (self.arr[self.i], self.arr[self.j]);
            let action = usize::from(oracle_cmp(ep, left, right) == Ordering::Greater);
            episode_reward += self.step(Action::Discrete(action))?.reward;
            steps += 1;
        }
        Ok(EpisodeOutcome {
            ranking: self.ranking().expect("done"),
            steps,
            episode_reward,
        })
    }
}

impl RankingEnv for MergeSortEnv {
    fn model(&self) -> RankingModel {
        RankingModel::PairwiseMerge
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Binary
    }

    fn obs_dim(&self) -> usize {
        2 * self.feature_dim
    }

    fn reset(&mut self, cycle: &CiCycle, mode: Mode, seed: u64) -> Result<Vec<f64>> {
        let ep = EpisodeCycle::new(cycle, mode, self.feature_dim)?;
        self.arr = (0..ep.len()).collect();
        seeded_shuffle(&mut self.arr, seed);
        self.buf = Vec::with_capacity(ep.len());
        self.width = 1;
        self.lo = 0;
        self.comparisons = 0;
        self.done = false;
        self.cycle = Some(ep);
        self.start_merge();
        self.advance();
        Ok(self.obs())
    }

    fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let ep = self.cycle.as_ref().ok_or(Error::NotReset)?;
        let action = binary_action(action)?;
        let pair = [self.arr[self.i], self.arr[self.j]];
        let reward = match &ep.truth {
            Some(truth) => truth.pairwise_reward(pair[action], pair[1 - action]),
            None => 0.0,
        };
        if action == 0 {
            self.buf.push(pair[0]);
            self.i += 1;
        } else {
            self.buf.push(pair[1]);
            self.j += 1;
        }
        self.comparisons += 1;
        self.advance();
        Ok(StepResult {
            done: self.done,
            reward,
            obs: self.obs(),
            clamped: false,
            truncated: false,
        })
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn ranking(&self) -> Option<RankedSequence> {
        let ep = self.cycle.as_ref()?;
        self.done.then(|| ep.ranking(&self.arr))
    }
}
