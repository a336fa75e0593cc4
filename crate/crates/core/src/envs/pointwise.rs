use super::{norm, Action, ActionSpace, EpisodeCycle, Mode, RankingEnv, RankingModel, StepResult};
use crate::dataset::{seeded_shuffle, CiCycle, RankedSequence};
use crate::error::{Error, Result};

/// Smallest admissible score; the action space is `(0, 1]`.
pub const MIN_SCORE: f64 = 1e-6;

/// Scores one test per step. The final ranking sorts tests by ascending
/// score, since a score estimates the normalised optimal position.
#[derive(Debug, Clone)]
pub struct PointwiseEnv {
    feature_dim: usize,
    cycle: Option<EpisodeCycle>,
    order: Vec<usize>,
    scores: Vec<f64>,
    index: usize,
    done: bool,
    ranking: Vec<usize>,
}

impl PointwiseEnv {
    pub fn new(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            cycle: None,
            order: Vec::new(),
            scores: Vec::new(),
            index: 0,
            done: false,
            ranking: Vec::new(),
        }
    }

    fn current_obs(&self) -> Vec<f64> {
        let ep = self.cycle.as_ref().expect("reset");
        ep.features[self.order[self.index]].clone()
    }

    /// Scores assigned so far, keyed by position in the episode's order.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }
}

fn clamp_score(a: f64) -> (f64, bool) {
    if a.is_nan() {
        return (MIN_SCORE, true);
    }
    let c = a.clamp(MIN_SCORE, 1.0);
    (c, c != a)
}

impl RankingEnv for PointwiseEnv {
    fn model(&self) -> RankingModel {
        RankingModel::Pointwise
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::ContinuousUnit
    }

    fn obs_dim(&self) -> usize {
        self.feature_dim
    }

    fn reset(&mut self, cycle: &CiCycle, mode: Mode, seed: u64) -> Result<Vec<f64>> {
        let ep = EpisodeCycle::new(cycle, mode, self.feature_dim)?;
        self.order = (0..ep.len()).collect();
        seeded_shuffle(&mut self.order, seed);
        self.scores.clear();
        self.ranking.clear();
        self.index = 0;
        self.done = false;
        self.cycle = Some(ep);
        Ok(self.current_obs())
    }

    fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let ep = self.cycle.as_ref().ok_or(Error::NotReset)?;
        let raw = match action {
            Action::Continuous(a) => a,
            Action::Discrete(_) => {
                return Err(Error::Unsupported("discrete action for the pointwise environment".into()))
            }
        };
        let (score, clamped) = clamp_score(raw);
        let k = ep.len();
        let current = self.order[self.index];
        let reward = match &ep.truth {
            Some(truth) => 1.0 - (norm(truth.optimal_pos[current], k) - score).powi(2),
            None => 0.0,
        };
        self.scores.push(score);
        if self.index < k - 1 {
            self.index += 1;
        } else {
            self.done = true;
            let mut ranked: Vec<(f64, usize)> =
                self.scores.iter().copied().zip(self.order.iter().copied()).collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| ep.ids[a.1].cmp(&ep.ids[b.1])));
            self.ranking = ranked.into_iter().map(|(_, i)| i).collect();
        }
        Ok(StepResult {
            done: self.done,
            reward,
            obs: self.current_obs(),
            clamped,
            truncated: false,
        })
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn ranking(&self) -> Option<RankedSequence> {
        let ep = self.cycle.as_ref()?;
        self.done.then(|| ep.ranking(&self.ranking))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::record;
    use crate::dataset::{optimal_ranking, TestCaseRecord};

    fn cycle(recs: Vec<TestCaseRecord>) -> CiCycle {
        CiCycle::new(1, recs).unwrap()
    }

    fn id_of(env: &PointwiseEnv, obs: &[f64], c: &CiCycle) -> String {
        c.records
            .iter()
            .find(|r| r.observation() == obs)
            .map(|r| r.test_id.clone())
            .unwrap_or_else(|| panic!("{:?}", env.order))
    }

    #[test]
    fn first_obs_follows_seeded_order() {
        let c = cycle((0..8).map(|i| record(&format!("t{i}"), 0, i as f64)).collect());
        let mut a = PointwiseEnv::new(6);
        let mut b = PointwiseEnv::new(6);
        assert_eq!(a.reset(&c, Mode::Train, 42).unwrap(), b.reset(&c, Mode::Train, 42).unwrap());
        let obs = a.reset(&c, Mode::Train, 42).unwrap();
        assert_eq!(obs, c.records[a.order[0]].observation());
    }

    #[test]
    fn ascending_scores_give_ranking() {
        let c = cycle(vec![record("A", 0, 1.0), record("B", 0, 7.0)]);
        let mut env = PointwiseEnv::new(6);
        let mut obs = env.reset(&c, Mode::Train, 0).unwrap();
        while !env.is_done() {
            let score = if id_of(&env, &obs, &c) == "A" { 0.2 } else { 0.9 };
            obs = env.step(Action::Continuous(score)).unwrap().obs;
        }
        assert_eq!(env.ranking().unwrap().ids(), ["A", "B"]);
    }

    #[test]
    fn reward_is_squared_deviation() {
        let c = cycle(vec![record("a", 0, 1.0), record("b", 0, 2.0), record("c", 0, 3.0)]);
        let mut env = PointwiseEnv::new(6);
        let mut obs = env.reset(&c, Mode::Train, 3).unwrap();
        while !env.is_done() {
            let id = id_of(&env, &obs, &c);
            let (action, want) = match id.as_str() {
                // optimal position 2 of 3
                "c" => (0.5, 0.75),
                // exactly the normalised optimal position
                "b" => (0.5, 1.0),
                _ => (MIN_SCORE, 1.0 - MIN_SCORE * MIN_SCORE),
            };
            let r = env.step(Action::Continuous(action)).unwrap();
            assert!((r.reward - want).abs() < 1e-12, "{id}");
            obs = r.obs;
        }
    }

    #[test]
    fn out_of_range_actions_are_clamped() {
        let c = cycle(vec![record("a", 0, 1.0), record("b", 0, 2.0), record("c", 0, 3.0)]);
        let mut env = PointwiseEnv::new(6);
        env.reset(&c, Mode::Train, 0).unwrap();
        assert!(env.step(Action::Continuous(1.7)).unwrap().clamped);
        assert!(env.step(Action::Continuous(f64::NAN)).unwrap().clamped);
        let last = env.step(Action::Continuous(0.5)).unwrap();
        assert!(!last.clamped && last.done);
        assert_eq!(env.scores(), [1.0, MIN_SCORE, 0.5]);
        assert!(env.step(Action::Continuous(0.5)).is_err());
    }

    #[test]
    fn perfect_scores_reproduce_optimum() {
        let recs: Vec<_> = (0..9)
            .map(|i| record(&format!("t{i}"), u8::from(i % 4 == 0), (9 - i) as f64))
            .collect();
        let c = cycle(recs);
        let want = optimal_ranking(&c);
        let mut env = PointwiseEnv::new(6);
        let mut obs = env.reset(&c, Mode::Train, 5).unwrap();
        let mut steps = 0;
        while !env.is_done() {
            let id = id_of(&env, &obs, &c);
            let pos = want.idx(&id).unwrap() - 1;
            let r = env.step(Action::Continuous(norm(pos, c.len()).max(MIN_SCORE))).unwrap();
            obs = r.obs;
            steps += 1;
        }
        assert_eq!(steps, c.len());
        assert_eq!(env.ranking().unwrap(), want);
    }
}
