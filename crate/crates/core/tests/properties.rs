//! Property tests over the public API on randomly generated datasets.

use ciprio::agents::EpsilonSchedule;
use ciprio::dataset::{
    optimal_ranking, synthesize_dataset, CiCycle, Dataset, NoiseMode, SynthSpec, TestsPerCycle,
};
use ciprio::envs::{make_env, run_policy_episode, Action, ActionSpace, MergeSortEnv, Mode, RankingModel, SelectionSortEnv};
use ciprio::metrics::cle;
use ciprio::orchestrator::{predict_view, run_experiment, training_budget, Algorithm, ExperimentConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset(cycles: usize, lo: usize, hi: usize, seed: u64) -> Dataset {
    synthesize_dataset(&SynthSpec {
        cycles,
        tests_per_cycle: TestsPerCycle { min: lo, max: hi },
        feature_dim: 2,
        fail_rule: "f1>0.7".parse().unwrap(),
        noise: 0.1,
        noise_mode: NoiseMode::Flip,
        seed,
        history_len: 4,
    })
    .unwrap()
}

fn random_action(space: ActionSpace, rng: &mut ChaCha8Rng) -> Action {
    match space.n_discrete() {
        Some(n) => Action::Discrete(rng.random_range(0..n)),
        None => Action::Continuous(rng.random_range(0.0..=1.0)),
    }
}

fn flipped(cycle: &CiCycle) -> CiCycle {
    let mut c = cycle.clone();
    for r in &mut c.records {
        r.verdict = 1 - r.verdict;
        r.duration += 7.0;
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn optimal_ranking_respects_the_priority_predicate(seed in any::<u64>()) {
        for cycle in &dataset(6, 1, 25, seed).cycles {
            let ranking = optimal_ranking(cycle);
            prop_assert!(ranking.is_permutation_of(cycle));
            for w in ranking.ids().windows(2) {
                let (a, b) = (cycle.record(&w[0]).unwrap(), cycle.record(&w[1]).unwrap());
                prop_assert!(!(b.verdict > a.verdict));
                prop_assert!(!(b.verdict == a.verdict && b.exec_time < a.exec_time));
            }
        }
    }

    #[test]
    fn observations_ignore_the_current_verdict(seed in any::<u64>()) {
        for cycle in &dataset(5, 1, 10, seed).cycles {
            for (a, b) in cycle.records.iter().zip(&flipped(cycle).records) {
                prop_assert_eq!(a.observation(), b.observation());
            }
        }
    }

    #[test]
    fn random_episodes_are_well_formed(seed in any::<u64>()) {
        let ds = dataset(4, 1, 14, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for model in RankingModel::ALL {
            let mut env = make_env(model, ds.feature_dim, ds.max_tests);
            let space = env.action_space();
            for cycle in &ds.cycles {
                let mut obs = env.reset(cycle, Mode::Train, seed)?;
                let mut steps = 0;
                while !env.is_done() {
                    prop_assert_eq!(obs.len(), env.obs_dim());
                    let step = env.step(random_action(space, &mut rng))?;
                    prop_assert!((0.0..=1.0).contains(&step.reward), "{model}: reward {}", step.reward);
                    obs = step.obs;
                    steps += 1;
                }
                prop_assert!(env.ranking().unwrap().is_permutation_of(cycle));
                let k = cycle.len();
                match model {
                    // dummy picks cost a step; the default limit is ten per padded row
                    RankingModel::Listwise => prop_assert!(steps <= 10 * ds.max_tests),
                    RankingModel::Pointwise => prop_assert_eq!(steps, k),
                    RankingModel::PairwiseSelection => prop_assert_eq!(steps, k * k.saturating_sub(1) / 2),
                    RankingModel::PairwiseMerge => prop_assert!(steps <= MergeSortEnv::max_comparisons(k)),
                }
            }
        }
    }

    #[test]
    fn pairwise_oracles_sort_optimally(seed in any::<u64>()) {
        let ds = dataset(5, 1, 40, seed);
        for cycle in &ds.cycles {
            let want = optimal_ranking(cycle);
            prop_assert_eq!(&SelectionSortEnv::new(ds.feature_dim).sort_with_oracle(cycle, seed)?.ranking, &want);
            prop_assert_eq!(&MergeSortEnv::new(ds.feature_dim).sort_with_oracle(cycle, seed)?.ranking, &want);
        }
    }

    #[test]
    fn predict_observations_do_not_depend_on_verdicts(seed in any::<u64>()) {
        let ds = dataset(4, 2, 12, seed);
        for model in RankingModel::ALL {
            for cycle in &ds.cycles {
                let mut seen = Vec::new();
                for c in [cycle.clone(), flipped(cycle), predict_view(cycle)] {
                    let mut env = make_env(model, ds.feature_dim, ds.max_tests);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let space = env.action_space();
                    let mut trace = Vec::new();
                    run_policy_episode(env.as_mut(), &c, Mode::Predict, seed, |obs| {
                        trace.push(obs.to_vec());
                        random_action(space, &mut rng)
                    })?;
                    seen.push(trace);
                }
                prop_assert_eq!(&seen[0], &seen[1]);
                prop_assert_eq!(&seen[0], &seen[2]);
            }
        }
    }

    #[test]
    fn cle_is_complementary(
        a in proptest::collection::vec(0u8..5, 1..20),
        b in proptest::collection::vec(0u8..5, 1..20),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        prop_assert!((cle(&a, &b)? + cle(&b, &a)? - 1.0).abs() < 1e-12);
    }

    #[test]
    fn epsilon_decays_monotonically(budget in 1u64..100_000, steps in proptest::collection::vec(0u64..200_000, 2..30)) {
        let schedule = EpsilonSchedule::default();
        let mut steps = steps;
        steps.sort_unstable();
        let values: Vec<f64> = steps.iter().map(|&s| schedule.value(s, budget)).collect();
        prop_assert!(values.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(values.iter().all(|v| (0.05..=1.0).contains(v)));
        prop_assert_eq!(schedule.value(0, budget), 1.0);
        prop_assert_eq!(schedule.value(budget / 5 + 1, budget), 0.05);
    }

    #[test]
    fn budget_is_monotone_and_capped(n in 0usize..5000, cap in 1u64..2_000_000) {
        let b = training_budget(n, 200.0, cap);
        prop_assert!(b <= cap);
        prop_assert!(training_budget(n + 1, 200.0, cap) >= b);
    }

    #[test]
    fn baseline_experiments_are_deterministic(seed in any::<u64>(), data_seed in any::<u64>()) {
        let ds = dataset(8, 4, 12, data_seed);
        for algorithm in [Algorithm::Random, Algorithm::RecentFailure, Algorithm::Oracle] {
            let cfg = ExperimentConfig::new(RankingModel::Listwise, algorithm, seed);
            match (run_experiment(&ds, &cfg), run_experiment(&ds, &cfg)) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
                _ => prop_assert!(false, "runs disagree on success"),
            }
        }
    }
}
