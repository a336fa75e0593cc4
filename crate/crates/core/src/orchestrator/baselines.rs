use crate::dataset::{seeded_shuffle, CiCycle, RankedSequence};

/// Recency score of a verdict history (most recent first): entry `j` of a
/// window of `H` weighs `2^(H-1-j)`.
pub fn recency_score(history: &[u8]) -> u64 {
    let h = history.len();
    history
        .iter()
        .enumerate()
        .map(|(j, &v)| u64::from(v) << (h - 1 - j))
        .sum()
}

/// Recently failed tests first; ties by ascending mean execution time, then
/// test id.
pub fn recent_failure_heuristic(cycle: &CiCycle) -> RankedSequence {
    let mut order: Vec<usize> = (0..cycle.len()).collect();
    let recs = &cycle.records;
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&recs[a], &recs[b]);
        recency_score(&rb.history)
            .cmp(&recency_score(&ra.history))
            .then_with(|| ra.exec_time.total_cmp(&rb.exec_time))
            .then_with(|| ra.test_id.cmp(&rb.test_id))
    });
    RankedSequence::from_indices(cycle, &order)
}

pub fn random_ranking(cycle: &CiCycle, seed: u64) -> RankedSequence {
    let mut order: Vec<usize> = (0..cycle.len()).collect();
    seeded_shuffle(&mut order, seed);
    RankedSequence::from_indices(cycle, &order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::record;
    use crate::dataset::TestCaseRecord;

    fn with_history(id: &str, history: [u8; 4], exec_time: f64) -> TestCaseRecord {
        TestCaseRecord {
            history: history.to_vec(),
            ..record(id, 0, exec_time)
        }
    }

    #[test]
    fn last_cycle_failure_ranks_first() {
        let c = CiCycle::new(
            1,
            vec![
                with_history("a", [0; 4], 1.0),
                with_history("b", [1, 0, 0, 0], 9.0),
                with_history("c", [0; 4], 2.0),
            ],
        )
        .unwrap();
        assert_eq!(recent_failure_heuristic(&c).ids()[0], "b");
    }

    #[test]
    fn without_failures_orders_by_time() {
        let c = CiCycle::new(
            1,
            vec![
                with_history("x", [0; 4], 3.0),
                with_history("y", [0; 4], 1.0),
                with_history("z", [0; 4], 2.0),
                with_history("w", [0; 4], 1.0),
            ],
        )
        .unwrap();
        assert_eq!(recent_failure_heuristic(&c).ids(), ["w", "y", "z", "x"]);
    }

    #[test]
    fn recency_outweighs_older_failures() {
        assert_eq!(recency_score(&[1, 0, 0, 0]), 8);
        assert_eq!(recency_score(&[0, 1, 0, 0]), 4);
        assert_eq!(recency_score(&[0, 1, 1, 1]), 7);
        let c = CiCycle::new(
            1,
            vec![with_history("A", [0, 1, 0, 0], 1.0), with_history("B", [1, 0, 0, 0], 5.0)],
        )
        .unwrap();
        assert_eq!(recent_failure_heuristic(&c).ids(), ["B", "A"]);
    }

    #[test]
    fn random_ranking_is_seeded_permutation() {
        let c = CiCycle::new(1, (0..10).map(|i| record(&format!("t{i}"), 0, 1.0)).collect()).unwrap();
        let a = random_ranking(&c, 5);
        assert!(a.is_permutation_of(&c));
        assert_eq!(a, random_ranking(&c, 5));
        assert_ne!(a, random_ranking(&c, 6));
    }
}
