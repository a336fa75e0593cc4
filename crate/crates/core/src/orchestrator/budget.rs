pub const DEFAULT_BUDGET_CAP: u64 = 1_000_000;
pub const DEFAULT_BUDGET_FACTOR: f64 = 200.0;
pub const DEFAULT_PLATEAU_WINDOW: usize = 100;

/// Training steps allowed for a cycle of `n` tests:
/// `min(floor(factor * n * log2 n), cap)`.
pub fn training_budget(n: usize, factor: f64, cap: u64) -> u64 {
    if n <= 1 {
        return 0;
    }
    let n = n as f64;
    let raw = (factor * n * n.log2()).floor();
    if raw >= cap as f64 {
        cap
    } else {
        raw as u64
    }
}

/// True when the running maximum of the episode rewards has not grown by
/// more than `min_delta` during the last `window` episodes.
pub fn plateau_reached(episode_rewards: &[f64], window: usize, min_delta: f64) -> bool {
    let Some((&first, rest)) = episode_rewards.split_first() else {
        return false;
    };
    let mut best = first;
    let mut stale = 0usize;
    for &r in rest {
        if r > best + min_delta {
            best = r;
            stale = 0;
        } else {
            stale += 1;
        }
    }
    stale >= window
}
