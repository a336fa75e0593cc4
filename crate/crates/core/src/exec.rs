//! Batch execution of independent jobs.
//!
//! With the `parallel` feature (on by default) [`map`] spreads jobs over a
//! rayon pool of `jobs` threads. Without it, or with `jobs == 1`, jobs run
//! one after another. Results always come back in input order, so the
//! outcome does not depend on the schedule.

pub fn map_sequential<T, R>(items: &[T], f: impl Fn(&T) -> R) -> Vec<R> {
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_parallel<T, R>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync + Send) -> Vec<R>
where
    T: Sync,
    R: Send,
{
    use rayon::prelude::*;
    let run = || items.par_iter().map(&f).collect();
    if jobs == 0 {
        return run();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(run),
        Err(e) => {
            log::warn!("falling back to the global thread pool: {e}");
            run()
        }
    }
}

/// Runs `f` on every item using up to `jobs` threads (0 = one per core).
pub fn map<T, R>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync + Send) -> Vec<R>
where
    T: Sync,
    R: Send,
{
    #[cfg(feature = "parallel")]
    if jobs != 1 {
        return map_parallel(items, jobs, f);
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
    map_sequential(items, f)
}
