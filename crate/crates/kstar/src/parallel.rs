//! Episode batches on a rayon pool.
//!
//! Each episode reads its own seed substream and the statistics are folded
//! in episode order afterwards, so the result does not depend on the number
//! of threads and equals [`kstar_core::run_episodes`].

use kstar_core::{
    episode_seed, rollout, EpisodeStats, Mdp, Policy, SimError, StatsAccumulator, TrajectoryRecord,
};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParallelError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("could not start thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Same contract as [`kstar_core::run_episodes`]. `threads = 0` lets rayon
/// pick the thread count.
#[allow(clippy::too_many_arguments)]
pub fn run_episodes_parallel(
    mdp: &Mdp,
    policy: Policy<'_>,
    start: usize,
    delta: u32,
    n_episodes: u64,
    seed: u64,
    max_steps: usize,
    return_bin_width: f64,
    threads: usize,
) -> Result<EpisodeStats, ParallelError> {
    if n_episodes == 0 {
        return Err(SimError::InvalidParameter { name: "n_episodes", value: 0.0 }.into());
    }
    if !(return_bin_width > 0.0 && return_bin_width.is_finite()) {
        return Err(SimError::InvalidParameter { name: "return_bin_width", value: return_bin_width }.into());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let records: Vec<Result<TrajectoryRecord, SimError>> = pool.install(|| {
        (0..n_episodes)
            .into_par_iter()
            .map(|i| {
                rollout(mdp, policy, start, delta, episode_seed(seed, i), max_steps).map(|mut r| {
                    r.steps = Vec::new();
                    r
                })
            })
            .collect()
    });
    let mut acc = StatsAccumulator::new(return_bin_width);
    for record in records {
        acc.push(&record?);
    }
    Ok(acc.finish())
}
