//! Minimal damage budgets for finite MDPs under probability-one damage
//! constraints.
//!
//! An episode must accrue at most `Δ` units of binary damage almost surely.
//! The minimal budget `k*(s, a)` is the smallest remaining budget from which
//! some memory-one policy (a policy over `(state, remaining budget)`) can
//! take `a` in `s` and never overrun it. This crate computes `k*` as the
//! least fixed point of the budget operator, learns it from a generative
//! sampler, searches for optimal feasible policies on the budget-augmented
//! MDP, and simulates episodes.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, parallel
//! simulation and the command-line tool live in the `kstar` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod augmented;
pub mod budget;
mod extended;
pub mod learning;
pub mod model;
pub mod rng;
pub mod safety_game;
pub mod simulate;

pub use augmented::{
    build_augmented, trimmed_value_iteration, AugmentedError, AugmentedMdp, AugmentedPolicy,
    AugmentedState, ValueIterationOptions, ValueIterationOutcome,
};
pub use budget::{
    apply_budget_operator, barrier, feasible_actions, solve_minimal_budget, unsafe_states,
    Barrier, BudgetError, BudgetIteration, BudgetTable,
};
pub use extended::Budget;
pub use learning::{
    build_empirical_kernel, is_consistent, required_samples, solve_from_samples,
    solve_with_sample_count,
    EmpiricalKernel, GenerativeSampler, KernelDims, LearnedBudget, LearningError, ModelSampler,
    SamplerError,
};
pub use model::{
    chain_mdp, random_mdp, validate_mdp, validate_mdp_with_floor, Mdp, MdpDescription, ModelError, RandomMdpConfig,
    SupportEntry, Transition, TransitionRecord,
};
pub use safety_game::safety_game_oracle;
pub use simulate::{
    episode_seed, expectation_constrained_policy, rollout, run_episodes, EpisodeStats, Policy,
    SimError, StationaryPolicy, StatsAccumulator, Step, TrajectoryRecord,
};
