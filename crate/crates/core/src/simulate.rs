//! Monte-Carlo rollouts and per-episode damage/return statistics.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
use serde::Serialize;
use thiserror::Error;

use crate::augmented::AugmentedPolicy;
use crate::learning::sample_row;
use crate::model::Mdp;
use crate::rng;

const ROLLOUT_STREAM: u64 = 0x726f_6c6c;
const EPISODE_STREAM: u64 = 0x6570_6973;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("policy has no action at state {state} with remaining budget {budget}")]
    PolicyUndefined { state: usize, budget: i64 },
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("policy covers {found} states and {found_actions} actions, model has {states} and {actions}")]
    ShapeMismatch {
        states: usize,
        actions: usize,
        found: usize,
        found_actions: usize,
    },
}

/// A randomized policy that looks at the current state only.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPolicy {
    n_states: usize,
    n_actions: usize,
    // Row-major over (state, action).
    probs: Vec<f64>,
}

impl StationaryPolicy {
    /// `probs` is row-major over `(state, action)`; rows must sum to one.
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self, SimError> {
        if probs.len() != n_states * n_actions {
            return Err(SimError::InvalidParameter { name: "probs.len", value: probs.len() as f64 });
        }
        for row in probs.chunks(n_actions.max(1)) {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(SimError::InvalidParameter { name: "prob", value: row[0] });
            }
            let sum: f64 = row.iter().sum();
            if libm::fabs(sum - 1.0) > 1e-9 {
                return Err(SimError::InvalidParameter { name: "row sum", value: sum });
            }
        }
        Ok(StationaryPolicy { n_states, n_actions, probs })
    }

    /// Always plays `actions[s]` in state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self, SimError> {
        let mut probs = alloc::vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(SimError::InvalidParameter { name: "action", value: a as f64 });
            }
            probs[s * n_actions + a] = 1.0;
        }
        Self::new(actions.len(), n_actions, probs)
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    fn sample<R: RngCore + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        let row = &self.probs[s * self.n_actions..(s + 1) * self.n_actions];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (a, &p) in row.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = a;
                if u < acc {
                    return a;
                }
            }
        }
        last
    }
}

/// The controller driving a rollout.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'p> {
    /// Deterministic in `(state, remaining budget)`.
    Memory(&'p AugmentedPolicy),
    /// Randomized in the state only; ignores the budget.
    Stationary(&'p StationaryPolicy),
}

impl Policy<'_> {
    fn check_shape(&self, mdp: &Mdp) -> Result<(), SimError> {
        let (found, found_actions) = match self {
            Policy::Memory(p) => (p.n_states(), mdp.n_actions()),
            Policy::Stationary(p) => (p.n_states, p.n_actions),
        };
        if found != mdp.n_states() || found_actions != mdp.n_actions() {
            return Err(SimError::ShapeMismatch {
                states: mdp.n_states(),
                actions: mdp.n_actions(),
                found,
                found_actions,
            });
        }
        Ok(())
    }

    fn act<R: RngCore + ?Sized>(&self, s: usize, budget: i64, rng: &mut R) -> Result<usize, SimError> {
        match self {
            Policy::Memory(p) => u32::try_from(budget)
                .ok()
                .and_then(|k| p.action(s, k))
                .ok_or(SimError::PolicyUndefined { state: s, budget }),
            Policy::Stationary(p) => Ok(p.sample(s, rng)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub next: usize,
    pub reward: f64,
    pub damage: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub steps: Vec<Step>,
    pub total_return: f64,
    pub total_damage: u64,
    /// The step limit was hit before reaching the terminal state.
    pub truncated: bool,
}

/// Simulates one episode from `start` with initial budget `delta`.
///
/// The remaining budget follows `K_{t+1} = K_t - D_{t+1}` and may go
/// negative under a stationary policy; a memory policy asked to act at a
/// negative budget fails with `PolicyUndefined`.
pub fn rollout(
    mdp: &Mdp,
    policy: Policy<'_>,
    start: usize,
    delta: u32,
    seed: u64,
    max_steps: usize,
) -> Result<TrajectoryRecord, SimError> {
    if max_steps == 0 {
        return Err(SimError::InvalidParameter { name: "max_steps", value: 0.0 });
    }
    if start >= mdp.n_states() {
        return Err(SimError::InvalidParameter { name: "start", value: start as f64 });
    }
    policy.check_shape(mdp)?;
    let mut rng = rng::substream(seed, &[ROLLOUT_STREAM]);
    let mut steps = Vec::new();
    let mut total_return = 0.0;
    let mut total_damage = 0u64;
    let mut state = start;
    let mut budget = i64::from(delta);
    while !mdp.is_terminal(state) && steps.len() < max_steps {
        let action = policy.act(state, budget, &mut rng)?;
        let t = *sample_row(mdp.transitions(state, action), &mut rng)
            .expect("validated rows are non-empty");
        steps.push(Step {
            state,
            action,
            next: t.next,
            reward: t.reward,
            damage: t.damage,
        });
        total_return += t.reward;
        total_damage += u64::from(t.damage);
        budget -= i64::from(t.damage);
        state = t.next;
    }
    Ok(TrajectoryRecord {
        steps,
        total_return,
        total_damage,
        truncated: !mdp.is_terminal(state),
    })
}

/// Seed of episode `index` in a batch seeded with `seed`.
pub fn episode_seed(seed: u64, index: u64) -> u64 {
    rng::derive_seed(seed, &[EPISODE_STREAM, index])
}

/// Summary of a batch of episodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeStats {
    pub n_episodes: u64,
    /// Total damage -> number of episodes.
    pub damage_histogram: BTreeMap<u64, u64>,
    /// Return bin index -> number of episodes; bin `i` holds returns that
    /// round to `i * return_bin_width`.
    pub return_histogram: BTreeMap<i64, u64>,
    pub return_bin_width: f64,
    pub mean_return: f64,
    pub mean_damage: f64,
    /// Sample variances (`n - 1` denominator).
    pub var_return: f64,
    pub var_damage: f64,
    pub min_return: f64,
    pub max_return: f64,
    pub min_damage: u64,
    pub max_damage: u64,
    pub truncated: u64,
}

impl EpisodeStats {
    pub fn stderr_return(&self) -> f64 {
        libm::sqrt(self.var_return / self.n_episodes as f64)
    }

    pub fn stderr_damage(&self) -> f64 {
        libm::sqrt(self.var_damage / self.n_episodes as f64)
    }

    pub fn bin_value(&self, bin: i64) -> f64 {
        bin as f64 * self.return_bin_width
    }

    /// Episodes whose total damage exceeds `limit`.
    pub fn episodes_above(&self, limit: u64) -> u64 {
        self.damage_histogram.range(limit + 1..).map(|(_, c)| c).sum()
    }
}

/// Order-sensitive accumulator behind [`EpisodeStats`].
#[derive(Debug, Clone)]
pub struct StatsAccumulator {
    stats: EpisodeStats,
    // Welford running sums of squared deviations.
    m2_return: f64,
    m2_damage: f64,
}

impl StatsAccumulator {
    pub fn new(return_bin_width: f64) -> Self {
        StatsAccumulator {
            stats: EpisodeStats {
                n_episodes: 0,
                damage_histogram: BTreeMap::new(),
                return_histogram: BTreeMap::new(),
                return_bin_width,
                mean_return: 0.0,
                mean_damage: 0.0,
                var_return: 0.0,
                var_damage: 0.0,
                min_return: f64::INFINITY,
                max_return: f64::NEG_INFINITY,
                min_damage: u64::MAX,
                max_damage: 0,
                truncated: 0,
            },
            m2_return: 0.0,
            m2_damage: 0.0,
        }
    }

    pub fn push(&mut self, record: &TrajectoryRecord) {
        let s = &mut self.stats;
        s.n_episodes += 1;
        let n = s.n_episodes as f64;
        let r = record.total_return;
        let d = record.total_damage;

        *s.damage_histogram.entry(d).or_default() += 1;
        let bin = libm::round(r / s.return_bin_width) as i64;
        *s.return_histogram.entry(bin).or_default() += 1;

        let dr = r - s.mean_return;
        s.mean_return += dr / n;
        self.m2_return += dr * (r - s.mean_return);
        let dd = d as f64 - s.mean_damage;
        s.mean_damage += dd / n;
        self.m2_damage += dd * (d as f64 - s.mean_damage);

        s.min_return = s.min_return.min(r);
        s.max_return = s.max_return.max(r);
        s.min_damage = s.min_damage.min(d);
        s.max_damage = s.max_damage.max(d);
        s.truncated += u64::from(record.truncated);
    }

    pub fn finish(mut self) -> EpisodeStats {
        let n = self.stats.n_episodes;
        if n > 1 {
            self.stats.var_return = self.m2_return / (n - 1) as f64;
            self.stats.var_damage = self.m2_damage / (n - 1) as f64;
        }
        self.stats
    }
}

/// Runs `n_episodes` rollouts, episode `i` seeded with [`episode_seed`]`(seed, i)`.
#[allow(clippy::too_many_arguments)]
pub fn run_episodes(
    mdp: &Mdp,
    policy: Policy<'_>,
    start: usize,
    delta: u32,
    n_episodes: u64,
    seed: u64,
    max_steps: usize,
    return_bin_width: f64,
) -> Result<EpisodeStats, SimError> {
    if n_episodes == 0 {
        return Err(SimError::InvalidParameter { name: "n_episodes", value: 0.0 });
    }
    if !(return_bin_width > 0.0 && return_bin_width.is_finite()) {
        return Err(SimError::InvalidParameter { name: "return_bin_width", value: return_bin_width });
    }
    let mut acc = StatsAccumulator::new(return_bin_width);
    for i in 0..n_episodes {
        let record = rollout(mdp, policy, start, delta, episode_seed(seed, i), max_steps)?;
        acc.push(&record);
    }
    Ok(acc.finish())
}

/// The optimal stationary policy on the chain MDP under the expectation
/// constraint `E[total damage] <= c`: `left` with probability
/// `c / (p_damage + c)`, `right` otherwise.
pub fn expectation_constrained_policy(c: f64, p_damage: f64) -> Result<StationaryPolicy, SimError> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(SimError::InvalidParameter { name: "c", value: c });
    }
    if !(p_damage > 0.0 && p_damage <= 1.0) {
        return Err(SimError::InvalidParameter { name: "p_damage", value: p_damage });
    }
    let left = c / (p_damage + c);
    // Rows: circle, square; columns: left, right.
    StationaryPolicy::new(2, 2, alloc::vec![left, 1.0 - left, 0.0, 1.0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augmented::{build_augmented, trimmed_value_iteration, ValueIterationOptions};
    use crate::budget::solve_minimal_budget;
    use crate::model::chain_mdp;

    fn optimal_policy(mdp: &Mdp, delta: u32) -> AugmentedPolicy {
        let k = solve_minimal_budget(mdp);
        let aug = build_augmented(mdp, delta);
        trimmed_value_iteration(&aug, &k, 0, &ValueIterationOptions::default())
            .unwrap()
            .policy
    }

    #[test]
    fn assured_policy_on_deterministic_chain() {
        let mdp = chain_mdp(1.0).unwrap();
        let policy = optimal_policy(&mdp, 5);
        let rec = rollout(&mdp, Policy::Memory(&policy), 0, 5, 3, 100_000).unwrap();
        assert_eq!(rec.total_damage, 5);
        assert_eq!(rec.total_return, 5.0);
        assert_eq!(rec.steps.len(), 6);
        assert!(!rec.truncated);
        assert_eq!(rec.steps.last().unwrap().next, mdp.terminal());
    }

    #[test]
    fn always_right() {
        let mdp = chain_mdp(1.0).unwrap();
        let right = StationaryPolicy::deterministic(2, &[1, 1]).unwrap();
        let rec = rollout(&mdp, Policy::Stationary(&right), 0, 5, 0, 10).unwrap();
        assert_eq!((rec.total_damage, rec.total_return, rec.steps.len()), (0, 0.0, 1));
    }

    #[test]
    fn assured_policy_on_stochastic_chain() {
        let mdp = chain_mdp(0.6).unwrap();
        let policy = optimal_policy(&mdp, 5);
        for seed in 0..200 {
            let rec = rollout(&mdp, Policy::Memory(&policy), 0, 5, seed, 100_000).unwrap();
            assert!(rec.total_damage <= 5);
            assert!(rec.total_return >= 5.0);
            assert_eq!(rec.total_return, rec.steps.iter().map(|s| s.reward).sum::<f64>());
        }
    }

    #[test]
    fn truncation_is_flagged() {
        let mdp = chain_mdp(1.0).unwrap();
        let left = StationaryPolicy::deterministic(2, &[0, 0]).unwrap();
        let rec = rollout(&mdp, Policy::Stationary(&left), 0, 0, 0, 7).unwrap();
        assert!(rec.truncated);
        assert_eq!(rec.steps.len(), 7);
        assert_eq!(rec.total_damage, 7);
    }

    #[test]
    fn memory_policy_gaps_are_errors() {
        let mdp = chain_mdp(1.0).unwrap();
        let empty = AugmentedPolicy::new(2, 1, alloc::vec![None; 4]);
        assert_eq!(
            rollout(&mdp, Policy::Memory(&empty), 0, 1, 0, 10),
            Err(SimError::PolicyUndefined { state: 0, budget: 1 })
        );
        assert!(rollout(&mdp, Policy::Memory(&empty), 0, 1, 0, 0).is_err());
    }

    #[test]
    fn expectation_policy_probabilities() {
        let p = expectation_constrained_policy(0.0, 1.0).unwrap();
        assert_eq!((p.prob(0, 0), p.prob(0, 1)), (0.0, 1.0));
        let p = expectation_constrained_policy(5.0, 1.0).unwrap();
        assert!((p.prob(0, 0) - 5.0 / 6.0).abs() < 1e-15);
        let p = expectation_constrained_policy(5.0, 0.6).unwrap();
        assert!((p.prob(0, 0) - 5.0 / 5.6).abs() < 1e-15);
        assert!(expectation_constrained_policy(-1.0, 0.6).is_err());
        assert!(expectation_constrained_policy(1.0, 0.0).is_err());
    }

    #[test]
    fn zero_tolerance_baseline_never_damages() {
        let mdp = chain_mdp(1.0).unwrap();
        let p = expectation_constrained_policy(0.0, 1.0).unwrap();
        let stats = run_episodes(&mdp, Policy::Stationary(&p), 0, 5, 500, 1, 1000, 1.0).unwrap();
        assert_eq!(stats.damage_histogram.get(&0), Some(&500));
    }

    #[test]
    fn stats_are_deterministic_and_consistent() {
        let mdp = chain_mdp(0.6).unwrap();
        let p = expectation_constrained_policy(3.0, 0.6).unwrap();
        let a = run_episodes(&mdp, Policy::Stationary(&p), 0, 5, 2000, 11, 100_000, 1.0).unwrap();
        let b = run_episodes(&mdp, Policy::Stationary(&p), 0, 5, 2000, 11, 100_000, 1.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.damage_histogram.values().sum::<u64>(), 2000);
        assert_eq!(a.return_histogram.values().sum::<u64>(), 2000);
        let c = run_episodes(&mdp, Policy::Stationary(&p), 0, 5, 2000, 12, 100_000, 1.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bad_batch_parameters() {
        let mdp = chain_mdp(1.0).unwrap();
        let p = expectation_constrained_policy(1.0, 1.0).unwrap();
        assert!(run_episodes(&mdp, Policy::Stationary(&p), 0, 5, 0, 0, 10, 1.0).is_err());
        assert!(run_episodes(&mdp, Policy::Stationary(&p), 0, 5, 1, 0, 10, 0.0).is_err());
        let wrong = StationaryPolicy::deterministic(3, &[0, 0, 0]).unwrap();
        assert!(matches!(
            rollout(&mdp, Policy::Stationary(&wrong), 0, 5, 0, 10),
            Err(SimError::ShapeMismatch { .. })
        ));
    }
}
