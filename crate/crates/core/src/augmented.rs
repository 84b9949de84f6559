//! The budget-augmented MDP and value iteration restricted to feasible
//! actions.
//!
//! Augmented states are pairs `(s, k)` with `k` the remaining budget in
//! `0..=Δ`. A transition with damage `d` moves to `(s', k - d)`, or to an
//! absorbing `Failure` state when `k - d < 0`. A memory-one policy of the
//! original MDP is a stationary policy over these pairs.
//!
//! Knowing `k*` removes every action with `k*(s, a) > k` at `(s, k)`. Pairs
//! left without actions are dropped from the search altogether, and feasible
//! actions can never lead into them or into `Failure`.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::budget::{feasible_actions, BudgetError, BudgetTable};
use crate::model::Mdp;

/// Gap below which two action values count as tied.
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AugmentedError {
    #[error("no feasible action at start state {state} with budget {delta}")]
    Infeasible { state: usize, delta: u32 },
    #[error("discount must lie in (0, 1], got {0}")]
    InvalidDiscount(f64),
    #[error("start state {0} out of range")]
    StartOutOfRange(usize),
    #[error(transparent)]
    Budget(#[from] BudgetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AugmentedState {
    Inside { state: usize, budget: u32 },
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedTransition {
    pub target: AugmentedState,
    pub prob: f64,
    pub reward: f64,
    /// Set when the move overruns the budget.
    pub failure: bool,
}

/// `S × {0..=Δ}` plus a `Failure` sink, over a borrowed base model.
#[derive(Debug, Clone, Copy)]
pub struct AugmentedMdp<'m> {
    base: &'m Mdp,
    delta: u32,
}

pub fn build_augmented(mdp: &Mdp, delta: u32) -> AugmentedMdp<'_> {
    AugmentedMdp { base: mdp, delta }
}

impl<'m> AugmentedMdp<'m> {
    pub fn base(&self) -> &'m Mdp {
        self.base
    }

    pub fn delta(&self) -> u32 {
        self.delta
    }

    /// `|S| (Δ + 1) + 1`, counting `Failure`.
    pub fn n_states(&self) -> usize {
        self.n_pairs() + 1
    }

    /// `|S| (Δ + 1)`, the pairs without `Failure`.
    pub fn n_pairs(&self) -> usize {
        self.base.n_states() * (self.delta as usize + 1)
    }

    pub fn index(&self, s: usize, k: u32) -> usize {
        s * (self.delta as usize + 1) + k as usize
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        (0..self.base.n_states()).flat_map(move |s| (0..=self.delta).map(move |k| (s, k)))
    }

    pub fn transitions(&self, state: AugmentedState, a: usize) -> Vec<AugmentedTransition> {
        match state {
            AugmentedState::Failure => vec![AugmentedTransition {
                target: AugmentedState::Failure,
                prob: 1.0,
                reward: 0.0,
                failure: false,
            }],
            AugmentedState::Inside { state, budget } => self
                .base
                .transitions(state, a)
                .iter()
                .map(|t| {
                    let cost = u32::from(t.damage);
                    match budget.checked_sub(cost) {
                        Some(left) => AugmentedTransition {
                            target: AugmentedState::Inside { state: t.next, budget: left },
                            prob: t.prob,
                            reward: t.reward,
                            failure: false,
                        },
                        None => AugmentedTransition {
                            target: AugmentedState::Failure,
                            prob: t.prob,
                            reward: t.reward,
                            failure: true,
                        },
                    }
                })
                .collect(),
        }
    }
}

/// A deterministic memory-one policy: one action per `(s, k)`, or none
/// where no action is feasible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedPolicy {
    n_states: usize,
    delta: u32,
    choice: Vec<Option<usize>>,
}

impl AugmentedPolicy {
    pub fn new(n_states: usize, delta: u32, choice: Vec<Option<usize>>) -> Self {
        assert_eq!(choice.len(), n_states * (delta as usize + 1));
        AugmentedPolicy { n_states, delta, choice }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn delta(&self) -> u32 {
        self.delta
    }

    pub fn action(&self, s: usize, k: u32) -> Option<usize> {
        if s >= self.n_states || k > self.delta {
            return None;
        }
        self.choice[s * (self.delta as usize + 1) + k as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueIterationOptions {
    pub gamma: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ValueIterationOptions {
    fn default() -> Self {
        ValueIterationOptions {
            gamma: 1.0,
            tolerance: 1e-10,
            max_iterations: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueIterationOutcome {
    /// Indexed by [`AugmentedMdp::index`]; `None` for trimmed pairs.
    pub values: Vec<Option<f64>>,
    pub policy: AugmentedPolicy,
    pub iterations: usize,
    /// Largest change in the last sweep.
    pub residual: f64,
    pub converged: bool,
}

impl ValueIterationOutcome {
    pub fn value(&self, aug: &AugmentedMdp<'_>, s: usize, k: u32) -> Option<f64> {
        self.values[aug.index(s, k)]
    }
}

/// Value iteration over `(s, k)` where each pair maximizes only over
/// `{a : k*(s, a) <= k}`.
///
/// Sweeps are synchronous. Iteration stops once the largest change drops
/// below `tolerance`, or after `max_iterations` sweeps with `converged`
/// cleared. With `gamma = 1` convergence relies on feasible policies
/// reaching the terminal state.
pub fn trimmed_value_iteration(
    aug: &AugmentedMdp<'_>,
    k_star: &BudgetTable,
    start: usize,
    options: &ValueIterationOptions,
) -> Result<ValueIterationOutcome, AugmentedError> {
    let mdp = aug.base();
    k_star.check_dims(mdp)?;
    if !(options.gamma > 0.0 && options.gamma <= 1.0) {
        return Err(AugmentedError::InvalidDiscount(options.gamma));
    }
    if start >= mdp.n_states() {
        return Err(AugmentedError::StartOutOfRange(start));
    }
    if feasible_actions(k_star, start, aug.delta()).is_empty() {
        return Err(AugmentedError::Infeasible { state: start, delta: aug.delta() });
    }

    let feasible: Vec<Vec<usize>> = aug
        .pairs()
        .map(|(s, k)| feasible_actions(k_star, s, k))
        .collect();
    let mut values: Vec<Option<f64>> = feasible
        .iter()
        .map(|acts| if acts.is_empty() { None } else { Some(0.0) })
        .collect();

    let backup = |values: &[Option<f64>], s: usize, k: u32, a: usize| -> f64 {
        mdp.transitions(s, a)
            .iter()
            .map(|t| {
                let next = aug.index(t.next, k - u32::from(t.damage));
                let v = values[next].expect("feasible actions stay inside the feasible region");
                t.prob * (t.reward + options.gamma * v)
            })
            .sum()
    };
    let greedy = |values: &[Option<f64>], s: usize, k: u32, acts: &[usize]| -> (usize, f64) {
        let mut best = (acts[0], backup(values, s, k, acts[0]));
        for &a in &acts[1..] {
            let q = backup(values, s, k, a);
            if q > best.1 + TIE_TOLERANCE {
                best = (a, q);
            }
        }
        best
    };

    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < options.max_iterations {
        let mut next = values.clone();
        residual = 0.0;
        for (i, (s, k)) in aug.pairs().enumerate() {
            if feasible[i].is_empty() || mdp.is_terminal(s) {
                continue;
            }
            let (_, v) = greedy(&values, s, k, &feasible[i]);
            let old = values[i].unwrap_or(0.0);
            residual = f64::max(residual, libm::fabs(v - old));
            next[i] = Some(v);
        }
        values = next;
        iterations += 1;
        if residual < options.tolerance {
            break;
        }
    }

    let choice = aug
        .pairs()
        .enumerate()
        .map(|(i, (s, k))| {
            (!feasible[i].is_empty()).then(|| greedy(&values, s, k, &feasible[i]).0)
        })
        .collect();
    Ok(ValueIterationOutcome {
        values,
        policy: AugmentedPolicy::new(mdp.n_states(), aug.delta(), choice),
        iterations,
        residual,
        converged: residual < options.tolerance,
    })
}
