//! Reference computation of `k*` as a safety game on the budget-augmented
//! state space.
//!
//! The controller wins from `(s, k)` if it can keep the remaining budget
//! non-negative forever. The winning region is the greatest fixed point of
//! "some action sends every possible outcome to a winning state without
//! overrunning the budget", computed by elimination from the full space.
//! `k*(s, a)` is then the least `k` at which `a` itself is such an action.
//!
//! This shares no code with the operator iteration in [`crate::budget`] and
//! is used to cross-check it.

use alloc::vec;
use alloc::vec::Vec;

use crate::budget::BudgetTable;
use crate::extended::Budget;
use crate::model::Mdp;

struct Game<'m> {
    mdp: &'m Mdp,
    k_max: usize,
    // winning[s * (k_max + 1) + k]
    winning: Vec<bool>,
}

impl Game<'_> {
    fn is_winning(&self, s: usize, k: usize) -> bool {
        self.winning[s * (self.k_max + 1) + k]
    }

    /// Every joint outcome `(s', d)` of `(s, a)` keeps `k - d >= 0` and
    /// lands in the current winning region.
    fn action_keeps_safe(&self, s: usize, k: usize, a: usize) -> bool {
        self.mdp.transitions(s, a).iter().all(|t| {
            let cost = usize::from(t.damage);
            k >= cost && self.is_winning(t.next, k - cost)
        })
    }
}

/// `k*` computed by the safety game over budgets `0..=k_max`; entries with no
/// safe budget in that range are infinite.
///
/// With `k_max = |S|` the result matches [`crate::solve_minimal_budget`].
pub fn safety_game_oracle(mdp: &Mdp, k_max: u32) -> BudgetTable {
    let k_max = k_max as usize;
    let n_states = mdp.n_states();
    let mut game = Game {
        mdp,
        k_max,
        winning: vec![true; n_states * (k_max + 1)],
    };

    loop {
        let mut changed = false;
        for s in 0..n_states {
            for k in 0..=k_max {
                if !game.is_winning(s, k) {
                    continue;
                }
                let keep = (0..mdp.n_actions()).any(|a| game.action_keeps_safe(s, k, a));
                if !keep {
                    game.winning[s * (k_max + 1) + k] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    BudgetTable::from_fn(mdp, |s, a| {
        (0..=k_max)
            .find(|&k| game.action_keeps_safe(s, k, a))
            .map_or(Budget::Infinite, |k| Budget::Finite(k as u32))
    })
}
