//! The budget operator and its least fixed point `k*`.
//!
//! For a table `k` over state-action pairs the operator computes
//!
//! ```text
//! (T k)(s, a) = max over successors s' of (s, a) of [ 1_d(s, a, s') + min_a' k(s', a') ]
//! ```
//!
//! where `1_d(s, a, s')` is one when damage can accompany the move to `s'`.
//! Iterating from the all-zero table converges to the minimal budget `k*`.
//!
//! Values are kept in `ℕ ∪ {∞}` with a cap of `|S| + 1`. A finite `k*(s, a)`
//! is at most `|S|`: after the first move every damaging step lands in a
//! state with a strictly lower `min_a k*`, and there are only `|S|` states
//! to hold those levels. An entry reaching the cap is therefore infinite and
//! is stored as such, which also bounds the iteration.

use alloc::vec::Vec;

use thiserror::Error;

use crate::extended::Budget;
use crate::model::Mdp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BudgetError {
    #[error("budget table is {found_states}x{found_actions} (terminal {found_terminal}), model is {states}x{actions} (terminal {terminal})")]
    DimensionMismatch {
        states: usize,
        actions: usize,
        terminal: usize,
        found_states: usize,
        found_actions: usize,
        found_terminal: usize,
    },
    #[error("state index {0} out of range")]
    StateOutOfRange(usize),
    #[error("action index {0} out of range")]
    ActionOutOfRange(usize),
}

/// Outcome of the barrier query at `(s, k, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Barrier {
    /// Some memory-one policy keeps total future damage within `k` almost surely.
    Safe,
    /// Every policy exceeds `k` with positive probability.
    Unsafe,
}

/// A dense `(state, action) -> ℕ ∪ {∞}` table.
///
/// Tables produced by [`BudgetTable::zeros`], [`BudgetTable::filled`] and the
/// fixed-point iteration have all-zero terminal rows.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BudgetTable {
    n_states: usize,
    n_actions: usize,
    terminal: usize,
    cells: Vec<Budget>,
}

impl BudgetTable {
    /// Builds a table for `mdp` with entry `(s, a)` set to `f(s, a)`.
    pub fn from_fn(mdp: &Mdp, mut f: impl FnMut(usize, usize) -> Budget) -> BudgetTable {
        let (n_states, n_actions) = (mdp.n_states(), mdp.n_actions());
        let mut cells = Vec::with_capacity(n_states * n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                cells.push(f(s, a));
            }
        }
        BudgetTable {
            n_states,
            n_actions,
            terminal: mdp.terminal(),
            cells,
        }
    }

    pub fn zeros(mdp: &Mdp) -> BudgetTable {
        Self::filled(mdp, Budget::ZERO)
    }

    /// Every non-terminal entry set to `value`, terminal rows zero.
    pub fn filled(mdp: &Mdp, value: Budget) -> BudgetTable {
        Self::from_fn(mdp, |s, _| if mdp.is_terminal(s) { Budget::ZERO } else { value })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn terminal(&self) -> usize {
        self.terminal
    }

    /// Smallest value represented as infinite: `|S| + 1`.
    pub fn cap(&self) -> u32 {
        u32::try_from(self.n_states + 1).unwrap_or(u32::MAX)
    }

    pub fn get(&self, s: usize, a: usize) -> Budget {
        self.cells[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, value: Budget) {
        self.cells[s * self.n_actions + a] = value;
    }

    pub fn row(&self, s: usize) -> &[Budget] {
        &self.cells[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn min_over_actions(&self, s: usize) -> Budget {
        self.row(s).iter().copied().min().unwrap_or(Budget::Infinite)
    }

    /// Action with the smallest entry in state `s`, lowest index on ties.
    pub fn argmin(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, v) in row.iter().enumerate().skip(1) {
            if *v < row[best] {
                best = a;
            }
        }
        best
    }

    /// `(state, action, value)` for every entry in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Budget)> + '_ {
        let n_actions = self.n_actions;
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, v)| (i / n_actions, i % n_actions, *v))
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &BudgetTable) -> bool {
        self.cells.len() == other.cells.len()
            && self.cells.iter().zip(&other.cells).all(|(x, y)| x <= y)
    }

    /// Adds `c` to every entry, terminal rows included, saturating at the cap.
    pub fn shifted(&self, c: u32) -> BudgetTable {
        let cap = self.cap();
        let mut out = self.clone();
        for v in &mut out.cells {
            *v = v.add_capped(c, cap);
        }
        out
    }

    pub fn check_dims(&self, mdp: &Mdp) -> Result<(), BudgetError> {
        if self.n_states == mdp.n_states()
            && self.n_actions == mdp.n_actions()
            && self.terminal == mdp.terminal()
        {
            Ok(())
        } else {
            Err(BudgetError::DimensionMismatch {
                states: mdp.n_states(),
                actions: mdp.n_actions(),
                terminal: mdp.terminal(),
                found_states: self.n_states,
                found_actions: self.n_actions,
                found_terminal: self.terminal,
            })
        }
    }

    fn check_state(&self, s: usize) -> Result<(), BudgetError> {
        if s < self.n_states {
            Ok(())
        } else {
            Err(BudgetError::StateOutOfRange(s))
        }
    }
}

/// One synchronous application of the budget operator. `k` is unchanged.
pub fn apply_budget_operator(mdp: &Mdp, k: &BudgetTable) -> Result<BudgetTable, BudgetError> {
    k.check_dims(mdp)?;
    let cap = k.cap();
    let level: Vec<Budget> = (0..mdp.n_states()).map(|s| k.min_over_actions(s)).collect();
    Ok(BudgetTable::from_fn(mdp, |s, a| {
        mdp.support(s, a)
            .iter()
            .map(|e| level[e.next].add_capped(u32::from(e.damage_possible), cap))
            .max()
            .unwrap_or(Budget::ZERO)
    }))
}

/// Fixed-point budget iteration from the all-zero table.
///
/// Each call to [`Iterator::next`] performs one synchronous sweep and yields
/// the new iterate; iteration ends once a sweep leaves the table unchanged.
#[derive(Debug, Clone)]
pub struct BudgetIteration<'m> {
    mdp: &'m Mdp,
    current: BudgetTable,
    sweeps: usize,
    converged: bool,
}

impl<'m> BudgetIteration<'m> {
    pub fn new(mdp: &'m Mdp) -> Self {
        BudgetIteration {
            mdp,
            current: BudgetTable::zeros(mdp),
            sweeps: 0,
            converged: false,
        }
    }

    pub fn current(&self) -> &BudgetTable {
        &self.current
    }

    /// Operator applications so far, including the one that confirmed the
    /// fixed point.
    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn is_converged(&self) -> bool {
        self.converged
    }

    /// Runs to the fixed point; returns it with the number of sweeps used.
    pub fn run(mut self) -> (BudgetTable, usize) {
        while self.next().is_some() {}
        (self.current, self.sweeps)
    }
}

impl Iterator for BudgetIteration<'_> {
    type Item = BudgetTable;

    fn next(&mut self) -> Option<BudgetTable> {
        if self.converged {
            return None;
        }
        let next = apply_budget_operator(self.mdp, &self.current)
            .expect("iteration table is built from the same model");
        self.sweeps += 1;
        // Values only grow and are capped, so equality is reached in finitely many sweeps.
        self.converged = next == self.current;
        self.current = next;
        Some(self.current.clone())
    }
}

/// The minimal budget `k*` of `mdp`.
pub fn solve_minimal_budget(mdp: &Mdp) -> BudgetTable {
    BudgetIteration::new(mdp).run().0
}

/// Barrier at `(s, k, a)`: safe exactly when `k >= k*(s, a)`.
pub fn barrier(k_star: &BudgetTable, s: usize, k: u32, a: usize) -> Result<Barrier, BudgetError> {
    k_star.check_state(s)?;
    if a >= k_star.n_actions() {
        return Err(BudgetError::ActionOutOfRange(a));
    }
    Ok(if k_star.get(s, a).is_covered_by(k) {
        Barrier::Safe
    } else {
        Barrier::Unsafe
    })
}

/// Actions a feasible memory-one policy may take at `(s, k)`, ascending.
pub fn feasible_actions(k_star: &BudgetTable, s: usize, k: u32) -> Vec<usize> {
    k_star
        .row(s)
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_covered_by(k))
        .map(|(a, _)| a)
        .collect()
}

/// States where every action needs more than `delta`, ascending.
pub fn unsafe_states(k_star: &BudgetTable, delta: u32) -> Vec<usize> {
    (0..k_star.n_states())
        .filter(|&s| k_star.row(s).iter().all(|v| !v.is_covered_by(delta)))
        .collect()
}
