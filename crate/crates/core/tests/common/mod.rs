//! Test-only reference computations. Nothing here calls the solver paths it
//! is used to check.

#![allow(dead_code)]

use kstar_core::{random_mdp, Mdp, RandomMdpConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random models with |S| in 2..=6 (terminal included), |A| in 1..=3,
/// support floor 0.1 and random damage flags.
pub fn general_model(seed: u64) -> Mdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
    let config = RandomMdpConfig {
        n_states: rng.random_range(2..=6),
        n_actions: rng.random_range(1..=3),
        support_floor: 0.1,
        max_successors: rng.random_range(1..=4),
        damage_prob: rng.random_range(0.05..0.7),
        always_exit: false,
        max_reward: 3,
    };
    random_mdp(&config, seed).unwrap()
}

/// Small models where every row can terminate, so every policy is proper.
pub fn proper_model(seed: u64, max_states: usize, max_actions: usize) -> Mdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
    let config = RandomMdpConfig {
        n_states: rng.random_range(2..=max_states),
        n_actions: rng.random_range(1..=max_actions),
        support_floor: 0.1,
        max_successors: 3,
        damage_prob: rng.random_range(0.1..0.6),
        always_exit: true,
        max_reward: 3,
    };
    random_mdp(&config, seed).unwrap()
}

/// Unrestricted value iteration on the base model.
pub fn plain_value_iteration(mdp: &Mdp, gamma: f64, tol: f64) -> Vec<f64> {
    let mut v = vec![0.0; mdp.n_states()];
    loop {
        let mut next = v.clone();
        let mut delta: f64 = 0.0;
        for s in 0..mdp.n_states() {
            if mdp.is_terminal(s) {
                continue;
            }
            let best = (0..mdp.n_actions())
                .map(|a| {
                    mdp.transitions(s, a)
                        .iter()
                        .map(|t| t.prob * (t.reward + gamma * v[t.next]))
                        .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - v[s]).abs());
            next[s] = best;
        }
        v = next;
        if delta < tol {
            return v;
        }
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        assert!(p.abs() > 1e-12, "singular system");
        for row in col + 1..n {
            let f = a[row][col] / p;
            if f != 0.0 {
                let (upper, lower) = a.split_at_mut(row);
                for (x, y) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                    *x -= f * y;
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Pairs `(s, k)` reachable from `(start, delta)` when any action in
/// `allowed(s, k)` may be taken. Failure moves are dropped.
pub fn reachable_pairs(
    mdp: &Mdp,
    start: usize,
    delta: u32,
    allowed: &dyn Fn(usize, u32) -> Vec<usize>,
) -> Vec<(usize, u32)> {
    let mut seen = vec![(start, delta)];
    let mut i = 0;
    while i < seen.len() {
        let (s, k) = seen[i];
        i += 1;
        if mdp.is_terminal(s) {
            continue;
        }
        for a in allowed(s, k) {
            for t in mdp.transitions(s, a) {
                if let Some(left) = k.checked_sub(u32::from(t.damage)) {
                    if !seen.contains(&(t.next, left)) {
                        seen.push((t.next, left));
                    }
                }
            }
        }
    }
    seen
}

/// Exact expected total reward of a deterministic memory-one policy from
/// `(start, delta)`, by solving the linear policy-evaluation equations.
/// Returns `None` if the policy can overrun the budget.
pub fn evaluate_memory_policy(
    mdp: &Mdp,
    start: usize,
    delta: u32,
    policy: &dyn Fn(usize, u32) -> usize,
) -> Option<f64> {
    let pairs = reachable_pairs(mdp, start, delta, &|s, k| vec![policy(s, k)]);
    let index = |s: usize, k: u32| pairs.iter().position(|&p| p == (s, k));
    let n = pairs.len();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for (i, &(s, k)) in pairs.iter().enumerate() {
        a[i][i] = 1.0;
        if mdp.is_terminal(s) {
            continue;
        }
        for t in mdp.transitions(s, policy(s, k)) {
            let left = k.checked_sub(u32::from(t.damage))?;
            let j = index(t.next, left).unwrap();
            a[i][j] -= t.prob;
            b[i] += t.prob * t.reward;
        }
    }
    Some(solve_linear(a, b)[0])
}

/// Best exact value from `(start, delta)` over every deterministic memory-one
/// policy that only uses actions from `allowed(s, k)`.
pub fn brute_force_best_value(
    mdp: &Mdp,
    start: usize,
    delta: u32,
    allowed: &dyn Fn(usize, u32) -> Vec<usize>,
) -> Option<f64> {
    let pairs: Vec<(usize, u32)> = reachable_pairs(mdp, start, delta, allowed)
        .into_iter()
        .filter(|&(s, _)| !mdp.is_terminal(s))
        .collect();
    let options: Vec<Vec<usize>> = pairs.iter().map(|&(s, k)| allowed(s, k)).collect();
    if options.iter().any(|o| o.is_empty()) {
        return None;
    }
    let mut choice = vec![0usize; pairs.len()];
    let mut best: Option<f64> = None;
    loop {
        let policy = |s: usize, k: u32| {
            pairs
                .iter()
                .position(|&p| p == (s, k))
                .map(|i| options[i][choice[i]])
                .unwrap_or(0)
        };
        if let Some(v) = evaluate_memory_policy(mdp, start, delta, &policy) {
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
        // Odometer increment over the option lists.
        let mut i = 0;
        loop {
            if i == choice.len() {
                return best;
            }
            choice[i] += 1;
            if choice[i] < options[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Plays `first` at `s`, then `argmin_a k(s', a)` (lowest index on ties),
/// and returns the total damage of the episode.
pub fn greedy_budget_episode(
    mdp: &Mdp,
    k_star: &kstar_core::BudgetTable,
    s: usize,
    first: usize,
    rng: &mut ChaCha8Rng,
    max_steps: usize,
) -> (u64, bool) {
    let mut state = s;
    let mut action = first;
    let mut damage = 0;
    for _ in 0..max_steps {
        if mdp.is_terminal(state) {
            return (damage, false);
        }
        let u: f64 = rng.random();
        let row = mdp.transitions(state, action);
        let mut acc = 0.0;
        let mut pick = row[row.len() - 1];
        for t in row {
            acc += t.prob;
            if u < acc {
                pick = *t;
                break;
            }
        }
        damage += u64::from(pick.damage);
        state = pick.next;
        action = k_star.argmin(state);
    }
    (damage, !mdp.is_terminal(state))
}
