//! Finite tabular MDPs with a binary damage signal.
//!
//! States and actions are named by strings in the serialized form and by
//! dense indices everywhere else. The kernel is joint over `(s', d)`, and
//! each kernel entry carries a deterministic reward.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

/// Allowed deviation of a `(s, a)` row sum from one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Smallest probability accepted for an explicit kernel entry.
pub const MIN_ENTRY_PROBABILITY: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("probabilities of ({state}, {action}) sum to {sum}, expected 1")]
    ProbabilityNotNormalized {
        state: String,
        action: String,
        sum: f64,
    },
    #[error("terminal state {0} must self-loop with probability 1, damage 0 and reward 0")]
    TerminalNotAbsorbing(String),
    #[error("terminal state is unreachable from state {0}")]
    TerminalUnreachable(String),
    #[error("duplicate entry ({state}, {action}) -> ({next}, d={damage})")]
    DuplicateEntry {
        state: String,
        action: String,
        next: String,
        damage: u8,
    },
    #[error("unknown identifier {0}")]
    UnknownIdentifier(String),
    #[error("identifier {0} is declared twice")]
    DuplicateIdentifier(String),
    #[error("model must declare at least one state and one action")]
    Empty,
    #[error("invalid transition ({state}, {action}) -> {next}: {reason}")]
    InvalidTransition {
        state: String,
        action: String,
        next: String,
        reason: String,
    },
    #[error("probability {prob} of ({state}, {action}) -> ({next}, d={damage}) is below the support floor {floor}")]
    BelowSupportFloor {
        state: String,
        action: String,
        next: String,
        damage: u8,
        prob: f64,
        floor: f64,
    },
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
}

/// One explicit `(s', d)` outcome of a state-action pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next: usize,
    pub damage: bool,
    pub prob: f64,
    pub reward: f64,
}

/// Aggregated view of the successor `next` of a state-action pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportEntry {
    pub next: usize,
    /// Whether `(next, d = 1)` has positive probability.
    pub damage_possible: bool,
    /// Total probability of reaching `next`, summed over the damage bit.
    pub prob_mass: f64,
}

/// Serialized form of a transition, one line of the `transitions` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub s: String,
    pub a: String,
    pub s_next: String,
    pub d: u8,
    pub p: f64,
    pub r: f64,
}

/// An unvalidated model as read from a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpDescription {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub terminal: String,
    pub transitions: Vec<TransitionRecord>,
}

/// A validated MDP. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    states: Vec<String>,
    actions: Vec<String>,
    terminal: usize,
    // Row-major over (state, action); each row sorted by (next, damage).
    kernel: Vec<Vec<Transition>>,
}

impl Mdp {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn terminal(&self) -> usize {
        self.terminal
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        s == self.terminal
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn action_names(&self) -> &[String] {
        &self.actions
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.states[s]
    }

    pub fn action_name(&self, a: usize) -> &str {
        &self.actions[a]
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|n| n == name)
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|n| n == name)
    }

    /// Kernel entries of `(s, a)`, sorted by `(next, damage)`.
    pub fn transitions(&self, s: usize, a: usize) -> &[Transition] {
        &self.kernel[s * self.actions.len() + a]
    }

    /// Probability of the joint outcome `(next, damage)` from `(s, a)`.
    pub fn prob(&self, s: usize, a: usize, next: usize, damage: bool) -> f64 {
        self.transitions(s, a)
            .iter()
            .find(|t| t.next == next && t.damage == damage)
            .map_or(0.0, |t| t.prob)
    }

    /// Successors of `(s, a)` with positive mass, sorted by state index.
    pub fn support(&self, s: usize, a: usize) -> Vec<SupportEntry> {
        let mut out: Vec<SupportEntry> = Vec::new();
        // Rows are sorted by next, so equal successors are adjacent.
        for t in self.transitions(s, a) {
            match out.last_mut() {
                Some(last) if last.next == t.next => {
                    last.damage_possible |= t.damage;
                    last.prob_mass += t.prob;
                }
                _ => out.push(SupportEntry {
                    next: t.next,
                    damage_possible: t.damage,
                    prob_mass: t.prob,
                }),
            }
        }
        out
    }

    /// Serializable description; validating it yields an identical model.
    pub fn to_description(&self) -> MdpDescription {
        let mut transitions = Vec::new();
        for s in 0..self.n_states() {
            for a in 0..self.n_actions() {
                for t in self.transitions(s, a) {
                    transitions.push(TransitionRecord {
                        s: self.states[s].clone(),
                        a: self.actions[a].clone(),
                        s_next: self.states[t.next].clone(),
                        d: u8::from(t.damage),
                        p: t.prob,
                        r: t.reward,
                    });
                }
            }
        }
        MdpDescription {
            states: self.states.clone(),
            actions: self.actions.clone(),
            terminal: self.states[self.terminal].clone(),
            transitions,
        }
    }

    /// Builds a model without normalization or reachability checks.
    ///
    /// Used for surrogate models assembled from sampled counts, where a
    /// partially observed support may strand states.
    pub(crate) fn from_rows_unchecked(
        states: Vec<String>,
        actions: Vec<String>,
        terminal: usize,
        mut kernel: Vec<Vec<Transition>>,
    ) -> Mdp {
        for row in &mut kernel {
            sort_row(row);
        }
        Mdp {
            states,
            actions,
            terminal,
            kernel,
        }
    }
}

fn sort_row(row: &mut [Transition]) {
    row.sort_by_key(|t| (t.next, t.damage));
}

fn index_names(names: &[String]) -> Result<BTreeMap<&str, usize>, ModelError> {
    let mut index = BTreeMap::new();
    for (i, name) in names.iter().enumerate() {
        if index.insert(name.as_str(), i).is_some() {
            return Err(ModelError::DuplicateIdentifier(name.clone()));
        }
    }
    Ok(index)
}

fn lookup(index: &BTreeMap<&str, usize>, name: &str) -> Result<usize, ModelError> {
    index
        .get(name)
        .copied()
        .ok_or_else(|| ModelError::UnknownIdentifier(name.to_string()))
}

/// Validates a parsed description.
pub fn validate_mdp(raw: &MdpDescription) -> Result<Mdp, ModelError> {
    validate_mdp_with_floor(raw, None)
}

/// Validates a parsed description, additionally requiring every explicit
/// probability to be at least `floor` when one is given.
pub fn validate_mdp_with_floor(raw: &MdpDescription, floor: Option<f64>) -> Result<Mdp, ModelError> {
    if raw.states.is_empty() || raw.actions.is_empty() {
        return Err(ModelError::Empty);
    }
    let state_index = index_names(&raw.states)?;
    let action_index = index_names(&raw.actions)?;
    let terminal = lookup(&state_index, &raw.terminal)?;
    let n_actions = raw.actions.len();

    let mut kernel: Vec<Vec<Transition>> = vec![Vec::new(); raw.states.len() * n_actions];
    let mut seen = BTreeSet::new();
    for rec in &raw.transitions {
        let s = lookup(&state_index, &rec.s)?;
        let a = lookup(&action_index, &rec.a)?;
        let next = lookup(&state_index, &rec.s_next)?;
        let invalid = |reason: &str| ModelError::InvalidTransition {
            state: rec.s.clone(),
            action: rec.a.clone(),
            next: rec.s_next.clone(),
            reason: reason.to_string(),
        };
        if rec.d > 1 {
            return Err(invalid("damage must be 0 or 1"));
        }
        if !rec.p.is_finite() || rec.p > 1.0 + NORMALIZATION_TOLERANCE {
            return Err(invalid("probability must lie in (0, 1]"));
        }
        if rec.p < MIN_ENTRY_PROBABILITY {
            return Err(invalid("probability is below 1e-12"));
        }
        if !rec.r.is_finite() {
            return Err(invalid("reward must be finite"));
        }
        if let Some(floor) = floor {
            if rec.p < floor - NORMALIZATION_TOLERANCE {
                return Err(ModelError::BelowSupportFloor {
                    state: rec.s.clone(),
                    action: rec.a.clone(),
                    next: rec.s_next.clone(),
                    damage: rec.d,
                    prob: rec.p,
                    floor,
                });
            }
        }
        if !seen.insert((s, a, next, rec.d)) {
            return Err(ModelError::DuplicateEntry {
                state: rec.s.clone(),
                action: rec.a.clone(),
                next: rec.s_next.clone(),
                damage: rec.d,
            });
        }
        if s == terminal {
            let absorbing = next == terminal
                && rec.d == 0
                && libm::fabs(rec.p - 1.0) <= NORMALIZATION_TOLERANCE
                && rec.r == 0.0;
            if !absorbing {
                return Err(ModelError::TerminalNotAbsorbing(raw.terminal.clone()));
            }
            // Materialized below with an exact probability of one.
            continue;
        }
        kernel[s * n_actions + a].push(Transition {
            next,
            damage: rec.d == 1,
            prob: rec.p,
            reward: rec.r,
        });
    }

    for a in 0..n_actions {
        kernel[terminal * n_actions + a] = vec![Transition {
            next: terminal,
            damage: false,
            prob: 1.0,
            reward: 0.0,
        }];
    }

    for s in 0..raw.states.len() {
        for a in 0..n_actions {
            let row = &mut kernel[s * n_actions + a];
            let sum: f64 = row.iter().map(|t| t.prob).sum();
            if libm::fabs(sum - 1.0) > NORMALIZATION_TOLERANCE {
                return Err(ModelError::ProbabilityNotNormalized {
                    state: raw.states[s].clone(),
                    action: raw.actions[a].clone(),
                    sum,
                });
            }
            sort_row(row);
        }
    }

    let mdp = Mdp {
        states: raw.states.clone(),
        actions: raw.actions.clone(),
        terminal,
        kernel,
    };
    if let Some(s) = first_state_without_exit(&mdp) {
        return Err(ModelError::TerminalUnreachable(mdp.states[s].clone()));
    }
    Ok(mdp)
}

/// Lowest-index state with no support path to the terminal state under any
/// choice of actions.
fn first_state_without_exit(mdp: &Mdp) -> Option<usize> {
    let n = mdp.n_states();
    let mut predecessors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            for t in mdp.transitions(s, a) {
                predecessors[t.next].push(s);
            }
        }
    }
    let mut reaches = vec![false; n];
    reaches[mdp.terminal] = true;
    let mut queue = VecDeque::from([mdp.terminal]);
    while let Some(s) = queue.pop_front() {
        for &p in &predecessors[s] {
            if !reaches[p] {
                reaches[p] = true;
                queue.push_back(p);
            }
        }
    }
    reaches.iter().position(|r| !r)
}

/// The two-state counterexample MDP.
///
/// States `circle` (index 0) and `square` (index 1, terminal); actions
/// `left` (0) and `right` (1). `left` stays at `circle` with reward 1 and
/// damage with probability `p_damage`; `right` moves to `square` with no
/// reward and no damage.
pub fn chain_mdp(p_damage: f64) -> Result<Mdp, ModelError> {
    if !(p_damage > 0.0 && p_damage <= 1.0) {
        return Err(ModelError::InvalidProbability(p_damage));
    }
    let record = |a: &str, next: &str, d: u8, p: f64, r: f64| TransitionRecord {
        s: "circle".to_string(),
        a: a.to_string(),
        s_next: next.to_string(),
        d,
        p,
        r,
    };
    let mut transitions = vec![record("left", "circle", 1, p_damage, 1.0)];
    if p_damage < 1.0 {
        transitions.push(record("left", "circle", 0, 1.0 - p_damage, 1.0));
    }
    transitions.push(record("right", "square", 0, 1.0, 0.0));
    validate_mdp(&MdpDescription {
        states: vec!["circle".to_string(), "square".to_string()],
        actions: vec!["left".to_string(), "right".to_string()],
        terminal: "square".to_string(),
        transitions,
    })
}

/// Shape of a seeded random model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomMdpConfig {
    /// Number of states, including the terminal state (always the last).
    pub n_states: usize,
    pub n_actions: usize,
    /// Every explicit probability is at least this value.
    pub support_floor: f64,
    /// Upper bound on distinct successors per state-action pair.
    pub max_successors: usize,
    /// Chance that a successor carries the damage flag.
    pub damage_prob: f64,
    /// Force a terminal outcome into every row, which makes every policy
    /// terminate almost surely.
    pub always_exit: bool,
    /// Rewards are integers drawn from `0..=max_reward`.
    pub max_reward: u32,
}

impl Default for RandomMdpConfig {
    fn default() -> Self {
        RandomMdpConfig {
            n_states: 5,
            n_actions: 2,
            support_floor: 0.1,
            max_successors: 3,
            damage_prob: 0.3,
            always_exit: false,
            max_reward: 3,
        }
    }
}

const RANDOM_MODEL_STREAM: u64 = 0x6d6f_6465_6c00;

/// Draws a valid random model; deterministic in `seed`.
pub fn random_mdp(config: &RandomMdpConfig, seed: u64) -> Result<Mdp, ModelError> {
    if config.n_states == 0 || config.n_actions == 0 {
        return Err(ModelError::Empty);
    }
    let floor = config.support_floor;
    if !(floor > 0.0 && floor <= 1.0) {
        return Err(ModelError::InvalidProbability(floor));
    }
    if !(0.0..=1.0).contains(&config.damage_prob) {
        return Err(ModelError::InvalidProbability(config.damage_prob));
    }
    let mut rng = rng::substream(seed, &[RANDOM_MODEL_STREAM]);
    let n = config.n_states;
    let terminal = n - 1;
    let states: Vec<String> = (0..n)
        .map(|i| if i == terminal { "T".to_string() } else { format!("s{i}") })
        .collect();
    let actions: Vec<String> = (0..config.n_actions).map(|i| format!("a{i}")).collect();
    let max_entries = ((1.0 / floor + 1e-9) as usize).max(1);

    loop {
        let mut transitions = Vec::new();
        for s in 0..terminal {
            for action in &actions {
                let mut successors: Vec<usize> = (0..n).collect();
                successors.shuffle(&mut rng);
                let width = rng.random_range(1..=config.max_successors.clamp(1, n));
                successors.truncate(width);
                if config.always_exit && !successors.contains(&terminal) {
                    successors[0] = terminal;
                }
                successors.sort_unstable();

                let mut outcomes: Vec<(usize, u8)> = Vec::new();
                for &next in &successors {
                    if outcomes.len() == max_entries {
                        break;
                    }
                    let damaged = rng.random_bool(config.damage_prob);
                    outcomes.push((next, u8::from(damaged)));
                    // Occasionally split a successor over both damage values.
                    if outcomes.len() < max_entries && rng.random_bool(config.damage_prob * 0.5) {
                        outcomes.push((next, u8::from(!damaged)));
                    }
                }

                let weights: Vec<f64> = outcomes.iter().map(|_| rng.random::<f64>()).collect();
                let total: f64 = weights.iter().sum();
                let spare = 1.0 - floor * outcomes.len() as f64;
                let mut remaining = 1.0;
                for (i, &(next, d)) in outcomes.iter().enumerate() {
                    let p = if i + 1 == outcomes.len() {
                        remaining
                    } else if total > 0.0 {
                        floor + spare * weights[i] / total
                    } else {
                        floor
                    };
                    remaining -= p;
                    transitions.push(TransitionRecord {
                        s: states[s].clone(),
                        a: action.clone(),
                        s_next: states[next].clone(),
                        d,
                        p,
                        r: f64::from(rng.random_range(0..=config.max_reward)),
                    });
                }
            }
        }
        let description = MdpDescription {
            states: states.clone(),
            actions: actions.clone(),
            terminal: states[terminal].clone(),
            transitions,
        };
        match validate_mdp(&description) {
            Err(ModelError::TerminalUnreachable(_)) => continue,
            other => return other,
        }
    }
}
