//! Learning `k*` from a generative sampler.
//!
//! `k*` depends on the kernel only through which joint outcomes `(s', d)`
//! have positive probability. An empirical kernel built from `N` draws per
//! state-action pair that reproduces that sign pattern (a *consistent*
//! kernel) therefore yields exactly the same budget operator, and so the
//! same `k*`. When every positive probability is at least `μ`,
//! `N >= ln(2 |S|² |A| / δ) / μ` draws per pair give a consistent kernel
//! with probability at least `1 - δ`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
use thiserror::Error;

use crate::budget::{solve_minimal_budget, BudgetTable};
use crate::model::{Mdp, Transition};
use crate::rng;

const KERNEL_STREAM: u64 = 0x6b65_726e_656c;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("sampler failed: {0}")]
pub struct SamplerError(pub String);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearningError {
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("kernel is {found_states}x{found_actions}, model is {states}x{actions}")]
    DimensionMismatch {
        states: usize,
        actions: usize,
        found_states: usize,
        found_actions: usize,
    },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// Draws `(s', d) ~ p(· | s, a)` for any queried pair.
pub trait GenerativeSampler {
    fn draw<R: RngCore + ?Sized>(
        &self,
        s: usize,
        a: usize,
        rng: &mut R,
    ) -> Result<(usize, bool), SamplerError>;
}

/// A sampler backed by a known model.
#[derive(Debug, Clone, Copy)]
pub struct ModelSampler<'m> {
    mdp: &'m Mdp,
}

impl<'m> ModelSampler<'m> {
    pub fn new(mdp: &'m Mdp) -> Self {
        ModelSampler { mdp }
    }
}

/// Inverse-CDF draw from a kernel row.
pub(crate) fn sample_row<'r, R: RngCore + ?Sized>(
    row: &'r [Transition],
    rng: &mut R,
) -> Option<&'r Transition> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for t in row {
        acc += t.prob;
        if u < acc {
            return Some(t);
        }
    }
    // Rounding can leave the row sum a hair under one.
    row.last()
}

impl GenerativeSampler for ModelSampler<'_> {
    fn draw<R: RngCore + ?Sized>(
        &self,
        s: usize,
        a: usize,
        rng: &mut R,
    ) -> Result<(usize, bool), SamplerError> {
        if s >= self.mdp.n_states() || a >= self.mdp.n_actions() {
            return Err(SamplerError(format!("pair ({s}, {a}) is out of range")));
        }
        sample_row(self.mdp.transitions(s, a), rng)
            .map(|t| (t.next, t.damage))
            .ok_or_else(|| SamplerError(format!("pair ({s}, {a}) has no outcomes")))
    }
}

/// Shape of the model behind a sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelDims {
    pub n_states: usize,
    pub n_actions: usize,
    pub terminal: usize,
}

impl KernelDims {
    pub fn of(mdp: &Mdp) -> Self {
        KernelDims {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            terminal: mdp.terminal(),
        }
    }
}

/// Draw counts per state-action pair; probabilities are `count / N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalKernel {
    dims: KernelDims,
    samples_per_pair: u64,
    // Row-major over (s, a); each row sorted by (next, damage), counts > 0.
    counts: Vec<Vec<(usize, bool, u64)>>,
}

impl EmpiricalKernel {
    pub fn dims(&self) -> KernelDims {
        self.dims
    }

    pub fn samples_per_pair(&self) -> u64 {
        self.samples_per_pair
    }

    /// Observed outcomes `(next, damage, count)` of `(s, a)`.
    pub fn outcomes(&self, s: usize, a: usize) -> &[(usize, bool, u64)] {
        &self.counts[s * self.dims.n_actions + a]
    }

    pub fn count(&self, s: usize, a: usize, next: usize, damage: bool) -> u64 {
        self.outcomes(s, a)
            .iter()
            .find(|(n, d, _)| *n == next && *d == damage)
            .map_or(0, |(_, _, c)| *c)
    }

    pub fn probability(&self, s: usize, a: usize, next: usize, damage: bool) -> f64 {
        self.count(s, a, next, damage) as f64 / self.samples_per_pair as f64
    }

    /// A model with the estimated kernel and zero rewards. Only its support
    /// matters for `k*`.
    pub fn surrogate(&self) -> Mdp {
        let n = self.samples_per_pair as f64;
        let rows = self
            .counts
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&(next, damage, c)| Transition {
                        next,
                        damage,
                        prob: c as f64 / n,
                        reward: 0.0,
                    })
                    .collect()
            })
            .collect();
        let states = (0..self.dims.n_states).map(|i| format!("s{i}")).collect();
        let actions = (0..self.dims.n_actions).map(|i| format!("a{i}")).collect();
        Mdp::from_rows_unchecked(states, actions, self.dims.terminal, rows)
    }
}

/// Draws per pair that make the empirical kernel consistent with
/// probability at least `1 - delta`, given the support floor `mu`.
pub fn required_samples(
    n_states: usize,
    n_actions: usize,
    mu: f64,
    delta: f64,
) -> Result<u64, LearningError> {
    if n_states == 0 {
        return Err(LearningError::InvalidParameter { name: "n_states", value: 0.0 });
    }
    if n_actions == 0 {
        return Err(LearningError::InvalidParameter { name: "n_actions", value: 0.0 });
    }
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(LearningError::InvalidParameter { name: "mu", value: mu });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(LearningError::InvalidParameter { name: "delta", value: delta });
    }
    let s = n_states as f64;
    let bound = libm::log(2.0 * s * s * n_actions as f64 / delta) / mu;
    Ok((libm::ceil(bound) as u64).max(1))
}

/// Draws `n` outcomes for every state-action pair, terminal included.
///
/// Pair `(s, a)` reads from its own substream of `seed`, so the result does
/// not depend on visiting order.
pub fn build_empirical_kernel<G: GenerativeSampler + ?Sized>(
    sampler: &G,
    dims: KernelDims,
    n: u64,
    seed: u64,
) -> Result<EmpiricalKernel, LearningError> {
    if n == 0 {
        return Err(LearningError::InvalidParameter { name: "n", value: 0.0 });
    }
    let mut counts = Vec::with_capacity(dims.n_states * dims.n_actions);
    for s in 0..dims.n_states {
        for a in 0..dims.n_actions {
            let mut rng = rng::substream(seed, &[KERNEL_STREAM, s as u64, a as u64]);
            let mut tally: BTreeMap<(usize, bool), u64> = BTreeMap::new();
            for _ in 0..n {
                let (next, damage) = sampler.draw(s, a, &mut rng)?;
                if next >= dims.n_states {
                    return Err(SamplerError(format!(
                        "sampler returned state {next} for a model with {} states",
                        dims.n_states
                    ))
                    .into());
                }
                *tally.entry((next, damage)).or_default() += 1;
            }
            counts.push(tally.into_iter().map(|((next, d), c)| (next, d, c)).collect());
        }
    }
    Ok(EmpiricalKernel {
        dims,
        samples_per_pair: n,
        counts,
    })
}

/// Whether `p_hat` has exactly the support of `mdp`'s kernel.
pub fn is_consistent(p_hat: &EmpiricalKernel, mdp: &Mdp) -> Result<bool, LearningError> {
    let dims = p_hat.dims();
    if dims.n_states != mdp.n_states() || dims.n_actions != mdp.n_actions() {
        return Err(LearningError::DimensionMismatch {
            states: mdp.n_states(),
            actions: mdp.n_actions(),
            found_states: dims.n_states,
            found_actions: dims.n_actions,
        });
    }
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let observed = p_hat.outcomes(s, a);
            let truth = mdp.transitions(s, a);
            // Both lists are sorted by (next, damage) and hold positive entries only.
            let same = observed.len() == truth.len()
                && observed
                    .iter()
                    .zip(truth)
                    .all(|(&(next, d, _), t)| next == t.next && d == t.damage);
            if !same {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Everything produced while learning `k*` from samples.
#[derive(Debug, Clone)]
pub struct LearnedBudget {
    pub samples_per_pair: u64,
    pub kernel: EmpiricalKernel,
    pub table: BudgetTable,
}

/// `k*` of the surrogate built from `n` draws per pair.
pub fn solve_with_sample_count<G: GenerativeSampler + ?Sized>(
    sampler: &G,
    dims: KernelDims,
    n: u64,
    seed: u64,
) -> Result<LearnedBudget, LearningError> {
    let kernel = build_empirical_kernel(sampler, dims, n, seed)?;
    let table = solve_minimal_budget(&kernel.surrogate());
    Ok(LearnedBudget {
        samples_per_pair: n,
        kernel,
        table,
    })
}

/// Sizes the sample from `(mu, delta)`, builds the empirical kernel and
/// solves for `k*` on it.
pub fn solve_from_samples<G: GenerativeSampler + ?Sized>(
    sampler: &G,
    dims: KernelDims,
    mu: f64,
    delta: f64,
    seed: u64,
) -> Result<LearnedBudget, LearningError> {
    let n = required_samples(dims.n_states, dims.n_actions, mu, delta)?;
    solve_with_sample_count(sampler, dims, n, seed)
}
