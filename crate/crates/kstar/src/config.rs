//! Resolved run configuration and the manifest written next to every output.

use std::path::PathBuf;

use kstar_core::{chain_mdp, random_mdp, Mdp, RandomMdpConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Validate,
    Solve,
    Learn,
    Simulate,
    Experiment1,
    Experiment2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSource {
    File { path: PathBuf },
    Chain { p_damage: f64 },
    Random { config: RandomMdpConfig, seed: u64 },
}

impl ModelSource {
    pub fn load(&self) -> Result<Mdp, CliError> {
        match self {
            ModelSource::File { path } => io::load_model(path),
            ModelSource::Chain { p_damage } => chain_mdp(*p_damage).map_err(CliError::input),
            ModelSource::Random { config, seed } => random_mdp(config, *seed).map_err(CliError::input),
        }
    }
}

/// Controller used by `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// The trimmed value-iteration policy over `(state, budget)`.
    Optimal,
    /// The expectation-constrained baseline; chain models only.
    Expectation,
}

/// Everything that affects a run's outputs. Thread count and output
/// directory are deliberately absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub model: ModelSource,
    /// Start state name; the first listed state when absent.
    pub start: Option<String>,
    pub delta: u32,
    pub gamma: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub mu: Option<f64>,
    pub delta_prob: f64,
    pub samples_override: Option<u64>,
    pub seed: u64,
    pub episodes: u64,
    pub max_steps: usize,
    pub return_bin_width: f64,
    pub policy: PolicyKind,
    pub c_values: Vec<f64>,
}

impl RunConfig {
    pub fn start_index(&self, mdp: &Mdp) -> Result<usize, CliError> {
        match &self.start {
            None => Ok(0),
            Some(name) => mdp
                .state_index(name)
                .ok_or_else(|| CliError::message("UnknownIdentifier", format!("unknown start state {name:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(config: &RunConfig) -> Manifest {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
        }
    }
}
