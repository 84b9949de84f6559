//! Command-line arguments and their resolution into a [`RunConfig`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kstar_core::RandomMdpConfig;

use crate::config::{Command, ModelSource, PolicyKind, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "kstar", version, about = "Minimal damage budgets for MDPs with probability-one damage constraints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Check a model and report its shape.
    Validate(RunArgs),
    /// Compute the minimal budget table k* and the unsafe states for --delta.
    Solve(RunArgs),
    /// Learn k* from sampled transitions of the model.
    Learn(RunArgs),
    /// Roll out a policy and write damage and return histograms.
    Simulate(RunArgs),
    /// Budget-optimal policy vs expectation baselines, deterministic damage.
    Experiment1(RunArgs),
    /// Budget-optimal policy vs expectation baselines, stochastic damage.
    Experiment2(RunArgs),
    /// Rerun the configuration stored in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Builtin {
    /// Two-state chain, damage probability 1 unless --p-damage is given.
    Chain,
    /// Two-state chain, damage probability 0.6 unless --p-damage is given.
    ChainStochastic,
    /// Seeded random model of --states states and --actions actions.
    Random,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long, default_value = "kstar-out")]
    pub out: PathBuf,
    /// Worker threads for simulation; 0 uses every core. Outputs do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Model file (JSON).
    #[arg(long, conflicts_with = "builtin")]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub builtin: Option<Builtin>,
    /// Damage probability of the chain's `left` action.
    #[arg(long)]
    pub p_damage: Option<f64>,
    /// States of the random builtin, terminal included.
    #[arg(long, default_value_t = 5)]
    pub states: usize,
    /// Actions of the random builtin.
    #[arg(long, default_value_t = 2)]
    pub actions: usize,
    /// Start state name (default: the first state).
    #[arg(long)]
    pub start: Option<String>,
    /// Damage budget.
    #[arg(long, default_value_t = 5)]
    pub delta: u32,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Value iteration stops once the largest change is below this.
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iterations: usize,
    /// Lower bound on every positive transition probability.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Allowed probability that the learned kernel is inconsistent.
    #[arg(long, default_value_t = 0.05)]
    pub delta_prob: f64,
    /// Samples per state-action pair, overriding the computed count.
    #[arg(long)]
    pub samples_override: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub episodes: u64,
    #[arg(long, default_value_t = 100_000)]
    pub max_steps: usize,
    /// Width of the return histogram bins.
    #[arg(long, default_value_t = 1.0)]
    pub bin_width: f64,
    #[arg(long, value_enum, default_value_t = PolicyKind::Optimal)]
    pub policy: PolicyKind,
    /// Expected-damage bounds for the baseline policy, comma separated.
    #[arg(long = "c", value_delimiter = ',')]
    pub c_values: Vec<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl RunArgs {
    pub fn resolve(&self, command: Command) -> Result<RunConfig, CliError> {
        let experiment = matches!(command, Command::Experiment1 | Command::Experiment2);
        let model = if experiment {
            if self.model.is_some() || self.builtin.is_some() {
                return Err(CliError::message("InvalidParameter", "experiments always run on the builtin chain"));
            }
            let default = if command == Command::Experiment1 { 1.0 } else { 0.6 };
            ModelSource::Chain { p_damage: self.p_damage.unwrap_or(default) }
        } else {
            self.model_source()?
        };
        let c_values = if self.c_values.is_empty() && experiment {
            vec![1.0, 3.0, 5.0, 10.0]
        } else {
            self.c_values.clone()
        };
        Ok(RunConfig {
            command,
            model,
            start: self.start.clone(),
            delta: self.delta,
            gamma: self.gamma,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            mu: self.mu,
            delta_prob: self.delta_prob,
            samples_override: self.samples_override,
            seed: self.seed,
            episodes: self.episodes,
            max_steps: self.max_steps,
            return_bin_width: self.bin_width,
            policy: self.policy,
            c_values,
        })
    }

    fn model_source(&self) -> Result<ModelSource, CliError> {
        if let Some(path) = &self.model {
            if self.p_damage.is_some() {
                return Err(CliError::message("InvalidParameter", "--p-damage only applies to the builtin chains"));
            }
            return Ok(ModelSource::File { path: path.clone() });
        }
        match self.builtin {
            Some(Builtin::Chain) => Ok(ModelSource::Chain { p_damage: self.p_damage.unwrap_or(1.0) }),
            Some(Builtin::ChainStochastic) => Ok(ModelSource::Chain { p_damage: self.p_damage.unwrap_or(0.6) }),
            Some(Builtin::Random) => Ok(ModelSource::Random {
                config: RandomMdpConfig {
                    n_states: self.states,
                    n_actions: self.actions,
                    ..RandomMdpConfig::default()
                },
                seed: self.seed,
            }),
            None => Err(CliError::message("InvalidParameter", "give --model or --builtin")),
        }
    }
}

impl Sub {
    /// Resolved configuration and output options, or the manifest to replay.
    pub fn resolve(&self) -> Result<(Option<RunConfig>, &OutputArgs), CliError> {
        let (args, command) = match self {
            Sub::Validate(a) => (a, Command::Validate),
            Sub::Solve(a) => (a, Command::Solve),
            Sub::Learn(a) => (a, Command::Learn),
            Sub::Simulate(a) => (a, Command::Simulate),
            Sub::Experiment1(a) => (a, Command::Experiment1),
            Sub::Experiment2(a) => (a, Command::Experiment2),
            Sub::Replay(r) => return Ok((None, &r.output)),
        };
        Ok((Some(args.resolve(command)?), &args.output))
    }
}
