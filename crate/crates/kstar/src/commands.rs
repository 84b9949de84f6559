//! The subcommands. Each writes its outputs plus `manifest.json` into the
//! output directory and returns the text for standard output.

use std::path::Path;

use kstar_core::{
    build_augmented, expectation_constrained_policy, is_consistent, required_samples,
    solve_with_sample_count, trimmed_value_iteration, unsafe_states, AugmentedError, AugmentedMdp,
    BudgetIteration, EpisodeStats, KernelDims, Mdp, ModelSampler, Policy, ValueIterationOptions,
    ValueIterationOutcome,
};
use serde_json::{json, Value};

use crate::config::{Command, Manifest, ModelSource, PolicyKind, RunConfig};
use crate::error::CliError;
use crate::io;
use crate::parallel::run_episodes_parallel;

pub const MANIFEST: &str = "manifest.json";

/// What a run prints: the main result on stdout, warnings on stderr.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub stdout: String,
    pub warnings: Vec<String>,
}

pub fn run(config: &RunConfig, out: &Path, threads: usize) -> Result<Report, CliError> {
    io::write(out, MANIFEST, &io::to_json(&Manifest::new(config))?)?;
    match config.command {
        Command::Validate => validate(config, out),
        Command::Solve => solve(config, out),
        Command::Learn => learn(config, out),
        Command::Simulate => simulate(config, out, threads),
        Command::Experiment1 | Command::Experiment2 => experiment(config, out, threads),
    }
}

/// Reruns the configuration stored in a manifest file.
pub fn replay(manifest: &Path, out: &Path, threads: usize) -> Result<Report, CliError> {
    let text = std::fs::read_to_string(manifest)
        .map_err(|e| CliError::message("Io", format!("{}: {e}", manifest.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    run(&manifest.config, out, threads)
}

fn finish(out: &Path, name: &str, value: &Value) -> Result<Report, CliError> {
    let text = io::to_json(value)?;
    io::write(out, name, &text)?;
    Ok(Report { stdout: text, warnings: Vec::new() })
}

fn validate(config: &RunConfig, out: &Path) -> Result<Report, CliError> {
    let mdp = config.model.load()?;
    let transitions: usize = (0..mdp.n_states())
        .flat_map(|s| (0..mdp.n_actions()).map(move |a| (s, a)))
        .map(|(s, a)| mdp.transitions(s, a).len())
        .sum();
    let summary = json!({
        "valid": true,
        "states": mdp.n_states(),
        "actions": mdp.n_actions(),
        "terminal": mdp.state_name(mdp.terminal()),
        "transitions": transitions,
    });
    finish(out, "validation.json", &summary)
}

fn solve(config: &RunConfig, out: &Path) -> Result<Report, CliError> {
    let mdp = config.model.load()?;
    let start = config.start_index(&mdp)?;
    let (table, sweeps) = BudgetIteration::new(&mdp).run();
    let unsafe_set = unsafe_states(&table, config.delta);
    let summary = json!({
        "delta": config.delta,
        "sweeps": sweeps,
        "unsafe_states": unsafe_set.iter().map(|&s| mdp.state_name(s)).collect::<Vec<_>>(),
        "table": io::budget_table_value(&mdp, &table),
    });
    let report = finish(out, "k_star.json", &summary)?;
    if unsafe_set.contains(&start) {
        return Err(CliError::Infeasible { state: mdp.state_name(start).to_string(), delta: config.delta });
    }
    Ok(report)
}

fn learn(config: &RunConfig, out: &Path) -> Result<Report, CliError> {
    let mdp = config.model.load()?;
    let dims = KernelDims::of(&mdp);
    let required = match config.mu {
        Some(mu) => Some(
            required_samples(mdp.n_states(), mdp.n_actions(), mu, config.delta_prob)
                .map_err(CliError::input)?,
        ),
        None => None,
    };
    let n = match (config.samples_override, required) {
        (Some(n), _) | (None, Some(n)) => n,
        (None, None) => {
            return Err(CliError::message("InvalidParameter", "learn needs --mu or --samples-override"))
        }
    };
    let sampler = ModelSampler::new(&mdp);
    let learned = solve_with_sample_count(&sampler, dims, n, config.seed).map_err(CliError::input)?;
    let consistent = is_consistent(&learned.kernel, &mdp).map_err(CliError::input)?;
    let (truth, _) = BudgetIteration::new(&mdp).run();

    io::write(out, "kernel.json", &io::to_json(&io::kernel_value(&mdp, &learned.kernel))?)?;
    let summary = json!({
        "required_samples": required,
        "samples_per_pair": n,
        "consistent": consistent,
        "matches_true_table": learned.table.iter().eq(truth.iter()),
        "learned_table": io::budget_table_value(&mdp, &learned.table),
        "true_table": io::budget_table_value(&mdp, &truth),
    });
    let mut report = finish(out, "learn.json", &summary)?;
    if !consistent {
        report.warnings.push(format!(
            "warning: the empirical kernel's support differs from the model's with {n} samples per pair; the learned table may be wrong"
        ));
    }
    Ok(report)
}

fn optimal_policy<'m>(
    config: &RunConfig,
    mdp: &'m Mdp,
    start: usize,
) -> Result<(AugmentedMdp<'m>, ValueIterationOutcome), CliError> {
    let (k_star, _) = BudgetIteration::new(mdp).run();
    let aug = build_augmented(mdp, config.delta);
    let options = ValueIterationOptions {
        gamma: config.gamma,
        tolerance: config.tolerance,
        max_iterations: config.max_iterations,
    };
    let outcome = trimmed_value_iteration(&aug, &k_star, start, &options).map_err(|e| match e {
        AugmentedError::Infeasible { state, delta } => {
            CliError::Infeasible { state: mdp.state_name(state).to_string(), delta }
        }
        other => CliError::input(other),
    })?;
    if !outcome.converged {
        return Err(CliError::NotConverged { iterations: outcome.iterations, residual: outcome.residual });
    }
    Ok((aug, outcome))
}

fn stats_value(stats: &EpisodeStats) -> Value {
    let mut value = serde_json::to_value(stats).expect("stats serialize");
    let extra = value.as_object_mut().expect("stats are an object");
    extra.insert("stderr_return".into(), json!(stats.stderr_return()));
    extra.insert("stderr_damage".into(), json!(stats.stderr_damage()));
    value
}

fn write_histograms(out: &Path, suffix: &str, stats: &EpisodeStats) -> Result<(), CliError> {
    io::write(
        out,
        &format!("damage_{suffix}.csv"),
        &io::histogram_csv(&stats.damage_histogram, |d| d.to_string()),
    )?;
    io::write(
        out,
        &format!("return_{suffix}.csv"),
        &io::histogram_csv(&stats.return_histogram, |b| stats.bin_value(b).to_string()),
    )
}

fn episodes(
    config: &RunConfig,
    mdp: &Mdp,
    policy: Policy<'_>,
    start: usize,
    threads: usize,
) -> Result<EpisodeStats, CliError> {
    run_episodes_parallel(
        mdp,
        policy,
        start,
        config.delta,
        config.episodes,
        config.seed,
        config.max_steps,
        config.return_bin_width,
        threads,
    )
    .map_err(CliError::input)
}

fn chain_p_damage(config: &RunConfig) -> Result<f64, CliError> {
    match config.model {
        ModelSource::Chain { p_damage } => Ok(p_damage),
        _ => Err(CliError::message(
            "InvalidParameter",
            "the expectation-constrained baseline is only defined on the builtin chain",
        )),
    }
}

fn simulate(config: &RunConfig, out: &Path, threads: usize) -> Result<Report, CliError> {
    let mdp = config.model.load()?;
    let start = config.start_index(&mdp)?;
    let summary = match config.policy {
        PolicyKind::Optimal => {
            let (aug, outcome) = optimal_policy(config, &mdp, start)?;
            io::write(out, "policy.json", &io::to_json(&io::policy_value(&aug, &outcome.policy))?)?;
            io::write(out, "values.json", &io::to_json(&io::values_value(&aug, &outcome))?)?;
            let stats = episodes(config, &mdp, Policy::Memory(&outcome.policy), start, threads)?;
            write_histograms(out, "episodes", &stats)?;
            json!({
                "policy": "optimal",
                "start_value": outcome.value(&aug, start, config.delta),
                "iterations": outcome.iterations,
                "stats": stats_value(&stats),
            })
        }
        PolicyKind::Expectation => {
            let p_damage = chain_p_damage(config)?;
            let &c = config
                .c_values
                .first()
                .ok_or_else(|| CliError::message("InvalidParameter", "no expected-damage bound given"))?;
            let policy = expectation_constrained_policy(c, p_damage).map_err(CliError::input)?;
            let stats = episodes(config, &mdp, Policy::Stationary(&policy), start, threads)?;
            write_histograms(out, "episodes", &stats)?;
            json!({
                "policy": "expectation",
                "c": c,
                "left_probability": policy.prob(0, 0),
                "stats": stats_value(&stats),
            })
        }
    };
    finish(out, "summary.json", &summary)
}

/// Both experiments: the budget-optimal policy against the expectation
/// baseline for every `c`, on the builtin chain.
fn experiment(config: &RunConfig, out: &Path, threads: usize) -> Result<Report, CliError> {
    let p_damage = chain_p_damage(config)?;
    let mdp = config.model.load()?;
    let start = config.start_index(&mdp)?;

    let (aug, outcome) = optimal_policy(config, &mdp, start)?;
    let optimal = episodes(config, &mdp, Policy::Memory(&outcome.policy), start, threads)?;
    write_histograms(out, "optimal", &optimal)?;

    let mut baselines = Vec::new();
    for &c in &config.c_values {
        let policy = expectation_constrained_policy(c, p_damage).map_err(CliError::input)?;
        let stats = episodes(config, &mdp, Policy::Stationary(&policy), start, threads)?;
        write_histograms(out, &format!("c{c}"), &stats)?;
        baselines.push(json!({
            "c": c,
            "left_probability": policy.prob(0, 0),
            "stats": stats_value(&stats),
        }));
    }

    let summary = json!({
        "p_damage": p_damage,
        "delta": config.delta,
        "episodes": config.episodes,
        "optimal": {
            "start_value": outcome.value(&aug, start, config.delta),
            "stats": stats_value(&optimal),
        },
        "expectation": baselines,
    });
    finish(out, "summary.json", &summary)
}
