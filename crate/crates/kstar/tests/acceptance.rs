//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{brute_force_best_value, evaluate_memory_policy, general_model, proper_model, reachable_pairs};
use kstar_core::{
    apply_budget_operator, barrier, build_augmented, build_empirical_kernel, chain_mdp,
    expectation_constrained_policy, feasible_actions, is_consistent, random_mdp, required_samples,
    run_episodes, safety_game_oracle, solve_minimal_budget, solve_with_sample_count,
    trimmed_value_iteration, AugmentedError, AugmentedPolicy, Barrier, Budget, BudgetIteration,
    BudgetTable, KernelDims, Mdp, ModelSampler, Policy, RandomMdpConfig, ValueIterationOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPISODES: u64 = 10_000;
const MAX_STEPS: usize = 100_000;
const CIRCLE: usize = 0;
const LEFT: usize = 0;
const RIGHT: usize = 1;

type Criterion = (u32, &'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Verdict {
        Verdict { pass, detail: detail.into() }
    }
}

fn budget_policy(mdp: &Mdp, delta: u32) -> (AugmentedPolicy, f64) {
    let k_star = solve_minimal_budget(mdp);
    let aug = build_augmented(mdp, delta);
    let outcome =
        trimmed_value_iteration(&aug, &k_star, CIRCLE, &ValueIterationOptions::default()).unwrap();
    let value = outcome.value(&aug, CIRCLE, delta).unwrap();
    (outcome.policy, value)
}

fn c1_chain_budget() -> Verdict {
    let mut failures = Vec::new();
    let mut slowest = Duration::ZERO;
    for p in [0.3, 0.6, 1.0] {
        let mdp = chain_mdp(p).unwrap();
        let t = Instant::now();
        let k = solve_minimal_budget(&mdp);
        slowest = slowest.max(t.elapsed());
        let terminal_zero = (0..2).all(|a| k.get(mdp.terminal(), a) == Budget::ZERO);
        if k.get(CIRCLE, LEFT) != Budget::Finite(1)
            || k.get(CIRCLE, RIGHT) != Budget::ZERO
            || !terminal_zero
            || k != safety_game_oracle(&mdp, mdp.n_states() as u32)
        {
            failures.push(p);
        }
    }
    let fast = slowest < Duration::from_millis(1);
    Verdict::new(
        failures.is_empty() && fast,
        format!("p in {{0.3, 0.6, 1.0}}, mismatches at {failures:?}, slowest solve {slowest:?} (limit 1 ms)"),
    )
}

fn c2_oracle_equivalence() -> Verdict {
    let t = Instant::now();
    let mut mismatches = 0;
    let models = 500;
    for seed in 0..models {
        let mdp = general_model(seed);
        if solve_minimal_budget(&mdp) != safety_game_oracle(&mdp, mdp.n_states() as u32) {
            mismatches += 1;
        }
    }
    let elapsed = t.elapsed();
    Verdict::new(
        mismatches == 0 && elapsed < Duration::from_secs(10),
        format!("{models} models (|S| <= 6, |A| <= 3, floor 0.1), {mismatches} mismatches, {elapsed:?} (limit 10 s)"),
    )
}

fn random_entry(rng: &mut ChaCha8Rng, cap: u32) -> Budget {
    if rng.random_bool(0.15) {
        Budget::Infinite
    } else {
        Budget::Finite(rng.random_range(0..cap))
    }
}

fn c3_operator_laws() -> Verdict {
    let pairs = 1000u64;
    let mut order_violations = 0;
    let mut fixed_violations = 0;
    let mut decreasing = 0;
    let mut late = 0;
    let mut late_finite = 0;
    let mut worst_excess = 0usize;
    for seed in 0..pairs {
        let mdp = general_model(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0c3);
        let cap = mdp.n_states() as u32 + 1;
        let low = BudgetTable::from_fn(&mdp, |_, _| random_entry(&mut rng, cap));
        let high = BudgetTable::from_fn(&mdp, |s, a| {
            if rng.random_bool(0.1) {
                Budget::Infinite
            } else {
                low.get(s, a).add_capped(rng.random_range(0..3), cap)
            }
        });
        let t_low = apply_budget_operator(&mdp, &low).unwrap();
        let t_high = apply_budget_operator(&mdp, &high).unwrap();
        if !t_low.le(&t_high) {
            order_violations += 1;
        }

        let k_star = solve_minimal_budget(&mdp);
        if apply_budget_operator(&mdp, &k_star).unwrap() != k_star {
            fixed_violations += 1;
        }

        // Index of the first iterate equal to k*, counting the zero table as 0.
        let mut previous = BudgetTable::zeros(&mdp);
        let finite_match = |t: &BudgetTable| {
            k_star.iter().all(|(s, a, v)| !v.is_finite() || t.get(s, a) == v)
        };
        let mut stable_at = if previous == k_star { Some(0) } else { None };
        let mut finite_at = if finite_match(&previous) { Some(0) } else { None };
        for (i, table) in BudgetIteration::new(&mdp).enumerate() {
            if !previous.le(&table) {
                decreasing += 1;
            }
            if stable_at.is_none() && table == k_star {
                stable_at = Some(i + 1);
            }
            if finite_at.is_none() && finite_match(&table) {
                finite_at = Some(i + 1);
            }
            previous = table;
        }
        let stable_at = stable_at.expect("iteration reaches k*");
        let bound = mdp.n_states() + 2;
        if stable_at > bound {
            late += 1;
            worst_excess = worst_excess.max(stable_at - bound);
        }
        if finite_at.expect("iteration reaches k*") > bound {
            late_finite += 1;
        }
    }
    Verdict::new(
        order_violations + fixed_violations + decreasing + late == 0,
        format!(
            "{pairs} ordered pairs: {order_violations} order violations; {fixed_violations} solved tables moved by T; \
             {decreasing} decreasing steps; {late}/{pairs} models stabilize after |S| + 2 sweeps (worst by {worst_excess}), \
             {late_finite} of them with late finite entries"
        ),
    )
}

fn c4_barrier_monotonicity() -> Verdict {
    let mut models: Vec<Mdp> = (0..500).map(general_model).collect();
    models.extend([0.3, 0.6, 1.0].map(|p| chain_mdp(p).unwrap()));
    let mut checked = 0u64;
    let mut violations = 0u64;
    for mdp in &models {
        let k = solve_minimal_budget(mdp);
        let k_max = k.cap();
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                for b in 0..=k_max {
                    let here = barrier(&k, s, b, a).unwrap();
                    if here == Barrier::Safe && barrier(&k, s, b + 1, a).unwrap() != Barrier::Safe {
                        violations += 1;
                    }
                    if here == Barrier::Unsafe && b > 0 && barrier(&k, s, b - 1, a).unwrap() != Barrier::Unsafe {
                        violations += 1;
                    }
                    checked += 1;
                }
            }
        }
    }
    Verdict::new(
        violations == 0,
        format!("{} models, {checked} (s, k <= K_max, a) triples, {violations} violations", models.len()),
    )
}

fn c5_learning() -> Verdict {
    // Exact recovery whenever the kernel is consistent.
    let mut models: Vec<Mdp> = [0.3, 0.6, 1.0].map(|p| chain_mdp(p).unwrap()).to_vec();
    models.extend((0..200).map(general_model));
    let mut consistent = 0;
    let mut wrong = 0;
    for (i, mdp) in models.iter().enumerate() {
        let sampler = ModelSampler::new(mdp);
        let truth = solve_minimal_budget(mdp);
        for n in [1, 3, 10, 60] {
            let learned = solve_with_sample_count(&sampler, KernelDims::of(mdp), n, i as u64).unwrap();
            if is_consistent(&learned.kernel, mdp).unwrap() {
                consistent += 1;
                if !learned.table.iter().eq(truth.iter()) {
                    wrong += 1;
                }
            }
        }
    }

    // Failure rate at mu = 0.4, delta = 0.05 on models whose support floor is 0.4.
    let (mu, delta, builds) = (0.4, 0.05, 1000u64);
    let floor_models: Vec<Mdp> = (0..49)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let config = RandomMdpConfig {
                n_states: rng.random_range(2..=6),
                n_actions: rng.random_range(1..=3),
                support_floor: mu,
                max_successors: 2,
                damage_prob: 0.4,
                always_exit: false,
                max_reward: 3,
            };
            random_mdp(&config, seed).unwrap()
        })
        .chain([chain_mdp(0.6).unwrap()])
        .collect();
    let mut failures = 0u64;
    for b in 0..builds {
        let mdp = &floor_models[(b % floor_models.len() as u64) as usize];
        let n = required_samples(mdp.n_states(), mdp.n_actions(), mu, delta).unwrap();
        let kernel = build_empirical_kernel(&ModelSampler::new(mdp), KernelDims::of(mdp), n, 7_000 + b).unwrap();
        if !is_consistent(&kernel, mdp).unwrap() {
            failures += 1;
        }
    }
    let rate = failures as f64 / builds as f64;
    let limit = delta + 2.0 * (delta / builds as f64).sqrt();
    Verdict::new(
        wrong == 0 && consistent > 0 && rate <= limit,
        format!(
            "{consistent} consistent kernels, {wrong} with a different k*; inconsistency rate {rate:.4} over {builds} builds (limit {limit:.4})"
        ),
    )
}

fn c6_experiment_one() -> Verdict {
    let t = Instant::now();
    let mdp = chain_mdp(1.0).unwrap();
    let (policy, _) = budget_policy(&mdp, 5);
    let optimal = run_episodes(&mdp, Policy::Memory(&policy), CIRCLE, 5, EPISODES, 1, MAX_STEPS, 1.0).unwrap();
    let baseline = expectation_constrained_policy(5.0, 1.0).unwrap();
    let expect = run_episodes(&mdp, Policy::Stationary(&baseline), CIRCLE, 5, EPISODES, 2, MAX_STEPS, 1.0).unwrap();
    let elapsed = t.elapsed();

    let point_mass = optimal.damage_histogram == BTreeMap::from([(5, EPISODES)]);
    let se = expect.stderr_damage();
    let near = (expect.mean_damage - 5.0).abs() <= 3.0 * se;
    let above = expect.episodes_above(5);
    Verdict::new(
        point_mass && near && above > 0 && elapsed < Duration::from_secs(5) && expect.truncated == 0,
        format!(
            "budget policy histogram {:?}; c = 5 mean damage {:.3} (SE {se:.3}), {above} episodes above 5; {elapsed:?} (limit 5 s)",
            optimal.damage_histogram, expect.mean_damage
        ),
    )
}

fn c7_experiment_two() -> Verdict {
    let mdp = chain_mdp(0.6).unwrap();
    let (policy, _) = budget_policy(&mdp, 5);
    let stats = run_episodes(&mdp, Policy::Memory(&policy), CIRCLE, 5, EPISODES, 3, MAX_STEPS, 1.0).unwrap();
    let act = |s: usize, k: u32| policy.action(s, k).unwrap_or(0);
    let exact = evaluate_memory_policy(&mdp, CIRCLE, 5, &act).unwrap();
    let se = stats.stderr_return();
    let near = (stats.mean_return - exact).abs() <= 3.0 * se;
    Verdict::new(
        stats.min_return >= 5.0 && stats.max_damage <= 5 && near && stats.truncated == 0,
        format!(
            "min return {}, max damage {}, mean return {:.4} vs exact {exact:.4} (SE {se:.4})",
            stats.min_return, stats.max_damage, stats.mean_return
        ),
    )
}

fn c8_trimming_soundness() -> Verdict {
    const ENUMERATION_LIMIT: usize = 50_000;
    let t = Instant::now();
    let mut compared = 0;
    let mut mismatches = 0;
    let mut skipped = 0;
    for seed in 0..400 {
        let mdp = proper_model(seed, 4, 3);
        let k_star = solve_minimal_budget(&mdp);
        for delta in 0..=3 {
            let feasible = |s: usize, k: u32| feasible_actions(&k_star, s, k);
            let policies: usize = reachable_pairs(&mdp, 0, delta, &feasible)
                .iter()
                .filter(|&&(s, _)| !mdp.is_terminal(s))
                .map(|&(s, k)| feasible(s, k).len().max(1))
                .product();
            if policies > ENUMERATION_LIMIT {
                skipped += 1;
                continue;
            }
            let exhaustive = brute_force_best_value(&mdp, 0, delta, &feasible);
            let aug = build_augmented(&mdp, delta);
            let ok = match trimmed_value_iteration(&aug, &k_star, 0, &ValueIterationOptions::default()) {
                Ok(outcome) => match (outcome.value(&aug, 0, delta), exhaustive) {
                    (Some(v), Some(best)) => (v - best).abs() < 1e-6,
                    _ => false,
                },
                Err(AugmentedError::Infeasible { .. }) => exhaustive.is_none(),
                Err(_) => false,
            };
            compared += 1;
            if !ok {
                mismatches += 1;
            }
        }
    }
    let elapsed = t.elapsed();
    Verdict::new(
        mismatches == 0 && elapsed < Duration::from_secs(30),
        format!(
            "{compared} (model, delta) cases with |S| <= 4, |A| <= 3, delta <= 3; {mismatches} mismatches; \
             {skipped} skipped above {ENUMERATION_LIMIT} policies; {elapsed:?} (limit 30 s)"
        ),
    )
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn c9_replay() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_kstar");
    let root = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 8] = [
        &["validate", "--builtin", "random", "--seed", "4"],
        &["solve", "--builtin", "random", "--states", "6", "--actions", "3", "--seed", "9"],
        &["learn", "--builtin", "chain-stochastic", "--mu", "0.4", "--seed", "5"],
        &["learn", "--builtin", "random", "--samples-override", "3", "--seed", "6"],
        &["simulate", "--builtin", "chain-stochastic", "--episodes", "4000", "--seed", "8"],
        &["simulate", "--builtin", "chain", "--policy", "expectation", "--c", "3", "--episodes", "4000"],
        &["experiment1", "--episodes", "4000", "--seed", "11"],
        &["experiment2", "--episodes", "4000", "--seed", "12"],
    ];
    let mut differing = Vec::new();
    for (i, args) in runs.iter().enumerate() {
        let first = root.path().join(format!("{i}-first"));
        let again = root.path().join(format!("{i}-replay"));
        let threaded = root.path().join(format!("{i}-threads"));
        let run = |extra: &[&str]| {
            let status = Command::new(bin).args(*args).args(extra).output().unwrap().status;
            assert!(status.success(), "{args:?} {extra:?}");
        };
        run(&["--threads", "1", "--out", first.to_str().unwrap()]);
        run(&["--threads", "5", "--out", threaded.to_str().unwrap()]);
        let manifest = first.join("manifest.json");
        let status = Command::new(bin)
            .args(["replay", manifest.to_str().unwrap(), "--threads", "3", "--out", again.to_str().unwrap()])
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        let reference = read_dir(&first);
        if reference != read_dir(&again) || reference != read_dir(&threaded) {
            differing.push(args[0]);
        }
    }
    Verdict::new(
        differing.is_empty(),
        format!("{} CLI runs replayed from manifests with 1, 3 and 5 threads; differing outputs: {differing:?}", runs.len()),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "minimal budget on the chain MDP", c1_chain_budget),
        (2, "iteration equals the safety-game oracle", c2_oracle_equivalence),
        (3, "budget operator laws", c3_operator_laws),
        (4, "barrier monotonicity", c4_barrier_monotonicity),
        (5, "learning from a consistent kernel", c5_learning),
        (6, "experiment I: deterministic damage", c6_experiment_one),
        (7, "experiment II: stochastic damage", c7_experiment_two),
        (8, "trimming soundness", c8_trimming_soundness),
        (9, "determinism and replay", c9_replay),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, check) in criteria {
        let verdict = panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::new(false, format!("panicked: {msg}"))
        });
        let mark = if verdict.pass { "PASS" } else { "FAIL" };
        println!("{mark} [{id}] {name}: {}", verdict.detail);
        failed += usize::from(!verdict.pass);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
