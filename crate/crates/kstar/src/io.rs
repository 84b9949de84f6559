//! File formats: model JSON in, tables, kernels, policies and histograms out.
//!
//! Every writer produces a `String` so outputs are easy to compare byte for
//! byte. Object keys keep insertion order (state-major, then action or budget).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use kstar_core::{
    validate_mdp, AugmentedMdp, AugmentedPolicy, Budget, BudgetTable, EmpiricalKernel, Mdp,
    MdpDescription, ValueIterationOutcome,
};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::CliError;

pub fn parse_model(text: &str) -> Result<Mdp, CliError> {
    let raw: MdpDescription = serde_json::from_str(text)?;
    validate_mdp(&raw).map_err(CliError::input)
}

pub fn load_model(path: &Path) -> Result<Mdp, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::message("Io", format!("{}: {e}", path.display())))?;
    parse_model(&text)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// `"state/action" -> integer | "inf"`.
pub fn budget_table_value(mdp: &Mdp, table: &BudgetTable) -> Value {
    let mut map = Map::new();
    for (s, a, v) in table.iter() {
        let key = format!("{}/{}", mdp.state_name(s), mdp.action_name(a));
        map.insert(key, budget_value(v));
    }
    Value::Object(map)
}

fn budget_value(v: Budget) -> Value {
    match v {
        Budget::Finite(n) => json!(n),
        Budget::Infinite => json!("inf"),
    }
}

/// Draw counts, sample size and the observed support, named after `mdp`.
pub fn kernel_value(mdp: &Mdp, kernel: &EmpiricalKernel) -> Value {
    let mut counts = Vec::new();
    let mut support = Map::new();
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let mut observed = Vec::new();
            for &(next, damage, count) in kernel.outcomes(s, a) {
                counts.push(json!({
                    "s": mdp.state_name(s),
                    "a": mdp.action_name(a),
                    "s_next": mdp.state_name(next),
                    "d": u8::from(damage),
                    "count": count,
                }));
                observed.push(json!([mdp.state_name(next), u8::from(damage)]));
            }
            support.insert(format!("{}/{}", mdp.state_name(s), mdp.action_name(a)), Value::Array(observed));
        }
    }
    json!({
        "samples_per_pair": kernel.samples_per_pair(),
        "counts": counts,
        "support": support,
    })
}

/// `"state/budget" -> action name`, `null` where no action is feasible.
pub fn policy_value(aug: &AugmentedMdp<'_>, policy: &AugmentedPolicy) -> Value {
    let mdp = aug.base();
    let mut map = Map::new();
    for (s, k) in aug.pairs() {
        let action = policy.action(s, k).map(|a| mdp.action_name(a));
        map.insert(format!("{}/{k}", mdp.state_name(s)), json!(action));
    }
    Value::Object(map)
}

/// `"state/budget" -> value`, `null` for trimmed pairs.
pub fn values_value(aug: &AugmentedMdp<'_>, outcome: &ValueIterationOutcome) -> Value {
    let mdp = aug.base();
    let mut map = Map::new();
    for (s, k) in aug.pairs() {
        map.insert(format!("{}/{k}", mdp.state_name(s)), json!(outcome.value(aug, s, k)));
    }
    Value::Object(map)
}

/// `value,count` lines under a header, in increasing value order.
pub fn histogram_csv<K: Copy + Ord>(hist: &BTreeMap<K, u64>, label: impl Fn(K) -> String) -> String {
    let mut out = String::from("value,count\n");
    for (&k, &c) in hist {
        out.push_str(&format!("{},{c}\n", label(k)));
    }
    out
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::message("Io", format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::message("Io", format!("{}: {e}", path.display())))
}
