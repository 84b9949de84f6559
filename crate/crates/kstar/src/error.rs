use std::fmt::{Debug, Display};

use serde_json::json;
use thiserror::Error;

/// A failed run, carrying the process exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad model, bad flags or unreadable files. Exit code 2.
    #[error("{message}")]
    Input { kind: String, message: String },
    /// No feasible action at the start state. Exit code 3.
    #[error("state {state} has no action with a minimal budget within {delta}")]
    Infeasible { state: String, delta: u32 },
    /// Value iteration hit its sweep limit. Exit code 4.
    #[error("value iteration stopped after {iterations} sweeps with residual {residual}")]
    NotConverged { iterations: usize, residual: f64 },
}

impl CliError {
    /// Wraps any library error, using its variant name as the error kind.
    pub fn input<E: Debug + Display>(err: E) -> CliError {
        let debug = format!("{err:?}");
        let kind = debug
            .split(|c: char| !c.is_alphanumeric() && c != '_')
            .next()
            .unwrap_or("Error")
            .to_string();
        CliError::Input { kind, message: err.to_string() }
    }

    pub fn message(kind: &str, message: impl Into<String>) -> CliError {
        CliError::Input { kind: kind.to_string(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } => 2,
            CliError::Infeasible { .. } => 3,
            CliError::NotConverged { .. } => 4,
        }
    }

    pub fn kind(&self) -> &str {
        match self {
            CliError::Input { kind, .. } => kind,
            CliError::Infeasible { .. } => "Infeasible",
            CliError::NotConverged { .. } => "NotConverged",
        }
    }

    /// One-line JSON for standard error.
    pub fn to_json(&self) -> String {
        json!({ "error": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() })
            .to_string()
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::message("Io", err.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::message("Json", err.to_string())
    }
}
