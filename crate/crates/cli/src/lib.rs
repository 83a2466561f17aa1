//! Experiment runner around `mkv-core`: JSON configs, reproducible repeats,
//! run records and CSV artifacts.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod record;

pub use commands::{run, Command};
pub use config::{ExperimentConfig, Overrides};
pub use record::{compare_runs, ComparisonError, RouteDelta, RunRecord};

use mkv_core::Error;
use serde_json::json;

/// Machine-readable error body printed on failure.
pub fn error_json(e: &Error) -> serde_json::Value {
    let kind = match e {
        Error::Config { .. } => "config",
        Error::Capacity { .. } => "capacity",
        Error::Io(_) => "io",
        Error::UnknownProblem(_) => "unknown_problem",
        Error::SchemeInconsistency(_) => "scheme_inconsistency",
        Error::NumericalBlowup { .. } => "numerical_blowup",
        _ => "input",
    };
    let mut body = json!({ "kind": kind, "message": e.to_string() });
    if let Error::Config { pointer, .. } = e {
        body["pointer"] = json!(pointer);
    }
    json!({ "error": body })
}

/// Exit code for a failed run: 2 for configuration problems, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::UnknownProblem(_) => 2,
        _ => 1,
    }
}
