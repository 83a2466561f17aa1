//! Run records (`results.json`) and their comparison.

use mkv_core::stats::{combined_ci, SeedSummary};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Build identifier: crate version plus the git revision captured at build time.
pub fn build_id() -> String {
    format!("{}+{}", env!("CARGO_PKG_VERSION"), env!("MKVCTL_GIT_REV"))
}

/// One route's value over the repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResult {
    pub route: String,
    pub value: f64,
    /// Half-width 1.96·sd/√R across repeats.
    pub ci: f64,
    pub std_dev: f64,
    pub values: Vec<f64>,
}

impl RouteResult {
    pub fn new(route: &str, values: Vec<f64>) -> Self {
        let s = SeedSummary::new(values);
        Self {
            route: route.into(),
            value: s.mean,
            ci: s.ci,
            std_dev: s.std_dev,
            values: s.values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Residual {
    pub fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub problem: String,
    /// SHA-256 of `config.json` as written next to this record.
    pub config_hash: String,
    pub build: String,
    pub seeds: Vec<u64>,
    pub routes: Vec<RouteResult>,
    pub residuals: Vec<Residual>,
    pub timings: Vec<Timing>,
}

impl RunRecord {
    pub fn route(&self, name: &str) -> Option<&RouteResult> {
        self.routes.iter().find(|r| r.route == name)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComparisonError {
    #[error("records are for different problems: `{a}` vs `{b}`")]
    ProblemMismatch { a: String, b: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDelta {
    pub route: String,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub combined_ci: f64,
    pub within_ci: bool,
}

/// Routes present in both records whose values differ. Identical records
/// give an empty report.
pub fn compare_runs(a: &RunRecord, b: &RunRecord) -> Result<Vec<RouteDelta>, ComparisonError> {
    if a.problem != b.problem {
        return Err(ComparisonError::ProblemMismatch {
            a: a.problem.clone(),
            b: b.problem.clone(),
        });
    }
    Ok(a.routes
        .iter()
        .filter_map(|ra| {
            let rb = b.route(&ra.route)?;
            let delta = rb.value - ra.value;
            if delta == 0.0 {
                return None;
            }
            let ci = combined_ci(ra.ci, rb.ci);
            Some(RouteDelta {
                route: ra.route.clone(),
                a: ra.value,
                b: rb.value,
                delta,
                combined_ci: ci,
                within_ci: delta.abs() <= 2.0 * ci,
            })
        })
        .collect())
}
