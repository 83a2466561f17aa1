//! JSON description of a benchmark problem.

use super::benchmarks::{
    drift_only, mean_field_drift, systemic_risk_lq, two_action_toy, zero_problem, LQ_ACTIONS,
};
use super::{BenchmarkProblem, LqParams, TwoActionToy};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Problem section of an experiment configuration.
///
/// Only `name` is required; the other keys override registry defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    /// Scalar action values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lq: Option<LqParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub running_slope: Option<f64>,
}

impl ProblemConfig {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn build(&self) -> Result<BenchmarkProblem> {
        let horizon = self.horizon.unwrap_or(1.0);
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain {
                value: horizon,
                domain: "(0, inf)".into(),
            });
        }
        let scalar_only = |name: &str| -> Result<()> {
            match self.dimension {
                Some(d) if d != 1 => Err(Error::UnsupportedBenchmark(format!(
                    "{name} is scalar, got dimension {d}"
                ))),
                _ => Ok(()),
            }
        };
        let mut p = match self.name.as_str() {
            "zero" => zero_problem(self.dimension.unwrap_or(1).max(1), horizon),
            "drift-only" => {
                scalar_only("drift-only")?;
                let actions = self.actions.clone().unwrap_or_else(|| vec![-1.0, 1.0]);
                drift_only(&actions, self.running_slope.unwrap_or(0.0), horizon)
            }
            "mean-field-drift" => {
                scalar_only("mean-field-drift")?;
                mean_field_drift(self.kappa.unwrap_or(1.0), self.sigma.unwrap_or(0.0), horizon)
            }
            "systemic-risk-lq" => {
                scalar_only("systemic-risk-lq")?;
                let mut lq = self.lq.clone().unwrap_or_default();
                lq.horizon = horizon;
                let actions = self.actions.clone().unwrap_or_else(|| LQ_ACTIONS.to_vec());
                systemic_risk_lq(lq, &actions)
            }
            "two-action-toy" => {
                scalar_only("two-action-toy")?;
                let d = TwoActionToy::default();
                let toy = TwoActionToy {
                    theta: self.theta.unwrap_or(d.theta),
                    kappa: self.kappa.unwrap_or(d.kappa),
                    sigma: self.sigma.unwrap_or(d.sigma),
                    early_weight: self.early_weight.unwrap_or(d.early_weight),
                    switch_time: 0.5 * horizon,
                };
                two_action_toy(toy, horizon)
            }
            other => return Err(Error::UnknownProblem(other.into())),
        };
        if let (Some(a), "zero" | "mean-field-drift" | "two-action-toy") =
            (&self.actions, self.name.as_str())
        {
            p.actions = super::ActionSpace::scalar(a, p.actions.metric_scale())?;
        }
        Ok(p)
    }
}

/// Registry entry with default parameters.
pub fn lookup(name: &str) -> Result<BenchmarkProblem> {
    ProblemConfig::named(name).build()
}
