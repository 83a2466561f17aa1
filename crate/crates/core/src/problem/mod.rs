//! Coefficients, the finite action space and the registered benchmark problems.

mod audit;
mod benchmarks;
mod config;
mod lq;

pub use audit::{assumption_audit, AuditReport};
pub use benchmarks::{
    registry, DriftOnly, MeanFieldDrift, SystemicRiskLq, TwoActionToy, ZeroProblem,
};
pub use config::{lookup, ProblemConfig};
pub use lq::{lq_riccati_value, LqParams, RICCATI_STEPS};

use crate::error::{Error, Result};
use crate::measures::{moment_norm, EmpiricalMeasure};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Drift, diffusion and rewards of the controlled state equation.
///
/// Implementations must be pure: the engines call them concurrently.
pub trait Coefficients: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;

    /// Number of Brownian components; at least 1 (the history quantizer reads
    /// the first one even when the diffusion vanishes).
    fn noise_dim(&self) -> usize {
        1
    }

    fn drift(&self, t: f64, x: &[f64], law: &EmpiricalMeasure, a: &[f64], out: &mut [f64]);

    /// Row-major `state_dim × noise_dim` matrix.
    fn diffusion(&self, t: f64, x: &[f64], law: &EmpiricalMeasure, a: &[f64], out: &mut [f64]);

    fn running(&self, t: f64, x: &[f64], law: &EmpiricalMeasure, a: &[f64]) -> f64;

    fn terminal(&self, x: &[f64], law: &EmpiricalMeasure) -> f64;
}

/// Coefficients together with their declared regularity constants.
///
/// The growth bound is `|f|, |g| ≤ h(‖π‖₂)(1 + |x|^p)` with `h(r) = C_h (1 + r²)`.
#[derive(Clone)]
pub struct CoefficientSet {
    pub coefficients: Arc<dyn Coefficients>,
    pub lipschitz: f64,
    pub growth_p: f64,
    pub growth_c: f64,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("coefficients", &self.coefficients)
            .field("lipschitz", &self.lipschitz)
            .field("growth_p", &self.growth_p)
            .field("growth_c", &self.growth_c)
            .finish()
    }
}

impl CoefficientSet {
    pub fn new(coefficients: Arc<dyn Coefficients>, lipschitz: f64, growth_p: f64, growth_c: f64) -> Self {
        Self {
            coefficients,
            lipschitz,
            growth_p,
            growth_c,
        }
    }

    pub fn h(&self, r: f64) -> f64 {
        self.growth_c * (1.0 + r * r)
    }

    /// Right-hand side of the growth bound at `(x, π)`.
    pub fn growth_bound(&self, x: &[f64], law: &EmpiricalMeasure) -> f64 {
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.h(moment_norm(law)) * (1.0 + nx.powf(self.growth_p))
    }

    pub fn state_dim(&self) -> usize {
        self.coefficients.state_dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.coefficients.noise_dim()
    }
}

/// Finite action set with the bounded metric `ρ(a, a') = min(1 − ε, s·|a − a'|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ActionSpaceRepr")]
pub struct ActionSpace {
    actions: Vec<Vec<f64>>,
    metric_scale: f64,
}

#[derive(Deserialize)]
struct ActionSpaceRepr {
    actions: Vec<Vec<f64>>,
    metric_scale: f64,
}

impl TryFrom<ActionSpaceRepr> for ActionSpace {
    type Error = Error;
    fn try_from(r: ActionSpaceRepr) -> Result<Self> {
        ActionSpace::new(r.actions, r.metric_scale)
    }
}

pub const RHO_EPS: f64 = 1e-9;

impl ActionSpace {
    pub fn new(actions: Vec<Vec<f64>>, metric_scale: f64) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::DegenerateInput("empty action space".into()));
        }
        if !(metric_scale > 0.0 && metric_scale.is_finite()) {
            return Err(Error::DegenerateInput("metric scale must be positive".into()));
        }
        let q = actions[0].len();
        for a in &actions {
            if a.len() != q {
                return Err(Error::Dimension {
                    expected: q,
                    got: a.len(),
                });
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::DegenerateInput("non-finite action".into()));
            }
        }
        for i in 0..actions.len() {
            for j in 0..i {
                if actions[i] == actions[j] {
                    return Err(Error::DegenerateInput(format!(
                        "actions {j} and {i} coincide"
                    )));
                }
            }
        }
        Ok(Self {
            actions,
            metric_scale,
        })
    }

    /// Scalar actions.
    pub fn scalar(values: &[f64], metric_scale: f64) -> Result<Self> {
        Self::new(values.iter().map(|v| vec![*v]).collect(), metric_scale)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.actions[0].len()
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i]
    }

    pub fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }

    pub fn metric_scale(&self) -> f64 {
        self.metric_scale
    }

    /// Bounded metric between actions `i` and `j`.
    pub fn rho(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let d: f64 = self.actions[i]
            .iter()
            .zip(&self.actions[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        (self.metric_scale * d).min(1.0 - RHO_EPS)
    }
}

/// Closed-form value available for some registered problems.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticValue {
    /// `V ≡ 0`.
    Zero,
    /// `V(t, x, π) = x + c (T − t)` for drift-only problems whose best action is `c`.
    DriftOnly { best_drift: f64 },
    /// Riccati reduction of the linear-quadratic benchmark.
    Lq(LqParams),
}

/// A named problem: coefficients, actions and horizon.
#[derive(Debug, Clone)]
pub struct BenchmarkProblem {
    pub name: String,
    pub coefficients: CoefficientSet,
    pub actions: ActionSpace,
    pub horizon: f64,
    pub analytic: Option<AnalyticValue>,
}

impl BenchmarkProblem {
    pub fn state_dim(&self) -> usize {
        self.coefficients.state_dim()
    }

    /// Oracle value when the problem carries one.
    pub fn analytic_value(&self, t: f64, x: &[f64], pi: &EmpiricalMeasure) -> Option<Result<f64>> {
        let a = self.analytic.as_ref()?;
        Some(match a {
            AnalyticValue::Zero => Ok(0.0),
            AnalyticValue::DriftOnly { best_drift } => {
                if x.len() != 1 {
                    Err(Error::UnsupportedBenchmark("drift-only oracle is scalar".into()))
                } else {
                    Ok(x[0] + best_drift * (self.horizon - t))
                }
            }
            AnalyticValue::Lq(p) => lq_riccati_value(p, t, x, pi),
        })
    }
}
