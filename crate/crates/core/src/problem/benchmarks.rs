use super::{
    ActionSpace, AnalyticValue, BenchmarkProblem, CoefficientSet, Coefficients, LqParams,
};
use crate::measures::EmpiricalMeasure;
use std::sync::Arc;

/// b = σ = f = g = 0 in dimension `dim`.
#[derive(Debug, Clone)]
pub struct ZeroProblem {
    pub dim: usize,
}

impl Coefficients for ZeroProblem {
    fn state_dim(&self) -> usize {
        self.dim
    }
    fn drift(&self, _t: f64, _x: &[f64], _law: &EmpiricalMeasure, _a: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn diffusion(&self, _t: f64, _x: &[f64], _law: &EmpiricalMeasure, _a: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn running(&self, _t: f64, _x: &[f64], _law: &EmpiricalMeasure, _a: &[f64]) -> f64 {
        0.0
    }
    fn terminal(&self, _x: &[f64], _law: &EmpiricalMeasure) -> f64 {
        0.0
    }
}

/// Scalar state pushed by the action itself: b = a, σ = 0, f = slope·x, g = x.
#[derive(Debug, Clone)]
pub struct DriftOnly {
    pub running_slope: f64,
}

impl Coefficients for DriftOnly {
    fn state_dim(&self) -> usize {
        1
    }
    fn drift(&self, _t: f64, _x: &[f64], _law: &EmpiricalMeasure, a: &[f64], out: &mut [f64]) {
        out[0] = a[0];
    }
    fn diffusion(&self, _t: f64, _x: &[f64], _law: &EmpiricalMeasure, _a: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn running(&self, _t: f64, x: &[f64], _law: &EmpiricalMeasure, _a: &[f64]) -> f64 {
        self.running_slope * x[0]
    }
    fn terminal(&self, x: &[f64], _law: &EmpiricalMeasure) -> f64 {
        x[0]
    }
}

/// Mean reversion towards the population mean: b = κ(m̄ − x), constant σ.
/// The action enters only the reward, f = a(m̄ − x) − a²/2, and g = 0.
#[derive(Debug, Clone)]
pub struct MeanFieldDrift {
    pub kappa: f64,
    pub sigma: f64,
}

impl Coefficients for MeanFieldDrift {
    fn state_dim(&self) -> usize {
        1
    }
    fn drift(&self, _t: f64, x: &[f64], law: &EmpiricalMeasure, _a: &[f64], out: &mut [f64]) {
        out[0] = self.kappa * (law.mean()[0] - x[0]);
    }
    fn diffusion(&self, _t: f64, _x: &[f64], _law: &EmpiricalMeasure, _a: &[f64], out: &mut [f64]) {
        out[0] = self.sigma;
    }
    fn running(&self, _t: f64, x: &[f64], law: &EmpiricalMeasure, a: &[f64]) -> f64 {
        a[0] * (law.mean()[0] - x[0]) - 0.5 * a[0] * a[0]
    }
    fn terminal(&self, _x: &[f64], _law: &EmpiricalMeasure) -> f64 {
        0.0
    }
}

/// Linear-quadratic interbank lending model.
///
/// dX = (a + κ(m̄ − X)) ds + σ dB,
/// f = −(a²/2 − q a (m̄ − x) + ε/2 (m̄ − x)²), g = −c/2 (m̄ − x)².
#[derive(Debug, Clone)]
pub struct SystemicRiskLq {
    pub params: LqParams,
}

impl Coefficients for SystemicRiskLq {
    fn state_dim(&self) -> usize {
        1
    }
    fn drift(&self, _t: f64, x: &[f64], law: &EmpiricalMeasure, a: &[f64], out: &mut [f64]) {
        out[0] = a[0] + self.params.kappa * (law.mean()[0] - x[0]);
    }
    fn diffusion(&self, _t: f64, _x: &[f64], _law: &EmpiricalMeasure, _a: &[f64], out: &mut [f64]) {
        out[0] = self.params.sigma;
    }
    fn running(&self, _t: f64, x: &[f64], law: &EmpiricalMeasure, a: &[f64]) -> f64 {
        let p = &self.params;
        let gap = law.mean()[0] - x[0];
        -(0.5 * a[0] * a[0] - p.q * a[0] * gap + 0.5 * p.eps * gap * gap)
    }
    fn terminal(&self, x: &[f64], law: &EmpiricalMeasure) -> f64 {
        let gap = law.mean()[0] - x[0];
        -0.5 * self.params.c * gap * gap
    }
}

/// Scalar two-action problem whose optimum switches once.
///
/// b = θa + κ(m̄ − x), constant σ, f = −(x − m̄)²/2 + w(s)·a with
/// w = `early_weight` on [0, `switch_time`] and 0 afterwards, g = x.
/// Pointwise in time the best action is sign(w(s) + θ).
#[derive(Debug, Clone)]
pub struct TwoActionToy {
    pub theta: f64,
    pub kappa: f64,
    pub sigma: f64,
    pub early_weight: f64,
    pub switch_time: f64,
}

impl Default for TwoActionToy {
    fn default() -> Self {
        Self {
            theta: 0.5,
            kappa: 1.0,
            sigma: 0.3,
            early_weight: -0.6,
            switch_time: 0.5,
        }
    }
}

impl TwoActionToy {
    /// Early weight on the closed interval [0, switch_time], so that the
    /// trapezoid rule never averages the two regimes inside an early step.
    fn weight(&self, t: f64) -> f64 {
        if t <= self.switch_time + 1e-12 {
            self.early_weight
        } else {
            0.0
        }
    }
}

impl Coefficients for TwoActionToy {
    fn state_dim(&self) -> usize {
        1
    }
    fn drift(&self, _t: f64, x: &[f64], law: &EmpiricalMeasure, a: &[f64], out: &mut [f64]) {
        out[0] = self.theta * a[0] + self.kappa * (law.mean()[0] - x[0]);
    }
    fn diffusion(&self, _t: f64, _x: &[f64], _law: &EmpiricalMeasure, _a: &[f64], out: &mut [f64]) {
        out[0] = self.sigma;
    }
    fn running(&self, t: f64, x: &[f64], law: &EmpiricalMeasure, a: &[f64]) -> f64 {
        let d = x[0] - law.mean()[0];
        -0.5 * d * d + self.weight(t) * a[0]
    }
    fn terminal(&self, x: &[f64], _law: &EmpiricalMeasure) -> f64 {
        x[0]
    }
}

pub(crate) fn zero_problem(dim: usize, horizon: f64) -> BenchmarkProblem {
    BenchmarkProblem {
        name: "zero".into(),
        coefficients: CoefficientSet::new(Arc::new(ZeroProblem { dim }), 1.0, 2.0, 1.0),
        actions: ActionSpace::scalar(&[-1.0, 1.0], 0.25).expect("valid actions"),
        horizon,
        analytic: Some(AnalyticValue::Zero),
    }
}

pub(crate) fn drift_only(actions: &[f64], running_slope: f64, horizon: f64) -> BenchmarkProblem {
    let best = actions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let analytic = (running_slope == 0.0).then_some(AnalyticValue::DriftOnly { best_drift: best });
    BenchmarkProblem {
        name: "drift-only".into(),
        coefficients: CoefficientSet::new(
            Arc::new(DriftOnly { running_slope }),
            1.0,
            1.0,
            1.0 + running_slope.abs(),
        ),
        actions: ActionSpace::scalar(actions, 0.25).expect("valid actions"),
        horizon,
        analytic,
    }
}

pub(crate) fn mean_field_drift(kappa: f64, sigma: f64, horizon: f64) -> BenchmarkProblem {
    BenchmarkProblem {
        name: "mean-field-drift".into(),
        coefficients: CoefficientSet::new(
            Arc::new(MeanFieldDrift { kappa, sigma }),
            kappa.abs().max(1e-12),
            2.0,
            2.0,
        ),
        actions: ActionSpace::scalar(&[-0.5, 0.5], 0.5).expect("valid actions"),
        horizon,
        analytic: None,
    }
}

pub(crate) fn systemic_risk_lq(params: LqParams, actions: &[f64]) -> BenchmarkProblem {
    let horizon = params.horizon;
    let lip = 1.0 + params.kappa.abs();
    let growth = 1.0 + params.q.abs() + params.eps.abs() + params.c.abs();
    BenchmarkProblem {
        name: "systemic-risk-lq".into(),
        coefficients: CoefficientSet::new(Arc::new(SystemicRiskLq { params: params.clone() }), lip, 2.0, growth),
        actions: ActionSpace::scalar(actions, 0.5).expect("valid actions"),
        horizon,
        analytic: Some(AnalyticValue::Lq(params)),
    }
}

pub(crate) fn two_action_toy(toy: TwoActionToy, horizon: f64) -> BenchmarkProblem {
    let lip = toy.kappa.abs().max(1e-12);
    let growth = 1.0 + toy.early_weight.abs();
    BenchmarkProblem {
        name: "two-action-toy".into(),
        coefficients: CoefficientSet::new(Arc::new(toy), lip, 2.0, growth),
        actions: ActionSpace::scalar(&[-1.0, 1.0], 0.25).expect("valid actions"),
        horizon,
        analytic: None,
    }
}

/// Default LQ actions: a coarse grid spanning the optimal mean control from
/// an initial gap of 0.6.
pub const LQ_ACTIONS: [f64; 3] = [-0.6, -0.45, -0.3];

/// The registered benchmark problems with their default parameters.
pub fn registry() -> Vec<BenchmarkProblem> {
    vec![
        zero_problem(1, 1.0),
        drift_only(&[-1.0, 1.0], 0.0, 1.0),
        mean_field_drift(1.0, 0.0, 1.0),
        systemic_risk_lq(LqParams::default(), &LQ_ACTIONS),
        two_action_toy(TwoActionToy::default(), 1.0),
    ]
}
