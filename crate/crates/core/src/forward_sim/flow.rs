//! Restart-from-stored-cloud harness for the flow property.

use super::control::StepControl;
use super::engine::{SimConfig, SimContext, XiSampler};
use crate::error::{Error, Result};
use crate::problem::BenchmarkProblem;
use serde::{Deserialize, Serialize};

/// Sup-norm over `[s, T]` of the pathwise differences between the original run
/// and the run restarted at `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub restart_step: usize,
    pub xi_discrepancy: f64,
    pub x_discrepancy: f64,
}

impl FlowReport {
    pub fn max(&self) -> f64 {
        self.xi_discrepancy.max(self.x_discrepancy)
    }
}

/// Runs on `[t, T]`, restarts at node `s` from the stored cloud with the same
/// increments and compares both particle families on `[s, T]`.
pub fn flow_check(
    problem: &BenchmarkProblem,
    t: f64,
    s: f64,
    x: &[f64],
    xi: &XiSampler,
    ctrl: &StepControl,
    cfg: &SimConfig,
) -> Result<FlowReport> {
    if s < t || s > problem.horizon {
        return Err(Error::Domain {
            value: s,
            domain: format!("[{t}, {}]", problem.horizon),
        });
    }
    let ctx = SimContext::new(problem, t, x, xi, cfg)?;
    let j0 = ctx.grid().require_node(s)?;
    let full = ctx.run_control(ctrl, true)?.trajectory.unwrap_or_default();
    let restarted = ctx
        .run_from(j0, full[j0].clone(), ctrl, true)?
        .trajectory
        .unwrap_or_default();
    let mut rep = FlowReport {
        restart_step: j0,
        xi_discrepancy: 0.0,
        x_discrepancy: 0.0,
    };
    for (a, b) in full[j0..].iter().zip(&restarted) {
        for (u, v) in a.xi.iter().zip(&b.xi) {
            rep.xi_discrepancy = rep.xi_discrepancy.max((u - v).abs());
        }
        for (u, v) in a.x.iter().zip(&b.x) {
            rep.x_discrepancy = rep.x_discrepancy.max((u - v).abs());
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{lookup, ProblemConfig};

    fn cfg() -> SimConfig {
        SimConfig {
            n_steps: 16,
            n_xi: 64,
            n_x: 64,
            seed: 4,
        }
    }

    #[test]
    fn restart_at_start_is_exact() {
        let p = lookup("two-action-toy").unwrap();
        let xi = XiSampler::Gaussian { mean: vec![0.0], std_dev: 1.0 };
        let c = StepControl::piecewise(1.0, &[0, 1]).unwrap();
        let r = flow_check(&p, 0.0, 0.0, &[0.1], &xi, &c, &cfg()).unwrap();
        assert_eq!(r.max(), 0.0);
    }

    #[test]
    fn zero_problem_has_no_discrepancy() {
        let p = lookup("zero").unwrap();
        let xi = XiSampler::Gaussian { mean: vec![0.0], std_dev: 1.0 };
        let r = flow_check(&p, 0.0, 0.5, &[0.1], &xi, &StepControl::constant(1.0, 0), &cfg()).unwrap();
        assert_eq!(r.max(), 0.0);
    }

    #[test]
    fn noisy_mean_field_restart_matches() {
        let p = ProblemConfig {
            sigma: Some(0.4),
            ..ProblemConfig::named("mean-field-drift")
        }
        .build()
        .unwrap();
        let xi = XiSampler::Gaussian { mean: vec![0.0], std_dev: 1.0 };
        let r = flow_check(&p, 0.0, 0.5, &[0.1], &xi, &StepControl::constant(1.0, 1), &cfg()).unwrap();
        assert!(r.max() <= 1e-10);
    }

    #[test]
    fn off_grid_restart_is_rejected() {
        let p = lookup("zero").unwrap();
        let xi = XiSampler::dirac(&[0.0]);
        let r = flow_check(&p, 0.0, 0.33, &[0.0], &xi, &StepControl::constant(1.0, 0), &cfg());
        assert!(matches!(r, Err(Error::Grid { .. })));
    }
}
