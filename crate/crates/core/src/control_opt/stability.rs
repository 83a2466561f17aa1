//! Gain response to controls converging in the ρ̃ metric.

use super::krylov::krylov_distance;
use crate::error::{Error, Result};
use crate::forward_sim::{SimConfig, SimContext, StepControl, XiSampler};
use crate::problem::BenchmarkProblem;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    /// Refinement level m; the flipped window has width h / 2^m.
    pub level: u32,
    pub width: f64,
    pub rho_tilde: f64,
    pub delta_j: f64,
}

/// Which piece to perturb and how far to refine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub interval: usize,
    pub levels: Vec<u32>,
}

/// `alpha` with the action on the last `1/2^level` of piece `interval` replaced
/// by the next action index (cyclically).
pub fn perturbed_control(alpha: &StepControl, n_actions: usize, interval: usize, level: u32) -> Result<StepControl> {
    if alpha.cells() != 1 {
        return Err(Error::UnsupportedInput("stability probe needs deterministic controls".into()));
    }
    if interval >= alpha.intervals() {
        return Err(Error::DegenerateInput("perturbed piece out of range".into()));
    }
    let sub = 1usize << level;
    let mut table = Vec::with_capacity(alpha.intervals() * sub);
    for i in 0..alpha.intervals() {
        let a = alpha.action(i, 0);
        for s in 0..sub {
            if i == interval && s == sub - 1 {
                table.push((a + 1) % n_actions.max(1));
            } else {
                table.push(a);
            }
        }
    }
    StepControl::new(alpha.horizon(), alpha.intervals() * sub, 1, table)
}

/// Table of (ρ̃, |ΔJ|) along shrinking perturbations of `alpha`, all gains under
/// common random numbers. The simulation grid must resolve the finest level.
pub fn stability_probe(
    problem: &BenchmarkProblem,
    t: f64,
    x: &[f64],
    xi: &XiSampler,
    alpha: &StepControl,
    schedule: &Perturbation,
    cfg: &SimConfig,
) -> Result<Vec<StabilityRow>> {
    let ctx = SimContext::new(problem, t, x, xi, cfg)?;
    let base = ctx.run_control(alpha, false)?.estimate().mean;
    let n_actions = problem.actions.len();
    schedule
        .levels
        .iter()
        .map(|&level| {
            let beta = perturbed_control(alpha, n_actions, schedule.interval, level)?;
            let j = ctx.run_control(&beta, false)?.estimate().mean;
            Ok(StabilityRow {
                level,
                width: alpha.interval_length() / (1u64 << level) as f64,
                rho_tilde: krylov_distance(&problem.actions, alpha, &beta, 1, 0)?,
                delta_j: (j - base).abs(),
            })
        })
        .collect()
}

/// Smallest C with |ΔJ| ≤ C ρ̃ over the rows with ρ̃ > 0.
pub fn fitted_constant(rows: &[StabilityRow]) -> f64 {
    rows.iter()
        .filter(|r| r.rho_tilde > 0.0)
        .map(|r| r.delta_j / r.rho_tilde)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::lookup;

    fn cfg() -> SimConfig {
        SimConfig {
            n_steps: 32,
            n_xi: 8,
            n_x: 8,
            seed: 1,
        }
    }

    #[test]
    fn zero_problem_never_responds() {
        let p = lookup("zero").unwrap();
        let a = StepControl::piecewise(1.0, &[0, 1]).unwrap();
        let sched = Perturbation { interval: 1, levels: vec![0, 1, 2] };
        let rows = stability_probe(&p, 0.0, &[0.0], &XiSampler::dirac(&[0.0]), &a, &sched, &cfg()).unwrap();
        assert!(rows.iter().all(|r| r.delta_j == 0.0));
    }

    #[test]
    fn drift_only_response_is_twice_the_width() {
        let p = lookup("drift-only").unwrap();
        let a = StepControl::piecewise(1.0, &[1, 1]).unwrap();
        let sched = Perturbation { interval: 1, levels: vec![1, 2, 3, 4] };
        let rows = stability_probe(&p, 0.0, &[0.0], &XiSampler::dirac(&[0.0]), &a, &sched, &cfg()).unwrap();
        for r in &rows {
            // Flipping +1 to −1 on a window of width w moves x_T by 2w.
            assert!((r.delta_j - 2.0 * r.width).abs() < 1e-12, "{r:?}");
            assert!((r.rho_tilde - 0.5 * r.width).abs() < 1e-12);
        }
        assert!((fitted_constant(&rows) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn unperturbed_control_has_zero_response() {
        let p = lookup("two-action-toy").unwrap();
        let a = StepControl::piecewise(1.0, &[0, 1]).unwrap();
        let ctx = SimContext::new(&p, 0.0, &[0.0], &XiSampler::dirac(&[0.0]), &cfg()).unwrap();
        let j1 = ctx.run_control(&a, false).unwrap().estimate().mean;
        let j2 = ctx.run_control(&a, false).unwrap().estimate().mean;
        assert_eq!(j1, j2);
        assert_eq!(krylov_distance(&p.actions, &a, &a, 1, 0).unwrap(), 0.0);
    }
}
