//! Shared fixtures for the benchmarks: the two-action toy at a fixed starting
//! point, its step-control catalog and a small randomized configuration.

use mkv_core::bsde::JumpHistoryTree;
use mkv_core::control_opt::{enumerate_step_controls, ControlCatalog};
use mkv_core::lattice::DEFAULT_STATE_CAP;
use mkv_core::problem::lookup;
use mkv_core::randomized::{InitialControl, MarkIntensity, RandomizedConfig};
use mkv_core::{empirical_from_samples, BenchmarkProblem, EmpiricalMeasure, Result, SimConfig, XiSampler};

pub const X0: [f64; 1] = [0.2];

pub struct Toy {
    pub problem: BenchmarkProblem,
    pub catalog: ControlCatalog,
    pub lambda: MarkIntensity,
    pub xi: XiSampler,
    pub sim: SimConfig,
    pub randomized: RandomizedConfig,
}

impl Toy {
    /// `particles` sets both the law cloud and the state sample size.
    pub fn new(particles: usize) -> Result<Self> {
        let problem = lookup("two-action-toy")?;
        let catalog = enumerate_step_controls(2, problem.horizon, 2, 1, 16)?;
        let lambda = MarkIntensity::uniform(catalog.len(), 2.0)?;
        Ok(Self {
            problem,
            catalog,
            lambda,
            xi: XiSampler::Gaussian {
                mean: vec![0.0],
                std_dev: 0.5,
            },
            sim: SimConfig {
                n_steps: 10,
                n_xi: particles,
                n_x: particles,
                seed: 7,
            },
            randomized: RandomizedConfig {
                k_max: 3,
                lo: 0.1,
                hi: 50.0,
                initial: InitialControl::Catalog(0),
                state_cap: DEFAULT_STATE_CAP,
            },
        })
    }

    pub fn tree(&self) -> Result<JumpHistoryTree> {
        JumpHistoryTree::build(
            &self.problem,
            0.0,
            &X0,
            &self.xi,
            &self.lambda,
            &self.catalog,
            &self.randomized,
            &self.sim,
        )
    }
}

/// Deterministic low-discrepancy cloud of `n` points in `dim` dimensions,
/// shifted by `offset`.
pub fn cloud(n: usize, dim: usize, offset: f64) -> Result<EmpiricalMeasure> {
    let samples: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..dim)
                .map(|d| {
                    let g = 0.618_033_988_749_895 * (d + 1) as f64;
                    ((i as f64 + 0.5) * g).fract() + offset
                })
                .collect()
        })
        .collect();
    empirical_from_samples(&samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        let toy = Toy::new(16).unwrap();
        assert!(toy.tree().is_ok());
        assert_eq!(cloud(10, 2, 0.0).unwrap().len(), 10);
    }
}
