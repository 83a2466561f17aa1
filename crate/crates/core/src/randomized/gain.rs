//! Outer Monte Carlo over Poisson paths for the randomized gain J^R.

use super::{sample_poisson_path_under, sample_reference, girsanov_weight, IntensityPolicy, MarkIntensity};
use crate::control_opt::ControlCatalog;
use crate::error::{Error, Result};
use crate::forward_sim::{SimConfig, SimContext, StepControl, TimeGrid, XiSampler};
use crate::problem::BenchmarkProblem;
use crate::stats::{mix_seed, ValueEstimate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Fraction of truncated paths above which the estimate carries a warning.
pub const TRUNCATION_WARN_FRACTION: f64 = 0.01;

const PATH_SALT: u64 = 0x9a7b_0001;
const INNER_SALT: u64 = 0x9a7b_0002;

/// Which law the outer paths are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Reference intensity λ, reweighted by κ^ν_T.
    Reference,
    /// Intensity ν·λ directly, unit weights.
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainConfig {
    pub k_max: usize,
    pub n_outer: usize,
    /// Inner simulation per path (`n_xi` law particles, `n_x` reward particles).
    pub inner: SimConfig,
    /// Catalog index of the control before the first jump.
    pub initial: usize,
    pub sampling: Sampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedGain {
    pub estimate: ValueEstimate,
    pub truncated_fraction: f64,
    pub truncation_warning: bool,
}

/// J^R(t, x, π, ν): each outer path fixes the piecewise-constant control
/// process; a fresh inner particle system gives the conditional law flow and
/// the conditional reward, which is weighted and averaged over paths.
///
/// The inner grid is the ν grid; a jump inside a step takes effect at the next
/// node.
pub fn randomized_gain(
    problem: &BenchmarkProblem,
    t: f64,
    x: &[f64],
    xi: &XiSampler,
    lambda: &MarkIntensity,
    nu: &dyn IntensityPolicy,
    catalog: &ControlCatalog,
    cfg: &GainConfig,
) -> Result<RandomizedGain> {
    lambda.check_catalog(catalog)?;
    if cfg.initial >= catalog.len() {
        return Err(Error::DegenerateInput("initial control outside the catalog".into()));
    }
    if cfg.n_outer == 0 {
        return Err(Error::DegenerateInput("no outer paths".into()));
    }
    let grid = TimeGrid::new(t, problem.horizon, cfg.inner.n_steps)?;
    let controls: Vec<StepControl> = catalog.controls.clone();
    let seed = cfg.inner.seed;
    let samples: Vec<(f64, bool)> = (0..cfg.n_outer)
        .into_par_iter()
        .map(|p| {
            let path_seed = mix_seed(mix_seed(seed, PATH_SALT), p as u64);
            let (path, weight) = match cfg.sampling {
                Sampling::Reference => {
                    let mut rng = ChaCha8Rng::seed_from_u64(path_seed);
                    let path = sample_reference(lambda, t, problem.horizon, cfg.k_max, cfg.initial, &mut rng);
                    let w = girsanov_weight(&path, nu, lambda, &grid, problem.horizon)?;
                    (path, w)
                }
                Sampling::Target => (
                    sample_poisson_path_under(nu, lambda, &grid, cfg.k_max, cfg.initial, path_seed)?,
                    1.0,
                ),
            };
            let schedule: Vec<usize> = (0..grid.n_steps())
                .map(|j| path.control_at(lambda, grid.node(j)))
                .collect();
            let inner = SimConfig {
                seed: mix_seed(mix_seed(seed, INNER_SALT), p as u64),
                ..cfg.inner
            };
            let ctx = SimContext::new(problem, t, x, xi, &inner)?;
            let j = ctx.run_schedule(&controls, &schedule)?.estimate().mean;
            Ok((weight * j, path.truncated))
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let truncated_fraction = samples.iter().filter(|s| s.1).count() as f64 / samples.len() as f64;
    Ok(RandomizedGain {
        estimate: ValueEstimate::from_samples(&values),
        truncated_fraction,
        truncation_warning: truncated_fraction > TRUNCATION_WARN_FRACTION,
    })
}
