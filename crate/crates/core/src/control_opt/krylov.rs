//! The metric ρ̃(α, β) = E ∫₀ᵀ ρ(α_t, β_t) dt on step controls.

use crate::error::{Error, Result};
use crate::forward_sim::{history_cell, StepControl};
use crate::problem::ActionSpace;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Distance between two controls on the same horizon.
///
/// Deterministic controls are compared exactly. Otherwise the expectation is a
/// Monte Carlo mean over `n_paths` Brownian paths sampled on the common
/// refinement of both grids; each path's integral is exact.
pub fn krylov_distance(
    space: &ActionSpace,
    alpha: &StepControl,
    beta: &StepControl,
    n_paths: usize,
    seed: u64,
) -> Result<f64> {
    let horizon = alpha.horizon();
    if (beta.horizon() - horizon).abs() > 1e-12 {
        return Err(Error::DegenerateInput("controls have different horizons".into()));
    }
    let (ka, kb) = (alpha.intervals(), beta.intervals());
    let pieces = ka / gcd(ka, kb) * kb;
    let (ra, rb) = (pieces / ka, pieces / kb);
    let w = horizon / pieces as f64;
    let integral = |inc: &[f64]| -> f64 {
        // Piece increments of each control from the fine increments.
        let sum_over = |ratio: usize, i: usize| inc[i * ratio..(i + 1) * ratio].iter().sum::<f64>();
        let mut total = 0.0;
        for p in 0..pieces {
            let ia = p / ra;
            let ib = p / rb;
            let ca = history_cell(ia, alpha.cells(), |j| Some(sum_over(ra, j)));
            let cb = history_cell(ib, beta.cells(), |j| Some(sum_over(rb, j)));
            total += space.rho(alpha.action(ia, ca), beta.action(ib, cb)) * w;
        }
        total
    };
    if alpha.is_deterministic() && beta.is_deterministic() {
        return Ok(integral(&vec![0.0; pieces]));
    }
    let n_paths = n_paths.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inc = vec![0.0; pieces];
    let mut acc = 0.0;
    for _ in 0..n_paths {
        for v in inc.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = z * w.sqrt();
        }
        acc += integral(&inc);
    }
    Ok(acc / n_paths as f64)
}
